#include "phantom/error.hpp"

namespace phantom {

namespace {

std::string zero_variance_message(const std::vector<std::string>& columns) {
  std::string msg = "zero variance in column(s):";
  for (const auto& c : columns) msg += " " + c;
  return msg;
}

}  // namespace

ZeroVarianceError::ZeroVarianceError(std::vector<std::string> columns)
    : Error(zero_variance_message(columns)), columns_(std::move(columns)) {}

}  // namespace phantom
