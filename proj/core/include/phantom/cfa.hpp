#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "phantom/instrument.hpp"
#include "phantom/linalg.hpp"
#include "phantom/minimize.hpp"

namespace phantom::cfa {

using num::Matrix;
using num::SymMatrix;
using num::Vector;

/// Congeneric measurement model: every item loads on exactly one factor,
/// factor variances are fixed to 1. Items follow the column order of the
/// covariance matrix the model is fitted to.
struct CfaModel {
  std::vector<std::string> items;
  std::vector<std::string> factors;
  std::vector<int> assignment;  // factor index per item

  std::size_t p() const noexcept { return items.size(); }
  std::size_t k() const noexcept { return factors.size(); }
  std::size_t parameter_count() const noexcept { return 2 * p() + k() * (k() - 1) / 2; }
  long df() const noexcept;

  /// Throws PreconditionError on unassigned items or bad factor indices.
  void validate() const;

  /// One factor per instrument dimension, items in instrument order.
  static CfaModel from_instrument(const inst::Instrument& instrument);
};

/// Model file: {"factors": {"name": ["item", ...], ...}}. Items are put in
/// `instrument` order; every instrument item must be assigned exactly once.
CfaModel parse_model(std::string_view json_text, const inst::Instrument& instrument);
CfaModel load_model(const std::filesystem::path& path, const inst::Instrument& instrument);

struct CfaEstimates {
  Vector loadings;   // one per item
  Matrix phi;        // k x k, unit diagonal
  Vector residuals;  // residual variances
};

/// ML discrepancy F(theta) = ln|Sigma| + tr(S Sigma^-1) - ln|S| - p with
/// theta = (loadings, lower-triangle factor correlations, residual variances).
class MlDiscrepancy {
 public:
  MlDiscrepancy(const SymMatrix& s, const CfaModel& model);

  /// Returns +inf when Sigma(theta) is not positive definite.
  double operator()(const Vector& theta, Vector& grad) const;
  double value(const Vector& theta) const;

  Vector start() const;
  Vector pack(const CfaEstimates& estimates) const;
  CfaEstimates unpack(const Vector& theta) const;
  Matrix implied(const Vector& theta) const;
  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(model_.parameter_count()); }

 private:
  Matrix loading_matrix(const Vector& theta) const;
  Matrix phi_matrix(const Vector& theta) const;

  Matrix s_;
  double log_det_s_;
  CfaModel model_;
};

enum class CfaStatus { converged_proper, improper_heywood, improper_phi, nonconverged };

std::string_view to_string(CfaStatus status);

struct FitIndices {
  double srmr = 0.0;
  double rmsea = 0.0;
  double cfi = 1.0;
};

struct BaselineFit {
  double chi2 = 0.0;
  double df = 0.0;
};

/// Independence model Sigma = diag(S): chi2_b = -(n-1) ln|R|, df_b = p(p-1)/2.
BaselineFit baseline_model(const SymMatrix& s, std::int64_t n);

FitIndices fit_indices(double chi2, double df, std::int64_t n, const SymMatrix& s,
                       const Matrix& sigma_hat, const BaselineFit& baseline);

struct CfaOptions {
  bool correlation_input = false;
  bool bounded_refit = false;  // re-fit with psi >= 0 and |phi| <= 1
  num::MinimizerOptions minimizer{};
};

struct CfaFit {
  CfaEstimates estimates;
  double f_min = 0.0;
  double chi2 = 0.0;
  long df = 0;
  std::int64_t n = 0;
  FitIndices indices;
  BaselineFit baseline;
  CfaStatus status = CfaStatus::nonconverged;
  int iterations = 0;
  double gradient_norm = 0.0;
  Matrix implied;
  std::vector<std::string> notes;

  bool interpretable() const noexcept { return status == CfaStatus::converged_proper; }
  std::string interpretation() const;
};

/// Maximum-likelihood CFA. Throws PreconditionError if df < 1 and
/// SingularError if S is not positive definite.
CfaFit fit_cfa(const SymMatrix& s, std::int64_t n, const CfaModel& model,
               const CfaOptions& options = {});

}  // namespace phantom::cfa
