#include <cmath>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "phantom/efa.hpp"

namespace phantom::efa {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string factor_graph_svg(const FactorGraph& graph, const inst::Instrument& instrument,
                             const std::string& title) {
  constexpr double size = 800.0;
  constexpr double centre = size / 2.0;
  constexpr double outer = 340.0;
  constexpr double inner = 120.0;
  const auto n_items = graph.items.size();

  auto dim_index = [&](const std::string& item) -> std::size_t {
    for (std::size_t d = 0; d < instrument.dimensions.size(); ++d) {
      for (const auto& id : instrument.dimensions[d].items) {
        if (id == item) return d;
      }
    }
    return 0;
  };
  auto item_pos = [&](std::size_t i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_items) -
                         std::numbers::pi / 2.0;
    return std::pair{centre + outer * std::cos(angle), centre + outer * std::sin(angle)};
  };
  auto hub_pos = [&](int f) {
    if (graph.factors == 1) return std::pair{centre, centre};
    const double angle = 2.0 * std::numbers::pi * f / graph.factors - std::numbers::pi / 2.0;
    return std::pair{centre + inner * std::cos(angle), centre + inner * std::sin(angle)};
  };

  std::ostringstream os;
  os << fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n",
      size, size + 40);
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"18\" text-anchor=\"middle\">{}</text>\n",
                    centre, size + 25, escape(title));
  for (const auto& e : graph.edges) {
    const auto [x1, y1] = item_pos(e.item);
    const auto [x2, y2] = hub_pos(e.factor);
    const bool positive = e.weight >= 0;
    os << fmt::format(
        "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\" "
        "stroke-width=\"{:.2f}\"{}/>\n",
        x1, y1, x2, y2, positive ? "#999999" : "#d62728", 0.5 + 3.0 * std::abs(e.weight),
        positive ? "" : " stroke-dasharray=\"6,4\"");
  }
  for (int f = 0; f < graph.factors; ++f) {
    const auto [x, y] = hub_pos(f);
    os << fmt::format(
        "<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"16\" fill=\"#f0f0f0\" stroke=\"black\"/>\n"
        "<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"12\" text-anchor=\"middle\">F{}</text>\n",
        x, y, x, y + 4, f + 1);
  }
  for (std::size_t i = 0; i < n_items; ++i) {
    const auto [x, y] = item_pos(i);
    const auto& id = graph.items[i];
    const auto colour = kPalette[dim_index(id) % std::size(kPalette)];
    const bool reverse = instrument.reverse_coded.contains(id);
    os << fmt::format(
        "<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"9\" fill=\"{}\"/>\n"
        "<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"8\" text-anchor=\"middle\">{}{}</text>\n",
        x, y, colour, x + (x - centre) * 0.08, y + (y - centre) * 0.08 + 3, escape(id),
        reverse ? "_R" : "");
  }
  os << "</svg>\n";
  return os.str();
}

std::string scree_svg(const std::vector<double>& eigenvalues, const std::string& title) {
  constexpr double width = 640.0, height = 400.0, margin = 50.0;
  const double top = eigenvalues.empty() ? 1.0 : std::max(eigenvalues.front(), 1.0) * 1.1;
  const auto n = eigenvalues.size();
  auto px = [&](std::size_t i) {
    return margin + (width - 2 * margin) * (n <= 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1));
  };
  auto py = [&](double v) { return height - margin - (height - 2 * margin) * v / top; };

  std::ostringstream os;
  os << fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n",
      width, height);
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << fmt::format("<text x=\"{}\" y=\"25\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
                    width / 2, escape(title));
  os << fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", margin,
                    height - margin, width - margin);
  os << fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", margin,
                    height - margin, margin);
  os << fmt::format(
      "<line x1=\"{0}\" y1=\"{1:.1f}\" x2=\"{2}\" y2=\"{1:.1f}\" stroke=\"#d62728\" "
      "stroke-dasharray=\"4,4\"/>\n",
      margin, py(1.0), width - margin);
  os << "<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"";
  for (std::size_t i = 0; i < n; ++i) os << fmt::format("{:.1f},{:.1f} ", px(i), py(eigenvalues[i]));
  os << "\"/>\n";
  for (std::size_t i = 0; i < n; ++i) {
    os << fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"#1f77b4\"/>\n", px(i),
                      py(eigenvalues[i]));
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace phantom::efa
