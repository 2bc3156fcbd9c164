#pragma once

#include <cmath>
#include <functional>
#include <string>

#include <Eigen/Core>

#include "phantom/instrument.hpp"
#include "phantom/linalg.hpp"
#include "phantom/rng.hpp"
#include "phantom/synth.hpp"

namespace testkit {

inline std::string instrument_path(const std::string& name) {
  return std::string(PHANTOM_INSTRUMENT_DIR) + "/" + name;
}

inline Eigen::MatrixXd random_normal(phantom::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

/// Random correlation matrix: normalized Gram matrix of p random vectors in
/// p + extra dimensions.
inline phantom::num::SymMatrix random_correlation(phantom::Rng& rng, Eigen::Index p, Eigen::Index extra = 3) {
  const Eigen::MatrixXd a = random_normal(rng, p, p + extra);
  Eigen::MatrixXd g = a * a.transpose();
  const Eigen::VectorXd d = g.diagonal().cwiseSqrt().cwiseInverse();
  g = d.asDiagonal() * g * d.asDiagonal();
  return phantom::num::SymMatrix(g);
}

/// Central differences of a scalar function.
inline Eigen::VectorXd central_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

/// Two-factor fixture whose first factor has three indicators with
/// r12 * r13 / r23 = 1.6, which pushes the ML loading of item 1 above 1 and its
/// residual variance goes negative. Items 4-7 form a clean second factor.
inline phantom::num::SymMatrix heywood_correlation() {
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(7, 7);
  const auto set = [&](int i, int j, double v) { r(i, j) = r(j, i) = v; };
  set(0, 1, 0.8);
  set(0, 2, 0.6);
  set(1, 2, 0.3);
  for (int i = 3; i < 7; ++i)
    for (int j = i + 1; j < 7; ++j) set(i, j, 0.49);
  for (int i = 0; i < 3; ++i)
    for (int j = 3; j < 7; ++j) set(i, j, 0.2);
  return phantom::num::SymMatrix(r);
}

inline const char* heywood_instrument_json() {
  return R"({"id": "HW7", "scale": {"min": 1, "max": 5},
    "items": [{"id": "a1"}, {"id": "a2"}, {"id": "a3"}, {"id": "b1"}, {"id": "b2"}, {"id": "b3"}, {"id": "b4"}],
    "dimensions": {"A": ["a1", "a2", "a3"], "B": ["b1", "b2", "b3", "b4"]}})";
}

/// Simple structure following the instrument's own dimensions.
inline Eigen::MatrixXd instrument_loadings(const phantom::inst::Instrument& ins, double loading) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ins.size()),
                                            static_cast<Eigen::Index>(ins.dimensions.size()));
  for (std::size_t d = 0; d < ins.dimensions.size(); ++d)
    for (const auto& id : ins.dimensions[d].items)
      l(static_cast<Eigen::Index>(ins.index_of(id)), static_cast<Eigen::Index>(d)) = loading;
  return l;
}

/// Reverse-scored Likert sample whose generating structure matches `ins`.
inline phantom::inst::ResponseMatrix synthetic_for(const phantom::inst::Instrument& ins, Eigen::Index n,
                                                   std::uint64_t seed, double loading = 0.7,
                                                   double phi = 0.2, std::string group = "synthetic") {
  const auto k = static_cast<Eigen::Index>(ins.dimensions.size());
  auto m = phantom::num::sample_factor_model(instrument_loadings(ins, loading),
                                             phantom::num::compound_symmetry(k, phi), n, seed,
                                             {ins.scale_min, ins.scale_max}, ins.item_ids(), std::move(group));
  m.instrument_id = ins.id;
  return m;
}

}  // namespace testkit
