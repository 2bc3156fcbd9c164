#include "phantom/synth.hpp"

#include <algorithm>

#include <Eigen/Cholesky>

#include "phantom/distributions.hpp"
#include "phantom/error.hpp"
#include "phantom/rng.hpp"

namespace phantom::num {

Matrix sample_mvn(const SymMatrix& cov, Index n, std::uint64_t seed) {
  Eigen::LLT<Matrix> llt(cov.matrix());
  if (llt.info() != Eigen::Success) {
    const auto eig = eigen_sym(cov);
    throw SingularError("sample_mvn: covariance is not positive definite",
                        eig.values(eig.values.size() - 1));
  }
  const Matrix lower = llt.matrixL();
  const Index p = cov.order();
  Rng rng(seed);
  Matrix z(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) z(i, j) = rng.normal();
  }
  return z * lower.transpose();
}

std::vector<double> likert_thresholds(int points) {
  std::vector<double> t;
  for (int j = 1; j < points; ++j) {
    t.push_back(dist::normal_quantile(static_cast<double>(j) / points));
  }
  return t;
}

Eigen::MatrixXi discretize(const Matrix& continuous, LikertBounds bounds) {
  const auto thresholds = likert_thresholds(bounds.max - bounds.min + 1);
  Eigen::MatrixXi out(continuous.rows(), continuous.cols());
  for (Index i = 0; i < continuous.rows(); ++i) {
    for (Index j = 0; j < continuous.cols(); ++j) {
      const auto above = std::upper_bound(thresholds.begin(), thresholds.end(), continuous(i, j)) -
                         thresholds.begin();
      out(i, j) = bounds.min + static_cast<int>(above);
    }
  }
  return out;
}

SymMatrix implied_correlation(const Matrix& loadings, const SymMatrix& phi) {
  if (loadings.cols() != phi.order()) {
    throw PreconditionError("implied_correlation: loadings/phi shape mismatch");
  }
  Matrix sigma = loadings * phi.matrix() * loadings.transpose();
  for (Index i = 0; i < sigma.rows(); ++i) {
    const double uniqueness = 1.0 - sigma(i, i);
    if (!(uniqueness > 0.0)) {
      throw PreconditionError("implied_correlation: uniqueness of item " + std::to_string(i) +
                              " is not positive");
    }
    sigma(i, i) = 1.0;
  }
  return SymMatrix(sigma);
}

namespace {

inst::ResponseMatrix wrap(Eigen::MatrixXi values, std::vector<std::string> item_ids,
                          std::string group) {
  const auto p = static_cast<std::size_t>(values.cols());
  if (item_ids.empty()) {
    for (std::size_t j = 0; j < p; ++j) item_ids.push_back("v" + std::to_string(j + 1));
  }
  if (item_ids.size() != p) throw PreconditionError("sample: item id count mismatch");
  inst::ResponseMatrix m;
  m.group = std::move(group);
  m.items = std::move(item_ids);
  m.values = std::move(values);
  for (Index i = 0; i < m.values.rows(); ++i) {
    m.meta.push_back({m.group + "#" + std::to_string(i + 1), std::nullopt, std::nullopt,
                      std::nullopt});
  }
  return m;
}

}  // namespace

inst::ResponseMatrix sample_likert(const SymMatrix& corr, Index n, std::uint64_t seed,
                                   LikertBounds bounds, std::vector<std::string> item_ids,
                                   std::string group) {
  if (bounds.min >= bounds.max) throw PreconditionError("sample_likert: bad scale bounds");
  return wrap(discretize(sample_mvn(corr, n, seed), bounds), std::move(item_ids),
              std::move(group));
}

inst::ResponseMatrix sample_factor_model(const Matrix& loadings, const SymMatrix& phi, Index n,
                                         std::uint64_t seed, LikertBounds bounds,
                                         std::vector<std::string> item_ids, std::string group) {
  const SymMatrix sigma = implied_correlation(loadings, phi);
  return sample_likert(sigma, n, seed, bounds, std::move(item_ids), std::move(group));
}

Matrix block_loadings(int factors, int per_factor, double loading) {
  Matrix l = Matrix::Zero(factors * per_factor, factors);
  for (int f = 0; f < factors; ++f) {
    l.block(f * per_factor, f, per_factor, 1).setConstant(loading);
  }
  return l;
}

SymMatrix compound_symmetry(Index k, double r) {
  Matrix m = Matrix::Constant(k, k, r);
  m.diagonal().setOnes();
  return SymMatrix(m);
}

}  // namespace phantom::num
