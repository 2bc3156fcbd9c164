#include "phantom/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>

#include "phantom/error.hpp"

namespace phantom::num {

SymMatrix::SymMatrix(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw PreconditionError("SymMatrix: matrix is not square");
  }
  if (!m.allFinite()) {
    throw NumericalError("SymMatrix: non-finite entry");
  }
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::identity(Index p) { return SymMatrix(Matrix::Identity(p, p)); }

SymMatrix covariance_matrix(const Matrix& data) {
  const Index n = data.rows();
  if (n < 2) {
    throw PreconditionError("covariance_matrix: need at least 2 rows");
  }
  const Matrix centered = data.rowwise() - data.colwise().mean();
  return SymMatrix((centered.transpose() * centered) / static_cast<double>(n - 1));
}

std::vector<Index> constant_columns(const Matrix& data) {
  std::vector<Index> out;
  for (Index j = 0; j < data.cols(); ++j) {
    if (data.rows() == 0 || data.col(j).maxCoeff() == data.col(j).minCoeff()) {
      out.push_back(j);
    }
  }
  return out;
}

SymMatrix cov_to_cor(const SymMatrix& cov) {
  const Vector inv_sd = cov.matrix().diagonal().cwiseSqrt().cwiseInverse();
  Matrix r = inv_sd.asDiagonal() * cov.matrix() * inv_sd.asDiagonal();
  r.diagonal().setOnes();
  return SymMatrix(r.cwiseMax(-1.0).cwiseMin(1.0));
}

SymMatrix correlation_matrix(const Matrix& data, std::span<const std::string> names) {
  const auto constant = constant_columns(data);
  if (!constant.empty()) {
    std::vector<std::string> ids;
    for (Index j : constant) {
      ids.push_back(j < static_cast<Index>(names.size()) ? names[j] : std::to_string(j));
    }
    throw ZeroVarianceError(std::move(ids));
  }
  return cov_to_cor(covariance_matrix(data));
}

namespace {

// Householder reduction to tridiagonal form. On exit `v` holds the
// accumulated orthogonal transform, `d` the diagonal and `e` the
// subdiagonal (e[0] unused).
void tridiagonalize(Matrix& v, Vector& d, Vector& e) {
  const Index n = v.rows();
  for (Index j = 0; j < n; ++j) d(j) = v(n - 1, j);

  for (Index i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (Index k = 0; k < i; ++k) scale += std::abs(d(k));
    if (scale == 0.0) {
      e(i) = d(i - 1);
      for (Index j = 0; j < i; ++j) {
        d(j) = v(i - 1, j);
        v(i, j) = 0.0;
        v(j, i) = 0.0;
      }
    } else {
      for (Index k = 0; k < i; ++k) {
        d(k) /= scale;
        h += d(k) * d(k);
      }
      double f = d(i - 1);
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e(i) = scale * g;
      h -= f * g;
      d(i - 1) = f - g;
      for (Index j = 0; j < i; ++j) e(j) = 0.0;

      for (Index j = 0; j < i; ++j) {
        f = d(j);
        v(j, i) = f;
        g = e(j) + v(j, j) * f;
        for (Index k = j + 1; k <= i - 1; ++k) {
          g += v(k, j) * d(k);
          e(k) += v(k, j) * f;
        }
        e(j) = g;
      }
      f = 0.0;
      for (Index j = 0; j < i; ++j) {
        e(j) /= h;
        f += e(j) * d(j);
      }
      const double hh = f / (h + h);
      for (Index j = 0; j < i; ++j) e(j) -= hh * d(j);
      for (Index j = 0; j < i; ++j) {
        f = d(j);
        g = e(j);
        for (Index k = j; k <= i - 1; ++k) v(k, j) -= (f * e(k) + g * d(k));
        d(j) = v(i - 1, j);
        v(i, j) = 0.0;
      }
    }
    d(i) = h;
  }

  for (Index i = 0; i < n - 1; ++i) {
    v(n - 1, i) = v(i, i);
    v(i, i) = 1.0;
    const double h = d(i + 1);
    if (h != 0.0) {
      for (Index k = 0; k <= i; ++k) d(k) = v(k, i + 1) / h;
      for (Index j = 0; j <= i; ++j) {
        double g = 0.0;
        for (Index k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
        for (Index k = 0; k <= i; ++k) v(k, j) -= g * d(k);
      }
    }
    for (Index k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
  }
  for (Index j = 0; j < n; ++j) {
    d(j) = v(n - 1, j);
    v(n - 1, j) = 0.0;
  }
  v(n - 1, n - 1) = 1.0;
  e(0) = 0.0;
}

// Implicit QL on the tridiagonal (d, e), accumulating rotations into v.
void tridiagonal_ql(Matrix& v, Vector& d, Vector& e) {
  const Index n = v.rows();
  constexpr int kMaxSweeps = 60;
  for (Index i = 1; i < n; ++i) e(i - 1) = e(i);
  e(n - 1) = 0.0;

  double f = 0.0;
  double tst1 = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  for (Index l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d(l)) + std::abs(e(l)));
    Index m = l;
    while (m < n) {
      if (std::abs(e(m)) <= eps * tst1) break;
      ++m;
    }
    if (m > l) {
      int sweeps = 0;
      do {
        if (++sweeps > kMaxSweeps) {
          throw NumericalError("eigen_sym: QL iteration did not converge");
        }
        double g = d(l);
        double p = (d(l + 1) - g) / (2.0 * e(l));
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d(l) = e(l) / (p + r);
        d(l + 1) = e(l) * (p + r);
        const double dl1 = d(l + 1);
        double h = g - d(l);
        for (Index i = l + 2; i < n; ++i) d(i) -= h;
        f += h;

        p = d(m);
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e(l + 1);
        double s = 0.0, s2 = 0.0;
        for (Index i = m - 1; i >= l; --i) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e(i);
          h = c * p;
          r = std::hypot(p, e(i));
          e(i + 1) = s * r;
          s = e(i) / r;
          c = p / r;
          p = c * d(i) - s * g;
          d(i + 1) = h + s * (c * g + s * d(i));
          for (Index k = 0; k < n; ++k) {
            h = v(k, i + 1);
            v(k, i + 1) = s * v(k, i) + c * h;
            v(k, i) = c * v(k, i) - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e(l) / dl1;
        e(l) = s * p;
        d(l) = c * p;
      } while (std::abs(e(l)) > eps * tst1);
    }
    d(l) += f;
    e(l) = 0.0;
  }
}

}  // namespace

EigenDecomposition eigen_sym(const SymMatrix& m) {
  const Index n = m.order();
  if (n == 0) return {};
  Matrix v = m.matrix();
  Vector d(n), e(n);
  if (n == 1) {
    return {Vector::Constant(1, v(0, 0)), Matrix::Ones(1, 1)};
  }
  tridiagonalize(v, d, e);
  tridiagonal_ql(v, d, e);

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return d(a) > d(b); });
  EigenDecomposition out{Vector(n), Matrix(n, n)};
  for (Index j = 0; j < n; ++j) {
    out.values(j) = d(order[j]);
    out.vectors.col(j) = v.col(order[j]);
  }
  return out;
}

SymMatrix inverse_spd(const SymMatrix& m, double min_eigenvalue) {
  const auto eig = eigen_sym(m);
  const double smallest = eig.values(eig.values.size() - 1);
  if (!(smallest > min_eigenvalue)) {
    throw SingularError("inverse_spd: matrix is singular or not positive definite", smallest);
  }
  Eigen::LLT<Matrix> llt(m.matrix());
  return SymMatrix(llt.solve(Matrix::Identity(m.order(), m.order())));
}

double log_det_spd(const SymMatrix& m) {
  Eigen::LLT<Matrix> llt(m.matrix());
  if (llt.info() != Eigen::Success) {
    const auto eig = eigen_sym(m);
    throw SingularError("log_det_spd: matrix is not positive definite",
                        eig.values(eig.values.size() - 1));
  }
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[idx[j]] == values[idx[i]]) ++j;
    // positions i..j-1 (0-based) share the rank mean of (i+1)..j
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = rank;
    i = j;
  }
  return ranks;
}

}  // namespace phantom::num
