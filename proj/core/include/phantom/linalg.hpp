#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace phantom::num {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Dense symmetric matrix. Construction averages the input with its
/// transpose, so (i,j) and (j,i) are bit-identical afterwards.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& m);

  static SymMatrix identity(Index p);

  Index order() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

/// Sample covariance with the n-1 denominator.
SymMatrix covariance_matrix(const Matrix& data);

/// Pearson correlation matrix of the columns of `data`.
/// Throws ZeroVarianceError naming the constant columns; `names` (if given)
/// supplies item ids for the message, otherwise column indices are used.
SymMatrix correlation_matrix(const Matrix& data, std::span<const std::string> names = {});

/// Rescale a covariance matrix to a correlation matrix.
SymMatrix cov_to_cor(const SymMatrix& cov);

/// Indices of columns whose values are all identical.
std::vector<Index> constant_columns(const Matrix& data);

struct EigenDecomposition {
  Vector values;   // descending
  Matrix vectors;  // column j pairs with values(j); orthonormal
};

/// Symmetric eigendecomposition by Householder tridiagonalization followed
/// by implicit QL with Wilkinson-style shifts.
EigenDecomposition eigen_sym(const SymMatrix& m);

/// Inverse of a symmetric positive definite matrix. Throws SingularError if
/// the smallest eigenvalue is not above `min_eigenvalue`.
SymMatrix inverse_spd(const SymMatrix& m, double min_eigenvalue = 1e-10);

/// log det of an SPD matrix via Cholesky; throws SingularError otherwise.
double log_det_spd(const SymMatrix& m);

/// Ranks 1..n with ties replaced by the average of their positions.
std::vector<double> midranks(std::span<const double> values);

}  // namespace phantom::num
