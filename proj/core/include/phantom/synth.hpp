#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phantom/instrument.hpp"
#include "phantom/linalg.hpp"

namespace phantom::num {

struct LikertBounds {
  int min = 1;
  int max = 5;
};

/// n draws from N(0, cov), one row per draw. Throws SingularError if `cov`
/// is not positive definite.
Matrix sample_mvn(const SymMatrix& cov, Index n, std::uint64_t seed);

/// Thresholds at the standard-normal quantiles j/m, j = 1..m-1, for an
/// m-point scale: each category has probability 1/m under N(0,1).
std::vector<double> likert_thresholds(int points);

/// Maps standard-normal columns onto the Likert grid.
Eigen::MatrixXi discretize(const Matrix& continuous, LikertBounds bounds);

/// Implied covariance L*Phi*L' + Psi with Psi = diag(1 - diag(L*Phi*L')).
/// Throws PreconditionError if any uniqueness is not positive.
SymMatrix implied_correlation(const Matrix& loadings, const SymMatrix& phi);

/// Draws n rows from the common factor model and discretizes them.
/// Column ids are "v1".."vp" unless `item_ids` is supplied.
inst::ResponseMatrix sample_factor_model(const Matrix& loadings, const SymMatrix& phi, Index n,
                                         std::uint64_t seed, LikertBounds bounds,
                                         std::vector<std::string> item_ids = {},
                                         std::string group = "synthetic");

/// Same, from an arbitrary correlation matrix.
inst::ResponseMatrix sample_likert(const SymMatrix& corr, Index n, std::uint64_t seed,
                                   LikertBounds bounds, std::vector<std::string> item_ids = {},
                                   std::string group = "synthetic");

/// Simple-structure loading matrix: `per_factor` items per factor, items
/// grouped by factor, each with loading `loading`.
Matrix block_loadings(int factors, int per_factor, double loading);

/// k x k matrix with unit diagonal and `r` elsewhere.
SymMatrix compound_symmetry(Index k, double r);

}  // namespace phantom::num
