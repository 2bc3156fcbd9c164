#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "phantom/instrument.hpp"
#include "phantom/linalg.hpp"

namespace phantom::efa {

using num::Matrix;
using num::SymMatrix;
using num::Vector;

struct ScreeResult {
  std::vector<double> eigenvalues;  // descending
  int kaiser_count = 0;             // eigenvalues strictly above 1
};

ScreeResult scree(const SymMatrix& r);

struct PafOptions {
  double tolerance = 1e-4;
  int max_iterations = 100;
};

struct PafResult {
  Matrix loadings;  // p x k, unrotated, column sums non-negative
  Vector communalities;
  int iterations = 0;
  bool converged = false;
  bool negative_eigenvalues_clamped = false;
  bool heywood = false;  // some communality exceeded 1
};

/// Iterated principal axis factoring starting from SMC communalities.
/// Throws PreconditionError unless 1 <= k < p and SingularError if R is
/// not invertible.
PafResult paf(const SymMatrix& r, int k, const PafOptions& options = {});

/// Quartimin criterion sum_{j<l} sum_i L_ij^2 L_il^2. When `grad` is non-null
/// it receives dQ/dL.
double quartimin(const Matrix& loadings, Matrix* grad = nullptr);

/// Criterion as a function of the oblique transform T, where the rotated
/// pattern is A * inv(T)'. `grad` receives dQ/dT.
double quartimin_of_transform(const Matrix& unrotated, const Matrix& transform,
                              Matrix* grad = nullptr);

struct RotationOptions {
  int max_iterations = 1000;
  double tolerance = 1e-5;
  int random_starts = 10;
  std::uint64_t seed = 20240101;
};

struct RotationResult {
  Matrix pattern;
  SymMatrix phi;
  Matrix transform;
  double criterion = 0.0;
  double initial_criterion = 0.0;
  int iterations = 0;
  bool converged = false;
  int start = 0;  // 0 = identity, s > 0 = random start s
};

/// Direct oblimin (gamma = 0) by gradient projection. Tries the identity and
/// `random_starts` seeded random starts; lowest criterion wins, ties go to
/// the earlier start. Columns are reflected to positive sums and ordered by
/// decreasing sum of squared pattern loadings.
RotationResult rotate_oblique(const Matrix& loadings, const RotationOptions& options = {});

struct EfaOptions {
  PafOptions paf;
  RotationOptions rotation;
};

struct FactorSolution {
  int k = 0;
  std::vector<double> eigenvalues;
  Matrix pattern;
  Matrix structure;
  SymMatrix phi;
  Vector communalities;
  int iterations = 0;
  bool converged = false;
  bool rotation_converged = false;
  std::vector<std::string> notes;
};

FactorSolution run_efa(const SymMatrix& r, int k, const EfaOptions& options = {});

struct Edge {
  std::size_t item = 0;
  int factor = 0;
  double weight = 0.0;
};

struct FactorGraph {
  double threshold = 0.4;
  int factors = 0;
  std::vector<std::string> items;
  std::vector<Edge> edges;
  std::vector<std::string> isolated;
};

/// Edges for structure loadings with |s| >= threshold.
FactorGraph factor_graph(const FactorSolution& solution, const std::vector<std::string>& items,
                         double threshold = 0.4);

/// Graph of the theoretical item-dimension assignment (weight 1 per item).
FactorGraph theoretical_graph(const inst::Instrument& instrument);

/// Binary p x d matrix of the instrument's item-dimension assignment.
Matrix theoretical_pattern(const inst::Instrument& instrument);

struct Match {
  int a = 0;
  int b = 0;
  double coefficient = 0.0;
};

struct CongruenceResult {
  Matrix coefficients;  // ka x kb; NaN where a column is all zero
  std::vector<Match> matching;
  bool has_undefined = false;

  double mean_matched_abs() const;
};

/// Tucker congruence between the columns of `a` and `b` plus a greedy
/// one-to-one matching by |coefficient|.
CongruenceResult congruence(const Matrix& a, const Matrix& b);

/// Circular item-factor graph. Items sit on the outer ring coloured by
/// theoretical dimension, factor hubs on an inner ring.
std::string factor_graph_svg(const FactorGraph& graph, const inst::Instrument& instrument,
                             const std::string& title);

std::string scree_svg(const std::vector<double>& eigenvalues, const std::string& title);

}  // namespace phantom::efa
