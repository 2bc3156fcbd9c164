#include "phantom/efa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/LU>

#include "phantom/assume.hpp"
#include "phantom/error.hpp"
#include "phantom/rng.hpp"

namespace phantom::efa {

using num::Index;

ScreeResult scree(const SymMatrix& r) {
  const auto eig = num::eigen_sym(r);
  ScreeResult out;
  out.eigenvalues.assign(eig.values.data(), eig.values.data() + eig.values.size());
  out.kaiser_count = static_cast<int>(
      std::count_if(out.eigenvalues.begin(), out.eigenvalues.end(), [](double v) { return v > 1.0; }));
  return out;
}

PafResult paf(const SymMatrix& r, int k, const PafOptions& options) {
  const Index p = r.order();
  if (k < 1 || k >= p) {
    throw PreconditionError("paf: need 1 <= k < p (k=" + std::to_string(k) +
                            ", p=" + std::to_string(p) + ")");
  }
  const auto initial = assume::smc(r);
  Vector h2 = Eigen::Map<const Vector>(initial.data(), p);

  PafResult out;
  Matrix reduced = r.matrix();
  for (out.iterations = 1; out.iterations <= options.max_iterations; ++out.iterations) {
    reduced.diagonal() = h2;
    const auto eig = num::eigen_sym(SymMatrix(reduced));
    Matrix loadings(p, k);
    for (int j = 0; j < k; ++j) {
      const double lambda = eig.values(j);
      if (lambda < 0.0) out.negative_eigenvalues_clamped = true;
      loadings.col(j) = eig.vectors.col(j) * std::sqrt(std::max(lambda, 0.0));
    }
    const Vector next = loadings.rowwise().squaredNorm();
    const double change = (next - h2).cwiseAbs().maxCoeff();
    h2 = next;
    out.loadings = std::move(loadings);
    if (change <= options.tolerance) {
      out.converged = true;
      break;
    }
  }
  out.iterations = std::min(out.iterations, options.max_iterations);
  for (int j = 0; j < k; ++j) {
    if (out.loadings.col(j).sum() < 0) out.loadings.col(j) *= -1.0;
  }
  out.communalities = out.loadings.rowwise().squaredNorm();
  out.heywood = (out.communalities.array() > 1.0).any();
  return out;
}

double quartimin(const Matrix& loadings, Matrix* grad) {
  const Matrix sq = loadings.array().square();
  const Vector row_sum = sq.rowwise().sum();
  double q = 0.0;
  for (Index i = 0; i < sq.rows(); ++i) {
    q += 0.5 * (row_sum(i) * row_sum(i) - sq.row(i).squaredNorm());
  }
  if (grad) {
    *grad = 2.0 * loadings.array() * (row_sum.replicate(1, sq.cols()) - sq).array();
  }
  return q;
}

double quartimin_of_transform(const Matrix& unrotated, const Matrix& transform, Matrix* grad) {
  const Matrix t_inv = transform.inverse();
  const Matrix pattern = unrotated * t_inv.transpose();
  Matrix gq;
  const double q = quartimin(pattern, grad ? &gq : nullptr);
  if (grad) *grad = -(pattern.transpose() * gq * t_inv).transpose();
  return q;
}

namespace {

struct GpResult {
  Matrix transform;
  double criterion;
  int iterations;
  bool converged;
};

// Gradient projection for oblique rotation with unit-length columns of T.
GpResult gradient_projection(const Matrix& a, Matrix t, const RotationOptions& options) {
  Matrix g;
  double f = quartimin_of_transform(a, t, &g);
  double alpha = 1.0;
  GpResult out{t, f, 0, false};
  for (int it = 0; it < options.max_iterations; ++it) {
    const Vector col_dots = (t.array() * g.array()).colwise().sum();
    const Matrix gp = g - t * col_dots.asDiagonal();
    const double s = gp.norm();
    out.iterations = it;
    if (s < options.tolerance) {
      out.converged = true;
      break;
    }
    alpha *= 2.0;
    Matrix tt = t;
    Matrix gt;
    double ft = f;
    bool improved = false;
    for (int inner = 0; inner <= 10; ++inner) {
      Matrix x = t - alpha * gp;
      const Vector inv_norm = x.colwise().norm().cwiseInverse();
      tt = x * inv_norm.asDiagonal();
      if (std::abs(tt.determinant()) < 1e-12) {
        alpha *= 0.5;
        continue;
      }
      ft = quartimin_of_transform(a, tt, &gt);
      if (ft < f - 0.5 * s * s * alpha) {
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!improved && !(ft < f)) {
      // No admissible decrease: stay at the best point found.
      out.iterations = it + 1;
      break;
    }
    t = std::move(tt);
    f = ft;
    g = std::move(gt);
  }
  out.transform = t;
  out.criterion = f;
  return out;
}

}  // namespace

RotationResult rotate_oblique(const Matrix& loadings, const RotationOptions& options) {
  const Index k = loadings.cols();
  RotationResult out;
  out.initial_criterion = quartimin(loadings);
  if (k <= 1) {
    out.pattern = loadings;
    out.phi = SymMatrix::identity(k);
    out.transform = Matrix::Identity(k, k);
    out.criterion = out.initial_criterion;
    out.converged = true;
    return out;
  }

  GpResult best = gradient_projection(loadings, Matrix::Identity(k, k), options);
  out.start = 0;
  for (int s = 1; s <= options.random_starts; ++s) {
    Rng rng(options.seed, static_cast<std::uint64_t>(s));
    Matrix t(k, k);
    for (Index j = 0; j < k; ++j) {
      for (Index i = 0; i < k; ++i) t(i, j) = rng.normal();
    }
    t = t * t.colwise().norm().cwiseInverse().asDiagonal();
    if (std::abs(t.determinant()) < 1e-6) continue;
    GpResult candidate = gradient_projection(loadings, t, options);
    if (candidate.criterion < best.criterion - 1e-12 * std::max(1.0, best.criterion)) {
      best = std::move(candidate);
      out.start = s;
    }
  }

  Matrix t = best.transform;
  Matrix pattern = loadings * t.inverse().transpose();
  // Reflect to positive column sums; reflecting column j of T reflects
  // pattern column j and row/column j of phi.
  for (Index j = 0; j < k; ++j) {
    if (pattern.col(j).sum() < 0) {
      pattern.col(j) *= -1.0;
      t.col(j) *= -1.0;
    }
  }
  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  const Vector ss = pattern.colwise().squaredNorm();
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return ss(x) > ss(y); });
  Matrix sorted_pattern(pattern.rows(), k);
  Matrix sorted_t(k, k);
  for (Index j = 0; j < k; ++j) {
    sorted_pattern.col(j) = pattern.col(order[static_cast<std::size_t>(j)]);
    sorted_t.col(j) = t.col(order[static_cast<std::size_t>(j)]);
  }
  out.pattern = std::move(sorted_pattern);
  out.transform = std::move(sorted_t);
  Matrix phi = out.transform.transpose() * out.transform;
  phi.diagonal().setOnes();
  out.phi = SymMatrix(phi);
  out.criterion = quartimin(out.pattern);
  out.iterations = best.iterations;
  out.converged = best.converged;
  return out;
}

FactorSolution run_efa(const SymMatrix& r, int k, const EfaOptions& options) {
  FactorSolution sol;
  sol.k = k;
  sol.eigenvalues = scree(r).eigenvalues;
  const PafResult extracted = paf(r, k, options.paf);
  sol.iterations = extracted.iterations;
  sol.converged = extracted.converged;
  if (!extracted.converged) {
    sol.notes.push_back("PAF did not converge in " + std::to_string(options.paf.max_iterations) +
                        " iterations");
  }
  if (extracted.negative_eigenvalues_clamped) {
    sol.notes.push_back("negative eigenvalues of the reduced matrix clamped at 0");
  }
  if (extracted.heywood) sol.notes.push_back("Heywood case: a communality exceeds 1");
  const RotationResult rot = rotate_oblique(extracted.loadings, options.rotation);
  sol.rotation_converged = rot.converged;
  if (!rot.converged) sol.notes.push_back("oblimin rotation did not converge; best found returned");
  sol.pattern = rot.pattern;
  sol.phi = rot.phi;
  sol.structure = rot.pattern * rot.phi.matrix();
  sol.communalities = (sol.pattern * rot.phi.matrix()).cwiseProduct(sol.pattern).rowwise().sum();
  return sol;
}

FactorGraph factor_graph(const FactorSolution& solution, const std::vector<std::string>& items,
                         double threshold) {
  FactorGraph g;
  g.threshold = threshold;
  g.factors = static_cast<int>(solution.structure.cols());
  g.items = items;
  for (Index i = 0; i < solution.structure.rows(); ++i) {
    bool connected = false;
    for (Index j = 0; j < solution.structure.cols(); ++j) {
      const double w = solution.structure(i, j);
      if (std::abs(w) >= threshold) {
        g.edges.push_back({static_cast<std::size_t>(i), static_cast<int>(j), w});
        connected = true;
      }
    }
    if (!connected) {
      g.isolated.push_back(static_cast<std::size_t>(i) < items.size()
                               ? items[static_cast<std::size_t>(i)]
                               : std::to_string(i));
    }
  }
  return g;
}

Matrix theoretical_pattern(const inst::Instrument& instrument) {
  Matrix m = Matrix::Zero(static_cast<Index>(instrument.size()),
                          static_cast<Index>(instrument.dimensions.size()));
  for (std::size_t d = 0; d < instrument.dimensions.size(); ++d) {
    for (const auto& item : instrument.dimensions[d].items) {
      m(static_cast<Index>(instrument.index_of(item)), static_cast<Index>(d)) = 1.0;
    }
  }
  return m;
}

FactorGraph theoretical_graph(const inst::Instrument& instrument) {
  FactorSolution s;
  s.structure = theoretical_pattern(instrument);
  return factor_graph(s, instrument.item_ids(), 0.4);
}

double CongruenceResult::mean_matched_abs() const {
  if (matching.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& m : matching) acc += std::abs(m.coefficient);
  return acc / static_cast<double>(matching.size());
}

CongruenceResult congruence(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw PreconditionError("congruence: item sets differ in size");
  CongruenceResult out;
  out.coefficients.resize(a.cols(), b.cols());
  for (Index i = 0; i < a.cols(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      const double denom = std::sqrt(a.col(i).squaredNorm() * b.col(j).squaredNorm());
      if (denom == 0.0) {
        out.coefficients(i, j) = std::numeric_limits<double>::quiet_NaN();
        out.has_undefined = true;
      } else {
        out.coefficients(i, j) = a.col(i).dot(b.col(j)) / denom;
      }
    }
  }
  struct Cand {
    double abs;
    Index i;
    Index j;
  };
  std::vector<Cand> cands;
  for (Index i = 0; i < a.cols(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      if (!std::isnan(out.coefficients(i, j))) cands.push_back({std::abs(out.coefficients(i, j)), i, j});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.abs > y.abs; });
  std::vector<bool> used_a(static_cast<std::size_t>(a.cols())), used_b(static_cast<std::size_t>(b.cols()));
  for (const auto& c : cands) {
    if (used_a[static_cast<std::size_t>(c.i)] || used_b[static_cast<std::size_t>(c.j)]) continue;
    used_a[static_cast<std::size_t>(c.i)] = used_b[static_cast<std::size_t>(c.j)] = true;
    out.matching.push_back({static_cast<int>(c.i), static_cast<int>(c.j), out.coefficients(c.i, c.j)});
  }
  std::sort(out.matching.begin(), out.matching.end(), [](const Match& x, const Match& y) { return x.a < y.a; });
  return out;
}

}  // namespace phantom::efa
