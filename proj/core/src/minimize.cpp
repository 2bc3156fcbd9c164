#include "phantom/minimize.hpp"

#include <cmath>
#include <deque>

#include "phantom/error.hpp"

namespace phantom::num {

namespace {

Vector project(const Vector& x, const std::optional<Bounds>& bounds) {
  if (!bounds) return x;
  return x.cwiseMax(bounds->lower).cwiseMin(bounds->upper);
}

// Gradient with components that push against an active bound zeroed.
Vector projected_gradient(const Vector& x, const Vector& g, const std::optional<Bounds>& bounds) {
  if (!bounds) return g;
  Vector pg = g;
  for (Index i = 0; i < x.size(); ++i) {
    if ((x(i) <= bounds->lower(i) && g(i) > 0) || (x(i) >= bounds->upper(i) && g(i) < 0)) {
      pg(i) = 0.0;
    }
  }
  return pg;
}

struct Pair {
  Vector s;
  Vector y;
  double rho;
};

Vector two_loop(const Vector& g, const std::deque<Pair>& hist) {
  Vector q = g;
  std::vector<double> alpha(hist.size());
  for (std::size_t i = hist.size(); i-- > 0;) {
    alpha[i] = hist[i].rho * hist[i].s.dot(q);
    q -= alpha[i] * hist[i].y;
  }
  if (!hist.empty()) {
    const auto& last = hist.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double beta = hist[i].rho * hist[i].y.dot(q);
    q += (alpha[i] - beta) * hist[i].s;
  }
  return -q;
}

}  // namespace

MinimizerResult minimize(const Objective& objective, const Vector& start,
                         const std::optional<Bounds>& bounds, const MinimizerOptions& options) {
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 60;

  MinimizerResult res;
  res.x = project(start, bounds);
  Vector grad(res.x.size());
  res.value = objective(res.x, grad);
  if (!std::isfinite(res.value) || !grad.allFinite()) {
    throw PreconditionError("minimize: objective is not finite at the start point");
  }
  std::deque<Pair> hist;

  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    const Vector pg = projected_gradient(res.x, grad, bounds);
    res.gradient_norm = pg.norm();
    if (res.gradient_norm <= options.gradient_tolerance) {
      res.converged = true;
      res.reason = StopReason::gradient;
      return res;
    }

    Vector dir = two_loop(pg, hist);
    if (dir.dot(pg) >= 0) {
      hist.clear();
      dir = -pg;
    }
    if (hist.empty()) {
      // First step: scale so the initial trial moves at most unit length.
      dir /= std::max(1.0, dir.norm());
    }

    double step = 1.0;
    Vector trial_x, trial_grad(res.x.size());
    double trial_value = 0.0;
    bool accepted = false;
    bool any_finite = false;
    for (int bt = 0; bt < kMaxBacktracks; ++bt, step *= 0.5) {
      trial_x = project(res.x + step * dir, bounds);
      trial_value = objective(trial_x, trial_grad);
      if (!std::isfinite(trial_value) || !trial_grad.allFinite()) continue;
      any_finite = true;
      const double decrease = pg.dot(trial_x - res.x);
      if (trial_value <= res.value + kArmijo * decrease) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!any_finite) {
        throw NumericalError("minimize: objective non-finite along the search direction", res.x);
      }
      if (!hist.empty()) {
        // Retry once from steepest descent before giving up.
        hist.clear();
        continue;
      }
      res.reason = StopReason::line_search;
      return res;
    }

    const Vector s = trial_x - res.x;
    const Vector y = trial_grad - grad;
    const double sy = s.dot(y);
    const double previous = res.value;
    res.x = trial_x;
    res.value = trial_value;
    grad = trial_grad;
    if (sy > 1e-12 * s.norm() * y.norm()) {
      hist.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(hist.size()) > options.history) hist.pop_front();
    }

    if (std::abs(previous - res.value) <=
        options.relative_tolerance * std::max(std::abs(previous), 1e-300)) {
      res.gradient_norm = projected_gradient(res.x, grad, bounds).norm();
      res.converged = true;
      res.reason = res.gradient_norm <= options.gradient_tolerance ? StopReason::gradient
                                                                   : StopReason::objective_change;
      ++res.iterations;
      return res;
    }
  }
  res.gradient_norm = projected_gradient(res.x, grad, bounds).norm();
  res.converged = res.gradient_norm <= options.gradient_tolerance;
  res.reason = res.converged ? StopReason::gradient : StopReason::max_iterations;
  return res;
}

}  // namespace phantom::num
