#include "phantom/assume.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "phantom/distributions.hpp"
#include "phantom/error.hpp"
#include "phantom/rng.hpp"

namespace phantom::assume {

using num::Index;
using num::Matrix;
using num::SymMatrix;
using num::Vector;

BartlettResult bartlett_sphericity(const SymMatrix& r, std::int64_t n) {
  const auto p = static_cast<double>(r.order());
  const double log_det = num::log_det_spd(r);
  const double multiplier = static_cast<double>(n) - 1.0 - (2.0 * p + 5.0) / 6.0;
  BartlettResult out;
  out.chi2 = -multiplier * log_det;
  out.df = p * (p - 1.0) / 2.0;
  out.p = dist::chi_square_upper(out.chi2, out.df);
  if (multiplier <= 0.0) {
    out.warning = "n too small for the number of items (n - 1 - (2p+5)/6 <= 0)";
  }
  return out;
}

KmoResult kmo(const SymMatrix& r) {
  const SymMatrix inv = num::inverse_spd(r);
  const Index p = r.order();
  KmoResult out;
  out.per_item.resize(static_cast<std::size_t>(p));
  double r2_total = 0.0;
  double q2_total = 0.0;
  for (Index i = 0; i < p; ++i) {
    double r2 = 0.0;
    double q2 = 0.0;
    for (Index j = 0; j < p; ++j) {
      if (i == j) continue;
      const double partial = -inv(i, j) / std::sqrt(inv(i, i) * inv(j, j));
      r2 += r(i, j) * r(i, j);
      q2 += partial * partial;
    }
    out.per_item[static_cast<std::size_t>(i)] = (r2 + q2) > 0.0 ? r2 / (r2 + q2) : 0.0;
    r2_total += r2;
    q2_total += q2;
  }
  out.overall = (r2_total + q2_total) > 0.0 ? r2_total / (r2_total + q2_total) : 0.0;
  return out;
}

std::vector<double> smc(const SymMatrix& r) {
  const SymMatrix inv = num::inverse_spd(r);
  std::vector<double> out(static_cast<std::size_t>(r.order()));
  for (Index i = 0; i < r.order(); ++i) {
    out[static_cast<std::size_t>(i)] = std::clamp(1.0 - 1.0 / inv(i, i), 0.0, 1.0);
  }
  return out;
}

HenzeZirklerResult henze_zirkler(const Matrix& x) {
  const Index n = x.rows();
  const Index pi = x.cols();
  if (n < 2 || pi < 1) throw PreconditionError("henze_zirkler: need n >= 2 and p >= 1");
  const auto nd = static_cast<double>(n);
  const auto p = static_cast<double>(pi);

  HenzeZirklerResult out;
  if (n <= pi) out.warning = "n <= p; the test has little power";

  const Matrix centered = x.rowwise() - x.colwise().mean();
  // Maximum-likelihood covariance (divisor n).
  const Matrix s = (centered.transpose() * centered) / nd;
  Eigen::LLT<Matrix> llt(s);
  const auto eig = num::eigen_sym(SymMatrix(s));
  const double smallest = eig.values(eig.values.size() - 1);
  if (llt.info() != Eigen::Success || !(smallest > 1e-12 * std::max(1.0, eig.values(0)))) {
    std::string which;
    const auto constant = num::constant_columns(x);
    for (Index j : constant) which += (which.empty() ? "" : ",") + std::to_string(j);
    throw SingularError(
        "henze_zirkler: sample covariance is singular" +
            (which.empty() ? std::string{} : " (constant columns: " + which + ")"),
        smallest);
  }
  // Rows of y are whitened observations: |y_i - y_j|^2 is the Mahalanobis distance.
  const Matrix y = llt.matrixL().solve(centered.transpose()).transpose();
  const Vector sq = y.rowwise().squaredNorm();
  const Matrix gram = y * y.transpose();

  const double beta = (1.0 / std::sqrt(2.0)) * std::pow((2.0 * p + 1.0) * nd / 4.0, 1.0 / (p + 4.0));
  const double b2 = beta * beta;
  // Diagonal terms contribute exp(0) = 1 each; off-diagonal terms pair up.
  double off_diagonal = 0.0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = j + 1; i < n; ++i) {
      const double d = std::max(0.0, sq(i) + sq(j) - 2.0 * gram(i, j));
      off_diagonal += std::exp(-0.5 * b2 * d);
    }
  }
  const double pair_sum = nd + 2.0 * off_diagonal;
  double centre_sum = 0.0;
  for (Index i = 0; i < n; ++i) centre_sum += std::exp(-b2 / (2.0 * (1.0 + b2)) * sq(i));

  out.beta = beta;
  out.statistic = pair_sum / nd - 2.0 * std::pow(1.0 + b2, -p / 2.0) * centre_sum +
                  nd * std::pow(1.0 + 2.0 * b2, -p / 2.0);

  const double a = 1.0 + 2.0 * b2;
  const double b4 = b2 * b2;
  const double b8 = b4 * b4;
  const double mu = 1.0 - std::pow(a, -p / 2.0) *
                              (1.0 + p * b2 / a + p * (p + 2.0) * b4 / (2.0 * a * a));
  const double w = (1.0 + b2) * (1.0 + 3.0 * b2);
  const double var =
      2.0 * std::pow(1.0 + 4.0 * b2, -p / 2.0) +
      2.0 * std::pow(a, -p) * (1.0 + 2.0 * p * b4 / (a * a) + 3.0 * p * (p + 2.0) * b8 / (4.0 * std::pow(a, 4))) -
      4.0 * std::pow(w, -p / 2.0) *
          (1.0 + 3.0 * p * b4 / (2.0 * w) + p * (p + 2.0) * b8 / (2.0 * w * w));
  // log1p: for large p the variance is ~1e-17 and (var + mu^2) / mu^2 rounds to 1.
  const double spread = std::log1p(var / (mu * mu));
  const double log_mu = std::log(mu) - 0.5 * spread;
  const double log_sigma = std::sqrt(spread);
  out.p = 1.0 - dist::lognormal_cdf(out.statistic, log_mu, log_sigma);
  return out;
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> select_pairs(std::size_t p,
                                                              const LinearityOptions& opt) {
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = i + 1; j < p; ++j) all.emplace_back(i, j);
  }
  if (all.size() <= opt.max_pairs) return all;
  // Partial Fisher-Yates shuffle, then restore lexical order.
  Rng rng(opt.seed);
  for (std::size_t k = 0; k < opt.max_pairs; ++k) {
    const auto pick = k + rng.below(all.size() - k);
    std::swap(all[k], all[pick]);
  }
  all.resize(opt.max_pairs);
  std::sort(all.begin(), all.end());
  return all;
}

Vector standardize(const Vector& v) {
  const double mean = v.mean();
  const double sd = std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
  return (v.array() - mean) / sd;
}

// Returns (c, p) for the quadratic term of zy ~ zx + zx^2, or nullopt if the
// regression is not identified.
std::optional<std::pair<double, double>> quadratic_term(const Vector& x, const Vector& y) {
  const Index n = x.size();
  if (n < 4) return std::nullopt;
  const Vector zx = standardize(x);
  const Vector zy = standardize(y);
  Matrix design(n, 3);
  design.col(0).setOnes();
  design.col(1) = zx;
  design.col(2) = zx.array().square();
  design.col(2).array() -= design.col(2).mean();
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) return std::nullopt;
  const Vector beta = qr.solve(zy);
  const double rss = (zy - design * beta).squaredNorm();
  const double sigma2 = rss / static_cast<double>(n - 3);
  const Matrix xtx = design.transpose() * design;
  const Vector e2 = xtx.ldlt().solve(Vector::Unit(3, 2));
  const double se = std::sqrt(sigma2 * e2(2));
  const double c = beta(2);
  if (!(se > 1e-12)) return std::make_pair(c, std::abs(c) > 1e-10 ? 0.0 : 1.0);
  return std::make_pair(c, dist::student_t_two_sided(c / se, static_cast<double>(n - 3)));
}

}  // namespace

LinearityReport linearity_diagnostics(const Matrix& x, const LinearityOptions& options) {
  if (x.cols() < 2) throw PreconditionError("linearity_diagnostics: need at least 2 columns");
  const auto constant = num::constant_columns(x);
  const std::set<Index> skip(constant.begin(), constant.end());
  LinearityReport out;
  for (const auto& [i, j] : select_pairs(static_cast<std::size_t>(x.cols()), options)) {
    const auto ii = static_cast<Index>(i);
    const auto jj = static_cast<Index>(j);
    if (skip.contains(ii) || skip.contains(jj)) continue;
    ++out.pairs_checked;
    const auto term = quadratic_term(x.col(ii), x.col(jj));
    if (!term) continue;
    const auto [c, p] = *term;
    if (p < options.p_threshold && std::abs(c) > options.min_standardized_quadratic) {
      out.flagged.push_back({i, j, c, p});
    }
  }
  std::sort(out.flagged.begin(), out.flagged.end(), [](const auto& a, const auto& b) {
    if (a.p != b.p) return a.p < b.p;
    return std::abs(a.quadratic) > std::abs(b.quadratic);
  });
  out.chance_bound =
      dist::binomial_quantile(static_cast<unsigned>(out.pairs_checked), options.p_threshold, 0.99);
  return out;
}

void write_scatter_files(const std::filesystem::path& dir, const Matrix& x,
                         const LinearityReport& report, const std::vector<std::string>& names) {
  std::filesystem::create_directories(dir);
  auto name = [&](std::size_t i) { return i < names.size() ? names[i] : std::to_string(i); };
  for (const auto& pair : report.flagged) {
    std::ofstream out(dir / ("pair_" + name(pair.x) + "_" + name(pair.y) + ".csv"));
    out << name(pair.x) << ',' << name(pair.y) << '\n';
    for (Index r = 0; r < x.rows(); ++r) {
      out << x(r, static_cast<Index>(pair.x)) << ',' << x(r, static_cast<Index>(pair.y)) << '\n';
    }
  }
}

AssumptionReport run_battery(const Matrix& x, const std::vector<std::string>& items,
                             const BatteryOptions& options) {
  AssumptionReport rep;
  rep.items = items;
  rep.n = static_cast<std::size_t>(x.rows());
  rep.options = options;
  auto name = [&](Index j) {
    return j < static_cast<Index>(items.size()) ? items[static_cast<std::size_t>(j)]
                                                : std::to_string(j);
  };
  if (x.rows() < 3 || x.cols() < 2) {
    rep.notes.push_back("too few rows or columns for any check");
    return rep;
  }

  const auto constant = num::constant_columns(x);
  for (Index j : constant) rep.zero_variance_items.push_back(name(j));

  try {
    rep.linearity = linearity_diagnostics(x, options.linearity);
  } catch (const Error& e) {
    rep.notes.push_back(std::string("linearity: ") + e.what());
  }

  if (!constant.empty()) {
    rep.notes.push_back("zero-variance items make the correlation matrix incomputable; "
                        "factor analysis is impossible");
    // Normality is still assessed on the varying items.
    std::vector<Index> keep;
    for (Index j = 0; j < x.cols(); ++j) {
      if (!std::binary_search(constant.begin(), constant.end(), j)) keep.push_back(j);
    }
    if (!keep.empty()) {
      Matrix sub(x.rows(), static_cast<Index>(keep.size()));
      for (std::size_t k = 0; k < keep.size(); ++k) sub.col(static_cast<Index>(k)) = x.col(keep[k]);
      try {
        rep.hz = henze_zirkler(sub);
        rep.notes.push_back("normality assessed on the " + std::to_string(keep.size()) +
                            " varying items");
      } catch (const Error& e) {
        rep.notes.push_back(std::string("normality: ") + e.what());
      }
    }
    rep.fa_possible = false;
    rep.factorable = false;
    return rep;
  }

  rep.fa_possible = true;
  try {
    rep.hz = henze_zirkler(x);
  } catch (const Error& e) {
    rep.notes.push_back(std::string("normality: ") + e.what());
  }

  const SymMatrix r = num::correlation_matrix(x, items);
  try {
    rep.bartlett = bartlett_sphericity(r, static_cast<std::int64_t>(x.rows()));
    if (rep.bartlett->warning) rep.notes.push_back("bartlett: " + *rep.bartlett->warning);
  } catch (const SingularError& e) {
    rep.notes.push_back(std::string("bartlett: ") + e.what() + " (multicollinearity)");
  }
  try {
    rep.kmo = kmo(r);
    rep.smc = smc(r);
    for (std::size_t i = 0; i < rep.smc->size(); ++i) {
      const double v = (*rep.smc)[i];
      if (v > options.smc_band.high) rep.multicollinear_items.push_back(name(static_cast<Index>(i)));
      if (v < options.smc_band.low) rep.outlier_items.push_back(name(static_cast<Index>(i)));
    }
  } catch (const SingularError& e) {
    rep.notes.push_back(std::string("kmo/smc: ") + e.what() + " (multicollinearity)");
  }
  rep.factorable = rep.bartlett_ok() && rep.kmo_ok();
  return rep;
}

}  // namespace phantom::assume
