#include "phantom/compare.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "phantom/distributions.hpp"
#include "phantom/error.hpp"

namespace phantom::compare {

namespace {

struct Pooled {
  std::vector<double> ranks;
  std::vector<std::size_t> group_of;
  double n = 0.0;
  double tie_sum = 0.0;  // sum over tie groups of t^3 - t
};

Pooled pool(std::span<const std::vector<double>> groups) {
  Pooled out;
  std::vector<double> values;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (double v : groups[g]) {
      values.push_back(v);
      out.group_of.push_back(g);
    }
  }
  out.ranks = num::midranks(values);
  out.n = static_cast<double>(values.size());
  std::map<double, double> counts;
  for (double v : values) counts[v] += 1.0;
  for (const auto& [v, t] : counts) out.tie_sum += t * t * t - t;
  return out;
}

std::vector<double> mean_ranks(const Pooled& pooled, std::size_t k, std::vector<double>& sizes) {
  std::vector<double> sums(k, 0.0);
  sizes.assign(k, 0.0);
  for (std::size_t i = 0; i < pooled.ranks.size(); ++i) {
    sums[pooled.group_of[i]] += pooled.ranks[i];
    sizes[pooled.group_of[i]] += 1.0;
  }
  for (std::size_t g = 0; g < k; ++g) sums[g] /= sizes[g];
  return sums;
}

void check_groups(std::span<const std::vector<double>> groups, const char* who) {
  if (groups.size() < 2) throw PreconditionError(std::string(who) + ": need at least 2 groups");
  for (const auto& g : groups) {
    if (g.empty()) throw PreconditionError(std::string(who) + ": empty group");
  }
}

double sample_sd(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

bool all_equal(std::span<const double> v) {
  return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
}

}  // namespace

KruskalWallisResult kruskal_wallis(std::span<const std::vector<double>> groups) {
  check_groups(groups, "kruskal_wallis");
  const Pooled pooled = pool(groups);
  KruskalWallisResult out;
  out.df = static_cast<double>(groups.size() - 1);
  const double n = pooled.n;
  const double tie_correction = 1.0 - pooled.tie_sum / (n * n * n - n);
  if (tie_correction <= 0.0) return out;  // every value tied

  std::vector<double> sizes;
  const auto means = mean_ranks(pooled, groups.size(), sizes);
  double acc = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double rank_sum = means[g] * sizes[g];
    acc += rank_sum * rank_sum / sizes[g];
  }
  const double h = 12.0 / (n * (n + 1.0)) * acc - 3.0 * (n + 1.0);
  out.h = std::max(0.0, h / tie_correction);
  out.p = dist::chi_square_upper(out.h, out.df);
  return out;
}

std::vector<DunnPair> dunn_posthoc(std::span<const std::vector<double>> groups) {
  check_groups(groups, "dunn_posthoc");
  const Pooled pooled = pool(groups);
  const double n = pooled.n;
  const double variance = n * (n + 1.0) / 12.0 - pooled.tie_sum / (12.0 * (n - 1.0));
  std::vector<double> sizes;
  const auto means = mean_ranks(pooled, groups.size(), sizes);
  const double comparisons = static_cast<double>(groups.size() * (groups.size() - 1) / 2);

  std::vector<DunnPair> out;
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      DunnPair pair{a, b, {}, {}, {}};
      if (variance > 0.0 && std::isfinite(variance)) {
        const double se = std::sqrt(variance * (1.0 / sizes[a] + 1.0 / sizes[b]));
        pair.z = (means[a] - means[b]) / se;
        pair.p_raw = dist::normal_two_sided(*pair.z);
        pair.p_bonferroni = std::min(1.0, *pair.p_raw * comparisons);
      }
      out.push_back(pair);
    }
  }
  return out;
}

std::optional<double> cronbach_alpha(const num::Matrix& items) {
  const auto k = static_cast<double>(items.cols());
  if (items.cols() < 2) throw PreconditionError("cronbach_alpha: need at least 2 items");
  if (items.rows() < 2) throw PreconditionError("cronbach_alpha: need at least 2 rows");
  const auto var = [](const num::Vector& v) {
    return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
  };
  double item_var = 0.0;
  for (Eigen::Index j = 0; j < items.cols(); ++j) item_var += var(items.col(j));
  const double total_var = var(items.rowwise().sum());
  if (!(total_var > 0.0)) return std::nullopt;
  return k / (k - 1.0) * (1.0 - item_var / total_var);
}

Correlation pearson_by_dimension(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 3) {
    throw PreconditionError("pearson_by_dimension: need equal-length vectors with n >= 3");
  }
  if (all_equal(a) || all_equal(b)) {
    return {std::nullopt, "correlation cannot be computed as SD is zero"};
  }
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), {}};
}

CorrDiffResult zou_corr_diff(double r1, std::size_t n1, double r2, std::size_t n2, double level) {
  if (!(std::abs(r1) < 1.0) || !(std::abs(r2) < 1.0)) {
    throw PreconditionError("zou_corr_diff: |r| must be below 1");
  }
  if (n1 <= 3 || n2 <= 3) throw PreconditionError("zou_corr_diff: need n > 3");
  const double z = dist::normal_quantile(1.0 - (1.0 - level) / 2.0);
  const auto limits = [z](double r, std::size_t n) {
    const double half = z / std::sqrt(static_cast<double>(n) - 3.0);
    return std::pair{std::tanh(std::atanh(r) - half), std::tanh(std::atanh(r) + half)};
  };
  const auto [l1, u1] = limits(r1, n1);
  const auto [l2, u2] = limits(r2, n2);
  CorrDiffResult out{r1, r2, n1, n2, 0.0, 0.0, false};
  const double diff = r1 - r2;
  out.lower = diff - std::sqrt((r1 - l1) * (r1 - l1) + (u2 - r2) * (u2 - r2));
  out.upper = diff + std::sqrt((u1 - r1) * (u1 - r1) + (r2 - l2) * (r2 - l2));
  out.significant = out.lower > 0.0 || out.upper < 0.0;
  return out;
}

const std::vector<double>& GroupScores::of(const std::string& dimension) const {
  for (std::size_t d = 0; d < dimensions.size(); ++d) {
    if (dimensions[d] == dimension) return scores[d];
  }
  throw PreconditionError("group " + group + " has no dimension '" + dimension + "'");
}

GroupScores group_scores(std::span<const inst::ResponseMatrix> matrices,
                         std::span<const inst::Instrument> instruments) {
  if (matrices.size() != instruments.size() || matrices.empty()) {
    throw PreconditionError("group_scores: need one matrix per instrument");
  }
  GroupScores out;
  out.group = matrices.front().group;
  for (std::size_t m = 0; m < matrices.size(); ++m) {
    if (matrices[m].rows() != matrices.front().rows()) {
      throw PreconditionError("group_scores: instruments answered by different respondents");
    }
    const auto cs = inst::composite_scores(matrices[m], instruments[m]);
    for (std::size_t d = 0; d < cs.dimensions.size(); ++d) {
      out.dimensions.push_back(cs.dimensions[d]);
      const auto col = cs.scores.col(static_cast<Eigen::Index>(d));
      out.scores.emplace_back(col.data(), col.data() + col.size());
    }
  }
  return out;
}

DescriptivesTable descriptives(std::span<const GroupScores> groups, std::size_t reference,
                               double alpha) {
  if (groups.empty()) throw PreconditionError("descriptives: no groups");
  if (reference >= groups.size()) throw PreconditionError("descriptives: bad reference group");
  for (const auto& g : groups) {
    if (g.dimensions != groups.front().dimensions) {
      throw PreconditionError("descriptives: groups have different dimensions");
    }
  }
  DescriptivesTable table;
  table.reference = reference;
  for (const auto& g : groups) table.groups.push_back(g.group);

  for (std::size_t d = 0; d < groups.front().dimensions.size(); ++d) {
    DescriptivesRow row;
    row.dimension = groups.front().dimensions[d];
    std::vector<std::vector<double>> samples;
    for (const auto& g : groups) {
      const auto& v = g.scores[d];
      DescriptiveCell cell;
      cell.n = v.size();
      cell.mean = v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      cell.sd = sample_sd(v, cell.mean);
      cell.zero_sd = all_equal(v);
      row.cells.push_back(cell);
      samples.push_back(v);
    }
    if (groups.size() >= 2) {
      row.kruskal_wallis = kruskal_wallis(samples);
      const auto pairs = dunn_posthoc(samples);
      for (const auto& pair : pairs) {
        if (pair.a != reference && pair.b != reference) continue;
        const std::size_t other = pair.a == reference ? pair.b : pair.a;
        auto& cell = row.cells[other];
        DunnPair oriented = pair;
        if (pair.a == reference) {
          // Report as (other - reference).
          oriented.a = other;
          oriented.b = reference;
          if (oriented.z) oriented.z = -*oriented.z;
        }
        cell.vs_reference = oriented;
        if (row.kruskal_wallis->p < alpha && !cell.zero_sd && !row.cells[reference].zero_sd &&
            pair.p_bonferroni) {
          if (*pair.p_bonferroni < 0.001) {
            cell.stars = 2;
          } else if (*pair.p_bonferroni < alpha) {
            cell.stars = 1;
          }
        }
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

CorrelationTable correlation_table(std::span<const GroupScores> groups, std::size_t reference,
                                   const std::string& anchor,
                                   const std::vector<std::string>& targets, double level) {
  if (reference >= groups.size()) throw PreconditionError("correlation_table: bad reference group");
  CorrelationTable table;
  table.anchor = anchor;
  table.reference = reference;
  for (const auto& g : groups) table.groups.push_back(g.group);
  for (const auto& target : targets) {
    CorrelationRow row;
    row.target = target;
    for (const auto& g : groups) {
      const auto& a = g.of(anchor);
      row.cells.push_back({pearson_by_dimension(a, g.of(target)), a.size(), std::nullopt});
    }
    const auto& ref = row.cells[reference];
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      auto& cell = row.cells[gi];
      if (gi == reference || !cell.correlation.r || !ref.correlation.r) continue;
      if (std::abs(*cell.correlation.r) >= 1.0 || std::abs(*ref.correlation.r) >= 1.0) continue;
      cell.vs_reference =
          zou_corr_diff(*cell.correlation.r, cell.n, *ref.correlation.r, ref.n, level);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string to_markdown(const DescriptivesTable& table) {
  std::ostringstream os;
  os << "| Dimension |";
  for (const auto& g : table.groups) os << ' ' << g << " |";
  os << " KW H (p) |\n|---|";
  for (std::size_t i = 0; i < table.groups.size(); ++i) os << "---|";
  os << "---|\n";
  bool any_zero = false;
  for (const auto& row : table.rows) {
    os << "| " << row.dimension << " |";
    for (const auto& c : row.cells) {
      if (c.zero_sd) {
        any_zero = true;
        os << fmt::format(" {:.2f} (0)^a |", c.mean);
      } else {
        os << fmt::format(" {:.2f} ({:.2f}){} |", c.mean, c.sd, std::string(static_cast<std::size_t>(c.stars), '*'));
      }
    }
    if (row.kruskal_wallis) {
      os << fmt::format(" {:.2f} ({:.3g}) |\n", row.kruskal_wallis->h, row.kruskal_wallis->p);
    } else {
      os << " - |\n";
    }
  }
  os << "\nMean (SD) of composite scores. * = different from " << table.groups[table.reference]
     << " at p < .05, ** at p < .001 (Dunn, Bonferroni-adjusted, after a significant "
        "Kruskal-Wallis test).";
  if (any_zero) os << " ^a = scores cannot be compared as SD is zero.";
  os << '\n';
  return os.str();
}

std::string to_markdown(const CorrelationTable& table) {
  std::ostringstream os;
  os << "| " << table.anchor << " with |";
  for (const auto& g : table.groups) os << ' ' << g << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < table.groups.size(); ++i) os << "---|";
  os << '\n';
  bool any_na = false;
  for (const auto& row : table.rows) {
    os << "| " << row.target << " |";
    for (const auto& c : row.cells) {
      if (!c.correlation.r) {
        any_na = true;
        os << " NA^a |";
      } else {
        os << fmt::format(" {:.2f}{} |", *c.correlation.r,
                          c.vs_reference && c.vs_reference->significant ? "*" : "");
      }
    }
    os << '\n';
  }
  os << "\nPearson correlations of composite scores. * = 95% Zou interval for the difference from "
     << table.groups[table.reference] << " excludes 0.";
  if (any_na) os << " ^a = correlation cannot be computed as SD is zero.";
  os << '\n';
  return os.str();
}

}  // namespace phantom::compare
