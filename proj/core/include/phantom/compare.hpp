#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phantom/instrument.hpp"
#include "phantom/linalg.hpp"

namespace phantom::compare {

struct KruskalWallisResult {
  double h = 0.0;
  double df = 0.0;
  double p = 1.0;
};

/// Kruskal-Wallis H with tie correction. Throws PreconditionError for fewer
/// than two groups or an empty group.
KruskalWallisResult kruskal_wallis(std::span<const std::vector<double>> groups);

struct DunnPair {
  std::size_t a = 0;
  std::size_t b = 0;
  std::optional<double> z;  // (mean rank a - mean rank b) / se; empty when undefined
  std::optional<double> p_raw;
  std::optional<double> p_bonferroni;
};

/// Dunn's pairwise test on pooled midranks, all k(k-1)/2 pairs with a < b.
/// Bonferroni multiplier is the number of pairs.
std::vector<DunnPair> dunn_posthoc(std::span<const std::vector<double>> groups);

/// Cronbach's alpha for an n x k item block; empty when total variance is 0.
std::optional<double> cronbach_alpha(const num::Matrix& items);

struct Correlation {
  std::optional<double> r;
  std::string na_reason;
};

/// Pearson r of two composite-score vectors; NA with a reason on zero variance.
Correlation pearson_by_dimension(std::span<const double> a, std::span<const double> b);

struct CorrDiffResult {
  double r1 = 0.0;
  double r2 = 0.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  double lower = 0.0;
  double upper = 0.0;
  bool significant = false;
};

/// Zou (2007) interval for r1 - r2 from independent samples, built from
/// Fisher-z limits of each correlation.
CorrDiffResult zou_corr_diff(double r1, std::size_t n1, double r2, std::size_t n2,
                             double level = 0.95);

/// Composite scores of one group, one vector per dimension.
struct GroupScores {
  std::string group;
  std::vector<std::string> dimensions;
  std::vector<std::vector<double>> scores;

  const std::vector<double>& of(const std::string& dimension) const;
};

/// Composite scores for each instrument's dimensions, concatenated in order.
/// Matrices must already be reverse-scored.
GroupScores group_scores(std::span<const inst::ResponseMatrix> matrices,
                         std::span<const inst::Instrument> instruments);

struct DescriptiveCell {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
  bool zero_sd = false;
  int stars = 0;  // 0, 1 (p < .05) or 2 (p < .001), Bonferroni-adjusted Dunn vs reference
  std::optional<DunnPair> vs_reference;
};

struct DescriptivesRow {
  std::string dimension;
  std::optional<KruskalWallisResult> kruskal_wallis;
  std::vector<DescriptiveCell> cells;  // one per group
};

struct DescriptivesTable {
  std::vector<std::string> groups;
  std::size_t reference = 0;
  std::vector<DescriptivesRow> rows;
};

/// Mean (SD) per group and dimension. Stars against the reference group are
/// only awarded when the Kruskal-Wallis omnibus test rejects at `alpha`;
/// groups with zero SD are annotated and never starred.
DescriptivesTable descriptives(std::span<const GroupScores> groups, std::size_t reference,
                               double alpha = 0.05);

struct CorrelationCell {
  Correlation correlation;
  std::size_t n = 0;
  std::optional<CorrDiffResult> vs_reference;
};

struct CorrelationRow {
  std::string target;
  std::vector<CorrelationCell> cells;
};

struct CorrelationTable {
  std::string anchor;
  std::vector<std::string> groups;
  std::size_t reference = 0;
  std::vector<CorrelationRow> rows;
};

/// Correlations of `anchor` with each target dimension per group, with Zou
/// intervals for each group's difference from the reference group.
CorrelationTable correlation_table(std::span<const GroupScores> groups, std::size_t reference,
                                   const std::string& anchor,
                                   const std::vector<std::string>& targets, double level = 0.95);

std::string to_markdown(const DescriptivesTable& table);
std::string to_markdown(const CorrelationTable& table);

}  // namespace phantom::compare
