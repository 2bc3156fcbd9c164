#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "phantom/linalg.hpp"

namespace phantom::assume {

struct BartlettResult {
  double chi2 = 0.0;
  double df = 0.0;
  double p = 1.0;
  std::optional<std::string> warning;
};

/// Bartlett's test of sphericity on correlation matrix R from n rows.
/// Throws SingularError when det(R) <= 0.
BartlettResult bartlett_sphericity(const num::SymMatrix& r, std::int64_t n);

struct KmoResult {
  double overall = 0.0;
  std::vector<double> per_item;
};

/// Kaiser-Meyer-Olkin measure of sampling adequacy.
KmoResult kmo(const num::SymMatrix& r);

/// Squared multiple correlations 1 - 1/(R^-1)_ii.
std::vector<double> smc(const num::SymMatrix& r);

struct HenzeZirklerResult {
  double statistic = 0.0;
  double p = 1.0;
  double beta = 0.0;
  std::optional<std::string> warning;
};

/// Henze-Zirkler multivariate normality test, lognormal approximation to
/// the null distribution. Rows are observations.
HenzeZirklerResult henze_zirkler(const num::Matrix& x);

struct LinearityOptions {
  double p_threshold = 0.01;
  double min_standardized_quadratic = 0.1;
  std::size_t max_pairs = 500;  // sampled deterministically when exceeded
  std::uint64_t seed = 1;
};

struct CurvilinearPair {
  std::size_t x = 0;
  std::size_t y = 0;
  double quadratic = 0.0;  // coefficient on the standardized square term
  double p = 1.0;
};

struct LinearityReport {
  std::size_t pairs_checked = 0;
  std::vector<CurvilinearPair> flagged;  // sorted by p, then |quadratic| descending
  /// 99th percentile of Binomial(pairs_checked, p_threshold): the number of
  /// flags expected by chance alone when every pair is linear.
  std::size_t chance_bound = 0;
  bool acceptable() const noexcept { return flagged.size() <= chance_bound; }
};

/// Screens item pairs for curvature: regresses standardized y on
/// standardized x and its square and flags significant, sizeable
/// quadratic terms.
LinearityReport linearity_diagnostics(const num::Matrix& x, const LinearityOptions& options = {});

/// Writes `pair_<x>_<y>.csv` with the raw (x, y) columns of each flagged pair.
void write_scatter_files(const std::filesystem::path& dir, const num::Matrix& x,
                         const LinearityReport& report, const std::vector<std::string>& names);

struct SmcBand {
  double low = 0.1;
  double high = 0.9;
  static SmcBand strict() { return {0.1, 0.9}; }
  static SmcBand lenient() { return {0.01, 0.99}; }
};

struct BatteryOptions {
  LinearityOptions linearity;
  SmcBand smc_band = SmcBand::strict();
  double bartlett_alpha = 0.05;
  double kmo_threshold = 0.6;
  double normality_alpha = 0.05;
};

/// Outcome of the full assumption battery. Optional members are empty when
/// the check could not be computed.
struct AssumptionReport {
  std::vector<std::string> items;
  std::size_t n = 0;
  std::vector<std::string> zero_variance_items;
  std::optional<LinearityReport> linearity;
  std::optional<HenzeZirklerResult> hz;
  std::optional<BartlettResult> bartlett;
  std::optional<KmoResult> kmo;
  std::optional<std::vector<double>> smc;
  std::vector<std::string> multicollinear_items;
  std::vector<std::string> outlier_items;
  std::vector<std::string> notes;
  BatteryOptions options;
  bool factorable = false;
  bool fa_possible = false;

  bool normality_ok() const { return hz && hz->p >= options.normality_alpha; }
  bool bartlett_ok() const { return bartlett && bartlett->p < options.bartlett_alpha; }
  bool kmo_ok() const { return kmo && kmo->overall > options.kmo_threshold; }
};

/// Runs every check. Never throws for degenerate data: zero-variance columns
/// set fa_possible = false, singular correlation matrices leave the
/// affected checks empty with a note.
AssumptionReport run_battery(const num::Matrix& x, const std::vector<std::string>& items,
                             const BatteryOptions& options = {});

}  // namespace phantom::assume
