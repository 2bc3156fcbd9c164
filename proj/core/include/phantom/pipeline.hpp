#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phantom/assume.hpp"
#include "phantom/cfa.hpp"
#include "phantom/compare.hpp"
#include "phantom/efa.hpp"
#include "phantom/instrument.hpp"

namespace phantom::pipeline {

/// CFA is "supported" when the solution is proper and all three gates hold.
struct CfaGates {
  double srmr_max = 0.08;
  double rmsea_max = 0.06;
  double cfi_min = 0.90;
};

struct PipelineConfig {
  assume::BatteryOptions battery;
  cfa::CfaOptions cfa;
  CfaGates gates;
  efa::EfaOptions efa;
  std::optional<int> factors;  // overrides the Kaiser count
  bool force_efa = false;
  double loading_threshold = 0.4;
  double reverse_dominance_threshold = 0.7;
};

/// Reads the JSON config file; absent keys keep their defaults.
PipelineConfig parse_config(std::string_view json_text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_json(const PipelineConfig& config);

enum class Stage { fa_impossible, not_factorable, cfa_supported, cfa_rejected_efa_run };

std::string_view to_string(Stage stage);

struct Verdict {
  std::string group;
  std::string instrument_id;
  Stage stage = Stage::fa_impossible;
  assume::AssumptionReport assumptions;
  cfa::CfaModel model;
  std::optional<cfa::CfaFit> cfa;
  std::optional<std::string> cfa_error;
  bool cfa_supported = false;
  std::optional<efa::ScreeResult> scree;
  std::optional<efa::FactorSolution> efa;
  std::optional<efa::FactorGraph> graph;
  std::optional<efa::CongruenceResult> congruence;  // EFA pattern vs theoretical assignment
  std::vector<std::string> summary;
};

/// Zero-variance gate, assumption battery, CFA of the theoretical model,
/// then EFA (Kaiser count, PAF, oblimin) when the CFA is not supported or
/// `force_efa` is set. Every failure mode is a verdict state; never throws
/// for degenerate data. `matrix` must already be reverse-scored.
Verdict run_pipeline(const inst::ResponseMatrix& matrix, const inst::Instrument& instrument,
                     const cfa::CfaModel& model, const PipelineConfig& config = {});

/// One group's reverse-scored responses, one matrix per instrument.
struct GroupData {
  std::string group;
  std::vector<inst::ResponseMatrix> matrices;
};

/// Inter-instrument correlation table request: anchor dimension vs targets.
struct CorrelationSpec {
  std::string anchor;
  std::vector<std::string> targets;
};

struct GroupCongruence {
  std::string instrument_id;
  std::string group;
  efa::CongruenceResult vs_reference;
};

struct ComparisonReport {
  std::vector<std::string> groups;
  std::size_t reference = 0;
  std::vector<Verdict> verdicts;  // group-major, instrument-minor
  compare::DescriptivesTable descriptives;
  std::optional<compare::CorrelationTable> correlations;
  std::vector<std::pair<std::string, std::optional<double>>> alphas;  // "group/dimension" -> alpha
  std::vector<GroupCongruence> congruences;
};

/// Verdicts for every group and instrument plus the descriptive and
/// correlation tables. Throws PreconditionError when groups do not share the
/// same instruments.
ComparisonReport compare_groups(std::span<const GroupData> groups,
                                std::span<const inst::Instrument> instruments,
                                std::span<const cfa::CfaModel> models, const std::string& reference,
                                const PipelineConfig& config = {},
                                const std::optional<CorrelationSpec>& correlations = std::nullopt);

struct SweepRow {
  double temperature = 0.0;
  std::size_t n = 0;
  Stage stage = Stage::fa_impossible;
  int kaiser_count = 0;
  std::optional<double> congruence;          // mean matched |phi| vs theoretical
  std::optional<double> reverse_share;       // reverse-coded share of factor 1's salient items
  bool reverse_dominated = false;
};

struct SweepStudy {
  std::string instrument_id;
  std::vector<SweepRow> rows;
};

struct TemperatureMatrix {
  double temperature = 0.0;
  inst::ResponseMatrix matrix;  // reverse-scored
};

SweepStudy sweep_study(std::span<const TemperatureMatrix> matrices,
                       const inst::Instrument& instrument, const cfa::CfaModel& model,
                       const PipelineConfig& config = {});

/// Share of reverse-coded items among items whose |structure loading| on
/// `factor` reaches `threshold`; empty when no item does.
std::optional<double> reverse_share(const efa::FactorSolution& solution,
                                    const inst::Instrument& instrument, int factor,
                                    double threshold);

/// 16 hex digits of FNV-1a over the bytes of `parts`.
std::string content_hash(std::initializer_list<std::string_view> parts);

/// Writes verdict.json and companions (assumptions, cfa, efa, graph.svg,
/// scree.svg) into `dir`.
void write_verdict(const Verdict& verdict, const inst::Instrument& instrument,
                   const std::filesystem::path& dir);

void write_comparison(const ComparisonReport& report, std::span<const inst::Instrument> instruments,
                      const std::filesystem::path& dir);

std::string to_markdown(const SweepStudy& study);
std::string summary_markdown(std::span<const Verdict> verdicts);

}  // namespace phantom::pipeline
