#include "phantom/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "phantom/error.hpp"
#include "phantom/serialize.hpp"

namespace phantom::pipeline {

using num::Index;

namespace {

template <typename T>
void read_if(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

bool gates_hold(const cfa::CfaFit& fit, const CfaGates& gates) {
  return fit.interpretable() && fit.indices.srmr <= gates.srmr_max &&
         fit.indices.rmsea <= gates.rmsea_max && fit.indices.cfi >= gates.cfi_min;
}

void run_efa_stage(Verdict& v, const num::Matrix& x, const inst::Instrument& instrument,
                   const PipelineConfig& config) {
  try {
    const auto r = num::correlation_matrix(x, v.assumptions.items);
    v.scree = efa::scree(r);
    const int p = static_cast<int>(r.order());
    int k = config.factors.value_or(std::max(v.scree->kaiser_count, 1));
    if (k >= p) {
      v.summary.push_back(fmt::format("requested {} factors for {} items; using {}", k, p, p - 1));
      k = p - 1;
    }
    v.efa = efa::run_efa(r, k, config.efa);
    v.graph = efa::factor_graph(*v.efa, v.assumptions.items, config.loading_threshold);
    v.congruence = efa::congruence(v.efa->pattern, efa::theoretical_pattern(instrument));
    v.summary.push_back(fmt::format("EFA: {} factor(s) by the Kaiser criterion, {} extracted",
                                    v.scree->kaiser_count, k));
    v.summary.push_back(fmt::format("mean matched congruence with the theoretical structure: {:.2f}",
                                    v.congruence->mean_matched_abs()));
  } catch (const Error& e) {
    v.summary.push_back(std::string("EFA failed: ") + e.what());
  }
}

}  // namespace

PipelineConfig parse_config(std::string_view json_text) {
  PipelineConfig c;
  try {
    const Json j = Json::parse(json_text);
    if (j.contains("battery")) {
      const auto& b = j.at("battery");
      read_if(b, "bartlett_alpha", c.battery.bartlett_alpha);
      read_if(b, "kmo_threshold", c.battery.kmo_threshold);
      read_if(b, "normality_alpha", c.battery.normality_alpha);
      if (b.contains("smc_band")) {
        const auto& band = b.at("smc_band");
        if (band.is_string()) {
          const auto name = band.get<std::string>();
          if (name == "strict") {
            c.battery.smc_band = assume::SmcBand::strict();
          } else if (name == "lenient") {
            c.battery.smc_band = assume::SmcBand::lenient();
          } else {
            throw LoadError("battery.smc_band: expected strict, lenient or {low, high}");
          }
        } else {
          read_if(band, "low", c.battery.smc_band.low);
          read_if(band, "high", c.battery.smc_band.high);
        }
      }
      if (b.contains("linearity")) {
        const auto& l = b.at("linearity");
        read_if(l, "p_threshold", c.battery.linearity.p_threshold);
        read_if(l, "min_standardized_quadratic", c.battery.linearity.min_standardized_quadratic);
        read_if(l, "max_pairs", c.battery.linearity.max_pairs);
        read_if(l, "seed", c.battery.linearity.seed);
      }
    }
    if (j.contains("cfa")) {
      const auto& f = j.at("cfa");
      read_if(f, "correlation_input", c.cfa.correlation_input);
      read_if(f, "bounded_refit", c.cfa.bounded_refit);
      read_if(f, "max_iterations", c.cfa.minimizer.max_iterations);
      read_if(f, "gradient_tolerance", c.cfa.minimizer.gradient_tolerance);
    }
    if (j.contains("gates")) {
      const auto& g = j.at("gates");
      read_if(g, "srmr_max", c.gates.srmr_max);
      read_if(g, "rmsea_max", c.gates.rmsea_max);
      read_if(g, "cfi_min", c.gates.cfi_min);
    }
    if (j.contains("efa")) {
      const auto& e = j.at("efa");
      if (e.contains("paf")) {
        read_if(e.at("paf"), "tolerance", c.efa.paf.tolerance);
        read_if(e.at("paf"), "max_iterations", c.efa.paf.max_iterations);
      }
      if (e.contains("rotation")) {
        const auto& r = e.at("rotation");
        read_if(r, "max_iterations", c.efa.rotation.max_iterations);
        read_if(r, "tolerance", c.efa.rotation.tolerance);
        read_if(r, "random_starts", c.efa.rotation.random_starts);
        read_if(r, "seed", c.efa.rotation.seed);
      }
    }
    if (j.contains("factors") && !j.at("factors").is_null()) c.factors = j.at("factors").get<int>();
    read_if(j, "force_efa", c.force_efa);
    read_if(j, "loading_threshold", c.loading_threshold);
    read_if(j, "reverse_dominance_threshold", c.reverse_dominance_threshold);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("config: ") + e.what());
  }
  if (c.factors && *c.factors < 1) throw LoadError("config: factors must be >= 1");
  if (c.battery.smc_band.low >= c.battery.smc_band.high) {
    throw LoadError("config: smc_band.low must be below smc_band.high");
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_json(const PipelineConfig& c) {
  const auto& l = c.battery.linearity;
  Json j = {
      {"battery",
       {{"bartlett_alpha", c.battery.bartlett_alpha},
        {"kmo_threshold", c.battery.kmo_threshold},
        {"normality_alpha", c.battery.normality_alpha},
        {"smc_band", {{"low", c.battery.smc_band.low}, {"high", c.battery.smc_band.high}}},
        {"linearity",
         {{"p_threshold", l.p_threshold},
          {"min_standardized_quadratic", l.min_standardized_quadratic},
          {"max_pairs", l.max_pairs},
          {"seed", l.seed}}}}},
      {"cfa",
       {{"correlation_input", c.cfa.correlation_input},
        {"bounded_refit", c.cfa.bounded_refit},
        {"max_iterations", c.cfa.minimizer.max_iterations},
        {"gradient_tolerance", c.cfa.minimizer.gradient_tolerance}}},
      {"gates", {{"srmr_max", c.gates.srmr_max}, {"rmsea_max", c.gates.rmsea_max}, {"cfi_min", c.gates.cfi_min}}},
      {"efa",
       {{"paf", {{"tolerance", c.efa.paf.tolerance}, {"max_iterations", c.efa.paf.max_iterations}}},
        {"rotation",
         {{"max_iterations", c.efa.rotation.max_iterations},
          {"tolerance", c.efa.rotation.tolerance},
          {"random_starts", c.efa.rotation.random_starts},
          {"seed", c.efa.rotation.seed}}}}},
      {"factors", c.factors ? Json(*c.factors) : Json(nullptr)},
      {"force_efa", c.force_efa},
      {"loading_threshold", c.loading_threshold},
      {"reverse_dominance_threshold", c.reverse_dominance_threshold}};
  return j.dump(2) + "\n";
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::fa_impossible: return "fa_impossible";
    case Stage::not_factorable: return "not_factorable";
    case Stage::cfa_supported: return "cfa_supported";
    case Stage::cfa_rejected_efa_run: return "cfa_rejected_efa_run";
  }
  return "unknown";
}

Verdict run_pipeline(const inst::ResponseMatrix& matrix, const inst::Instrument& instrument,
                     const cfa::CfaModel& model, const PipelineConfig& config) {
  Verdict v;
  v.group = matrix.group;
  v.instrument_id = instrument.id;
  v.model = model;
  const num::Matrix x = matrix.as_double();

  v.assumptions = assume::run_battery(x, matrix.items, config.battery);
  const auto& a = v.assumptions;
  if (!a.fa_possible) {
    v.stage = Stage::fa_impossible;
    std::string cols;
    for (const auto& id : a.zero_variance_items) cols += (cols.empty() ? "" : ", ") + id;
    v.summary.push_back(fmt::format("{} item(s) without variance ({}); factor analysis is impossible",
                                    a.zero_variance_items.size(), cols));
    return v;
  }
  if (!a.factorable) {
    v.stage = Stage::not_factorable;
    v.summary.push_back(fmt::format(
        "factorability not met: Bartlett {}, KMO {}",
        a.bartlett ? fmt::format("p = {:.3g}", a.bartlett->p) : std::string("not computable"),
        a.kmo ? fmt::format("{:.2f}", a.kmo->overall) : std::string("not computable")));
    return v;
  }
  v.summary.push_back(fmt::format("factorable: Bartlett p = {:.3g}, KMO = {:.2f}", a.bartlett->p,
                                  a.kmo->overall));

  try {
    const auto s = num::covariance_matrix(x);
    v.cfa = cfa::fit_cfa(s, static_cast<std::int64_t>(x.rows()), model, config.cfa);
    v.cfa_supported = gates_hold(*v.cfa, config.gates);
    v.summary.push_back("CFA: " + v.cfa->interpretation());
  } catch (const Error& e) {
    v.cfa_error = e.what();
    v.summary.push_back(std::string("CFA could not be fitted: ") + e.what());
  }

  v.stage = v.cfa_supported ? Stage::cfa_supported : Stage::cfa_rejected_efa_run;
  if (!v.cfa_supported || config.force_efa) run_efa_stage(v, x, instrument, config);
  return v;
}

namespace {

std::size_t reference_index(std::span<const GroupData> groups, const std::string& reference) {
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].group == reference) return g;
  }
  throw PreconditionError("compare_groups: unknown reference group '" + reference + "'");
}

}  // namespace

ComparisonReport compare_groups(std::span<const GroupData> groups,
                                std::span<const inst::Instrument> instruments,
                                std::span<const cfa::CfaModel> models, const std::string& reference,
                                const PipelineConfig& config,
                                const std::optional<CorrelationSpec>& correlations) {
  if (groups.size() < 2) throw PreconditionError("compare_groups: need at least two groups");
  if (models.size() != instruments.size()) {
    throw PreconditionError("compare_groups: one CFA model per instrument required");
  }
  for (const auto& g : groups) {
    if (g.matrices.size() != instruments.size()) {
      throw PreconditionError("compare_groups: group '" + g.group + "' has " +
                              std::to_string(g.matrices.size()) + " instruments, expected " +
                              std::to_string(instruments.size()));
    }
    for (std::size_t i = 0; i < instruments.size(); ++i) {
      if (g.matrices[i].instrument_id != instruments[i].id) {
        throw PreconditionError("compare_groups: group '" + g.group + "' instrument " +
                                std::to_string(i) + " is '" + g.matrices[i].instrument_id +
                                "', expected '" + instruments[i].id + "'");
      }
      inst::validate(g.matrices[i], instruments[i]);
    }
  }

  ComparisonReport report;
  report.reference = reference_index(groups, reference);
  for (const auto& g : groups) report.groups.push_back(g.group);

  std::vector<std::future<Verdict>> pending;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < instruments.size(); ++i) {
      pending.push_back(std::async(std::launch::async, [&, i, gp = &g] {
        return run_pipeline(gp->matrices[i], instruments[i], models[i], config);
      }));
    }
  }
  for (auto& f : pending) report.verdicts.push_back(f.get());

  std::vector<compare::GroupScores> scores;
  for (const auto& g : groups) {
    auto s = compare::group_scores(g.matrices, instruments);
    s.group = g.group;
    scores.push_back(std::move(s));
  }
  report.descriptives = compare::descriptives(scores, report.reference);
  if (correlations) {
    report.correlations =
        compare::correlation_table(scores, report.reference, correlations->anchor, correlations->targets);
  }

  for (const auto& g : groups) {
    for (std::size_t i = 0; i < instruments.size(); ++i) {
      const auto& m = g.matrices[i];
      for (const auto& dim : instruments[i].dimensions) {
        num::Matrix block(m.rows(), static_cast<Index>(dim.items.size()));
        for (std::size_t c = 0; c < dim.items.size(); ++c) {
          block.col(static_cast<Index>(c)) =
              m.values.col(static_cast<Index>(instruments[i].index_of(dim.items[c]))).cast<double>();
        }
        report.alphas.emplace_back(g.group + "/" + dim.name,
                                   dim.items.size() > 1 ? compare::cronbach_alpha(block) : std::nullopt);
      }
    }
  }

  const std::size_t ni = instruments.size();
  for (std::size_t i = 0; i < ni; ++i) {
    const auto& ref = report.verdicts[report.reference * ni + i];
    if (!ref.efa) continue;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (g == report.reference) continue;
      const auto& other = report.verdicts[g * ni + i];
      if (!other.efa) continue;
      report.congruences.push_back(
          {instruments[i].id, groups[g].group, efa::congruence(other.efa->pattern, ref.efa->pattern)});
    }
  }
  return report;
}

std::optional<double> reverse_share(const efa::FactorSolution& solution,
                                    const inst::Instrument& instrument, int factor,
                                    double threshold) {
  if (factor < 0 || factor >= solution.structure.cols()) {
    throw PreconditionError("reverse_share: factor index out of range");
  }
  if (static_cast<std::size_t>(solution.structure.rows()) != instrument.size()) {
    throw PreconditionError("reverse_share: solution does not match instrument");
  }
  int salient = 0;
  int reversed = 0;
  for (std::size_t i = 0; i < instrument.size(); ++i) {
    if (std::abs(solution.structure(static_cast<Index>(i), factor)) >= threshold) {
      ++salient;
      if (instrument.items[i].reverse) ++reversed;
    }
  }
  if (salient == 0) return std::nullopt;
  return static_cast<double>(reversed) / salient;
}

SweepStudy sweep_study(std::span<const TemperatureMatrix> matrices,
                       const inst::Instrument& instrument, const cfa::CfaModel& model,
                       const PipelineConfig& config) {
  if (matrices.empty()) throw PreconditionError("sweep_study: no matrices");
  PipelineConfig cfg = config;
  cfg.force_efa = true;

  std::vector<std::future<SweepRow>> pending;
  for (const auto& tm : matrices) {
    pending.push_back(std::async(std::launch::async, [&, tmp = &tm] {
      const Verdict v = run_pipeline(tmp->matrix, instrument, model, cfg);
      SweepRow row;
      row.temperature = tmp->temperature;
      row.n = static_cast<std::size_t>(tmp->matrix.rows());
      row.stage = v.stage;
      if (v.scree) row.kaiser_count = v.scree->kaiser_count;
      if (v.efa) {
        row.congruence = v.congruence->mean_matched_abs();
        row.reverse_share = reverse_share(*v.efa, instrument, 0, cfg.loading_threshold);
        row.reverse_dominated = row.reverse_share && *row.reverse_share > cfg.reverse_dominance_threshold;
      }
      return row;
    }));
  }
  SweepStudy study;
  study.instrument_id = instrument.id;
  for (auto& f : pending) study.rows.push_back(f.get());
  return study;
}

std::string content_hash(std::initializer_list<std::string_view> parts) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto part : parts) {
    for (unsigned char c : part) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    // Separator so ("ab", "c") and ("a", "bc") differ.
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

void write_verdict(const Verdict& verdict, const inst::Instrument& instrument,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Json j = to_json(verdict);
  write_json(dir / "verdict.json", j);
  write_json(dir / "assumptions.json", j.at("assumptions"));
  if (verdict.cfa) write_json(dir / "cfa.json", j.at("cfa"));
  if (verdict.efa) write_json(dir / "efa.json", j.at("efa"));
  const std::string title = verdict.group + " / " + verdict.instrument_id;
  if (verdict.scree) write_text(dir / "scree.svg", efa::scree_svg(verdict.scree->eigenvalues, title));
  if (verdict.graph) write_text(dir / "graph.svg", efa::factor_graph_svg(*verdict.graph, instrument, title));
  write_text(dir / "summary.md", summary_markdown(std::span<const Verdict>(&verdict, 1)));
}

void write_comparison(const ComparisonReport& report, std::span<const inst::Instrument> instruments,
                      const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t ni = instruments.size();
  for (std::size_t k = 0; k < report.verdicts.size(); ++k) {
    const auto& v = report.verdicts[k];
    write_verdict(v, instruments[k % ni], dir / v.group / v.instrument_id);
  }
  write_json(dir / "descriptives.json", to_json(report.descriptives));
  write_text(dir / "descriptives.md", compare::to_markdown(report.descriptives));
  if (report.correlations) {
    write_json(dir / "correlations.json", to_json(*report.correlations));
    write_text(dir / "correlations.md", compare::to_markdown(*report.correlations));
  }
  Json alphas = Json::object();
  for (const auto& [key, a] : report.alphas) alphas[key] = a ? Json(*a) : Json(nullptr);
  write_json(dir / "alphas.json", alphas);
  Json cong = Json::array();
  for (const auto& c : report.congruences) {
    Json entry = to_json(c.vs_reference);
    entry["instrument"] = c.instrument_id;
    entry["group"] = c.group;
    entry["reference"] = report.groups[report.reference];
    cong.push_back(std::move(entry));
  }
  write_json(dir / "congruence.json", cong);

  std::ostringstream md;
  md << "# Comparison\n\nReference group: " << report.groups[report.reference] << "\n\n";
  md << summary_markdown(report.verdicts) << "\n## Composite scores\n\n"
     << compare::to_markdown(report.descriptives);
  if (report.correlations) md << "\n## Correlations\n\n" << compare::to_markdown(*report.correlations);
  write_text(dir / "report.md", md.str());
}

std::string to_markdown(const SweepStudy& study) {
  std::ostringstream os;
  os << "| Temperature | n | Stage | Kaiser | Congruence | Reverse share (F1) |\n"
     << "|---|---|---|---|---|---|\n";
  for (const auto& r : study.rows) {
    os << fmt::format("| {:.2f} | {} | {} | {} | {} | {}{} |\n", r.temperature, r.n,
                      to_string(r.stage), r.kaiser_count,
                      r.congruence ? fmt::format("{:.2f}", *r.congruence) : std::string("-"),
                      r.reverse_share ? fmt::format("{:.2f}", *r.reverse_share) : std::string("-"),
                      r.reverse_dominated ? " (reverse-dominated)" : "");
  }
  return os.str();
}

std::string summary_markdown(std::span<const Verdict> verdicts) {
  std::ostringstream os;
  for (const auto& v : verdicts) {
    os << "## " << v.group << " / " << v.instrument_id << ": " << to_string(v.stage) << "\n\n";
    for (const auto& line : v.summary) os << "- " << line << '\n';
    os << '\n';
  }
  return os.str();
}

}  // namespace phantom::pipeline
