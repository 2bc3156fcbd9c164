// phantom: command-line front end for collection and latent-structure analysis.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "phantom/assume.hpp"
#include "phantom/cfa.hpp"
#include "phantom/collect.hpp"
#include "phantom/compare.hpp"
#include "phantom/efa.hpp"
#include "phantom/error.hpp"
#include "phantom/instrument.hpp"
#include "phantom/pipeline.hpp"
#include "phantom/serialize.hpp"
#include "phantom/synth.hpp"

namespace fs = std::filesystem;
using phantom::Json;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string config;
  std::string out = "out";
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw phantom::LoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw phantom::Error("cannot write " + path.string());
  out << text;
}

Json config_file(const Globals& g) {
  if (g.config.empty()) return Json::object();
  return Json::parse(slurp(g.config));
}

phantom::pipeline::PipelineConfig pipeline_config(const Globals& g) {
  if (g.config.empty()) return {};
  return phantom::pipeline::load_config(g.config);
}

std::vector<phantom::inst::Instrument> load_instruments(const std::vector<std::string>& paths) {
  std::vector<phantom::inst::Instrument> out;
  for (const auto& p : paths) out.push_back(phantom::inst::load_instrument(p));
  return out;
}

phantom::cfa::CfaModel model_for(const phantom::inst::Instrument& instrument,
                                 const std::string& model_path) {
  if (model_path.empty()) return phantom::cfa::CfaModel::from_instrument(instrument);
  return phantom::cfa::load_model(model_path, instrument);
}

phantom::collect::CollectionConfig collection_config(const Globals& g, const std::string& model) {
  phantom::collect::CollectionConfig c;
  c.model = model;
  const Json j = config_file(g);
  if (j.contains("endpoint")) {
    const auto& e = j.at("endpoint");
    c.endpoint.base_url = e.value("base_url", c.endpoint.base_url);
    c.endpoint.path = e.value("path", c.endpoint.path);
    c.endpoint.api_key_env = e.value("api_key_env", c.endpoint.api_key_env);
    c.endpoint.timeout = std::chrono::seconds(e.value("timeout_seconds", 120));
  }
  if (j.contains("collection")) {
    const auto& k = j.at("collection");
    c.concurrency = k.value("concurrency", c.concurrency);
    c.max_attempt_factor = k.value("max_attempt_factor", c.max_attempt_factor);
    c.retry.max_retries = k.value("max_retries", c.retry.max_retries);
    c.retry.backoff = std::chrono::milliseconds(k.value("backoff_ms", 500));
    c.system_message = k.value("system_message", c.system_message);
  }
  return c;
}

fs::path matrix_path(const fs::path& dir, const std::string& group, const std::string& instrument) {
  return dir / (group + "_" + instrument + ".csv");
}

void write_collection(const phantom::collect::CollectionResult& result, const fs::path& dir) {
  for (const auto& m : result.matrices) {
    phantom::inst::write_matrix_csv(matrix_path(dir, m.group, m.instrument_id), m);
  }
  Json log = Json::array();
  for (const auto& raw : result.log) log.push_back(phantom::to_json(raw));
  Json summary = {{"valid", result.valid},
                  {"invalid", result.invalid},
                  {"failed", result.failed},
                  {"aborted", result.aborted},
                  {"abort_reason", result.abort_reason},
                  {"majority_invalid", result.majority_invalid},
                  {"log", log}};
  spit(dir / "collection_log.json", summary.dump(2) + "\n");
  std::cout << fmt::format("{}: {} valid, {} invalid, {} failed{}\n", dir.string(), result.valid,
                           result.invalid, result.failed, result.aborted ? " (aborted)" : "");
  if (result.majority_invalid) std::cerr << "warning: more than half of the completions were invalid\n";
}

phantom::inst::ResponseMatrix read_scored(const std::string& path,
                                          const phantom::inst::Instrument& instrument,
                                          const std::string& group) {
  auto m = phantom::inst::read_matrix_csv(path, instrument, group);
  return phantom::inst::reverse_score(m, instrument);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phantom: questionnaire collection and latent-structure validation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.fallthrough();

  // collect
  auto* collect_cmd = app.add_subcommand("collect", "Administer instruments to a chat endpoint");
  std::vector<std::string> c_instruments;
  std::string c_model, c_group;
  int c_n = 401;
  double c_step = 0.01;
  std::optional<double> c_fixed;
  bool c_audit = false;
  collect_cmd->add_option("--instrument", c_instruments, "Instrument JSON (repeatable)")->required();
  collect_cmd->add_option("--model", c_model, "Model id")->required();
  collect_cmd->add_option("--group", c_group, "Group label (defaults to the model id)");
  collect_cmd->add_option("--n", c_n, "Number of requests")->capture_default_str();
  collect_cmd->add_option("--temp-step", c_step, "Temperature grid step")->capture_default_str();
  collect_cmd->add_option("--temp-fixed", c_fixed, "Use one temperature for every request");
  collect_cmd->add_flag("--audit", c_audit, "Keep raw completions under <out>/audit");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Collect at a series of static temperatures");
  std::vector<std::string> s_instruments;
  std::string s_model, s_group;
  int s_n = 50;
  std::vector<double> s_temps{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  bool s_audit = false;
  sweep_cmd->add_option("--instrument", s_instruments, "Instrument JSON (repeatable)")->required();
  sweep_cmd->add_option("--model", s_model, "Model id")->required();
  sweep_cmd->add_option("--group", s_group, "Group label");
  sweep_cmd->add_option("--n", s_n, "Requests per temperature")->capture_default_str();
  sweep_cmd->add_option("--temps", s_temps, "Temperatures");
  sweep_cmd->add_flag("--audit", s_audit, "Keep raw completions");

  // import
  auto* import_cmd = app.add_subcommand("import", "Import a participant CSV");
  std::string i_csv, i_group = "human";
  std::vector<std::string> i_instruments;
  double i_min_duration = 360.0;
  import_cmd->add_option("--csv", i_csv, "Participant CSV")->required()->check(CLI::ExistingFile);
  import_cmd->add_option("--instrument", i_instruments, "Instrument JSON, in column order")->required();
  import_cmd->add_option("--group", i_group)->capture_default_str();
  import_cmd->add_option("--min-duration", i_min_duration, "Minimum completion time (s)")->capture_default_str();

  // analysis subcommands share --data/--instrument
  std::string a_data, a_instrument, a_model, a_group = "sample";
  std::optional<int> a_factors;
  bool a_force_efa = false;
  const auto add_data = [&](CLI::App* cmd) {
    cmd->add_option("--data", a_data, "Response matrix CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--instrument", a_instrument, "Instrument JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--group", a_group, "Group label")->capture_default_str();
  };
  auto* screen_cmd = app.add_subcommand("screen", "Run the assumption battery");
  add_data(screen_cmd);
  auto* efa_cmd = app.add_subcommand("efa", "Exploratory factor analysis");
  add_data(efa_cmd);
  efa_cmd->add_option("--factors", a_factors, "Number of factors (default: Kaiser count)");
  auto* cfa_cmd = app.add_subcommand("cfa", "Confirmatory factor analysis");
  add_data(cfa_cmd);
  cfa_cmd->add_option("--model", a_model, "CFA model JSON (default: instrument dimensions)");
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Full decision flow for one sample");
  add_data(pipeline_cmd);
  pipeline_cmd->add_option("--model", a_model, "CFA model JSON");
  pipeline_cmd->add_option("--factors", a_factors, "Number of EFA factors");
  pipeline_cmd->add_flag("--force-efa", a_force_efa, "Run EFA even when the CFA is supported");

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "Compare groups across instruments");
  std::vector<std::string> m_instruments, m_groups, m_models, m_targets;
  std::string m_reference = "human", m_dir, m_anchor;
  compare_cmd->add_option("--instrument", m_instruments, "Instrument JSON (repeatable)")->required();
  compare_cmd->add_option("--model", m_models, "CFA model JSON per instrument");
  compare_cmd->add_option("--group", m_groups, "Group label; reads <data-dir>/<group>_<ID>.csv")->required();
  compare_cmd->add_option("--data-dir", m_dir, "Directory with the matrices")->required();
  compare_cmd->add_option("--reference", m_reference)->capture_default_str();
  compare_cmd->add_option("--anchor", m_anchor, "Dimension correlated with --target");
  compare_cmd->add_option("--target", m_targets, "Dimensions for the correlation table");
  compare_cmd->add_flag("--force-efa", a_force_efa, "Run EFA even when the CFA is supported");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Draw Likert data from the theoretical structure");
  std::string y_instrument, y_group = "synthetic";
  int y_n = 400;
  double y_loading = 0.7, y_phi = 0.2;
  synth_cmd->add_option("--instrument", y_instrument)->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("--n", y_n)->capture_default_str();
  synth_cmd->add_option("--loading", y_loading)->capture_default_str();
  synth_cmd->add_option("--phi", y_phi, "Factor correlation")->capture_default_str();
  synth_cmd->add_option("--group", y_group)->capture_default_str();

  // report
  auto* report_cmd = app.add_subcommand("report", "Temperature-sweep stability report");
  std::string r_dir, r_instrument, r_group, r_model;
  report_cmd->add_option("--sweep-dir", r_dir, "Output directory of `sweep`")->required()->check(CLI::ExistingDirectory);
  report_cmd->add_option("--instrument", r_instrument)->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--group", r_group, "Group label used by `sweep`")->required();
  report_cmd->add_option("--model", r_model, "CFA model JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out = g.out;
    if (*collect_cmd) {
      const auto instruments = load_instruments(c_instruments);
      auto cfg = collection_config(g, c_model);
      cfg.group = c_group;
      cfg.target_n = c_n;
      cfg.temperature_schedule =
          c_fixed ? std::vector<double>(static_cast<std::size_t>(c_n), *c_fixed)
                  : phantom::collect::build_temperature_schedule(c_n, c_step, g.seed);
      if (c_audit) cfg.audit_dir = out / "audit";
      phantom::collect::HttpChatClient client(cfg.endpoint);
      const auto result = phantom::collect::collect(cfg, instruments, client);
      write_collection(result, out);
      return result.aborted ? 2 : 0;
    }
    if (*sweep_cmd) {
      const auto instruments = load_instruments(s_instruments);
      auto cfg = collection_config(g, s_model);
      cfg.group = s_group;
      cfg.target_n = s_n;
      if (s_audit) cfg.audit_dir = out / "audit";
      phantom::collect::HttpChatClient client(cfg.endpoint);
      const auto results = phantom::collect::sweep_collect(cfg, instruments, s_temps, client);
      for (std::size_t t = 0; t < results.size(); ++t) {
        write_collection(results[t], out / fmt::format("t{:.2f}", s_temps[t]));
      }
      return 0;
    }
    if (*import_cmd) {
      const auto instruments = load_instruments(i_instruments);
      phantom::inst::HumanImportFilter filter;
      filter.min_duration_seconds = i_min_duration;
      const auto imported = phantom::inst::import_human_csv(i_csv, instruments, filter, i_group);
      for (const auto& m : imported.matrices) {
        phantom::inst::write_matrix_csv(matrix_path(out, i_group, m.instrument_id), m);
      }
      Json ex = Json::array();
      for (const auto& e : imported.exclusions) {
        ex.push_back({{"line", e.line},
                      {"participant_id", e.participant_id},
                      {"reason", std::string(phantom::inst::to_string(e.reason))},
                      {"detail", e.detail}});
      }
      spit(out / (i_group + "_exclusions.json"), ex.dump(2) + "\n");
      std::cout << fmt::format("{} rows read, {} retained, {} excluded\n", imported.input_rows,
                               imported.matrices.empty() ? 0 : imported.matrices.front().rows(),
                               imported.exclusions.size());
      return 0;
    }
    if (*screen_cmd || *efa_cmd || *cfa_cmd || *pipeline_cmd) {
      const auto instrument = phantom::inst::load_instrument(a_instrument);
      const auto m = read_scored(a_data, instrument, a_group);
      auto cfg = pipeline_config(g);
      const auto x = m.as_double();
      if (*screen_cmd) {
        const auto report = phantom::assume::run_battery(x, m.items, cfg.battery);
        const Json j = phantom::to_json(report);
        spit(out / "assumptions.json", j.dump(2) + "\n");
        if (report.linearity) {
          phantom::assume::write_scatter_files(out / "scatter", x, *report.linearity, m.items);
        }
        std::cout << j.at("checks").dump(2) << "\n";
        return 0;
      }
      if (*efa_cmd) {
        const auto r = phantom::num::correlation_matrix(x, m.items);
        const auto scree = phantom::efa::scree(r);
        const int k = a_factors.value_or(std::max(scree.kaiser_count, 1));
        const auto sol = phantom::efa::run_efa(r, k, cfg.efa);
        const auto graph = phantom::efa::factor_graph(sol, m.items, cfg.loading_threshold);
        spit(out / "efa.json", phantom::to_json(sol, m.items).dump(2) + "\n");
        spit(out / "graph.svg", phantom::efa::factor_graph_svg(graph, instrument, a_group));
        spit(out / "scree.svg", phantom::efa::scree_svg(scree.eigenvalues, a_group));
        std::cout << fmt::format("Kaiser count {}, {} factor(s) extracted\n", scree.kaiser_count, k);
        return 0;
      }
      const auto model = model_for(instrument, a_model);
      if (*cfa_cmd) {
        const auto fit = phantom::cfa::fit_cfa(phantom::num::covariance_matrix(x), x.rows(), model, cfg.cfa);
        spit(out / "cfa.json", phantom::to_json(fit, model).dump(2) + "\n");
        std::cout << fit.interpretation() << "\n";
        return 0;
      }
      if (a_factors) cfg.factors = a_factors;
      cfg.force_efa = cfg.force_efa || a_force_efa;
      const auto verdict = phantom::pipeline::run_pipeline(m, instrument, model, cfg);
      const auto dir = out / phantom::pipeline::content_hash(
                                 {slurp(a_data), slurp(a_instrument), a_model.empty() ? "" : slurp(a_model),
                                  phantom::pipeline::config_json(cfg)});
      phantom::pipeline::write_verdict(verdict, instrument, dir);
      std::cout << phantom::pipeline::to_string(verdict.stage) << "\n" << dir.string() << "\n";
      return 0;
    }
    if (*compare_cmd) {
      const auto instruments = load_instruments(m_instruments);
      if (!m_models.empty() && m_models.size() != instruments.size()) {
        throw phantom::PreconditionError("--model must be given once per --instrument");
      }
      std::vector<phantom::cfa::CfaModel> models;
      for (std::size_t i = 0; i < instruments.size(); ++i) {
        models.push_back(model_for(instruments[i], m_models.empty() ? "" : m_models[i]));
      }
      std::vector<phantom::pipeline::GroupData> groups;
      for (const auto& name : m_groups) {
        phantom::pipeline::GroupData gd{name, {}};
        for (const auto& ins : instruments) {
          gd.matrices.push_back(read_scored(matrix_path(m_dir, name, ins.id).string(), ins, name));
        }
        groups.push_back(std::move(gd));
      }
      auto cfg = pipeline_config(g);
      cfg.force_efa = cfg.force_efa || a_force_efa;
      std::optional<phantom::pipeline::CorrelationSpec> corr;
      if (!m_anchor.empty()) corr = phantom::pipeline::CorrelationSpec{m_anchor, m_targets};
      const auto report = phantom::pipeline::compare_groups(groups, instruments, models, m_reference, cfg, corr);
      std::string key = phantom::pipeline::config_json(cfg) + m_reference + m_anchor;
      for (const auto& gd : groups) {
        for (const auto& ins : instruments) key += slurp(matrix_path(m_dir, gd.group, ins.id));
      }
      const auto dir = out / ("compare_" + phantom::pipeline::content_hash({key}));
      phantom::pipeline::write_comparison(report, instruments, dir);
      std::cout << dir.string() << "\n";
      return 0;
    }
    if (*synth_cmd) {
      const auto instrument = phantom::inst::load_instrument(y_instrument);
      const phantom::num::Matrix pattern = phantom::efa::theoretical_pattern(instrument) * y_loading;
      const auto phi = phantom::num::compound_symmetry(pattern.cols(), y_phi);
      auto m = phantom::num::sample_factor_model(pattern, phi, y_n, g.seed,
                                                 {instrument.scale_min, instrument.scale_max},
                                                 instrument.item_ids(), y_group);
      m.instrument_id = instrument.id;
      // Stored as answered: undo the keying so that reverse scoring restores the draw.
      for (std::size_t j = 0; j < instrument.size(); ++j) {
        if (!instrument.items[j].reverse) continue;
        auto col = m.values.col(static_cast<Eigen::Index>(j));
        col = (instrument.scale_min + instrument.scale_max) - col.array();
      }
      phantom::inst::write_matrix_csv(matrix_path(out, y_group, instrument.id), m);
      std::cout << matrix_path(out, y_group, instrument.id).string() << "\n";
      return 0;
    }
    if (*report_cmd) {
      const auto instrument = phantom::inst::load_instrument(r_instrument);
      const auto model = model_for(instrument, r_model);
      std::vector<phantom::pipeline::TemperatureMatrix> mats;
      std::vector<fs::path> dirs;
      for (const auto& entry : fs::directory_iterator(r_dir)) {
        if (entry.is_directory() && entry.path().filename().string().starts_with("t")) dirs.push_back(entry.path());
      }
      std::sort(dirs.begin(), dirs.end());
      for (const auto& d : dirs) {
        const auto file = matrix_path(d, r_group, instrument.id);
        if (!fs::exists(file)) continue;
        mats.push_back({std::stod(d.filename().string().substr(1)),
                        read_scored(file.string(), instrument, r_group)});
      }
      if (mats.empty()) throw phantom::LoadError("no per-temperature matrices under " + r_dir);
      const auto study = phantom::pipeline::sweep_study(mats, instrument, model, pipeline_config(g));
      spit(out / "sweep.json", phantom::to_json(study).dump(2) + "\n");
      const auto md = phantom::pipeline::to_markdown(study);
      spit(out / "sweep.md", md);
      std::cout << md;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
