#include "phantom/serialize.hpp"

#include <cmath>

namespace phantom {

namespace {

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      row.push_back(std::isfinite(m(i, j)) ? Json(m(i, j)) : Json(nullptr));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_json(const Eigen::VectorXd& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

const char* mark(bool computed, bool ok) { return !computed ? "NA" : (ok ? "+" : "x"); }

}  // namespace

Json to_json(const assume::AssumptionReport& r) {
  const bool smc_known = r.smc.has_value();
  Json checks = Json::array();
  checks.push_back({{"check", "Linearity"},
                    {"result", mark(r.linearity.has_value(), r.linearity && r.linearity->acceptable())}});
  checks.push_back({{"check", "Multivariate normality (p > .05)"},
                    {"result", mark(r.hz.has_value(), r.normality_ok())}});
  checks.push_back({{"check", "Bartlett's test of sphericity (p < .05)"},
                    {"result", mark(r.bartlett.has_value(), r.bartlett_ok())}});
  checks.push_back({{"check", "KMO index (> 0.6)"}, {"result", mark(r.kmo.has_value(), r.kmo_ok())}});
  checks.push_back({{"check", "No multicollinearity (all SMC < " + std::to_string(r.options.smc_band.high).substr(0, 4) + ")"},
                    {"result", mark(smc_known, r.multicollinear_items.empty())}});
  checks.push_back({{"check", "No outlier variables (all SMC > " + std::to_string(r.options.smc_band.low).substr(0, 4) + ")"},
                    {"result", mark(smc_known, r.outlier_items.empty())}});

  Json j = {{"n", r.n},
            {"items", r.items},
            {"fa_possible", r.fa_possible},
            {"factorable", r.factorable},
            {"checks", checks},
            {"zero_variance_items", r.zero_variance_items}};
  if (r.linearity) {
    Json flagged = Json::array();
    for (const auto& f : r.linearity->flagged) {
      flagged.push_back({{"x", r.items.at(f.x)}, {"y", r.items.at(f.y)}, {"quadratic", f.quadratic}, {"p", f.p}});
    }
    j["linearity"] = {{"pairs_checked", r.linearity->pairs_checked},
                      {"chance_bound", r.linearity->chance_bound},
                      {"acceptable", r.linearity->acceptable()},
                      {"flagged", flagged}};
  } else {
    j["linearity"] = nullptr;
  }
  j["henze_zirkler"] = r.hz ? Json{{"statistic", r.hz->statistic}, {"p", r.hz->p}, {"beta", r.hz->beta}}
                            : Json(nullptr);
  j["bartlett"] = r.bartlett ? Json{{"chi2", r.bartlett->chi2}, {"df", r.bartlett->df}, {"p", r.bartlett->p}}
                             : Json(nullptr);
  j["kmo"] = r.kmo ? Json{{"overall", r.kmo->overall}, {"per_item", r.kmo->per_item}} : Json(nullptr);
  j["smc"] = r.smc ? Json(*r.smc) : Json(nullptr);
  j["multicollinear_items"] = r.multicollinear_items;
  j["outlier_items"] = r.outlier_items;
  j["notes"] = r.notes;
  return j;
}

Json to_json(const efa::FactorSolution& s, const std::vector<std::string>& items) {
  return {{"k", s.k},
          {"items", items},
          {"eigenvalues", s.eigenvalues},
          {"pattern", matrix_json(s.pattern)},
          {"structure", matrix_json(s.structure)},
          {"phi", matrix_json(s.phi.matrix())},
          {"communalities", vector_json(s.communalities)},
          {"iterations", s.iterations},
          {"converged", s.converged},
          {"rotation_converged", s.rotation_converged},
          {"notes", s.notes}};
}

Json to_json(const efa::FactorGraph& g) {
  Json edges = Json::array();
  for (const auto& e : g.edges) {
    edges.push_back({{"item", g.items.at(e.item)}, {"factor", e.factor + 1}, {"weight", e.weight}});
  }
  return {{"threshold", g.threshold}, {"factors", g.factors}, {"edges", edges}, {"isolated", g.isolated}};
}

Json to_json(const efa::CongruenceResult& c) {
  Json matching = Json::array();
  for (const auto& m : c.matching) {
    matching.push_back({{"a", m.a + 1}, {"b", m.b + 1}, {"coefficient", m.coefficient}});
  }
  return {{"coefficients", matrix_json(c.coefficients)},
          {"matching", matching},
          {"mean_matched_abs", c.mean_matched_abs()},
          {"has_undefined", c.has_undefined}};
}

Json to_json(const cfa::CfaFit& fit, const cfa::CfaModel& model) {
  Json loadings = Json::array();
  for (std::size_t i = 0; i < model.p(); ++i) {
    loadings.push_back({{"item", model.items[i]},
                        {"factor", model.factors[static_cast<std::size_t>(model.assignment[i])]},
                        {"loading", fit.estimates.loadings(static_cast<Eigen::Index>(i))},
                        {"residual", fit.estimates.residuals(static_cast<Eigen::Index>(i))}});
  }
  Json indices = {{"chi2", fit.chi2}, {"df", fit.df},     {"srmr", fit.indices.srmr},
                  {"rmsea", fit.indices.rmsea}, {"cfi", fit.indices.cfi}};
  Json j = {{"status", std::string(cfa::to_string(fit.status))},
            {"interpretable", fit.interpretable()},
            {"interpretation", fit.interpretation()},
            {"n", fit.n},
            {"f_min", std::isfinite(fit.f_min) ? Json(fit.f_min) : Json(nullptr)},
            {"iterations", fit.iterations},
            {"gradient_norm", fit.gradient_norm},
            {"baseline", {{"chi2", fit.baseline.chi2}, {"df", fit.baseline.df}}},
            {"factors", model.factors},
            {"loadings", loadings},
            {"phi", matrix_json(fit.estimates.phi)},
            {"notes", fit.notes}};
  if (fit.interpretable()) {
    j["fit"] = indices;
  } else {
    j["fit"] = nullptr;
    j["suppressed_fit"] = indices;
  }
  return j;
}

Json to_json(const compare::DescriptivesTable& t) {
  Json rows = Json::array();
  for (const auto& row : t.rows) {
    Json cells = Json::array();
    for (std::size_t g = 0; g < row.cells.size(); ++g) {
      const auto& c = row.cells[g];
      Json cell = {{"group", t.groups[g]}, {"mean", c.mean},   {"sd", c.sd},
                   {"n", c.n},             {"zero_sd", c.zero_sd}, {"stars", c.stars}};
      if (c.vs_reference) {
        cell["dunn"] = {{"z", optional_json(c.vs_reference->z)},
                        {"p_raw", optional_json(c.vs_reference->p_raw)},
                        {"p_bonferroni", optional_json(c.vs_reference->p_bonferroni)}};
      }
      cells.push_back(std::move(cell));
    }
    Json r = {{"dimension", row.dimension}, {"cells", cells}};
    r["kruskal_wallis"] = row.kruskal_wallis
                              ? Json{{"h", row.kruskal_wallis->h}, {"df", row.kruskal_wallis->df}, {"p", row.kruskal_wallis->p}}
                              : Json(nullptr);
    rows.push_back(std::move(r));
  }
  return {{"groups", t.groups}, {"reference", t.groups.at(t.reference)}, {"rows", rows}};
}

Json to_json(const compare::CorrelationTable& t) {
  Json rows = Json::array();
  for (const auto& row : t.rows) {
    Json cells = Json::array();
    for (std::size_t g = 0; g < row.cells.size(); ++g) {
      const auto& c = row.cells[g];
      Json cell = {{"group", t.groups[g]}, {"n", c.n}, {"r", optional_json(c.correlation.r)}};
      if (!c.correlation.r) cell["na_reason"] = c.correlation.na_reason;
      if (c.vs_reference) {
        cell["zou"] = {{"lower", c.vs_reference->lower},
                       {"upper", c.vs_reference->upper},
                       {"significant", c.vs_reference->significant}};
      }
      cells.push_back(std::move(cell));
    }
    rows.push_back({{"target", row.target}, {"cells", cells}});
  }
  return {{"anchor", t.anchor}, {"groups", t.groups}, {"reference", t.groups.at(t.reference)}, {"rows", rows}};
}

Json to_json(const pipeline::Verdict& v) {
  Json j = {{"group", v.group},
            {"instrument", v.instrument_id},
            {"stage", std::string(pipeline::to_string(v.stage))},
            {"summary", v.summary},
            {"assumptions", to_json(v.assumptions)}};
  j["cfa"] = v.cfa ? to_json(*v.cfa, v.model) : Json(nullptr);
  if (v.cfa_error) j["cfa_error"] = *v.cfa_error;
  j["cfa_supported"] = v.cfa_supported;
  j["scree"] = v.scree ? Json{{"eigenvalues", v.scree->eigenvalues}, {"kaiser_count", v.scree->kaiser_count}}
                       : Json(nullptr);
  j["efa"] = v.efa ? to_json(*v.efa, v.assumptions.items) : Json(nullptr);
  j["graph"] = v.graph ? to_json(*v.graph) : Json(nullptr);
  j["congruence_vs_theory"] = v.congruence ? to_json(*v.congruence) : Json(nullptr);
  return j;
}

Json to_json(const pipeline::SweepStudy& s) {
  Json rows = Json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"temperature", r.temperature},
                    {"n", r.n},
                    {"stage", std::string(pipeline::to_string(r.stage))},
                    {"kaiser_count", r.kaiser_count},
                    {"congruence", optional_json(r.congruence)},
                    {"reverse_share", optional_json(r.reverse_share)},
                    {"reverse_dominated", r.reverse_dominated}});
  }
  return {{"instrument", s.instrument_id}, {"rows", rows}};
}

Json to_json(const collect::RawCompletion& raw) {
  Json j = {{"request_id", raw.request_id}, {"temperature", raw.temperature},
            {"timestamp", raw.timestamp},   {"attempts", raw.attempts},
            {"text", raw.text}};
  if (raw.failure) {
    j["failure"] = *raw.failure;
  } else {
    j["valid"] = raw.outcome.valid;
    if (!raw.outcome.valid) {
      j["invalid_reason"] = std::string(collect::to_string(raw.outcome.reason));
      j["detail"] = raw.outcome.detail;
    }
  }
  return j;
}

}  // namespace phantom
