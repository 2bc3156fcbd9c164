#include "phantom/cfa.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <Eigen/Cholesky>
#include <fmt/format.h>
#include <json.hpp>

#include "phantom/error.hpp"

namespace phantom::cfa {

using Eigen::Index;

long CfaModel::df() const noexcept {
  const auto pp = static_cast<long>(p());
  return pp * (pp + 1) / 2 - static_cast<long>(parameter_count());
}

void CfaModel::validate() const {
  if (items.empty() || factors.empty()) throw PreconditionError("cfa model: empty model");
  if (assignment.size() != items.size()) {
    throw PreconditionError("cfa model: every item needs a factor assignment");
  }
  std::vector<int> counts(factors.size());
  for (int f : assignment) {
    if (f < 0 || f >= static_cast<int>(factors.size())) {
      throw PreconditionError("cfa model: factor index out of range");
    }
    ++counts[static_cast<std::size_t>(f)];
  }
  for (std::size_t f = 0; f < counts.size(); ++f) {
    if (counts[f] == 0) throw PreconditionError("cfa model: factor '" + factors[f] + "' has no items");
  }
}

CfaModel CfaModel::from_instrument(const inst::Instrument& instrument) {
  CfaModel m;
  m.items = instrument.item_ids();
  m.assignment.assign(m.items.size(), -1);
  for (std::size_t d = 0; d < instrument.dimensions.size(); ++d) {
    m.factors.push_back(instrument.dimensions[d].name);
    for (const auto& id : instrument.dimensions[d].items) {
      m.assignment[instrument.index_of(id)] = static_cast<int>(d);
    }
  }
  m.validate();
  return m;
}

CfaModel parse_model(std::string_view json_text, const inst::Instrument& instrument) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw LoadError(std::string("cfa model: invalid JSON: ") + e.what());
  }
  CfaModel m;
  m.items = instrument.item_ids();
  m.assignment.assign(m.items.size(), -1);
  try {
    for (const auto& [name, ids] : j.at("factors").items()) {
      const int f = static_cast<int>(m.factors.size());
      m.factors.push_back(name);
      for (const auto& id : ids) {
        const auto idx = instrument.index_of(id.get<std::string>());
        if (m.assignment[idx] != -1) {
          throw LoadError("cfa model: item '" + m.items[idx] + "' assigned twice");
        }
        m.assignment[idx] = f;
      }
    }
  } catch (const nlohmann::ordered_json::exception& e) {
    throw LoadError(std::string("cfa model: schema violation: ") + e.what());
  } catch (const PreconditionError& e) {
    throw LoadError(std::string("cfa model: ") + e.what());
  }
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    if (m.assignment[i] == -1) throw LoadError("cfa model: item '" + m.items[i] + "' is unassigned");
  }
  m.validate();
  return m;
}

CfaModel load_model(const std::filesystem::path& path, const inst::Instrument& instrument) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str(), instrument);
}

MlDiscrepancy::MlDiscrepancy(const SymMatrix& s, const CfaModel& model)
    : s_(s.matrix()), log_det_s_(num::log_det_spd(s)), model_(model) {
  model_.validate();
  if (static_cast<std::size_t>(s.order()) != model_.p()) {
    throw PreconditionError("cfa: covariance order does not match the model");
  }
}

Matrix MlDiscrepancy::loading_matrix(const Vector& theta) const {
  Matrix l = Matrix::Zero(static_cast<Index>(model_.p()), static_cast<Index>(model_.k()));
  for (std::size_t i = 0; i < model_.p(); ++i) {
    l(static_cast<Index>(i), model_.assignment[i]) = theta(static_cast<Index>(i));
  }
  return l;
}

Matrix MlDiscrepancy::phi_matrix(const Vector& theta) const {
  const auto k = static_cast<Index>(model_.k());
  Matrix phi = Matrix::Identity(k, k);
  Index pos = static_cast<Index>(model_.p());
  for (Index a = 1; a < k; ++a) {
    for (Index b = 0; b < a; ++b) {
      phi(a, b) = phi(b, a) = theta(pos++);
    }
  }
  return phi;
}

Matrix MlDiscrepancy::implied(const Vector& theta) const {
  const Matrix l = loading_matrix(theta);
  Matrix sigma = l * phi_matrix(theta) * l.transpose();
  const auto p = static_cast<Index>(model_.p());
  const Index offset = static_cast<Index>(model_.parameter_count()) - p;
  sigma.diagonal() += theta.segment(offset, p);
  return sigma;
}

double MlDiscrepancy::operator()(const Vector& theta, Vector& grad) const {
  const auto p = static_cast<Index>(model_.p());
  const auto k = static_cast<Index>(model_.k());
  const Matrix l = loading_matrix(theta);
  const Matrix phi = phi_matrix(theta);
  Matrix sigma = l * phi * l.transpose();
  const Index resid_offset = size() - p;
  sigma.diagonal() += theta.segment(resid_offset, p);

  Eigen::LLT<Matrix> llt(sigma);
  grad.setZero(size());
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const Matrix sigma_inv = llt.solve(Matrix::Identity(p, p));
  const Matrix s_sigma_inv = s_ * sigma_inv;
  const double value = log_det + s_sigma_inv.trace() - log_det_s_ - static_cast<double>(p);

  // dF = tr(W dSigma) with W = Sigma^-1 - Sigma^-1 S Sigma^-1.
  const Matrix w = sigma_inv - sigma_inv * s_sigma_inv;
  const Matrix wl_phi = 2.0 * w * l * phi;
  for (Index i = 0; i < p; ++i) grad(i) = wl_phi(i, model_.assignment[static_cast<std::size_t>(i)]);
  const Matrix ltwl = l.transpose() * w * l;
  Index pos = p;
  for (Index a = 1; a < k; ++a) {
    for (Index b = 0; b < a; ++b) grad(pos++) = 2.0 * ltwl(a, b);
  }
  grad.segment(resid_offset, p) = w.diagonal();
  return value;
}

double MlDiscrepancy::value(const Vector& theta) const {
  Vector g;
  return (*this)(theta, g);
}

Vector MlDiscrepancy::start() const {
  Vector theta = Vector::Zero(size());
  const auto p = static_cast<Index>(model_.p());
  for (Index i = 0; i < p; ++i) {
    theta(i) = 0.7 * std::sqrt(s_(i, i));
    theta(size() - p + i) = 0.5 * s_(i, i);
  }
  return theta;
}

Vector MlDiscrepancy::pack(const CfaEstimates& est) const {
  Vector theta(size());
  const auto p = static_cast<Index>(model_.p());
  theta.head(p) = est.loadings;
  Index pos = p;
  for (Index a = 1; a < est.phi.rows(); ++a) {
    for (Index b = 0; b < a; ++b) theta(pos++) = est.phi(a, b);
  }
  theta.tail(p) = est.residuals;
  return theta;
}

CfaEstimates MlDiscrepancy::unpack(const Vector& theta) const {
  const auto p = static_cast<Index>(model_.p());
  return {theta.head(p), phi_matrix(theta), theta.tail(p)};
}

std::string_view to_string(CfaStatus status) {
  switch (status) {
    case CfaStatus::converged_proper: return "converged_proper";
    case CfaStatus::improper_heywood: return "improper_heywood";
    case CfaStatus::improper_phi: return "improper_phi";
    case CfaStatus::nonconverged: return "nonconverged";
  }
  return "unknown";
}

BaselineFit baseline_model(const SymMatrix& s, std::int64_t n) {
  const double p = static_cast<double>(s.order());
  const double log_det_r = num::log_det_spd(num::cov_to_cor(s));
  return {-(static_cast<double>(n) - 1.0) * log_det_r, p * (p - 1.0) / 2.0};
}

FitIndices fit_indices(double chi2, double df, std::int64_t n, const SymMatrix& s,
                       const Matrix& sigma_hat, const BaselineFit& baseline) {
  FitIndices out;
  const double excess = std::max(chi2 - df, 0.0);
  out.rmsea = std::sqrt(excess / (df * (static_cast<double>(n) - 1.0)));
  const double denom = std::max({baseline.chi2 - baseline.df, chi2 - df, 0.0});
  out.cfi = denom > 0.0 ? 1.0 - excess / denom : 1.0;
  const Index p = s.order();
  double acc = 0.0;
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j <= i; ++j) {
      const double r = (s(i, j) - sigma_hat(i, j)) / std::sqrt(s(i, i) * s(j, j));
      acc += r * r;
    }
  }
  out.srmr = std::sqrt(acc / static_cast<double>(p * (p + 1) / 2));
  return out;
}

std::string CfaFit::interpretation() const {
  switch (status) {
    case CfaStatus::converged_proper:
      return fmt::format("Proper solution: chi2({}) = {:.2f}, SRMR = {:.3f}, RMSEA = {:.3f}, CFI = {:.3f}.",
                         df, chi2, indices.srmr, indices.rmsea, indices.cfi);
    case CfaStatus::improper_heywood:
      return "Improper solution (negative residual variance); fit indices cannot be interpreted.";
    case CfaStatus::improper_phi:
      return "Improper solution (factor correlation beyond +/-1); fit indices cannot be interpreted.";
    case CfaStatus::nonconverged:
      return "Estimation did not converge; fit indices cannot be interpreted.";
  }
  return {};
}

CfaFit fit_cfa(const SymMatrix& s_in, std::int64_t n, const CfaModel& model,
               const CfaOptions& options) {
  model.validate();
  if (model.df() < 1) {
    throw PreconditionError("fit_cfa: model has df = " + std::to_string(model.df()) + " (< 1)");
  }
  const SymMatrix s = options.correlation_input ? num::cov_to_cor(s_in) : s_in;
  const MlDiscrepancy objective(s, model);  // throws SingularError if S is not SPD

  CfaFit fit;
  fit.n = n;
  fit.df = model.df();
  fit.baseline = baseline_model(s, n);

  const auto fn = [&](const Vector& x, Vector& g) { return objective(x, g); };
  Vector theta = objective.start();
  bool converged = false;
  try {
    auto res = num::minimize(fn, theta, std::nullopt, options.minimizer);
    theta = res.x;
    converged = res.converged;
    fit.iterations = res.iterations;
    fit.gradient_norm = res.gradient_norm;
    if (options.bounded_refit) {
      const auto p = static_cast<Index>(model.p());
      num::Bounds bounds{Vector::Constant(objective.size(), -std::numeric_limits<double>::infinity()),
                         Vector::Constant(objective.size(), std::numeric_limits<double>::infinity())};
      bounds.lower.segment(p, objective.size() - 2 * p).setConstant(-1.0);
      bounds.upper.segment(p, objective.size() - 2 * p).setConstant(1.0);
      bounds.lower.tail(p).setConstant(1e-6);
      res = num::minimize(fn, theta.cwiseMax(bounds.lower).cwiseMin(bounds.upper), bounds,
                          options.minimizer);
      theta = res.x;
      converged = res.converged;
      fit.iterations += res.iterations;
      fit.gradient_norm = res.gradient_norm;
      fit.notes.push_back("bounded refit: psi >= 1e-6, |phi| <= 1");
    }
  } catch (const NumericalError& e) {
    fit.notes.push_back(e.what());
    if (e.last_good_point().size() == theta.size()) theta = e.last_good_point();
  }

  // Fix the sign of each factor so its loadings sum to a non-negative value.
  CfaEstimates est = objective.unpack(theta);
  for (std::size_t f = 0; f < model.k(); ++f) {
    double sum = 0.0;
    for (std::size_t i = 0; i < model.p(); ++i) {
      if (model.assignment[i] == static_cast<int>(f)) sum += est.loadings(static_cast<Index>(i));
    }
    if (sum < 0.0) {
      for (std::size_t i = 0; i < model.p(); ++i) {
        if (model.assignment[i] == static_cast<int>(f)) est.loadings(static_cast<Index>(i)) *= -1.0;
      }
      const auto ff = static_cast<Index>(f);
      est.phi.row(ff) *= -1.0;
      est.phi.col(ff) *= -1.0;
    }
  }
  theta = objective.pack(est);
  fit.estimates = est;
  fit.f_min = objective.value(theta);
  fit.chi2 = (static_cast<double>(n) - 1.0) * fit.f_min;
  fit.implied = objective.implied(theta);

  if (!converged || !std::isfinite(fit.f_min)) {
    fit.status = CfaStatus::nonconverged;
  } else if ((est.residuals.array() < 0.0).any()) {
    fit.status = CfaStatus::improper_heywood;
  } else if ((est.phi.array().abs() > 1.0).any()) {
    fit.status = CfaStatus::improper_phi;
  } else {
    fit.status = CfaStatus::converged_proper;
  }
  if (std::isfinite(fit.f_min)) {
    fit.indices = fit_indices(fit.chi2, static_cast<double>(fit.df), n, s, fit.implied, fit.baseline);
  }
  return fit;
}

}  // namespace phantom::cfa
