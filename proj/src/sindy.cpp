#include "llmdmd/sindy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace llmdmd::sindy {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Accurate: return "accurate";
    case Variant::Overcomplete: return "overcomplete";
    case Variant::Missing: return "missing";
  }
  return "accurate";
}

Variant variant_from_string(std::string_view s) {
  if (s == "accurate") return Variant::Accurate;
  if (s == "overcomplete") return Variant::Overcomplete;
  if (s == "missing") return Variant::Missing;
  throw std::invalid_argument("unknown SINDy variant '" + std::string(s) + "'");
}

LibraryConfig LibraryConfig::for_variant(Variant v, std::vector<std::string> variables,
                                         std::vector<std::string> excluded) {
  LibraryConfig cfg;
  cfg.variant = v;
  cfg.degree = v == Variant::Overcomplete ? 2 : 1;
  cfg.variables = std::move(variables);
  if (v == Variant::Missing) cfg.excluded = std::move(excluded);
  cfg.validate();
  return cfg;
}

void LibraryConfig::validate() const {
  if (degree < 1 || degree > 2) throw std::invalid_argument("library degree must be 1 or 2");
  if (variant == Variant::Accurate && degree != 1) throw std::invalid_argument("accurate library is first order");
  if (variant == Variant::Overcomplete && degree != 2) throw std::invalid_argument("overcomplete library is quadratic");
  if (variant == Variant::Missing && excluded.empty()) {
    throw std::invalid_argument("missing-variable library needs excluded variables");
  }
  if (variant != Variant::Missing && !excluded.empty()) {
    throw std::invalid_argument("only the missing-variable library excludes variables");
  }
  for (const auto& e : excluded) {
    if (std::find(variables.begin(), variables.end(), e) == variables.end()) {
      throw std::invalid_argument("excluded variable '" + e + "' is not in the variable set");
    }
  }
}

std::vector<std::string> LibraryConfig::active_variables() const {
  std::vector<std::string> out;
  for (const auto& v : variables) {
    if (std::find(excluded.begin(), excluded.end(), v) == excluded.end()) out.push_back(v);
  }
  return out;
}

std::string Term::name() const {
  if (factors.empty()) return "1";
  std::string out;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (i > 0) out += "*";
    out += factors[i];
  }
  return out;
}

std::vector<Term> library_terms(const LibraryConfig& cfg) {
  const auto vars = cfg.active_variables();
  std::vector<Term> terms;
  if (cfg.include_constant) terms.push_back(Term{});
  for (const auto& v : vars) terms.push_back(Term{{v}});
  if (cfg.degree >= 2) {
    for (std::size_t a = 0; a < vars.size(); ++a) {
      for (std::size_t b = a; b < vars.size(); ++b) terms.push_back(Term{{vars[a], vars[b]}});
    }
  }
  return terms;
}

double term_value(const Term& term, const std::vector<std::string>& names, const std::vector<double>& values) {
  double v = 1.0;
  for (const auto& f : term.factors) {
    auto it = std::find(names.begin(), names.end(), f);
    if (it == names.end()) throw MissingColumn(f);
    v *= values[static_cast<std::size_t>(it - names.begin())];
  }
  return v;
}

Library build_library(const LibraryConfig& cfg, const SampleBatch& columns) {
  cfg.validate();
  Library lib;
  lib.terms = library_terms(cfg);
  const auto n = static_cast<Eigen::Index>(columns.size());
  lib.theta.resize(n, static_cast<Eigen::Index>(lib.terms.size()));
  for (std::size_t j = 0; j < lib.terms.size(); ++j) {
    auto col = lib.theta.col(static_cast<Eigen::Index>(j));
    col.setOnes();
    for (const auto& f : lib.terms[j].factors) {
      const auto& data = columns.column(f);
      for (Eigen::Index i = 0; i < n; ++i) col[i] *= data[static_cast<std::size_t>(i)];
    }
  }
  return lib;
}

Eigen::VectorXd least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double ridge, double rcond_floor,
                              bool& ridge_used) {
  const Eigen::MatrixXd gram = a.transpose() * a;
  const Eigen::VectorXd rhs = a.transpose() * b;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() == Eigen::Success && llt.rcond() > rcond_floor) {
    Eigen::VectorXd x = llt.solve(rhs);
    if (x.allFinite()) return x;
  }
  ridge_used = true;
  Eigen::MatrixXd reg = gram;
  reg.diagonal().array() += ridge;
  return reg.ldlt().solve(rhs);
}

std::size_t SindyModel::active_terms() const {
  std::size_t n = 0;
  for (const auto& row : mask) n += static_cast<std::size_t>(std::count(row.begin(), row.end(), true));
  return n;
}

SindyModel stlsq(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& targets, const StlsqOptions& opt) {
  if (theta.rows() != targets.rows()) throw std::invalid_argument("library and targets differ in sample count");
  if (opt.threshold < 0.0 || opt.iterations < 1) throw std::invalid_argument("invalid STLSQ options");
  const auto n_terms = theta.cols();
  const auto n_targets = targets.cols();
  SindyModel model;
  model.options = opt;
  model.xi = Eigen::MatrixXd::Zero(n_targets, n_terms);
  model.mask.assign(static_cast<std::size_t>(n_targets), std::vector<bool>(static_cast<std::size_t>(n_terms), true));
  model.degenerate.assign(static_cast<std::size_t>(n_targets), false);
  model.residual_rms.assign(static_cast<std::size_t>(n_targets), 0.0);

  for (Eigen::Index t = 0; t < n_targets; ++t) {
    auto& mask = model.mask[static_cast<std::size_t>(t)];
    const Eigen::VectorXd y = targets.col(t);
    Eigen::VectorXd xi = Eigen::VectorXd::Zero(n_terms);
    for (int it = 0; it < opt.iterations; ++it) {
      std::vector<Eigen::Index> active;
      for (Eigen::Index j = 0; j < n_terms; ++j) {
        if (mask[static_cast<std::size_t>(j)]) active.push_back(j);
      }
      xi.setZero();
      if (active.empty()) break;
      Eigen::MatrixXd sub(theta.rows(), static_cast<Eigen::Index>(active.size()));
      for (std::size_t k = 0; k < active.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = theta.col(active[k]);
      const Eigen::VectorXd coef = least_squares(sub, y, opt.ridge, opt.rcond_floor, model.ridge_used);
      for (std::size_t k = 0; k < active.size(); ++k) xi[active[k]] = coef[static_cast<Eigen::Index>(k)];
      bool changed = false;
      for (Eigen::Index j : active) {
        if (std::abs(xi[j]) < opt.threshold) {
          mask[static_cast<std::size_t>(j)] = false;
          xi[j] = 0.0;
          changed = true;
        }
      }
      if (!changed) break;
    }
    // Refit once more if the last pass removed terms, so survivors are least-squares optimal.
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < n_terms; ++j) {
      if (mask[static_cast<std::size_t>(j)]) active.push_back(j);
    }
    xi.setZero();
    if (!active.empty()) {
      Eigen::MatrixXd sub(theta.rows(), static_cast<Eigen::Index>(active.size()));
      for (std::size_t k = 0; k < active.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = theta.col(active[k]);
      const Eigen::VectorXd coef = least_squares(sub, y, opt.ridge, opt.rcond_floor, model.ridge_used);
      for (std::size_t k = 0; k < active.size(); ++k) xi[active[k]] = coef[static_cast<Eigen::Index>(k)];
    }
    model.degenerate[static_cast<std::size_t>(t)] = active.empty();
    model.xi.row(t) = xi.transpose();
    const Eigen::VectorXd r = y - theta * xi;
    model.residual_rms[static_cast<std::size_t>(t)] =
        theta.rows() > 0 ? std::sqrt(r.squaredNorm() / static_cast<double>(theta.rows())) : 0.0;
  }
  return model;
}

SindyModel fit(const LibraryConfig& cfg, const SampleBatch& batch, const std::vector<std::string>& states,
               const StlsqOptions& opt) {
  const Library lib = build_library(cfg, batch);
  Eigen::MatrixXd y(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(states.size()));
  for (std::size_t s = 0; s < states.size(); ++s) {
    const auto& col = batch.column("d" + states[s] + "_dt");
    for (std::size_t i = 0; i < col.size(); ++i) y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = col[i];
  }
  SindyModel model = stlsq(lib.theta, y, opt);
  model.targets = states;
  model.terms = lib.terms;
  model.config = cfg;
  return model;
}

nlohmann::json SindyModel::to_json() const {
  nlohmann::json terms_j = nlohmann::json::array();
  for (const auto& t : terms) terms_j.push_back(t.factors);
  nlohmann::json coef = nlohmann::json::array();
  for (Eigen::Index i = 0; i < xi.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < xi.cols(); ++j) row.push_back(xi(i, j));
    coef.push_back(row);
  }
  std::vector<std::string> names;
  for (const auto& t : terms) names.push_back(t.name());
  return {{"type", "sindy"},
          {"variant", std::string(to_string(config.variant))},
          {"degree", config.degree},
          {"variables", config.variables},
          {"excluded", config.excluded},
          {"threshold", options.threshold},
          {"iterations", options.iterations},
          {"targets", targets},
          {"terms", terms_j},
          {"term_names", names},
          {"coefficients", coef},
          {"degenerate", degenerate},
          {"residual_rms", residual_rms},
          {"ridge_used", ridge_used}};
}

SindyModel SindyModel::from_json(const nlohmann::json& j) {
  SindyModel m;
  m.config.variant = variant_from_string(j.at("variant").get<std::string>());
  m.config.degree = j.value("degree", 1);
  m.config.variables = j.value("variables", std::vector<std::string>{});
  m.config.excluded = j.value("excluded", std::vector<std::string>{});
  m.options.threshold = j.value("threshold", m.options.threshold);
  m.options.iterations = j.value("iterations", m.options.iterations);
  m.targets = j.at("targets").get<std::vector<std::string>>();
  for (const auto& t : j.at("terms")) m.terms.push_back(Term{t.get<std::vector<std::string>>()});
  const auto& coef = j.at("coefficients");
  if (coef.size() != m.targets.size()) throw std::invalid_argument("coefficient rows do not match targets");
  m.xi.resize(static_cast<Eigen::Index>(m.targets.size()), static_cast<Eigen::Index>(m.terms.size()));
  m.mask.assign(m.targets.size(), std::vector<bool>(m.terms.size(), false));
  for (std::size_t i = 0; i < m.targets.size(); ++i) {
    if (coef[i].size() != m.terms.size()) throw std::invalid_argument("coefficient row width does not match terms");
    for (std::size_t k = 0; k < m.terms.size(); ++k) {
      const double v = coef[i][k].get<double>();
      m.xi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
      m.mask[i][k] = v != 0.0;
    }
  }
  m.degenerate = j.value("degenerate", std::vector<bool>(m.targets.size(), false));
  m.residual_rms = j.value("residual_rms", std::vector<double>(m.targets.size(), 0.0));
  m.ridge_used = j.value("ridge_used", false);
  return m;
}

}  // namespace llmdmd::sindy
