#include "llmdmd/replay.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "llmdmd/evaluator.hpp"
#include "llmdmd/rk4.hpp"

namespace llmdmd {

namespace {

struct Feed {
  const std::vector<double>* column;
  bool hold;  // zero-order hold instead of interpolation
};

std::vector<std::string> without(const std::vector<std::string>& names, const std::vector<std::string>& drop) {
  std::vector<std::string> out;
  for (const auto& n : names) {
    if (std::find(drop.begin(), drop.end(), n) == drop.end()) out.push_back(n);
  }
  return out;
}

// Overwrites algebraic (non-input) variables in `values` with the benchmark's
// algebraic map evaluated at the replayed states.
class NetworkFill {
 public:
  NetworkFill(const TrueAlgebra& truth, const std::vector<std::string>& states,
              const std::vector<std::string>& value_names)
      : truth_(truth), x_(truth.model->states().size()) {
    const auto bench_states = truth.model->state_names();
    for (const auto& b : bench_states) {
      auto it = std::find(states.begin(), states.end(), b);
      if (it == states.end()) throw std::invalid_argument("network replay needs state '" + b + "'");
      state_slots_.push_back(static_cast<std::size_t>(it - states.begin()));
    }
    const auto catalog = truth.model->catalog();
    for (std::size_t i = 0; i < value_names.size(); ++i) {
      for (std::size_t c = 0; c < catalog.size(); ++c) {
        if (catalog[c].name == value_names[i] && catalog[c].kind == SignalKind::Algebraic) {
          targets_.emplace_back(i, c);
        }
      }
    }
  }

  void apply(double t, std::span<double> values) {
    for (std::size_t k = 0; k < state_slots_.size(); ++k) x_[k] = values[state_slots_[k]];
    const auto sig = truth_.model->signals(x_, truth_.scenario.conditions_at(t, truth_.model->params()));
    for (const auto& [slot, c] : targets_) values[slot] = sig[c];
  }

 private:
  const TrueAlgebra& truth_;
  std::vector<double> x_;
  std::vector<std::size_t> state_slots_;
  std::vector<std::pair<std::size_t, std::size_t>> targets_;  // value slot, catalog index
};

const TrueAlgebra& require_truth(AlgebraicSource source, const TrueAlgebra* truth) {
  if (source == AlgebraicSource::Network && (truth == nullptr || truth->model == nullptr)) {
    throw std::invalid_argument("network replay needs the benchmark model and scenario");
  }
  return *truth;
}

}  // namespace

std::string_view to_string(AlgebraicSource s) {
  switch (s) {
    case AlgebraicSource::Recorded: return "recorded";
    case AlgebraicSource::Model: return "closed_loop";
    case AlgebraicSource::Network: return "network";
  }
  return "recorded";
}

AlgebraicSource algebraic_source_from_string(std::string_view s) {
  if (s == "recorded") return AlgebraicSource::Recorded;
  if (s == "closed_loop") return AlgebraicSource::Model;
  if (s == "network") return AlgebraicSource::Network;
  throw std::invalid_argument("replay mode must be recorded, closed_loop or network");
}

Trajectory replay(const bench::FullRecord& record, const std::vector<std::string>& states,
                  const std::vector<std::string>& variables, const ReplayRhs& rhs, const ReplayOptions& opt) {
  const std::size_t ns = states.size();
  const std::size_t n = record.size();
  std::vector<Feed> feeds;
  for (const auto& v : variables) {
    const auto meta = record.signal_meta(v);
    if (!meta) throw bench::UnknownSignal(v);
    feeds.push_back({&record.signal(v), meta->kind == SignalKind::Input});
  }

  Trajectory traj;
  traj.state_names = states;
  traj.states.assign(ns, {});
  std::vector<double> x(ns);
  for (std::size_t s = 0; s < ns; ++s) x[s] = record.state(states[s]).front();

  std::vector<double> values(ns + feeds.size());
  Rk4 rk(ns);
  auto record_sample = [&](std::size_t k) {
    traj.time.push_back(record.time[k]);
    for (std::size_t s = 0; s < ns; ++s) traj.states[s].push_back(x[s]);
  };

  if (n == 0) return traj;
  record_sample(0);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double t0 = record.time[k];
    const double dt = record.time[k + 1] - t0;
    bool fault = false;
    auto f = [&](double t, std::span<const double> xs, std::span<double> dx) {
      const double w = dt > 0.0 ? std::clamp((t - t0) / dt, 0.0, 1.0) : 0.0;
      std::copy(xs.begin(), xs.end(), values.begin());
      for (std::size_t j = 0; j < feeds.size(); ++j) {
        const auto& col = *feeds[j].column;
        values[ns + j] = feeds[j].hold ? col[k] : (1.0 - w) * col[k] + w * col[k + 1];
      }
      if (!rhs(t0 + 0.5 * dt, values, dx)) {
        fault = true;
        std::fill(dx.begin(), dx.end(), 0.0);
      }
    };
    rk.step(f, t0, dt, std::span<double>(x));
    bool finite = !fault;
    for (double v : x) finite = finite && std::isfinite(v) && std::abs(v) <= opt.divergence_bound;
    if (!finite) {
      traj.diverged = true;
      traj.divergence_reason = fault ? "domain fault at t = " + format_number(t0)
                                     : "state left the finite range at t = " + format_number(record.time[k + 1]);
      return traj;
    }
    record_sample(k + 1);
  }
  return traj;
}

Skeleton DiscoveredModel::de_skeleton() const {
  return parse(de_text, SymbolScope(states, de_variables), states, TargetKind::Differential);
}

Skeleton DiscoveredModel::ae_skeleton() const {
  if (!has_ae) throw std::logic_error("model has no algebraic part");
  return parse(ae_text, SymbolScope(states, ae_variables), ae_targets, TargetKind::Algebraic);
}

nlohmann::json DiscoveredModel::to_json() const {
  nlohmann::json j = {{"type", "discovered"},
                      {"benchmark", benchmark},
                      {"states", states},
                      {"de",
                       {{"variables", de_variables},
                        {"skeleton", de_text},
                        {"params", de_params},
                        {"score", de_score}}}};
  if (has_ae) {
    j["ae"] = {{"targets", ae_targets},
               {"variables", ae_variables},
               {"skeleton", ae_text},
               {"params", ae_params},
               {"score", ae_score}};
  } else {
    j["ae"] = nullptr;
  }
  return j;
}

DiscoveredModel DiscoveredModel::from_json(const nlohmann::json& j) {
  DiscoveredModel m;
  m.benchmark = j.value("benchmark", "");
  m.states = j.at("states").get<std::vector<std::string>>();
  const auto& de = j.at("de");
  m.de_variables = de.value("variables", std::vector<std::string>{});
  m.de_text = de.at("skeleton").get<std::string>();
  m.de_params = de.at("params").get<std::vector<double>>();
  m.de_score = de.value("score", 0.0);
  if (j.contains("ae") && j["ae"].is_object()) {
    const auto& ae = j["ae"];
    m.has_ae = true;
    m.ae_targets = ae.at("targets").get<std::vector<std::string>>();
    m.ae_variables = ae.value("variables", std::vector<std::string>{});
    m.ae_text = ae.at("skeleton").get<std::string>();
    m.ae_params = ae.at("params").get<std::vector<double>>();
    m.ae_score = ae.value("score", 0.0);
  }
  return m;
}

Trajectory replay_discovered(const DiscoveredModel& model, const bench::FullRecord& record, AlgebraicSource source,
                             const TrueAlgebra* truth, const ReplayOptions& opt) {
  const Skeleton de = model.de_skeleton();
  if (de.n_params != model.de_params.size()) throw std::invalid_argument("DE parameter count does not match skeleton");
  if (source == AlgebraicSource::Model && !model.has_ae) {
    throw std::invalid_argument("closed-loop replay needs an algebraic model");
  }
  const bool closed = source == AlgebraicSource::Model;

  // Value layout: states, fed variables, then AE targets (closed loop only).
  std::vector<std::string> fed = model.de_variables;
  std::vector<std::string> order = model.states;
  std::optional<Skeleton> ae;
  std::vector<std::size_t> target_slots;
  if (closed) {
    ae = model.ae_skeleton();
    if (ae->n_params != model.ae_params.size()) throw std::invalid_argument("AE parameter count does not match skeleton");
    fed = without(model.de_variables, model.ae_targets);
    for (const auto& v : model.ae_variables) {
      if (std::find(fed.begin(), fed.end(), v) == fed.end()) fed.push_back(v);
    }
  }
  order.insert(order.end(), fed.begin(), fed.end());
  if (closed) {
    for (const auto& t : model.ae_targets) {
      target_slots.push_back(order.size());
      order.push_back(t);
    }
  }

  PointEvaluator de_eval(de, order);
  std::optional<PointEvaluator> ae_eval;
  if (closed) ae_eval.emplace(*ae, order);
  std::vector<double> full(order.size());
  std::vector<double> ae_out(model.ae_targets.size());
  std::optional<NetworkFill> network;
  if (source == AlgebraicSource::Network) network.emplace(require_truth(source, truth), model.states, order);

  auto rhs = [&](double t, std::span<const double> values, std::span<double> dx) {
    std::copy(values.begin(), values.end(), full.begin());
    if (network) network->apply(t, full);
    if (closed) {
      if (!ae_eval->evaluate(std::span<const double>(full.data(), full.size()), model.ae_params, ae_out)) return false;
      for (std::size_t i = 0; i < target_slots.size(); ++i) full[target_slots[i]] = ae_out[i];
    }
    return de_eval.evaluate(full, model.de_params, dx);
  };
  return replay(record, model.states, fed, rhs, opt);
}

Trajectory replay_sindy(const sindy::SindyModel& model, const bench::FullRecord& record, AlgebraicSource source,
                        const TrueAlgebra* truth, const ReplayOptions& opt) {
  if (source == AlgebraicSource::Model) throw std::invalid_argument("SINDy models have no algebraic part");
  std::vector<std::string> fed;
  for (const auto& term : model.terms) {
    for (const auto& f : term.factors) {
      if (std::find(model.targets.begin(), model.targets.end(), f) == model.targets.end() &&
          std::find(fed.begin(), fed.end(), f) == fed.end()) {
        fed.push_back(f);
      }
    }
  }
  std::vector<std::string> names = model.targets;
  names.insert(names.end(), fed.begin(), fed.end());
  // Resolve each term's factors to value slots once.
  std::vector<std::vector<std::size_t>> slots;
  for (const auto& term : model.terms) {
    std::vector<std::size_t> s;
    for (const auto& f : term.factors) {
      s.push_back(static_cast<std::size_t>(std::find(names.begin(), names.end(), f) - names.begin()));
    }
    slots.push_back(std::move(s));
  }
  std::vector<double> theta(model.terms.size());
  std::vector<double> full(names.size());
  std::optional<NetworkFill> network;
  if (source == AlgebraicSource::Network) network.emplace(require_truth(source, truth), model.targets, names);
  auto rhs = [&](double t, std::span<const double> in, std::span<double> dx) {
    std::copy(in.begin(), in.end(), full.begin());
    if (network) network->apply(t, full);
    std::span<const double> values(full);
    for (std::size_t j = 0; j < slots.size(); ++j) {
      double v = 1.0;
      for (std::size_t s : slots[j]) v *= values[s];
      theta[j] = v;
    }
    for (std::size_t i = 0; i < model.targets.size(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < theta.size(); ++j) {
        acc += model.xi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * theta[j];
      }
      dx[i] = acc;
    }
    return true;
  };
  return replay(record, model.targets, fed, rhs, opt);
}

}  // namespace llmdmd
