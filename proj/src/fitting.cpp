#include "llmdmd/fitting.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace llmdmd {

namespace {

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
  bool faulted = false;
};

LossAndGrad loss_and_gradient(const Skeleton& s, std::span<const double> params, const SampleBatch& batch,
                              const std::vector<const std::vector<double>*>& targets) {
  LossAndGrad out;
  const EvalResult r = evaluate(s, params, batch, true);
  if (r.fault) {
    out.faulted = true;
    return out;
  }
  const double norm = 1.0 / static_cast<double>(r.n_targets * std::max<std::size_t>(r.n_samples, 1));
  out.grad.assign(r.n_params, 0.0);
  double sum = 0.0;
  for (std::size_t t = 0; t < r.n_targets; ++t) {
    const auto& y = *targets[t];
    for (std::size_t i = 0; i < r.n_samples; ++i) {
      const double res = r.output(t, i) - y[i];
      sum += res * res;
      const double* g = r.gradients.data() + (t * r.n_samples + i) * r.n_params;
      for (std::size_t k = 0; k < r.n_params; ++k) out.grad[k] += 2.0 * res * g[k];
    }
  }
  out.loss = sum * norm;
  for (double& g : out.grad) g *= norm;
  if (!std::isfinite(out.loss)) out.faulted = true;
  return out;
}

std::vector<const std::vector<double>*> resolve_targets(const Skeleton& s, const SampleBatch& batch,
                                                        const std::vector<std::string>& names) {
  if (names.size() != s.expressions.size()) {
    throw std::invalid_argument("skeleton has " + std::to_string(s.expressions.size()) + " targets but " +
                                std::to_string(names.size()) + " target columns were given");
  }
  std::vector<const std::vector<double>*> cols;
  for (const auto& n : names) cols.push_back(&batch.column(n));
  return cols;
}

}  // namespace

void FitConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("fit steps must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
  if (!(init_low < init_high)) throw std::invalid_argument("init range must be non-empty");
}

double cosine_learning_rate(double lr0, int step, int steps) {
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(steps)));
}

double score_of(double loss) {
  if (!std::isfinite(loss) || loss < 0.0) return kWorstScore;
  return -loss;
}

double mse_loss(const Skeleton& s, std::span<const double> params, const SampleBatch& batch,
                const std::vector<std::string>& target_columns) {
  const auto targets = resolve_targets(s, batch, target_columns);
  const EvalResult r = evaluate(s, params, batch, false);
  if (r.fault) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (std::size_t t = 0; t < r.n_targets; ++t) {
    for (std::size_t i = 0; i < r.n_samples; ++i) {
      const double res = r.output(t, i) - (*targets[t])[i];
      sum += res * res;
    }
  }
  return sum / static_cast<double>(r.n_targets * std::max<std::size_t>(r.n_samples, 1));
}

RestartResult adam_run(const Skeleton& s, const SampleBatch& batch, const std::vector<std::string>& target_columns,
                       std::vector<double> init, const FitConfig& cfg) {
  const auto targets = resolve_targets(s, batch, target_columns);
  RestartResult best;
  best.loss = std::numeric_limits<double>::infinity();
  std::vector<double> p = std::move(init);
  std::vector<double> m(p.size(), 0.0);
  std::vector<double> v(p.size(), 0.0);
  double b1t = 1.0;
  double b2t = 1.0;

  for (int step = 0; step <= cfg.steps; ++step) {
    LossAndGrad lg = loss_and_gradient(s, p, batch, targets);
    if (lg.faulted) {
      best.faulted = true;
      return best;
    }
    if (cfg.record_trace) best.trace.push_back(lg.loss);
    if (lg.loss < best.loss) {
      best.loss = lg.loss;
      best.params = p;
    }
    if (step == cfg.steps || p.empty()) break;

    const double lr = cosine_learning_rate(cfg.learning_rate, step, cfg.steps);
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * lg.grad[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * lg.grad[k] * lg.grad[k];
      const double mhat = m[k] / (1.0 - b1t);
      const double vhat = v[k] / (1.0 - b2t);
      p[k] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
  return best;
}

ScoredSkeleton fit_and_score(const Skeleton& s, const SampleBatch& batch,
                             const std::vector<std::string>& target_columns, const FitConfig& cfg) {
  cfg.validate();
  ScoredSkeleton out;
  out.skeleton = s;
  out.canonical = serialize(s);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> init(cfg.init_low, cfg.init_high);
  const int restarts = s.n_params == 0 ? 1 : cfg.restarts;

  bool found = false;
  RestartResult best;
  for (int r = 0; r < restarts; ++r) {
    std::vector<double> p0(s.n_params);
    for (double& x : p0) x = init(rng);
    RestartResult run = adam_run(s, batch, target_columns, std::move(p0), cfg);
    if (run.faulted) continue;
    if (!found || run.loss < best.loss) {
      best = std::move(run);
      found = true;
    }
  }
  if (!found) {
    out.params.assign(s.n_params, 0.0);
    out.loss = std::numeric_limits<double>::infinity();
    out.score = kWorstScore;
    return out;
  }
  out.params = std::move(best.params);
  out.loss = best.loss;
  out.score = score_of(best.loss);
  out.loss_trace = std::move(best.trace);
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ b);
}

}  // namespace llmdmd
