#include "llmdmd/engine.hpp"

#include <algorithm>
#include <future>
#include <random>

namespace llmdmd {

namespace {

struct LoopSpec {
  TargetKind kind;
  std::vector<std::string> targets;
  std::vector<std::string> target_columns;
  std::vector<std::string> excluded;  // never admitted to the library
  VariableLibrary library;
  std::uint64_t stream;  // separates the random streams of the two loops
};

std::vector<SignalInfo> state_infos(const bench::BenchmarkModel& model) { return model.states(); }

ScoredSkeleton fit_candidate(const Skeleton& s, const SampleBatch& batch, const std::vector<std::string>& columns,
                             FitConfig fit, std::uint64_t seed) {
  fit.seed = seed;
  ScoredSkeleton out = fit_and_score(s, batch, columns, fit);
  out.canonical = serialize(out.skeleton);
  return out;
}

LoopResult run_loop(LoopSpec spec, bench::TrajectoryDataset& data, GeneratorBackend& gen, const EngineContext& ctx) {
  const EngineConfig& cfg = ctx.config;
  const auto states = ctx.model.state_names();
  LoopResult res;
  res.loop = spec.kind;
  res.targets = spec.targets;

  LoopState ls;
  ls.loop = spec.kind;
  ls.trigger = cfg.trigger;
  ls.library = spec.library;

  auto scope = [&] { return SymbolScope(states, ls.library.names()); };

  // t = 0: the seed skeleton.
  const std::string seed_text = seed_skeleton_text(spec.kind, spec.targets, states);
  const Skeleton seed_skel = parse(seed_text, scope(), spec.targets, spec.kind);
  ScoredSkeleton seed = fit_candidate(seed_skel, data.batch(), spec.target_columns, cfg.fit,
                                      derive_seed(cfg.seed, spec.stream, 0));
  Archive archive(cfg.islands, seed);
  std::mt19937_64 rng(derive_seed(cfg.seed, spec.stream, 1));

  ls.history.push_back(archive.best().score);
  {
    IterationRecord rec;
    rec.loop = spec.kind;
    rec.best_score = ls.history.back();
    rec.best_skeleton = archive.best().canonical;
    rec.note = "seed";
    res.log.push_back(rec);
    if (ctx.observer.on_iteration) ctx.observer.on_iteration(rec, archive);
  }

  int consecutive_failures = 0;
  res.status = StopStatus::BudgetExceeded;
  for (int t = 1; t <= cfg.max_iterations; ++t) {
    ls.t = t;
    IterationRecord rec;
    rec.loop = spec.kind;
    rec.t = t;

    const ExampleDraw draw = archive.sample_examples(cfg.sampler, rng);
    rec.island = draw.island;
    PromptContract contract{spec.kind, state_infos(ctx.model), ls.library};
    GenerationRequest req;
    req.prompt = build_prompt(contract, draw.examples, spec.targets);
    req.n = cfg.candidates;
    req.temperature = cfg.temperature;
    req.timeout = std::chrono::seconds(cfg.generator.timeout_seconds);
    req.max_tokens = cfg.generator.max_tokens;

    std::vector<Completion> completions;
    try {
      completions = generate(req, gen, ctx.sleeper);
      consecutive_failures = 0;
    } catch (const BackendUnavailable& e) {
      ++consecutive_failures;
      rec.note = std::string("generation failed: ") + e.what();
    }
    rec.generated = static_cast<int>(completions.size());

    // Compile filter, then fit the survivors.
    const SymbolScope sc = scope();
    const SampleBatch batch = data.batch();
    std::vector<std::pair<Skeleton, std::vector<Requirement>>> accepted;
    for (const auto& c : completions) {
      try {
        accepted.emplace_back(parse(c.skeleton_text, sc, spec.targets, spec.kind), c.requirements);
      } catch (const ParseError&) {
      }
    }
    rec.compiled = static_cast<int>(accepted.size());

    std::vector<ScoredSkeleton> fitted(accepted.size());
    auto seed_for = [&](std::size_t j) {
      return derive_seed(cfg.seed, spec.stream, (static_cast<std::uint64_t>(t) << 16) + j + 2);
    };
    if (cfg.parallel_fitting && accepted.size() > 1) {
      std::vector<std::future<ScoredSkeleton>> jobs;
      for (std::size_t j = 0; j < accepted.size(); ++j) {
        jobs.push_back(std::async(std::launch::async, fit_candidate, std::cref(accepted[j].first), std::cref(batch),
                                  std::cref(spec.target_columns), cfg.fit, seed_for(j)));
      }
      for (std::size_t j = 0; j < jobs.size(); ++j) fitted[j] = jobs[j].get();
    } else {
      for (std::size_t j = 0; j < accepted.size(); ++j) {
        fitted[j] = fit_candidate(accepted[j].first, batch, spec.target_columns, cfg.fit, seed_for(j));
      }
    }
    for (std::size_t j = 0; j < fitted.size(); ++j) {
      fitted[j].requirements = accepted[j].second;
      if (archive.register_candidate(draw.island, fitted[j])) ++rec.registered;
    }

    ls.history.push_back(archive.best().score);
    rec.best_score = ls.history.back();
    rec.best_skeleton = archive.best().canonical;
    rec.trigger = check_trigger(ls);

    if (rec.trigger == Trigger::ExtendVariables) {
      try {
        const Extension ext = extend_variables(archive.top(cfg.top_k), ls.library, data, ctx.model, spec.excluded);
        rec.added_variables = ext.added;
        rec.unmatched_requests = ext.unmatched;
        if (ext.fallback) rec.note = "fallback extension";
      } catch (const CatalogExhausted& e) {
        rec.note = e.what();
      }
      ls.window_start = ls.history.size() - 1;
    }

    res.log.push_back(rec);
    if (ctx.observer.on_iteration) ctx.observer.on_iteration(rec, archive);
    if (rec.trigger == Trigger::Terminate) {
      res.status = StopStatus::Terminated;
      break;
    }
    if (consecutive_failures >= cfg.max_generation_failures) {
      res.status = StopStatus::GenerationExhausted;
      break;
    }
  }

  res.best = archive.best();
  res.library = ls.library;
  res.history = ls.history;
  res.archive = std::move(archive);
  return res;
}

}  // namespace

std::string_view to_string(Trigger t) {
  switch (t) {
    case Trigger::Continue: return "continue";
    case Trigger::ExtendVariables: return "extend";
    case Trigger::Terminate: return "terminate";
  }
  return "continue";
}

std::string_view to_string(StopStatus s) {
  switch (s) {
    case StopStatus::Terminated: return "terminated";
    case StopStatus::BudgetExceeded: return "budget_exceeded";
    case StopStatus::GenerationExhausted: return "generation_exhausted";
  }
  return "budget_exceeded";
}

void TriggerConfig::validate() const {
  if (!(epsilon > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("epsilon and gamma must be > 0");
  if (gamma > epsilon) throw std::invalid_argument("gamma must not exceed epsilon");
  if (window < 1) throw std::invalid_argument("stagnation window must be >= 1");
}

Trigger check_trigger(std::span<const double> h, const TriggerConfig& cfg) {
  const auto r = static_cast<std::size_t>(cfg.window);
  if (h.size() < r) return Trigger::Continue;
  const std::size_t n = h.size();
  bool above = true;
  for (std::size_t j = n - r; j < n; ++j) above = above && h[j] > -cfg.gamma;
  if (above) return Trigger::Terminate;
  if (n < r + 1) return Trigger::Continue;
  bool stagnant = h[n - 1] <= -cfg.gamma;
  for (std::size_t j = n - r; j < n; ++j) stagnant = stagnant && (h[j] - h[j - 1]) <= cfg.epsilon;
  return stagnant ? Trigger::ExtendVariables : Trigger::Continue;
}

Trigger check_trigger(const LoopState& ls) {
  const std::size_t start = std::min(ls.window_start, ls.history.size());
  return check_trigger(std::span<const double>(ls.history).subspan(start), ls.trigger);
}

Extension extend_variables(const std::vector<ScoredSkeleton>& ranked, VariableLibrary& library,
                           bench::TrajectoryDataset& data, const bench::BenchmarkModel& model,
                           const std::vector<std::string>& excluded) {
  Extension ext;
  auto admissible = [&](const std::string& name) {
    return !library.contains(name) && std::find(excluded.begin(), excluded.end(), name) == excluded.end();
  };
  auto admit = [&](const std::string& name) {
    for (const auto& info : model.catalog()) {
      if (info.name == name) library.add(info);
    }
    data.reveal({name});
    ext.added.push_back(name);
  };
  for (const auto& cand : ranked) {
    for (const auto& req : cand.requirements) {
      const std::string name = model.resolve_name(req.name);
      if (name.empty()) {
        if (std::find(ext.unmatched.begin(), ext.unmatched.end(), req.name) == ext.unmatched.end()) {
          ext.unmatched.push_back(req.name);
        }
        continue;
      }
      if (admissible(name)) admit(name);
    }
  }
  if (!ext.added.empty()) return ext;
  for (const auto& info : model.catalog()) {
    if (admissible(info.name)) {
      admit(info.name);
      ext.fallback = true;
      return ext;
    }
  }
  throw CatalogExhausted("no catalog variables left to add");
}

void EngineConfig::validate() const {
  if (max_iterations < 0) throw std::invalid_argument("max_iterations must be >= 0");
  if (islands < 1) throw std::invalid_argument("at least one island is required");
  if (candidates < 1) throw std::invalid_argument("n_b must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  if (max_generation_failures < 1) throw std::invalid_argument("max_generation_failures must be >= 1");
  if (generator.type != "mock" && generator.type != "openai") {
    throw std::invalid_argument("generator type must be 'mock' or 'openai'");
  }
  if (generator.type == "mock" && generator.de_script.empty()) {
    throw std::invalid_argument("mock generator needs a de_script");
  }
  bench::model_from_string(benchmark);
  sampler.validate();
  fit.validate();
  trigger.validate();
}

EngineConfig engine_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  EngineConfig c;
  c.benchmark = j.value("benchmark", c.benchmark);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.islands = j.value("islands", c.islands);
  c.candidates = j.value("candidates", c.candidates);
  c.temperature = j.value("temperature", c.temperature);
  c.top_k = j.value("top_k", c.top_k);
  c.max_generation_failures = j.value("max_generation_failures", c.max_generation_failures);
  c.run_ae_loop = j.value("ae_loop", c.run_ae_loop);
  c.parallel_fitting = j.value("parallel_fitting", c.parallel_fitting);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    c.sampler.cluster_temperature = s.value("cluster_temperature", c.sampler.cluster_temperature);
    c.sampler.length_temperature = s.value("length_temperature", c.sampler.length_temperature);
    c.sampler.examples_per_prompt = s.value("examples_per_prompt", c.sampler.examples_per_prompt);
  }
  if (j.contains("fit")) {
    const auto& f = j["fit"];
    c.fit.steps = f.value("steps", c.fit.steps);
    c.fit.learning_rate = f.value("learning_rate", c.fit.learning_rate);
    c.fit.restarts = f.value("restarts", c.fit.restarts);
    c.fit.init_low = f.value("init_low", c.fit.init_low);
    c.fit.init_high = f.value("init_high", c.fit.init_high);
  }
  if (j.contains("trigger")) {
    const auto& t = j["trigger"];
    c.trigger.epsilon = t.value("epsilon", c.trigger.epsilon);
    c.trigger.gamma = t.value("gamma", c.trigger.gamma);
    c.trigger.window = t.value("window", c.trigger.window);
  }
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    c.generator.type = g.value("type", c.generator.type);
    if (g.contains("de_script")) c.generator.de_script = resolve(g["de_script"].get<std::string>());
    if (g.contains("ae_script")) c.generator.ae_script = resolve(g["ae_script"].get<std::string>());
    c.generator.base_url = g.value("base_url", c.generator.base_url);
    c.generator.model = g.value("model", c.generator.model);
    c.generator.api_key_env = g.value("api_key_env", c.generator.api_key_env);
    c.generator.timeout_seconds = g.value("timeout_seconds", c.generator.timeout_seconds);
    c.generator.max_tokens = g.value("max_tokens", c.generator.max_tokens);
  }
  if (j.contains("train_scenario")) c.train_scenario = bench::scenario_from_json(j["train_scenario"]);
  if (j.contains("test_scenario")) c.test_scenario = bench::scenario_from_json(j["test_scenario"]);
  c.validate();
  return c;
}

nlohmann::json to_json(const EngineConfig& c) {
  nlohmann::json j = {
      {"benchmark", c.benchmark},
      {"max_iterations", c.max_iterations},
      {"islands", c.islands},
      {"candidates", c.candidates},
      {"temperature", c.temperature},
      {"top_k", c.top_k},
      {"max_generation_failures", c.max_generation_failures},
      {"ae_loop", c.run_ae_loop},
      {"parallel_fitting", c.parallel_fitting},
      {"seed", c.seed},
      {"checkpoint_every", c.checkpoint_every},
      {"sampler",
       {{"cluster_temperature", c.sampler.cluster_temperature},
        {"length_temperature", c.sampler.length_temperature},
        {"examples_per_prompt", c.sampler.examples_per_prompt}}},
      {"fit",
       {{"steps", c.fit.steps},
        {"learning_rate", c.fit.learning_rate},
        {"restarts", c.fit.restarts},
        {"init_low", c.fit.init_low},
        {"init_high", c.fit.init_high}}},
      {"trigger", {{"epsilon", c.trigger.epsilon}, {"gamma", c.trigger.gamma}, {"window", c.trigger.window}}},
      {"generator",
       {{"type", c.generator.type},
        {"de_script", c.generator.de_script.string()},
        {"ae_script", c.generator.ae_script.string()},
        {"base_url", c.generator.base_url},
        {"model", c.generator.model},
        {"api_key_env", c.generator.api_key_env},
        {"timeout_seconds", c.generator.timeout_seconds},
        {"max_tokens", c.generator.max_tokens}}},
  };
  if (c.train_scenario) j["train_scenario"] = bench::to_json(*c.train_scenario);
  if (c.test_scenario) j["test_scenario"] = bench::to_json(*c.test_scenario);
  return j;
}

nlohmann::json IterationRecord::to_json() const {
  return {{"loop", loop == TargetKind::Differential ? "DE" : "AE"},
          {"t", t},
          {"best_score", best_score},
          {"trigger", std::string(llmdmd::to_string(trigger))},
          {"added_variables", added_variables},
          {"unmatched_requests", unmatched_requests},
          {"best_skeleton", best_skeleton},
          {"island", island},
          {"generated", generated},
          {"compiled", compiled},
          {"registered", registered},
          {"note", note}};
}

std::string seed_skeleton_text(TargetKind kind, const std::vector<std::string>& targets,
                               const std::vector<std::string>& regressors) {
  std::string out;
  std::size_t slot = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (t > 0) out += "\n";
    out += lhs_text(kind, targets[t]) + " = ";
    for (const auto& r : regressors) out += "p" + std::to_string(slot++) + "*" + r + " + ";
    out += "p" + std::to_string(slot++);
  }
  return out;
}

LoopResult run_de_loop(bench::TrajectoryDataset& data, GeneratorBackend& gen, const EngineContext& ctx) {
  ctx.config.validate();
  LoopSpec spec{TargetKind::Differential, data.state_names(), {}, {}, VariableLibrary(TargetKind::Differential), 1};
  for (const auto& s : spec.targets) spec.target_columns.push_back(bench::derivative_column(s));
  return run_loop(std::move(spec), data, gen, ctx);
}

std::vector<std::string> algebraic_targets(const LoopResult& de, const bench::BenchmarkModel& model) {
  const auto used = referenced_variables(de.best.skeleton);
  const auto& exo = model.exogenous_inputs();
  std::vector<std::string> out;
  for (const auto& info : model.catalog()) {
    if (info.kind == SignalKind::Input) continue;
    if (std::find(exo.begin(), exo.end(), info.name) != exo.end()) continue;
    if (std::find(used.begin(), used.end(), info.name) != used.end()) out.push_back(info.name);
  }
  return out;
}

LoopResult run_ae_loop(bench::TrajectoryDataset& data, const LoopResult& de, GeneratorBackend& gen,
                       const EngineContext& ctx) {
  ctx.config.validate();
  const auto targets = algebraic_targets(de, ctx.model);
  if (targets.empty()) {
    throw NoAlgebraicTargets("the best differential skeleton references no algebraic variables");
  }
  VariableLibrary lib(TargetKind::Algebraic);
  for (const auto& e : de.library.entries()) {
    if (std::find(targets.begin(), targets.end(), e.name) == targets.end()) lib.add(e);
  }
  data.reveal(targets);
  LoopSpec spec{TargetKind::Algebraic, targets, targets, targets, lib, 2};
  return run_loop(std::move(spec), data, gen, ctx);
}

DiscoveredModel assemble_model(const std::string& benchmark, const std::vector<std::string>& states,
                               const LoopResult& de, const LoopResult* ae) {
  DiscoveredModel m;
  m.benchmark = benchmark;
  m.states = states;
  m.de_variables = de.library.names();
  m.de_text = de.best.canonical.empty() ? serialize(de.best.skeleton) : de.best.canonical;
  m.de_params = de.best.params;
  m.de_score = de.best.score;
  if (ae != nullptr) {
    m.has_ae = true;
    m.ae_targets = ae->targets;
    m.ae_variables = ae->library.names();
    m.ae_text = ae->best.canonical.empty() ? serialize(ae->best.skeleton) : ae->best.canonical;
    m.ae_params = ae->best.params;
    m.ae_score = ae->best.score;
  }
  return m;
}

}  // namespace llmdmd
