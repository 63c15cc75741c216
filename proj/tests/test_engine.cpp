#include <doctest.h>

#include <fstream>

#include "llmdmd/engine.hpp"
#include "support/oracles.hpp"

using namespace llmdmd;

namespace {

const std::filesystem::path kFixtures = LLMDMD_FIXTURE_DIR;

EngineConfig load_config(const std::string& name) {
  std::ifstream in(kFixtures / name);
  return engine_config_from_json(nlohmann::json::parse(in), kFixtures);
}

bench::TrajectoryDataset swing2_data(const bench::BenchmarkModel& model) {
  const auto scen = bench::default_train_scenario(bench::ModelId::Swing2);
  return bench::make_dataset(std::make_shared<const bench::FullRecord>(bench::simulate(model, scen)), scen);
}

std::string completion(const std::string& skeleton, const std::string& requirements = "[]") {
  return "```skeleton\n" + skeleton + "\n```\n```requirements\n" + requirements + "\n```\n";
}

ScoredSkeleton ranked(const std::string& text, const SymbolScope& scope, std::vector<Requirement> req) {
  ScoredSkeleton s;
  s.skeleton = parse(text, scope, {"delta", "omega"});
  s.canonical = serialize(s.skeleton);
  s.score = -1.0;
  s.requirements = std::move(req);
  return s;
}

Trigger from_ref(testing::RefTrigger r) {
  switch (r) {
    case testing::RefTrigger::Extend: return Trigger::ExtendVariables;
    case testing::RefTrigger::Terminate: return Trigger::Terminate;
    default: return Trigger::Continue;
  }
}

}  // namespace

TEST_CASE("trigger examples") {
  const TriggerConfig cfg;
  CHECK(check_trigger(std::vector<double>{-1.5, -1.5, -1.5, -1.5}, cfg) == Trigger::ExtendVariables);
  CHECK(check_trigger(std::vector<double>{-0.005, -0.004, -0.003}, cfg) == Trigger::Terminate);
  CHECK(check_trigger(std::vector<double>{-2.0, -1.0, -0.5}, cfg) == Trigger::Continue);
  CHECK(check_trigger(std::vector<double>{-1.5, -1.5, -1.5}, cfg) == Trigger::Continue);
  CHECK(check_trigger(std::vector<double>{-0.005}, cfg) == Trigger::Continue);
}

TEST_CASE("trigger matches the brute-force oracle") {
  const std::vector<double> grid{-1.5, -0.02, -0.01, -0.005, 0.0};
  const auto histories = testing::all_histories(grid, 6);
  CHECK(histories.size() == 5 + 25 + 125 + 625 + 3125 + 15625);
  for (int window : {1, 2, 3}) {
    TriggerConfig cfg;
    cfg.window = window;
    for (const auto& h : histories) {
      const auto expected = from_ref(testing::reference_trigger(h, cfg.epsilon, cfg.gamma, cfg.window));
      CHECK(check_trigger(h, cfg) == expected);
    }
  }
}

TEST_CASE("trigger window restarts after an extension") {
  LoopState ls;
  ls.history = {-1.5, -1.5, -1.5, -1.5};
  CHECK(check_trigger(ls) == Trigger::ExtendVariables);
  ls.window_start = 3;
  CHECK(check_trigger(ls) == Trigger::Continue);
  ls.history.push_back(-1.5);
  ls.history.push_back(-1.5);
  CHECK(check_trigger(ls) == Trigger::Continue);
  ls.history.push_back(-1.5);
  CHECK(check_trigger(ls) == Trigger::ExtendVariables);
}

TEST_CASE("trigger config validation") {
  TriggerConfig c;
  c.window = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TriggerConfig{};
  c.gamma = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("seed skeletons") {
  CHECK(seed_skeleton_text(TargetKind::Differential, {"delta", "omega"}, {"delta", "omega"}) ==
        "ddelta/dt = p0*delta + p1*omega + p2\ndomega/dt = p3*delta + p4*omega + p5");
  CHECK(seed_skeleton_text(TargetKind::Differential, {"delta"}, {}) == "ddelta/dt = p0");
  CHECK(seed_skeleton_text(TargetKind::Algebraic, {"P_e"}, {"delta"}) == "P_e = p0*delta + p1");
}

TEST_CASE("variable extension") {
  const auto model = bench::BenchmarkModel::make(bench::ModelId::OneAxis3);
  const auto scen = bench::default_train_scenario(bench::ModelId::OneAxis3);
  auto data = bench::make_dataset(std::make_shared<const bench::FullRecord>(bench::simulate(model, scen)), scen);
  const SymbolScope scope({"delta", "omega", "e_q1"}, {});
  VariableLibrary lib(TargetKind::Differential);

  SUBCASE("requested signals are admitted") {
    const std::vector<ScoredSkeleton> top{
        ranked("ddelta/dt = p0\ndomega/dt = p1", scope, {{"i_d", "", ""}, {"i_q", "", ""}}),
        ranked("ddelta/dt = p0*omega\ndomega/dt = p1", scope, {{"P_e", "", ""}, {"stator_flux", "", ""}})};
    const auto ext = extend_variables(top, lib, data, model, {});
    CHECK(ext.added == std::vector<std::string>{"i_d", "i_q", "P_e"});
    CHECK(ext.unmatched == std::vector<std::string>{"stator_flux"});
    CHECK_FALSE(ext.fallback);
    CHECK(lib.size() == 3);
    CHECK(lib.find("P_e")->kind == SignalKind::Algebraic);
    for (const auto& n : {"i_d", "i_q", "P_e"}) CHECK(data.batch().has_column(n));
  }

  SUBCASE("empty requests use the first unused catalog entry") {
    const std::vector<ScoredSkeleton> top{ranked("ddelta/dt = p0\ndomega/dt = p1", scope, {})};
    const auto ext = extend_variables(top, lib, data, model, {});
    CHECK(ext.fallback);
    CHECK(ext.added == std::vector<std::string>{model.catalog_names().front()});
    const auto again = extend_variables(top, lib, data, model, {});
    CHECK(again.added == std::vector<std::string>{model.catalog_names()[1]});
  }

  SUBCASE("aliases resolve and exclusions hold") {
    const std::vector<ScoredSkeleton> top{ranked("ddelta/dt = p0\ndomega/dt = p1", scope, {{"Pe", "", ""}})};
    const auto ext = extend_variables(top, lib, data, model, {"P_e"});
    CHECK(ext.fallback);
    CHECK_FALSE(lib.contains("P_e"));
  }

  SUBCASE("exhausted catalog") {
    const std::vector<ScoredSkeleton> top{ranked("ddelta/dt = p0\ndomega/dt = p1", scope, {})};
    for (std::size_t i = 0; i < model.catalog().size(); ++i) extend_variables(top, lib, data, model, {});
    CHECK_THROWS_AS(extend_variables(top, lib, data, model, {}), CatalogExhausted);
  }
}

TEST_CASE("zero budget returns the seed") {
  const auto model = bench::BenchmarkModel::make(bench::ModelId::Swing2);
  auto data = swing2_data(model);
  EngineConfig cfg = load_config("swing2_run.json");
  cfg.max_iterations = 0;
  MockBackend gen({});
  const EngineContext ctx{model, cfg, {}, {}};
  const auto res = run_de_loop(data, gen, ctx);
  CHECK(res.best.canonical == seed_skeleton_text(TargetKind::Differential, {"delta", "omega"}, {"delta", "omega"}));
  CHECK(res.library.empty());
  CHECK(res.log.size() == 1);
  CHECK(res.status == StopStatus::BudgetExceeded);
}

TEST_CASE("constant-only proposals stall into an extension at t = R") {
  const auto model = bench::BenchmarkModel::make(bench::ModelId::Swing2);
  auto data = swing2_data(model);
  EngineConfig cfg = load_config("swing2_run.json");
  cfg.max_iterations = 4;
  cfg.fit.steps = 300;
  std::vector<std::vector<std::string>> script(4, {completion("ddelta/dt = p0\ndomega/dt = p1")});
  MockBackend gen(script);
  const EngineContext ctx{model, cfg, {}, {}};
  const auto res = run_de_loop(data, gen, ctx);
  for (const auto& rec : res.log) {
    CHECK(rec.trigger == (rec.t == cfg.trigger.window ? Trigger::ExtendVariables : Trigger::Continue));
  }
  CHECK(res.library.size() == 1);
  CHECK(res.log[3].note == "fallback extension");
}

TEST_CASE("non-compiling proposals are filtered") {
  const auto model = bench::BenchmarkModel::make(bench::ModelId::Swing2);
  auto data = swing2_data(model);
  EngineConfig cfg = load_config("swing2_run.json");
  cfg.max_iterations = 1;
  cfg.fit.steps = 200;
  MockBackend gen({{completion("ddelta/dt = p0*(omega - 1"), "no fences at all",
                    completion("ddelta/dt = p0*flux\ndomega/dt = p1"), completion("ddelta/dt = p0*omega + p1\ndomega/dt = p2*delta")}});
  const EngineContext ctx{model, cfg, {}, {}};
  const auto res = run_de_loop(data, gen, ctx);
  REQUIRE(res.log.size() == 2);
  CHECK(res.log[1].generated == 4);
  CHECK(res.log[1].compiled == 1);
}

TEST_CASE("generation failures stop the loop") {
  const auto model = bench::BenchmarkModel::make(bench::ModelId::Swing2);
  auto data = swing2_data(model);
  EngineConfig cfg = load_config("swing2_run.json");
  cfg.max_iterations = 20;
  cfg.max_generation_failures = 2;
  cfg.fit.steps = 100;
  MockBackend gen({});
  const EngineContext ctx{model, cfg, [](std::chrono::milliseconds) {}, {}};
  const auto res = run_de_loop(data, gen, ctx);
  CHECK(res.status == StopStatus::GenerationExhausted);
  CHECK(res.log.size() == 3);
}

TEST_CASE("algebraic targets") {
  const auto model = bench::BenchmarkModel::make(bench::ModelId::Type1Order5);
  const SymbolScope scope(model.state_names(), {"P_m", "v_f", "P_e", "i_d", "i_q"});
  LoopResult de;
  de.targets = model.state_names();
  std::string text;
  for (const auto& s : model.state_names()) text += "d" + s + "/dt = p0*i_d + p1*i_q + p2*P_e + p3*P_m + p4*v_f\n";
  de.best.skeleton = parse(text, scope, de.targets);
  CHECK(algebraic_targets(de, model) == std::vector<std::string>{"P_e", "i_d", "i_q"});

  std::string states_only;
  for (const auto& s : model.state_names()) states_only += "d" + s + "/dt = p0*delta\n";
  de.best.skeleton = parse(states_only, scope, de.targets);
  CHECK(algebraic_targets(de, model).empty());
  const auto swing = bench::BenchmarkModel::make(bench::ModelId::Swing2);
  auto data = swing2_data(swing);
  const EngineConfig cfg = load_config("swing2_run.json");
  MockBackend gen({});
  const EngineContext ctx{swing, cfg, {}, {}};
  LoopResult sde;
  sde.targets = {"delta", "omega"};
  sde.best.skeleton = parse("ddelta/dt = p0*omega\ndomega/dt = p1*delta", SymbolScope({"delta", "omega"}, {}), sde.targets);
  CHECK_THROWS_AS(run_ae_loop(data, sde, gen, ctx), NoAlgebraicTargets);
}

TEST_CASE("full swing2 discovery with the scripted generator") {
  const auto model = bench::BenchmarkModel::make(bench::ModelId::Swing2);
  const EngineConfig cfg = load_config("swing2_run.json");

  auto run = [&](std::vector<nlohmann::json>& log_out) {
    auto data = swing2_data(model);
    MockBackend de_gen = MockBackend::from_file(cfg.generator.de_script);
    MockBackend ae_gen = MockBackend::from_file(cfg.generator.ae_script);
    LoopObserver obs;
    obs.on_iteration = [&](const IterationRecord& r, const Archive&) { log_out.push_back(r.to_json()); };
    const EngineContext ctx{model, cfg, [](std::chrono::milliseconds) {}, obs};
    auto de = run_de_loop(data, de_gen, ctx);
    auto ae = run_ae_loop(data, de, ae_gen, ctx);
    return std::make_pair(std::move(de), std::move(ae));
  };

  std::vector<nlohmann::json> log1, log2;
  const auto [de, ae] = run(log1);
  CHECK(de.status == StopStatus::Terminated);
  CHECK(de.best.score >= -cfg.trigger.gamma);
  CHECK(de.best.canonical == "ddelta/dt = 314.159265*p0*(omega - 1)\ndomega/dt = p1*(P_m - P_e) - p2*(omega - 1)");
  CHECK(de.log.back().trigger == Trigger::Terminate);
  for (std::size_t i = 1; i < de.history.size(); ++i) CHECK(de.history[i] >= de.history[i - 1]);

  std::size_t lib_size = 0;
  for (const auto& rec : de.log) {
    lib_size += rec.added_variables.size();
    CHECK(lib_size <= de.library.size());
  }
  CHECK(lib_size == de.library.size());

  CHECK(ae.targets == std::vector<std::string>{"P_e"});
  CHECK(ae.best.canonical == "P_e = p0*sin(delta)");
  CHECK(ae.best.score > -1e-4);
  for (const auto& v : referenced_variables(ae.best.skeleton)) {
    const bool state = v == "delta" || v == "omega";
    CHECK((state || ae.library.contains(v)));
  }
  const auto de_refs = referenced_variables(de.best.skeleton);
  for (const auto& t : ae.targets) CHECK(std::find(de_refs.begin(), de_refs.end(), t) != de_refs.end());

  const auto dm = assemble_model("swing2", model.state_names(), de, &ae);
  CHECK(dm.has_ae);
  CHECK(dm.de_text == de.best.canonical);
  CHECK(dm.ae_targets == ae.targets);

  run(log2);
  CHECK(log1 == log2);
}

TEST_CASE("engine configuration") {
  const auto cfg = load_config("swing2_run.json");
  CHECK(cfg.max_iterations == 12);
  CHECK(cfg.seed == 7);
  CHECK(cfg.generator.de_script == kFixtures / "swing2_de_script.json");
  CHECK(cfg.run_ae_loop);
  CHECK_FALSE(load_config("extension_run.json").run_ae_loop);
  const auto again = engine_config_from_json(to_json(cfg));
  CHECK(to_json(again) == to_json(cfg));

  auto j = to_json(cfg);
  j["islands"] = 0;
  CHECK_THROWS_AS(engine_config_from_json(j), std::invalid_argument);
  j = to_json(cfg);
  j["generator"]["type"] = "carrier-pigeon";
  CHECK_THROWS_AS(engine_config_from_json(j), std::invalid_argument);
  j = to_json(cfg);
  j["benchmark"] = "ieee39";
  CHECK_THROWS_AS(engine_config_from_json(j), std::invalid_argument);
}
