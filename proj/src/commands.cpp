#include "llmdmd/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "llmdmd/engine.hpp"
#include "llmdmd/replay.hpp"
#include "llmdmd/sindy.hpp"

namespace llmdmd::cli {

namespace {

std::string checkpoint_name(TargetKind loop, int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_t%04d.json", loop == TargetKind::Differential ? "de" : "ae", t);
  return buf;
}

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const bench::SchemaMismatch*>(&e)) return "SchemaMismatch";
  if (dynamic_cast<const bench::IoError*>(&e)) return "IoError";
  if (dynamic_cast<const bench::UnknownSignal*>(&e)) return "UnknownSignal";
  if (dynamic_cast<const bench::EquilibriumNotFound*>(&e)) return "EquilibriumNotFound";
  if (dynamic_cast<const bench::NonFiniteState*>(&e)) return "NonFiniteState";
  if (dynamic_cast<const BackendUnavailable*>(&e)) return "BackendUnavailable";
  if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
  if (dynamic_cast<const MissingColumn*>(&e)) return "MissingColumn";
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return "InvalidJson";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "InvalidArgument";
  return "Error";
}

}  // namespace

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw bench::IoError("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw bench::IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json error_json(const std::exception& e) {
  return {{"error", {{"type", error_type(e)}, {"message", e.what()}}}};
}

Scenarios load_scenarios(const std::optional<fs::path>& file, bench::ModelId id) {
  Scenarios s{bench::default_train_scenario(id), bench::default_test_scenario(id)};
  if (!file) return s;
  const auto j = read_json_file(*file);
  if (j.contains("train")) s.train = bench::scenario_from_json(j["train"]);
  if (j.contains("test")) s.test = bench::scenario_from_json(j["test"]);
  return s;
}

void gen_data(const std::string& model_name, const std::optional<fs::path>& scenario_file, const fs::path& out) {
  const auto id = bench::model_from_string(model_name);
  const auto model = bench::BenchmarkModel::make(id);
  const auto scen = load_scenarios(scenario_file, id);
  fs::create_directories(out);

  auto train_rec = std::make_shared<const bench::FullRecord>(bench::simulate(model, scen.train));
  bench::write_record_csv(*train_rec, out / kTrainRecord);
  bench::make_dataset(train_rec, scen.train).export_csv(out / kTrainCsv);

  auto test_rec = std::make_shared<const bench::FullRecord>(bench::simulate(model, scen.test));
  bench::write_record_csv(*test_rec, out / kTestRecord);
  bench::make_dataset(test_rec, scen.test).export_csv(out / kTestCsv);
}

LoadedData load_training_data(const fs::path& data_dir) {
  auto record = std::make_shared<const bench::FullRecord>(bench::read_record_csv(data_dir / kTrainRecord));
  auto ds = bench::TrajectoryDataset::import_csv(data_dir / kTrainCsv, record);
  const auto id = bench::model_from_string(ds.metadata().at("model").get<std::string>());
  return {bench::BenchmarkModel::make(id), std::move(ds)};
}

bench::FullRecord load_test_record(const fs::path& data_dir) { return bench::read_record_csv(data_dir / kTestRecord); }

nlohmann::json discover(const fs::path& config_path, const fs::path& data, const fs::path& out,
                        const DiscoverOptions& opt) {
  const EngineConfig cfg = engine_config_from_json(read_json_file(config_path), config_path.parent_path());
  LoadedData loaded = load_training_data(data);
  if (std::string(bench::to_string(loaded.model.id())) != cfg.benchmark) {
    throw std::invalid_argument("config benchmark '" + cfg.benchmark + "' does not match data model '" +
                                std::string(bench::to_string(loaded.model.id())) + "'");
  }
  fs::create_directories(out / "checkpoints");
  std::ofstream log(out / "run_log.jsonl");
  if (!log) throw bench::IoError("cannot write run log in " + out.string());

  std::unique_ptr<GeneratorBackend> de_gen, ae_gen;
  if (cfg.generator.type == "mock") {
    de_gen = std::make_unique<MockBackend>(MockBackend::from_file(cfg.generator.de_script));
    ae_gen = std::make_unique<MockBackend>(cfg.generator.ae_script.empty()
                                               ? MockBackend({})
                                               : MockBackend::from_file(cfg.generator.ae_script));
  } else {
    OpenAIBackend::Options o{cfg.generator.base_url, cfg.generator.model, cfg.generator.api_key_env};
    de_gen = std::make_unique<OpenAIBackend>(o);
  }
  GeneratorBackend& ae_backend = ae_gen ? *ae_gen : *de_gen;

  LoopObserver obs;
  obs.on_iteration = [&](const IterationRecord& rec, const Archive& archive) {
    log << rec.to_json().dump() << '\n';
    log.flush();
    if (cfg.checkpoint_every > 0 && rec.t > 0 && rec.t % cfg.checkpoint_every == 0) {
      write_json_file(out / "checkpoints" / checkpoint_name(rec.loop, rec.t), archive.to_json());
    }
  };
  EngineContext ctx{loaded.model, cfg, opt.sleeper, obs};

  const LoopResult de = run_de_loop(loaded.dataset, *de_gen, ctx);
  write_json_file(out / "checkpoints" / "de_final.json", de.archive.to_json());

  nlohmann::json summary = {{"benchmark", cfg.benchmark},
                            {"de", {{"status", std::string(to_string(de.status))},
                                    {"iterations", de.log.empty() ? 0 : de.log.back().t},
                                    {"best_score", de.best.score},
                                    {"best_skeleton", de.best.canonical},
                                    {"library", de.library.names()}}}};
  std::optional<LoopResult> ae;
  if (cfg.run_ae_loop) {
    try {
      ae = run_ae_loop(loaded.dataset, de, ae_backend, ctx);
      write_json_file(out / "checkpoints" / "ae_final.json", ae->archive.to_json());
      summary["ae"] = {{"status", std::string(to_string(ae->status))},
                       {"iterations", ae->log.empty() ? 0 : ae->log.back().t},
                       {"targets", ae->targets},
                       {"best_score", ae->best.score},
                       {"best_skeleton", ae->best.canonical}};
    } catch (const NoAlgebraicTargets& e) {
      summary["ae"] = {{"status", "skipped"}, {"reason", e.what()}};
    }
  } else {
    summary["ae"] = {{"status", "disabled"}};
  }
  const DiscoveredModel model =
      assemble_model(cfg.benchmark, loaded.model.state_names(), de, ae ? &*ae : nullptr);
  write_json_file(out / "model.json", model.to_json());
  write_json_file(out / "summary.json", summary);
  return summary;
}

nlohmann::json baseline(const std::string& variant_name, const fs::path& data, const fs::path& out,
                        const BaselineOptions& opt) {
  const auto variant = sindy::variant_from_string(variant_name);
  LoadedData loaded = load_training_data(data);
  const auto& model = loaded.model;
  std::vector<std::string> variables = model.state_names();
  for (const auto& v : model.true_variables()) variables.push_back(v);
  std::vector<std::string> excluded = opt.excluded;
  if (variant == sindy::Variant::Missing && excluded.empty()) {
    for (const auto& v : model.true_variables()) {
      const auto meta = std::find_if(model.catalog().begin(), model.catalog().end(),
                                     [&](const SignalInfo& s) { return s.name == v; });
      if (meta != model.catalog().end() && meta->kind == SignalKind::Algebraic) excluded.push_back(v);
    }
  }
  const auto cfg = sindy::LibraryConfig::for_variant(variant, variables, excluded);
  const auto states = model.state_names();
  std::vector<std::string> needed;
  for (const auto& v : cfg.active_variables()) {
    if (std::find(states.begin(), states.end(), v) == states.end()) needed.push_back(v);
  }
  loaded.dataset.reveal(needed);
  sindy::StlsqOptions so;
  so.threshold = opt.threshold;
  so.iterations = opt.iterations;
  const auto fitted = sindy::fit(cfg, loaded.dataset.batch(), model.state_names(), so);
  fs::create_directories(out);
  nlohmann::json j = fitted.to_json();
  j["benchmark"] = std::string(bench::to_string(model.id()));
  write_json_file(out / "model.json", j);
  return j;
}

EvalReport evaluate(const fs::path& model_file, const fs::path& data, const fs::path& out,
                    const EvaluateOptions& opt) {
  const auto j = read_json_file(model_file);
  const auto record = load_test_record(data);
  const auto meta = read_json_file(fs::path((data / kTestCsv).string() + ".json"));
  const auto truth_model = bench::BenchmarkModel::make(bench::model_from_string(meta.at("model").get<std::string>()));
  const TrueAlgebra truth{&truth_model, bench::scenario_from_json(meta.at("scenario"))};
  const std::string type = j.value("type", "");
  std::string label = opt.label;
  Trajectory traj;
  AlgebraicSource src = AlgebraicSource::Recorded;
  if (type == "sindy") {
    const auto model = sindy::SindyModel::from_json(j);
    if (opt.replay_mode != "auto") src = algebraic_source_from_string(opt.replay_mode);
    traj = replay_sindy(model, record, src, &truth);
    if (label.empty()) label = "SINDy (" + std::string(sindy::to_string(model.config.variant)) + ")";
  } else if (type == "discovered") {
    const auto model = DiscoveredModel::from_json(j);
    src = model.has_ae ? AlgebraicSource::Model : AlgebraicSource::Recorded;
    if (opt.replay_mode != "auto") src = algebraic_source_from_string(opt.replay_mode);
    if (src == AlgebraicSource::Model && !model.has_ae) {
      throw std::invalid_argument("closed-loop replay needs an algebraic model");
    }
    traj = replay_discovered(model, record, src, &truth);
    if (label.empty()) label = "discovered";
  } else {
    throw std::invalid_argument("unknown model type '" + type + "' in " + model_file.string());
  }
  EvalReport rep = compare(traj, record);
  rep.model_label = label;
  rep.model_type = type;
  rep.replay_mode = std::string(to_string(src));
  rep.metadata = {{"model_file", model_file.string()}, {"benchmark", j.value("benchmark", "")}};
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_json_file(out, rep.to_json());
  return rep;
}

std::string report(const std::vector<fs::path>& runs, const std::optional<fs::path>& out) {
  if (runs.empty()) throw std::invalid_argument("report needs at least one run");
  std::vector<EvalReport> reports;
  for (const auto& r : runs) {
    const fs::path file = fs::is_directory(r) ? r / "report.json" : r;
    reports.push_back(EvalReport::from_json(read_json_file(file)));
  }
  if (out) write_json_file(*out, merge_reports(reports));
  return format_table(reports);
}

}  // namespace llmdmd::cli
