#pragma once

// The two discovery loops: differential equations first, then explicit
// algebraic relations for the variables the DE model came to depend on.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmdmd/archive.hpp"
#include "llmdmd/bench.hpp"
#include "llmdmd/fitting.hpp"
#include "llmdmd/generator.hpp"
#include "llmdmd/replay.hpp"
#include "llmdmd/variables.hpp"

namespace llmdmd {

enum class Trigger { Continue, ExtendVariables, Terminate };

std::string_view to_string(Trigger t);

struct TriggerConfig {
  double epsilon = 0.01;  // stagnation threshold on score increments
  double gamma = 0.01;    // termination threshold: s* > -gamma
  int window = 3;         // R

  void validate() const;
};

/// Decides on a best-score history s*_0..s*_t. Extension needs R recorded
/// increments, all <= epsilon, with s*_t <= -gamma. Termination needs the
/// last R scores all > -gamma.
Trigger check_trigger(std::span<const double> history, const TriggerConfig& cfg);

struct LoopState {
  TargetKind loop = TargetKind::Differential;
  int t = 0;
  std::vector<double> history;  // s*_0..s*_t
  std::size_t window_start = 0; // trigger only looks at history[window_start..]
  TriggerConfig trigger;
  VariableLibrary library;
};

Trigger check_trigger(const LoopState& ls);

class CatalogExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoAlgebraicTargets : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Extension {
  std::vector<std::string> added;
  std::vector<std::string> unmatched;  // requested names not in the catalog
  bool fallback = false;
};

/// Admits the catalog variables requested by `ranked` (best first) that are
/// not yet in the library and not in `excluded`, and reveals them in the
/// dataset. With no admissible request, adds the first unused catalog entry.
/// Throws CatalogExhausted when nothing is left.
Extension extend_variables(const std::vector<ScoredSkeleton>& ranked, VariableLibrary& library,
                           bench::TrajectoryDataset& data, const bench::BenchmarkModel& model,
                           const std::vector<std::string>& excluded);

struct GeneratorConfig {
  std::string type = "mock";  // "mock" or "openai"
  std::filesystem::path de_script;
  std::filesystem::path ae_script;
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_seconds = 60;
  int max_tokens = 1024;
};

struct EngineConfig {
  std::string benchmark = "swing2";
  int max_iterations = 50;  // per loop
  std::size_t islands = 4;
  int candidates = 4;  // n_b
  double temperature = 1.2;
  std::size_t top_k = 3;
  int max_generation_failures = 5;
  bool run_ae_loop = true;
  bool parallel_fitting = true;
  std::uint64_t seed = 0;
  int checkpoint_every = 5;
  SamplerConfig sampler;
  FitConfig fit;
  TriggerConfig trigger;
  GeneratorConfig generator;
  std::optional<bench::ScenarioConfig> train_scenario;
  std::optional<bench::ScenarioConfig> test_scenario;

  void validate() const;
};

/// Relative script paths are resolved against `base_dir`.
EngineConfig engine_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const EngineConfig& cfg);

enum class StopStatus { Terminated, BudgetExceeded, GenerationExhausted };

std::string_view to_string(StopStatus s);

struct IterationRecord {
  TargetKind loop = TargetKind::Differential;
  int t = 0;
  double best_score = kWorstScore;
  Trigger trigger = Trigger::Continue;
  std::vector<std::string> added_variables;
  std::vector<std::string> unmatched_requests;
  std::string best_skeleton;
  std::size_t island = 0;
  int generated = 0;
  int compiled = 0;
  int registered = 0;
  std::string note;

  nlohmann::json to_json() const;
};

struct LoopObserver {
  std::function<void(const IterationRecord&, const Archive&)> on_iteration;
};

struct LoopResult {
  TargetKind loop = TargetKind::Differential;
  ScoredSkeleton best;
  VariableLibrary library;
  std::vector<std::string> targets;
  std::vector<double> history;
  std::vector<IterationRecord> log;
  StopStatus status = StopStatus::BudgetExceeded;
  Archive archive;
};

struct EngineContext {
  const bench::BenchmarkModel& model;
  const EngineConfig& config;
  Sleeper sleeper;  // empty: real sleeping between retries
  LoopObserver observer;
};

/// Linear seed skeleton: a weighted sum of the regressors plus a bias for
/// every target, each target with its own parameter slots.
std::string seed_skeleton_text(TargetKind kind, const std::vector<std::string>& targets,
                               const std::vector<std::string>& regressors);

LoopResult run_de_loop(bench::TrajectoryDataset& data, GeneratorBackend& gen, const EngineContext& ctx);

/// Algebraic variables the DE skeleton depends on, minus exogenous inputs,
/// in catalog order.
std::vector<std::string> algebraic_targets(const LoopResult& de, const bench::BenchmarkModel& model);

/// Throws NoAlgebraicTargets.
LoopResult run_ae_loop(bench::TrajectoryDataset& data, const LoopResult& de, GeneratorBackend& gen,
                       const EngineContext& ctx);

DiscoveredModel assemble_model(const std::string& benchmark, const std::vector<std::string>& states,
                               const LoopResult& de, const LoopResult* ae);

}  // namespace llmdmd
