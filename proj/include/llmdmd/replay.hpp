#pragma once

// Trajectory replay of identified models against a recorded test scenario,
// using the same fixed-step RK4 as the benchmark simulator.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmdmd/bench.hpp"
#include "llmdmd/sindy.hpp"
#include "llmdmd/skeleton.hpp"

namespace llmdmd {

struct Trajectory {
  std::vector<double> time;
  std::vector<std::string> state_names;
  std::vector<std::vector<double>> states;  // [state][sample], finite prefix only
  bool diverged = false;
  std::string divergence_reason;

  std::size_t size() const { return time.size(); }
};

/// values: states (in state order) then the extra variables given to replay().
/// t is the midpoint of the current step. Returns false on a domain fault.
using ReplayRhs = std::function<bool(double t, std::span<const double> values, std::span<double> dx)>;

/// The benchmark's own algebraic map together with the scenario that
/// produced the record, so replays can close the loop through it.
struct TrueAlgebra {
  const bench::BenchmarkModel* model = nullptr;
  bench::ScenarioConfig scenario;
};

struct ReplayOptions {
  double divergence_bound = 1e6;
};

/// Integrates from the record's initial state over its time grid. Input
/// signals are held from the step-start sample; other recorded signals are
/// linearly interpolated to each RK4 stage time. Divergence stops the replay
/// and keeps the finite prefix.
Trajectory replay(const bench::FullRecord& record, const std::vector<std::string>& states,
                  const std::vector<std::string>& variables, const ReplayRhs& rhs, const ReplayOptions& opt = {});

/// Result of a discovery run: fitted DE skeleton and optional AE skeleton.
struct DiscoveredModel {
  std::string benchmark;
  std::vector<std::string> states;
  std::vector<std::string> de_variables;
  std::string de_text;
  std::vector<double> de_params;
  double de_score = 0.0;

  bool has_ae = false;
  std::vector<std::string> ae_targets;
  std::vector<std::string> ae_variables;
  std::string ae_text;
  std::vector<double> ae_params;
  double ae_score = 0.0;

  Skeleton de_skeleton() const;
  Skeleton ae_skeleton() const;

  nlohmann::json to_json() const;
  static DiscoveredModel from_json(const nlohmann::json& j);
};

enum class AlgebraicSource {
  Recorded,  // algebraic inputs of the DE model come from the record
  Model,     // AE targets come from the discovered algebraic model
  Network,   // algebraic signals solved from the replayed states by the benchmark's own map
};

std::string_view to_string(AlgebraicSource s);
AlgebraicSource algebraic_source_from_string(std::string_view s);

/// `truth` is required for AlgebraicSource::Network.
Trajectory replay_discovered(const DiscoveredModel& model, const bench::FullRecord& record, AlgebraicSource source,
                             const TrueAlgebra* truth = nullptr, const ReplayOptions& opt = {});

/// Model is not a valid source for SINDy.
Trajectory replay_sindy(const sindy::SindyModel& model, const bench::FullRecord& record, AlgebraicSource source,
                        const TrueAlgebra* truth = nullptr, const ReplayOptions& opt = {});

}  // namespace llmdmd
