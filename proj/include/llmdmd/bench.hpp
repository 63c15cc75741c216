#pragma once

// Single-machine-infinite-bus benchmark: synchronous generator models of
// order 2, 3 and 5 behind a line reactance, integrated with fixed-step RK4,
// plus the noisy training datasets built from their trajectories.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmdmd/evaluator.hpp"
#include "llmdmd/variables.hpp"

namespace llmdmd::bench {

enum class ModelId { Swing2, OneAxis3, Type1Order5 };

std::string_view to_string(ModelId id);
ModelId model_from_string(std::string_view s);

/// Machine and network constants, per unit on machine base.
struct MachineParams {
  double base_frequency = 50.0;  // Hz; Omega_b = 2*pi*f
  double H = 6.0;                // inertia constant [s]
  double D = 3.0;                // damping
  double ra = 0.0;
  double xd = 1.8;
  double xd1 = 0.3;   // x'_d
  double xq = 1.7;
  double xq1 = 0.55;  // x'_q
  double xq2 = 0.25;  // x''_q
  double Td01 = 6.0;  // T'_d0
  double Tq01 = 0.4;  // T'_q0
  double Tq02 = 0.04; // T''_q0
  double E1 = 1.1;    // constant E' of the classical model
  double bus_voltage = 1.0;
  double line_reactance = 0.4;

  double omega_b() const;
};

/// Time-varying operating conditions seen by the machine.
struct Conditions {
  double P_m = 0.8;
  double v_f = 2.6;
  double line_reactance = 0.4;
};

enum class DisturbanceType { None, InputPowerStep, ReactanceStep };

struct Disturbance {
  DisturbanceType type = DisturbanceType::None;
  double start = 1.0;
  double duration = 1e9;
  double magnitude = 0.0;
};

struct ScenarioConfig {
  double total_time = 10.0;
  double step = 0.01;
  double P_m = 0.8;  // pre-disturbance mechanical power
  double v_f = 2.6;  // field voltage (constant)
  Disturbance disturbance;
  double noise_fraction = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  /// Conditions in force at time t (disturbance window is [start, start+duration)).
  Conditions conditions_at(double t, const MachineParams& p) const;
  std::size_t sample_count() const;
};

nlohmann::json to_json(const ScenarioConfig& s);
ScenarioConfig scenario_from_json(const nlohmann::json& j);

class BenchmarkModel {
 public:
  static BenchmarkModel make(ModelId id);
  static BenchmarkModel make(ModelId id, const MachineParams& params);

  ModelId id() const { return id_; }
  const MachineParams& params() const { return params_; }
  const std::vector<SignalInfo>& states() const { return states_; }
  std::vector<std::string> state_names() const;
  /// Algebraic and input signals available for variable extension, in the
  /// fixed order used for fallback extension.
  const std::vector<SignalInfo>& catalog() const { return catalog_; }
  std::vector<std::string> catalog_names() const;
  /// Inputs excluded from algebraic discovery.
  const std::vector<std::string>& exogenous_inputs() const { return exogenous_; }
  /// Algebraic/input variables that appear in the true differential equations.
  const std::vector<std::string>& true_variables() const { return true_variables_; }

  void rhs(std::span<const double> x, const Conditions& c, std::span<double> dx) const;
  /// Catalog signals in catalog order.
  std::vector<double> signals(std::span<const double> x, const Conditions& c) const;
  /// Damped Newton on f(x) = 0. Throws EquilibriumNotFound.
  std::vector<double> equilibrium(const Conditions& c) const;

  /// Resolves a requested variable name to a catalog entry: exact match,
  /// then case-insensitive match, then the alias table. Empty if unknown.
  std::string resolve_name(std::string_view requested) const;

 private:
  struct Stator {
    double id, iq, vd, vq;
  };
  Stator stator(std::span<const double> x, const Conditions& c) const;

  ModelId id_ = ModelId::Swing2;
  MachineParams params_;
  std::vector<SignalInfo> states_;
  std::vector<SignalInfo> catalog_;
  std::vector<std::string> exogenous_;
  std::vector<std::string> true_variables_;
};

class EquilibriumNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownSignal : public std::runtime_error {
 public:
  explicit UnknownSignal(const std::string& name) : std::runtime_error("unknown signal '" + name + "'") {}
};

class SchemaMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Noiseless simulation output: states and every catalog signal per sample.
struct FullRecord {
  std::string model;
  std::vector<double> time;
  std::vector<std::string> state_names;
  std::vector<std::vector<double>> states;  // [state][sample]
  std::vector<SignalInfo> signal_info;
  std::vector<std::vector<double>> signals;  // [signal][sample]

  std::size_t size() const { return time.size(); }
  const std::vector<double>& state(const std::string& name) const;
  const std::vector<double>& signal(const std::string& name) const;
  bool has_signal(const std::string& name) const;
  std::optional<SignalInfo> signal_meta(const std::string& name) const;
};

/// RK4 from the pre-disturbance equilibrium. Inputs are held constant over
/// each step at their value at the step midpoint, so disturbance edges on the
/// time grid do not cost integration order.
FullRecord simulate(const BenchmarkModel& model, const ScenarioConfig& scen);

/// Same integration without disturbance bookkeeping beyond `scen`, from an
/// explicit initial state.
FullRecord simulate_from(const BenchmarkModel& model, const ScenarioConfig& scen, std::vector<double> x0);

/// Peak-to-peak excursion max - min.
double amplitude(std::span<const double> signal);

/// Central differences in the interior, second-order one-sided at the ends.
std::vector<double> differentiate(std::span<const double> values, double dt);

std::string derivative_column(const std::string& state);

class TrajectoryDataset {
 public:
  TrajectoryDataset() = default;

  const std::vector<double>& time() const { return time_; }
  const std::vector<std::string>& state_names() const { return state_names_; }
  const std::vector<double>& state(const std::string& name) const { return states_.at(name); }
  const std::vector<double>& derivative(const std::string& name) const { return derivatives_.at(name); }
  const std::vector<std::string>& revealed_names() const { return revealed_order_; }
  const std::vector<double>& revealed(const std::string& name) const { return revealed_.at(name); }
  bool is_revealed(const std::string& name) const { return revealed_.count(name) > 0; }
  const std::shared_ptr<const FullRecord>& hidden() const { return hidden_; }
  const nlohmann::json& metadata() const { return metadata_; }
  std::size_t size() const { return time_.size(); }

  /// Copies catalog columns from the hidden record. Already revealed names
  /// are skipped. Throws UnknownSignal.
  void reveal(const std::vector<std::string>& names);

  /// States, d<state>_dt columns and revealed signals.
  SampleBatch batch() const;

  /// CSV with header t, states, d<state>_dt, revealed signals, plus a JSON
  /// sidecar `<path>.json`.
  void export_csv(const std::filesystem::path& path) const;
  /// Reads a dataset written by export_csv. `hidden` may be null.
  static TrajectoryDataset import_csv(const std::filesystem::path& path, std::shared_ptr<const FullRecord> hidden);

  friend TrajectoryDataset make_dataset(std::shared_ptr<const FullRecord> record, const ScenarioConfig& scen);

 private:
  std::vector<double> time_;
  std::vector<std::string> state_names_;
  std::map<std::string, std::vector<double>> states_;
  std::map<std::string, std::vector<double>> derivatives_;
  std::vector<std::string> revealed_order_;
  std::map<std::string, std::vector<double>> revealed_;
  std::shared_ptr<const FullRecord> hidden_;
  nlohmann::json metadata_;
};

/// Adds N(0, (noise_fraction * amplitude)^2) noise to each state column and
/// differentiates the noisy states. Only states and derivatives are revealed.
TrajectoryDataset make_dataset(std::shared_ptr<const FullRecord> record, const ScenarioConfig& scen);

void write_record_csv(const FullRecord& record, const std::filesystem::path& path);
FullRecord read_record_csv(const std::filesystem::path& path);

/// Default training and held-out test scenarios for a model.
ScenarioConfig default_train_scenario(ModelId id);
ScenarioConfig default_test_scenario(ModelId id);

}  // namespace llmdmd::bench
