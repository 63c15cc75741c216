#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmdmd/replay.hpp"

namespace llmdmd {

/// Samples with |truth| below this are left out of MAPE.
constexpr double kMapeZeroGuard = 1e-9;

struct MapeResult {
  double percent = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;
};

/// 100 * mean(|pred - truth| / |truth|) over samples with |truth| >= guard.
MapeResult mape(std::span<const double> truth, std::span<const double> pred);

struct RSquared {
  double value = 0.0;
  bool undefined = false;  // truth has zero variance
};

RSquared r_squared(std::span<const double> truth, std::span<const double> pred);

struct StateMetrics {
  std::string state;
  double mape = 0.0;
  std::size_t mape_excluded = 0;
  double r2 = 0.0;
  bool r2_undefined = false;
};

inline constexpr int kReportSchemaVersion = 1;

struct EvalReport {
  std::string model_label;
  std::string model_type;  // "discovered" or "sindy"
  std::string replay_mode;
  std::vector<StateMetrics> states;
  double mape = 0.0;        // mean over states
  double r2 = 0.0;          // mean over states with defined R^2
  double stacked_mape = 0.0;
  bool diverged = false;
  std::string divergence_reason;
  std::size_t samples_compared = 0;
  std::size_t samples_total = 0;
  nlohmann::json metadata;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

/// Compares a replayed trajectory with the record's true states over the
/// replay's finite prefix.
EvalReport compare(const Trajectory& replayed, const bench::FullRecord& truth);

/// Text table with one row per report: Model, MAPE, R^2, flags.
std::string format_table(const std::vector<EvalReport>& reports);
nlohmann::json merge_reports(const std::vector<EvalReport>& reports);

}  // namespace llmdmd
