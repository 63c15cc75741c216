#pragma once

// Implementations behind the llm_dmd command-line tool. Each command reads
// and writes files only; errors are thrown and turned into exit codes by
// the caller.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmdmd/bench.hpp"
#include "llmdmd/generator.hpp"
#include "llmdmd/metrics.hpp"

namespace llmdmd::cli {

namespace fs = std::filesystem;

/// Dataset file names inside a data directory.
inline constexpr const char* kTrainCsv = "train.csv";
inline constexpr const char* kTrainRecord = "train_record.csv";
inline constexpr const char* kTestCsv = "test.csv";
inline constexpr const char* kTestRecord = "test_record.csv";

struct Scenarios {
  bench::ScenarioConfig train;
  bench::ScenarioConfig test;
};

/// Scenario file: {"train": {...}, "test": {...}}; either part may be
/// omitted and falls back to the model's default.
Scenarios load_scenarios(const std::optional<fs::path>& file, bench::ModelId id);

void gen_data(const std::string& model, const std::optional<fs::path>& scenario_file, const fs::path& out);

struct LoadedData {
  bench::BenchmarkModel model;
  bench::TrajectoryDataset dataset;
};

LoadedData load_training_data(const fs::path& data_dir);
bench::FullRecord load_test_record(const fs::path& data_dir);

struct DiscoverOptions {
  Sleeper sleeper;  // injected by tests
};

/// Returns a summary object (also written to <out>/summary.json).
nlohmann::json discover(const fs::path& config, const fs::path& data, const fs::path& out,
                        const DiscoverOptions& opt = {});

struct BaselineOptions {
  double threshold = 0.05;
  int iterations = 10;
  std::vector<std::string> excluded;  // missing variant; default: algebraic variables
};

nlohmann::json baseline(const std::string& variant, const fs::path& data, const fs::path& out,
                        const BaselineOptions& opt = {});

struct EvaluateOptions {
  std::string replay_mode = "auto";  // auto | recorded | closed_loop | network
  std::string label;
};

EvalReport evaluate(const fs::path& model_file, const fs::path& data, const fs::path& out,
                    const EvaluateOptions& opt = {});

/// Each run is a report file or a directory holding report.json.
std::string report(const std::vector<fs::path>& runs, const std::optional<fs::path>& out);

nlohmann::json read_json_file(const fs::path& path);
void write_json_file(const fs::path& path, const nlohmann::json& j);

/// Machine-readable error object for stderr.
nlohmann::json error_json(const std::exception& e);

}  // namespace llmdmd::cli
