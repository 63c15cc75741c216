#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "llmdmd/evaluator.hpp"
#include "llmdmd/skeleton.hpp"

namespace llmdmd {

/// Score given to candidates whose fit faulted or produced a non-finite loss.
constexpr double kWorstScore = -1e9;

struct FitConfig {
  int steps = 2000;
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int restarts = 3;
  double init_low = -1.0;
  double init_high = 1.0;
  std::uint64_t seed = 0;
  bool record_trace = false;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// A variable the generator asked to have admitted, with its reason.
struct Requirement {
  std::string name;
  std::string justification;
  std::string kind_hint;
};

struct ScoredSkeleton {
  Skeleton skeleton;
  std::vector<double> params;
  double score = kWorstScore;
  double loss = 0.0;
  std::vector<double> loss_trace;
  std::vector<Requirement> requirements;
  std::string canonical;  // serialize(skeleton), cached

  bool faulted() const { return score <= kWorstScore; }
};

/// lr0 * (1 + cos(pi * step / steps)) / 2.
double cosine_learning_rate(double lr0, int step, int steps);

/// -loss, or kWorstScore for a non-finite or negative loss.
double score_of(double loss);

/// Mean over targets and samples of the squared residual between the
/// skeleton outputs and the target columns.
double mse_loss(const Skeleton& s, std::span<const double> params, const SampleBatch& batch,
                const std::vector<std::string>& target_columns);

/// Outcome of a single Adam run, exposed for inspection in tests.
struct RestartResult {
  std::vector<double> params;
  double loss = 0.0;
  bool faulted = false;
  std::vector<double> trace;
};

RestartResult adam_run(const Skeleton& s, const SampleBatch& batch, const std::vector<std::string>& target_columns,
                       std::vector<double> init, const FitConfig& cfg);

/// Fits the parameter slots with `restarts` Adam runs from uniform random
/// starts and keeps the lowest-loss run. Faults never escape: a restart that
/// hits a domain fault is discarded, and if every restart faults the
/// candidate gets kWorstScore.
ScoredSkeleton fit_and_score(const Skeleton& s, const SampleBatch& batch,
                             const std::vector<std::string>& target_columns, const FitConfig& cfg);

/// Seed derivation for independent streams (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace llmdmd
