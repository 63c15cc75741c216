#pragma once

// Island-based experience store. Each island groups its skeletons into
// clusters keyed by score rounded to three decimals; in-context examples are
// drawn from one island at a time with a softmax over cluster mean scores,
// then a softmax over negative code length inside the chosen cluster.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmdmd/fitting.hpp"

namespace llmdmd {

struct SamplerConfig {
  double cluster_temperature = 0.2;
  double length_temperature = 0.2;
  int examples_per_prompt = 2;

  void validate() const;
};

struct Cluster {
  std::int64_t key = 0;  // round(score * 1000)
  std::vector<ScoredSkeleton> members;
  double mean_score = 0.0;

  double key_score() const { return static_cast<double>(key) / 1000.0; }
};

struct Island {
  std::map<std::int64_t, Cluster> clusters;

  std::size_t size() const;
  bool contains(const std::string& canonical) const;
};

/// Cluster key for a score: the score rounded to three decimals, scaled by 1000.
std::int64_t cluster_key(double score);

/// Numerically stable softmax of values / temperature.
std::vector<double> softmax(const std::vector<double>& values, double temperature);

struct ExampleDraw {
  std::size_t island = 0;
  std::vector<ScoredSkeleton> examples;  // ascending score
};

class Archive {
 public:
  Archive() = default;
  /// `m` islands, each holding a copy of the (already scored) seed.
  Archive(std::size_t m, const ScoredSkeleton& seed);

  std::size_t island_count() const { return islands_.size(); }
  const Island& island(std::size_t k) const { return islands_.at(k); }
  const std::vector<ScoredSkeleton>& quarantine() const { return quarantine_; }

  /// Inserts into island k. Faulted candidates go to quarantine; a
  /// canonical text already present on the island is ignored. Returns
  /// true if the island changed.
  bool register_candidate(std::size_t k, const ScoredSkeleton& cand);

  ExampleDraw sample_examples(const SamplerConfig& cfg, std::mt19937_64& rng) const;

  /// Analytic cluster-selection probabilities for island k, in key order.
  std::vector<double> cluster_probabilities(std::size_t k, double cluster_temperature) const;
  /// Draws one cluster of island k; returns its position in key order.
  std::size_t sample_cluster(std::size_t k, double cluster_temperature, std::mt19937_64& rng) const;

  /// Highest score over all islands; ties go to the shorter canonical text,
  /// then to the lexicographically smaller one. Throws if empty.
  const ScoredSkeleton& best() const;
  /// The k best distinct skeletons across islands, best first.
  std::vector<ScoredSkeleton> top(std::size_t k) const;

  /// Checkpoint: islands -> clusters -> members (canonical text, params,
  /// score, requirements).
  nlohmann::json to_json() const;
  /// Rebuilds an archive from a checkpoint, re-parsing each skeleton.
  static Archive from_json(const nlohmann::json& j, const SymbolScope& scope,
                           const std::vector<std::string>& targets, TargetKind kind);

 private:
  std::vector<Island> islands_;
  std::vector<ScoredSkeleton> quarantine_;
};

/// Ordering used by Archive::best: true if a ranks ahead of b.
bool ranks_ahead(const ScoredSkeleton& a, const ScoredSkeleton& b);

}  // namespace llmdmd
