#include "llmdmd/archive.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace llmdmd {

namespace {

std::size_t draw(const std::vector<double>& probs, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> dist(probs.begin(), probs.end());
  return dist(rng);
}

void recompute_mean(Cluster& c) {
  double sum = 0.0;
  for (const auto& m : c.members) sum += m.score;
  c.mean_score = c.members.empty() ? 0.0 : sum / static_cast<double>(c.members.size());
}

nlohmann::json member_to_json(const ScoredSkeleton& m) {
  nlohmann::json reqs = nlohmann::json::array();
  for (const auto& r : m.requirements) {
    reqs.push_back({{"name", r.name}, {"justification", r.justification}, {"kind", r.kind_hint}});
  }
  return {{"skeleton", m.canonical}, {"params", m.params}, {"score", m.score}, {"requirements", reqs}};
}

ScoredSkeleton member_from_json(const nlohmann::json& j, const SymbolScope& scope,
                                const std::vector<std::string>& targets, TargetKind kind) {
  ScoredSkeleton m;
  m.skeleton = parse(j.at("skeleton").get<std::string>(), scope, targets, kind);
  m.canonical = serialize(m.skeleton);
  m.params = j.at("params").get<std::vector<double>>();
  m.score = j.at("score").get<double>();
  m.loss = -m.score;
  for (const auto& r : j.value("requirements", nlohmann::json::array())) {
    m.requirements.push_back({r.at("name").get<std::string>(), r.value("justification", ""), r.value("kind", "")});
  }
  return m;
}

}  // namespace

void SamplerConfig::validate() const {
  if (!(cluster_temperature > 0.0) || !(length_temperature > 0.0)) {
    throw std::invalid_argument("sampling temperatures must be > 0");
  }
  if (examples_per_prompt < 0) throw std::invalid_argument("examples per prompt must be >= 0");
}

std::size_t Island::size() const {
  std::size_t n = 0;
  for (const auto& [k, c] : clusters) n += c.members.size();
  return n;
}

bool Island::contains(const std::string& canonical) const {
  for (const auto& [k, c] : clusters) {
    for (const auto& m : c.members) {
      if (m.canonical == canonical) return true;
    }
  }
  return false;
}

std::int64_t cluster_key(double score) { return std::llround(score * 1000.0); }

std::vector<double> softmax(const std::vector<double>& values, double temperature) {
  std::vector<double> out(values.size());
  if (values.empty()) return out;
  const double top = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp((values[i] - top) / temperature);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

bool ranks_ahead(const ScoredSkeleton& a, const ScoredSkeleton& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.canonical.size() != b.canonical.size()) return a.canonical.size() < b.canonical.size();
  return a.canonical < b.canonical;
}

Archive::Archive(std::size_t m, const ScoredSkeleton& seed) : islands_(m) {
  if (m == 0) throw std::invalid_argument("archive needs at least one island");
  ScoredSkeleton s = seed;
  if (s.canonical.empty()) s.canonical = serialize(s.skeleton);
  for (std::size_t k = 0; k < m; ++k) register_candidate(k, s);
}

bool Archive::register_candidate(std::size_t k, const ScoredSkeleton& cand) {
  Island& isl = islands_.at(k);
  ScoredSkeleton c = cand;
  if (c.canonical.empty()) c.canonical = serialize(c.skeleton);
  if (c.faulted()) {
    quarantine_.push_back(std::move(c));
    return false;
  }
  if (isl.contains(c.canonical)) return false;
  const std::int64_t key = cluster_key(c.score);
  Cluster& cl = isl.clusters[key];
  cl.key = key;
  cl.members.push_back(std::move(c));
  recompute_mean(cl);
  return true;
}

std::vector<double> Archive::cluster_probabilities(std::size_t k, double cluster_temperature) const {
  std::vector<double> means;
  for (const auto& [key, c] : islands_.at(k).clusters) means.push_back(c.mean_score);
  return softmax(means, cluster_temperature);
}

std::size_t Archive::sample_cluster(std::size_t k, double cluster_temperature, std::mt19937_64& rng) const {
  return draw(cluster_probabilities(k, cluster_temperature), rng);
}

ExampleDraw Archive::sample_examples(const SamplerConfig& cfg, std::mt19937_64& rng) const {
  cfg.validate();
  if (islands_.empty()) throw std::logic_error("archive is not seeded");
  ExampleDraw out;
  std::uniform_int_distribution<std::size_t> pick_island(0, islands_.size() - 1);
  out.island = pick_island(rng);

  std::vector<const Cluster*> available;
  for (const auto& [key, c] : islands_[out.island].clusters) available.push_back(&c);
  const auto wanted = static_cast<std::size_t>(cfg.examples_per_prompt);

  while (out.examples.size() < wanted && !available.empty()) {
    std::vector<double> means;
    for (const Cluster* c : available) means.push_back(c->mean_score);
    const std::size_t ci = draw(softmax(means, cfg.cluster_temperature), rng);
    std::vector<const ScoredSkeleton*> pool;
    for (const auto& m : available[ci]->members) pool.push_back(&m);
    while (out.examples.size() < wanted && !pool.empty()) {
      std::vector<double> neg_len;
      for (const auto* m : pool) neg_len.push_back(-static_cast<double>(m->canonical.size()));
      const std::size_t mi = draw(softmax(neg_len, cfg.length_temperature), rng);
      out.examples.push_back(*pool[mi]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(mi));
    }
    available.erase(available.begin() + static_cast<std::ptrdiff_t>(ci));
  }
  std::stable_sort(out.examples.begin(), out.examples.end(),
                   [](const ScoredSkeleton& a, const ScoredSkeleton& b) { return a.score < b.score; });
  return out;
}

const ScoredSkeleton& Archive::best() const {
  const ScoredSkeleton* top = nullptr;
  for (const auto& isl : islands_) {
    for (const auto& [key, c] : isl.clusters) {
      for (const auto& m : c.members) {
        if (top == nullptr || ranks_ahead(m, *top)) top = &m;
      }
    }
  }
  if (top == nullptr) throw std::logic_error("archive is empty");
  return *top;
}

std::vector<ScoredSkeleton> Archive::top(std::size_t k) const {
  std::vector<const ScoredSkeleton*> all;
  for (const auto& isl : islands_) {
    for (const auto& [key, c] : isl.clusters) {
      for (const auto& m : c.members) all.push_back(&m);
    }
  }
  std::sort(all.begin(), all.end(), [](const auto* a, const auto* b) { return ranks_ahead(*a, *b); });
  std::vector<ScoredSkeleton> out;
  for (const auto* m : all) {
    if (out.size() == k) break;
    bool dup = std::any_of(out.begin(), out.end(), [&](const auto& o) { return o.canonical == m->canonical; });
    if (!dup) out.push_back(*m);
  }
  return out;
}

nlohmann::json Archive::to_json() const {
  nlohmann::json islands = nlohmann::json::array();
  for (std::size_t k = 0; k < islands_.size(); ++k) {
    nlohmann::json clusters = nlohmann::json::array();
    for (const auto& [key, c] : islands_[k].clusters) {
      nlohmann::json members = nlohmann::json::array();
      for (const auto& m : c.members) members.push_back(member_to_json(m));
      clusters.push_back({{"key", c.key_score()}, {"mean_score", c.mean_score}, {"members", members}});
    }
    islands.push_back({{"id", k}, {"clusters", clusters}});
  }
  nlohmann::json quarantine = nlohmann::json::array();
  for (const auto& m : quarantine_) quarantine.push_back(member_to_json(m));
  return {{"islands", islands}, {"quarantine", quarantine}};
}

Archive Archive::from_json(const nlohmann::json& j, const SymbolScope& scope, const std::vector<std::string>& targets,
                           TargetKind kind) {
  Archive a;
  const auto& islands = j.at("islands");
  a.islands_.resize(islands.size());
  for (std::size_t k = 0; k < islands.size(); ++k) {
    for (const auto& c : islands[k].at("clusters")) {
      for (const auto& m : c.at("members")) a.register_candidate(k, member_from_json(m, scope, targets, kind));
    }
  }
  for (const auto& m : j.value("quarantine", nlohmann::json::array())) {
    a.quarantine_.push_back(member_from_json(m, scope, targets, kind));
  }
  return a;
}

}  // namespace llmdmd
