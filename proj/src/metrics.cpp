#include "llmdmd/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace llmdmd {

MapeResult mape(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) throw std::invalid_argument("mape: length mismatch");
  MapeResult r;
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (std::abs(truth[i]) < kMapeZeroGuard) {
      ++r.excluded;
      continue;
    }
    acc += std::abs(pred[i] - truth[i]) / std::abs(truth[i]);
    ++r.used;
  }
  r.percent = r.used > 0 ? 100.0 * acc / static_cast<double>(r.used) : 0.0;
  return r;
}

RSquared r_squared(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) throw std::invalid_argument("r_squared: length mismatch");
  RSquared r;
  if (truth.empty()) {
    r.undefined = true;
    return r;
  }
  double mean = 0.0;
  for (double v : truth) mean += v;
  mean /= static_cast<double>(truth.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  }
  if (ss_tot <= 0.0) {
    r.undefined = true;
    return r;
  }
  r.value = 1.0 - ss_res / ss_tot;
  return r;
}

EvalReport compare(const Trajectory& replayed, const bench::FullRecord& truth) {
  EvalReport rep;
  rep.diverged = replayed.diverged;
  rep.divergence_reason = replayed.divergence_reason;
  rep.samples_total = truth.size();
  const std::size_t n = std::min(replayed.size(), truth.size());
  rep.samples_compared = n;
  double sum_mape = 0.0, sum_r2 = 0.0, stacked = 0.0;
  std::size_t n_r2 = 0, stacked_used = 0;
  for (std::size_t s = 0; s < replayed.state_names.size(); ++s) {
    const auto& name = replayed.state_names[s];
    std::span<const double> t(truth.state(name).data(), n);
    std::span<const double> p(replayed.states[s].data(), n);
    StateMetrics m;
    m.state = name;
    const auto mp = mape(t, p);
    m.mape = mp.percent;
    m.mape_excluded = mp.excluded;
    const auto r2 = r_squared(t, p);
    m.r2 = r2.value;
    m.r2_undefined = r2.undefined;
    sum_mape += m.mape;
    stacked += m.mape * static_cast<double>(mp.used);
    stacked_used += mp.used;
    if (!r2.undefined) {
      sum_r2 += m.r2;
      ++n_r2;
    }
    rep.states.push_back(m);
  }
  if (!rep.states.empty()) rep.mape = sum_mape / static_cast<double>(rep.states.size());
  rep.r2 = n_r2 > 0 ? sum_r2 / static_cast<double>(n_r2) : 0.0;
  rep.stacked_mape = stacked_used > 0 ? stacked / static_cast<double>(stacked_used) : 0.0;
  return rep;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& s : states) {
    per.push_back({{"state", s.state},
                   {"mape_percent", s.mape},
                   {"mape_excluded_samples", s.mape_excluded},
                   {"r2", s.r2_undefined ? nlohmann::json(nullptr) : nlohmann::json(s.r2)},
                   {"r2_undefined", s.r2_undefined}});
  }
  return {{"schema_version", kReportSchemaVersion},
          {"model", model_label},
          {"model_type", model_type},
          {"replay_mode", replay_mode},
          {"states", per},
          {"mape_percent", mape},
          {"stacked_mape_percent", stacked_mape},
          {"r2", r2},
          {"diverged", diverged},
          {"divergence_reason", divergence_reason},
          {"samples_compared", samples_compared},
          {"samples_total", samples_total},
          {"metadata", metadata.is_null() ? nlohmann::json::object() : metadata}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kReportSchemaVersion) throw std::invalid_argument("unsupported report schema");
  EvalReport r;
  r.model_label = j.value("model", "");
  r.model_type = j.value("model_type", "");
  r.replay_mode = j.value("replay_mode", "");
  for (const auto& s : j.at("states")) {
    StateMetrics m;
    m.state = s.at("state").get<std::string>();
    m.mape = s.at("mape_percent").get<double>();
    m.mape_excluded = s.value("mape_excluded_samples", std::size_t{0});
    m.r2_undefined = s.value("r2_undefined", false);
    m.r2 = m.r2_undefined ? 0.0 : s.at("r2").get<double>();
    r.states.push_back(m);
  }
  r.mape = j.at("mape_percent").get<double>();
  r.stacked_mape = j.value("stacked_mape_percent", 0.0);
  r.r2 = j.at("r2").get<double>();
  r.diverged = j.value("diverged", false);
  r.divergence_reason = j.value("divergence_reason", "");
  r.samples_compared = j.value("samples_compared", std::size_t{0});
  r.samples_total = j.value("samples_total", std::size_t{0});
  r.metadata = j.value("metadata", nlohmann::json::object());
  return r;
}

std::string format_table(const std::vector<EvalReport>& reports) {
  std::size_t width = 5;
  for (const auto& r : reports) width = std::max(width, r.model_label.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "Model" << "  " << std::right << std::setw(10) << "MAPE"
     << "  " << std::setw(8) << "R^2" << "  Flags\n";
  os << std::string(width + 2 + 10 + 2 + 8 + 7, '-') << '\n';
  for (const auto& r : reports) {
    std::ostringstream mape_text;
    mape_text << std::fixed << std::setprecision(2) << r.mape << "%";
    os << std::left << std::setw(static_cast<int>(width)) << r.model_label << "  " << std::right << std::setw(10)
       << mape_text.str() << "  " << std::setw(8) << std::fixed << std::setprecision(2) << r.r2 << "  "
       << (r.diverged ? "diverged" : "") << '\n';
  }
  return os.str();
}

nlohmann::json merge_reports(const std::vector<EvalReport>& reports) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : reports) {
    rows.push_back({{"model", r.model_label},
                    {"mape_percent", r.mape},
                    {"r2", r.r2},
                    {"diverged", r.diverged},
                    {"report", r.to_json()}});
  }
  return {{"schema_version", kReportSchemaVersion}, {"columns", {"Model", "MAPE", "R2"}}, {"rows", rows}};
}

}  // namespace llmdmd
