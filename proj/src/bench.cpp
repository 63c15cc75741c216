#include "llmdmd/bench.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "llmdmd/rk4.hpp"

namespace llmdmd::bench {

namespace {

constexpr double kTimeTolerance = 1e-9;

std::string normalize_alias(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

const std::map<std::string, std::string>& alias_table() {
  static const std::map<std::string, std::string> table = {
      {"pm", "P_m"},        {"mechanicalpower", "P_m"},     {"pmech", "P_m"},
      {"vf", "v_f"},        {"efd", "v_f"},                 {"fieldvoltage", "v_f"},
      {"excitationvoltage", "v_f"},                         {"vfstar", "v_f"},
      {"pe", "P_e"},        {"electricalpower", "P_e"},     {"electromagneticpower", "P_e"},
      {"pelec", "P_e"},     {"airgappower", "P_e"},
      {"id", "i_d"},        {"statorcurrentd", "i_d"},      {"daxiscurrent", "i_d"},
      {"daxisstatorcurrent", "i_d"},
      {"iq", "i_q"},        {"statorcurrentq", "i_q"},      {"qaxiscurrent", "i_q"},
      {"qaxisstatorcurrent", "i_q"},
      {"vg", "V_g"},        {"vt", "V_g"},                  {"vterm", "V_g"},
      {"terminalvoltage", "V_g"},                           {"terminalvoltagemagnitude", "V_g"},
      {"theta", "theta_g"}, {"thetag", "theta_g"},          {"terminalangle", "theta_g"},
      {"terminalvoltageangle", "theta_g"},                  {"busangle", "theta_g"},
      {"qe", "Q_e"},        {"reactivepower", "Q_e"},       {"qelec", "Q_e"},
  };
  return table;
}

SignalInfo sig(std::string name, std::string unit, std::string description, SignalKind kind) {
  return {std::move(name), std::move(unit), std::move(description), kind};
}

std::string_view disturbance_name(DisturbanceType t) {
  switch (t) {
    case DisturbanceType::None: return "none";
    case DisturbanceType::InputPowerStep: return "input_power_step";
    case DisturbanceType::ReactanceStep: return "reactance_step";
  }
  return "none";
}

DisturbanceType disturbance_from_name(std::string_view s) {
  if (s == "none") return DisturbanceType::None;
  if (s == "input_power_step") return DisturbanceType::InputPowerStep;
  if (s == "reactance_step") return DisturbanceType::ReactanceStep;
  throw std::invalid_argument("unknown disturbance type '" + std::string(s) + "'");
}

nlohmann::json signal_to_json(const SignalInfo& s) {
  return {{"name", s.name}, {"unit", s.unit}, {"description", s.description}, {"kind", std::string(to_string(s.kind))}};
}

SignalInfo signal_from_json(const nlohmann::json& j) {
  return {j.at("name").get<std::string>(), j.value("unit", ""), j.value("description", ""),
          signal_kind_from_string(j.value("kind", "algebraic"))};
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw SchemaMismatch("malformed number '" + s + "'");
  return v;
}

// Reads header + rows into columns.
std::pair<std::vector<std::string>, std::vector<std::vector<double>>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch("empty csv " + path.string());
  auto header = split_csv_line(line);
  std::vector<std::vector<double>> cols(header.size());
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw SchemaMismatch("row width does not match header in " + path.string());
    for (std::size_t c = 0; c < cells.size(); ++c) cols[c].push_back(parse_double(cells[c]));
  }
  return {std::move(header), std::move(cols)};
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<const std::vector<double>*>& cols) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  const std::size_t n = cols.empty() ? 0 : cols.front()->size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << format_number((*cols[c])[i]);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::filesystem::path sidecar(const std::filesystem::path& p) { return std::filesystem::path(p.string() + ".json"); }

}  // namespace

std::string_view to_string(ModelId id) {
  switch (id) {
    case ModelId::Swing2: return "swing2";
    case ModelId::OneAxis3: return "oneaxis3";
    case ModelId::Type1Order5: return "type1order5";
  }
  return "swing2";
}

ModelId model_from_string(std::string_view s) {
  if (s == "swing2") return ModelId::Swing2;
  if (s == "oneaxis3") return ModelId::OneAxis3;
  if (s == "type1order5") return ModelId::Type1Order5;
  throw std::invalid_argument("unknown benchmark model '" + std::string(s) + "'");
}

double MachineParams::omega_b() const { return 2.0 * std::numbers::pi * base_frequency; }

void ScenarioConfig::validate() const {
  if (!(step > 0.0)) throw std::invalid_argument("scenario step must be > 0");
  if (!(total_time > 0.0)) throw std::invalid_argument("scenario total time must be > 0");
  if (disturbance.type != DisturbanceType::None &&
      (disturbance.start < 0.0 || disturbance.start > total_time || disturbance.duration < 0.0)) {
    throw std::invalid_argument("disturbance window must lie within [0, total time]");
  }
  if (noise_fraction < 0.0) throw std::invalid_argument("noise fraction must be >= 0");
}

Conditions ScenarioConfig::conditions_at(double t, const MachineParams& p) const {
  Conditions c{P_m, v_f, p.line_reactance};
  const bool active = disturbance.type != DisturbanceType::None && t >= disturbance.start - kTimeTolerance &&
                      t < disturbance.start + disturbance.duration - kTimeTolerance;
  if (active) {
    if (disturbance.type == DisturbanceType::InputPowerStep) c.P_m += disturbance.magnitude;
    if (disturbance.type == DisturbanceType::ReactanceStep) c.line_reactance += disturbance.magnitude;
  }
  return c;
}

std::size_t ScenarioConfig::sample_count() const {
  return static_cast<std::size_t>(std::llround(total_time / step)) + 1;
}

nlohmann::json to_json(const ScenarioConfig& s) {
  return {{"total_time", s.total_time},
          {"step", s.step},
          {"P_m", s.P_m},
          {"v_f", s.v_f},
          {"noise_fraction", s.noise_fraction},
          {"seed", s.seed},
          {"disturbance",
           {{"type", std::string(disturbance_name(s.disturbance.type))},
            {"start", s.disturbance.start},
            {"duration", s.disturbance.duration},
            {"magnitude", s.disturbance.magnitude}}}};
}

ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig s;
  s.total_time = j.value("total_time", s.total_time);
  s.step = j.value("step", s.step);
  s.P_m = j.value("P_m", s.P_m);
  s.v_f = j.value("v_f", s.v_f);
  s.noise_fraction = j.value("noise_fraction", s.noise_fraction);
  s.seed = j.value("seed", s.seed);
  if (j.contains("disturbance")) {
    const auto& d = j["disturbance"];
    s.disturbance.type = disturbance_from_name(d.value("type", "none"));
    s.disturbance.start = d.value("start", s.disturbance.start);
    s.disturbance.duration = d.value("duration", s.disturbance.duration);
    s.disturbance.magnitude = d.value("magnitude", s.disturbance.magnitude);
  }
  s.validate();
  return s;
}

BenchmarkModel BenchmarkModel::make(ModelId id) { return make(id, MachineParams{}); }

BenchmarkModel BenchmarkModel::make(ModelId id, const MachineParams& params) {
  BenchmarkModel m;
  m.id_ = id;
  m.params_ = params;
  m.states_ = {sig("delta", "rad", "rotor angle", SignalKind::State),
               sig("omega", "pu", "rotor speed", SignalKind::State)};
  if (id != ModelId::Swing2) m.states_.push_back(sig("e_q1", "pu", "q-axis transient voltage", SignalKind::State));
  if (id == ModelId::Type1Order5) {
    m.states_.push_back(sig("e_d1", "pu", "d-axis transient voltage", SignalKind::State));
    m.states_.push_back(sig("e_d2", "pu", "d-axis subtransient voltage", SignalKind::State));
  }
  m.catalog_.push_back(sig("P_m", "pu", "mechanical power from the prime mover", SignalKind::Input));
  if (id != ModelId::Swing2) m.catalog_.push_back(sig("v_f", "pu", "excitation (field) voltage", SignalKind::Input));
  m.catalog_.push_back(sig("P_e", "pu", "electromagnetic power", SignalKind::Algebraic));
  m.catalog_.push_back(sig("i_d", "pu", "d-axis stator current", SignalKind::Algebraic));
  m.catalog_.push_back(sig("i_q", "pu", "q-axis stator current", SignalKind::Algebraic));
  m.catalog_.push_back(sig("V_g", "pu", "terminal voltage magnitude", SignalKind::Algebraic));
  m.catalog_.push_back(sig("theta_g", "rad", "terminal voltage angle", SignalKind::Algebraic));
  m.catalog_.push_back(sig("Q_e", "pu", "reactive power output", SignalKind::Algebraic));

  switch (id) {
    case ModelId::Swing2:
      m.exogenous_ = {"P_m"};
      m.true_variables_ = {"P_m", "P_e"};
      break;
    case ModelId::OneAxis3:
      m.exogenous_ = {"P_m", "v_f"};
      m.true_variables_ = {"P_m", "v_f", "P_e", "i_d"};
      break;
    case ModelId::Type1Order5:
      m.exogenous_ = {"P_m", "v_f"};
      m.true_variables_ = {"P_m", "v_f", "P_e", "i_d", "i_q"};
      break;
  }
  return m;
}

std::vector<std::string> BenchmarkModel::state_names() const {
  std::vector<std::string> out;
  for (const auto& s : states_) out.push_back(s.name);
  return out;
}

std::vector<std::string> BenchmarkModel::catalog_names() const {
  std::vector<std::string> out;
  for (const auto& s : catalog_) out.push_back(s.name);
  return out;
}

BenchmarkModel::Stator BenchmarkModel::stator(std::span<const double> x, const Conditions& c) const {
  const MachineParams& p = params_;
  const double delta = x[0];
  // Stator equations in the form
  //   vd + ra*id - ed - xq_eff*iq = 0,  vq + ra*iq - eq + xd_eff*id = 0
  // with the line drop vd = V sin(delta) - xe*iq, vq = V cos(delta) + xe*id.
  double ed = 0.0, eq = 0.0, xq_eff = 0.0;
  const double xd_eff = p.xd1;
  switch (id_) {
    case ModelId::Swing2:
      eq = p.E1;
      xq_eff = p.xd1;
      break;
    case ModelId::OneAxis3:
      eq = x[2];
      xq_eff = p.xq;
      break;
    case ModelId::Type1Order5:
      eq = x[2];
      ed = x[4];
      xq_eff = p.xq2;
      break;
  }
  const double xe = c.line_reactance;
  const double V = p.bus_voltage;
  const double b1 = ed - V * std::sin(delta);
  const double b2 = eq - V * std::cos(delta);
  const double a_q = xe + xq_eff;
  const double a_d = xe + xd_eff;
  const double det = p.ra * p.ra + a_q * a_d;
  Stator s{};
  s.id = (p.ra * b1 + a_q * b2) / det;
  s.iq = (p.ra * b2 - a_d * b1) / det;
  s.vd = V * std::sin(delta) - xe * s.iq;
  s.vq = V * std::cos(delta) + xe * s.id;
  return s;
}

void BenchmarkModel::rhs(std::span<const double> x, const Conditions& c, std::span<double> dx) const {
  const MachineParams& p = params_;
  const Stator s = stator(x, c);
  const double pe = (s.vq + p.ra * s.iq) * s.iq + (s.vd + p.ra * s.id) * s.id;
  const double M = 2.0 * p.H;
  dx[0] = p.omega_b() * (x[1] - 1.0);
  dx[1] = (c.P_m - pe - p.D * (x[1] - 1.0)) / M;
  if (id_ != ModelId::Swing2) dx[2] = (-x[2] - (p.xd - p.xd1) * s.id + c.v_f) / p.Td01;
  if (id_ == ModelId::Type1Order5) {
    dx[3] = (-x[3] + (p.xq - p.xq1) * s.iq) / p.Tq01;
    dx[4] = (-x[4] + x[3] + (p.xq1 - p.xq2) * s.iq) / p.Tq02;
  }
}

std::vector<double> BenchmarkModel::signals(std::span<const double> x, const Conditions& c) const {
  const MachineParams& p = params_;
  const Stator s = stator(x, c);
  const double pe = (s.vq + p.ra * s.iq) * s.iq + (s.vd + p.ra * s.id) * s.id;
  std::vector<double> out;
  out.reserve(catalog_.size());
  for (const auto& info : catalog_) {
    const std::string& n = info.name;
    if (n == "P_m") out.push_back(c.P_m);
    else if (n == "v_f") out.push_back(c.v_f);
    else if (n == "P_e") out.push_back(pe);
    else if (n == "i_d") out.push_back(s.id);
    else if (n == "i_q") out.push_back(s.iq);
    else if (n == "V_g") out.push_back(std::hypot(s.vd, s.vq));
    else if (n == "theta_g") out.push_back(x[0] - std::atan2(s.vd, s.vq));
    else if (n == "Q_e") out.push_back(s.vq * s.id - s.vd * s.iq);
  }
  return out;
}

std::vector<double> BenchmarkModel::equilibrium(const Conditions& c) const {
  const std::size_t n = states_.size();
  Eigen::VectorXd x(n);
  x.setZero();
  x[0] = 0.4;
  x[1] = 1.0;
  if (n > 2) x[2] = 1.0;

  auto residual = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd f(n);
    rhs(std::span<const double>(v.data(), n), c, std::span<double>(f.data(), n));
    return f;
  };

  Eigen::VectorXd f = residual(x);
  for (int iter = 0; iter < 100; ++iter) {
    if (f.lpNorm<Eigen::Infinity>() < 1e-13) return {x.data(), x.data() + n};
    Eigen::MatrixXd J(n, n);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = 1e-7 * std::max(1.0, std::abs(x[static_cast<Eigen::Index>(j)]));
      Eigen::VectorXd xp = x, xm = x;
      xp[static_cast<Eigen::Index>(j)] += h;
      xm[static_cast<Eigen::Index>(j)] -= h;
      J.col(static_cast<Eigen::Index>(j)) = (residual(xp) - residual(xm)) / (2.0 * h);
    }
    const Eigen::VectorXd dx = J.fullPivLu().solve(-f);
    if (!dx.allFinite()) break;
    double lambda = 1.0;
    bool improved = false;
    for (int k = 0; k < 40; ++k) {
      Eigen::VectorXd trial = x + lambda * dx;
      Eigen::VectorXd ft = residual(trial);
      if (ft.allFinite() && ft.norm() < f.norm()) {
        x = trial;
        f = ft;
        improved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!improved) {
      if (f.lpNorm<Eigen::Infinity>() < 1e-11) return {x.data(), x.data() + n};
      break;
    }
  }
  if (f.lpNorm<Eigen::Infinity>() < 1e-11) return {x.data(), x.data() + n};
  throw EquilibriumNotFound("Newton iteration did not converge for " + std::string(to_string(id_)));
}

std::string BenchmarkModel::resolve_name(std::string_view requested) const {
  for (const auto& s : catalog_) {
    if (s.name == requested) return s.name;
  }
  const std::string norm = normalize_alias(requested);
  if (norm.empty()) return {};
  for (const auto& s : catalog_) {
    if (normalize_alias(s.name) == norm) return s.name;
  }
  const auto& table = alias_table();
  if (auto it = table.find(norm); it != table.end()) {
    for (const auto& s : catalog_) {
      if (s.name == it->second) return s.name;
    }
  }
  return {};
}

const std::vector<double>& FullRecord::state(const std::string& name) const {
  auto it = std::find(state_names.begin(), state_names.end(), name);
  if (it == state_names.end()) throw UnknownSignal(name);
  return states[static_cast<std::size_t>(it - state_names.begin())];
}

const std::vector<double>& FullRecord::signal(const std::string& name) const {
  for (std::size_t i = 0; i < signal_info.size(); ++i) {
    if (signal_info[i].name == name) return signals[i];
  }
  throw UnknownSignal(name);
}

bool FullRecord::has_signal(const std::string& name) const { return signal_meta(name).has_value(); }

std::optional<SignalInfo> FullRecord::signal_meta(const std::string& name) const {
  for (const auto& s : signal_info) {
    if (s.name == name) return s;
  }
  return std::nullopt;
}

FullRecord simulate(const BenchmarkModel& model, const ScenarioConfig& scen) {
  scen.validate();
  const Conditions pre{scen.P_m, scen.v_f, model.params().line_reactance};
  return simulate_from(model, scen, model.equilibrium(pre));
}

FullRecord simulate_from(const BenchmarkModel& model, const ScenarioConfig& scen, std::vector<double> x) {
  scen.validate();
  const std::size_t n = scen.sample_count();
  FullRecord rec;
  rec.model = std::string(to_string(model.id()));
  rec.state_names = model.state_names();
  rec.signal_info = model.catalog();
  rec.time.resize(n);
  rec.states.assign(x.size(), std::vector<double>(n));
  rec.signals.assign(rec.signal_info.size(), std::vector<double>(n));

  Rk4 rk(x.size());
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * scen.step;
    rec.time[k] = t;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x[i])) throw NonFiniteState("state diverged at t = " + std::to_string(t));
      rec.states[i][k] = x[i];
    }
    const auto sig = model.signals(x, scen.conditions_at(t, model.params()));
    for (std::size_t s = 0; s < sig.size(); ++s) rec.signals[s][k] = sig[s];
    if (k + 1 == n) break;
    const Conditions c = scen.conditions_at(t + 0.5 * scen.step, model.params());
    rk.step([&](double, std::span<const double> xs, std::span<double> dx) { model.rhs(xs, c, dx); }, t, scen.step,
            std::span<double>(x));
  }
  return rec;
}

double amplitude(std::span<const double> signal) {
  if (signal.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(signal.begin(), signal.end());
  return *hi - *lo;
}

std::vector<double> differentiate(std::span<const double> v, double dt) {
  const std::size_t n = v.size();
  std::vector<double> d(n, 0.0);
  if (n < 3) {
    if (n == 2) d[0] = d[1] = (v[1] - v[0]) / dt;
    return d;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (v[i + 1] - v[i - 1]) / (2.0 * dt);
  d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dt);
  d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dt);
  return d;
}

std::string derivative_column(const std::string& state) { return "d" + state + "_dt"; }

TrajectoryDataset make_dataset(std::shared_ptr<const FullRecord> record, const ScenarioConfig& scen) {
  if (!record) throw std::invalid_argument("make_dataset needs a record");
  TrajectoryDataset ds;
  ds.time_ = record->time;
  ds.state_names_ = record->state_names;
  std::mt19937_64 rng(scen.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < record->state_names.size(); ++i) {
    const auto& clean = record->states[i];
    for (double v : clean) {
      if (!std::isfinite(v)) throw NonFiniteState("record contains non-finite state values");
    }
    const double sigma = scen.noise_fraction * amplitude(clean);
    std::vector<double> noisy = clean;
    for (double& v : noisy) v += sigma * normal(rng);
    const double dt = record->time.size() > 1 ? record->time[1] - record->time[0] : scen.step;
    ds.derivatives_[record->state_names[i]] = differentiate(noisy, dt);
    ds.states_[record->state_names[i]] = std::move(noisy);
  }
  ds.hidden_ = std::move(record);
  nlohmann::json states = nlohmann::json::array();
  for (const auto& n : ds.state_names_) states.push_back(n);
  nlohmann::json catalog = nlohmann::json::array();
  for (const auto& s : ds.hidden_->signal_info) catalog.push_back(signal_to_json(s));
  ds.metadata_ = {{"model", ds.hidden_->model}, {"scenario", to_json(scen)}, {"seed", scen.seed},
                  {"states", states},           {"catalog", catalog}};
  return ds;
}

void TrajectoryDataset::reveal(const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (revealed_.count(n)) continue;
    if (!hidden_ || !hidden_->has_signal(n)) throw UnknownSignal(n);
    revealed_[n] = hidden_->signal(n);
    revealed_order_.push_back(n);
  }
}

SampleBatch TrajectoryDataset::batch() const {
  SampleBatch b;
  for (const auto& s : state_names_) {
    b.add_column(s, states_.at(s));
    b.add_column(derivative_column(s), derivatives_.at(s));
  }
  for (const auto& r : revealed_order_) b.add_column(r, revealed_.at(r));
  return b;
}

void TrajectoryDataset::export_csv(const std::filesystem::path& path) const {
  std::vector<std::string> header{"t"};
  std::vector<const std::vector<double>*> cols{&time_};
  for (const auto& s : state_names_) {
    header.push_back(s);
    cols.push_back(&states_.at(s));
  }
  for (const auto& s : state_names_) {
    header.push_back(derivative_column(s));
    cols.push_back(&derivatives_.at(s));
  }
  for (const auto& r : revealed_order_) {
    header.push_back(r);
    cols.push_back(&revealed_.at(r));
  }
  write_csv(path, header, cols);
  nlohmann::json meta = metadata_;
  meta["revealed"] = revealed_order_;
  meta["states"] = state_names_;
  write_json(sidecar(path), meta);
}

TrajectoryDataset TrajectoryDataset::import_csv(const std::filesystem::path& path,
                                                std::shared_ptr<const FullRecord> hidden) {
  const nlohmann::json meta = read_json(sidecar(path));
  TrajectoryDataset ds;
  ds.state_names_ = meta.at("states").get<std::vector<std::string>>();
  const auto revealed = meta.value("revealed", std::vector<std::string>{});
  std::vector<std::string> expected{"t"};
  for (const auto& s : ds.state_names_) expected.push_back(s);
  for (const auto& s : ds.state_names_) expected.push_back(derivative_column(s));
  for (const auto& r : revealed) expected.push_back(r);

  auto [header, cols] = read_csv(path);
  if (header != expected) {
    std::string want, got;
    for (const auto& h : expected) want += h + ",";
    for (const auto& h : header) got += h + ",";
    throw SchemaMismatch("expected header [" + want + "] but found [" + got + "] in " + path.string());
  }
  std::size_t c = 0;
  ds.time_ = std::move(cols[c++]);
  for (const auto& s : ds.state_names_) ds.states_[s] = std::move(cols[c++]);
  for (const auto& s : ds.state_names_) ds.derivatives_[s] = std::move(cols[c++]);
  for (const auto& r : revealed) {
    ds.revealed_[r] = std::move(cols[c++]);
    ds.revealed_order_.push_back(r);
  }
  ds.metadata_ = meta;
  ds.metadata_.erase("revealed");
  ds.hidden_ = std::move(hidden);
  return ds;
}

void write_record_csv(const FullRecord& record, const std::filesystem::path& path) {
  std::vector<std::string> header{"t"};
  std::vector<const std::vector<double>*> cols{&record.time};
  for (std::size_t i = 0; i < record.state_names.size(); ++i) {
    header.push_back(record.state_names[i]);
    cols.push_back(&record.states[i]);
  }
  nlohmann::json signals = nlohmann::json::array();
  for (std::size_t i = 0; i < record.signal_info.size(); ++i) {
    header.push_back(record.signal_info[i].name);
    cols.push_back(&record.signals[i]);
    signals.push_back(signal_to_json(record.signal_info[i]));
  }
  write_csv(path, header, cols);
  write_json(sidecar(path), {{"model", record.model}, {"states", record.state_names}, {"signals", signals}});
}

FullRecord read_record_csv(const std::filesystem::path& path) {
  const nlohmann::json meta = read_json(sidecar(path));
  FullRecord rec;
  rec.model = meta.value("model", "");
  rec.state_names = meta.at("states").get<std::vector<std::string>>();
  for (const auto& s : meta.at("signals")) rec.signal_info.push_back(signal_from_json(s));
  std::vector<std::string> expected{"t"};
  for (const auto& s : rec.state_names) expected.push_back(s);
  for (const auto& s : rec.signal_info) expected.push_back(s.name);
  auto [header, cols] = read_csv(path);
  if (header != expected) throw SchemaMismatch("record header does not match its sidecar in " + path.string());
  std::size_t c = 0;
  rec.time = std::move(cols[c++]);
  for (std::size_t i = 0; i < rec.state_names.size(); ++i) rec.states.push_back(std::move(cols[c++]));
  for (std::size_t i = 0; i < rec.signal_info.size(); ++i) rec.signals.push_back(std::move(cols[c++]));
  return rec;
}

ScenarioConfig default_train_scenario(ModelId) {
  ScenarioConfig s;
  s.P_m = 0.8;
  s.disturbance = {DisturbanceType::InputPowerStep, 1.0, 1e9, 0.1};
  s.seed = 1;
  return s;
}

ScenarioConfig default_test_scenario(ModelId) {
  ScenarioConfig s;
  s.P_m = 0.7;
  s.disturbance = {DisturbanceType::InputPowerStep, 2.0, 1e9, 0.15};
  s.seed = 2;
  return s;
}

}  // namespace llmdmd::bench
