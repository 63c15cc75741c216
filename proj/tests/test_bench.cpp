#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "llmdmd/bench.hpp"

using namespace llmdmd;
using namespace llmdmd::bench;

namespace {

const ModelId kAll[] = {ModelId::Swing2, ModelId::OneAxis3, ModelId::Type1Order5};

ScenarioConfig quiet(ModelId id) {
  auto s = default_train_scenario(id);
  s.disturbance.type = DisturbanceType::None;
  return s;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("llmdmd_test_bench_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("equilibrium is a fixed point for every model") {
  for (ModelId id : kAll) {
    const auto model = BenchmarkModel::make(id);
    const auto scen = quiet(id);
    const auto c = scen.conditions_at(0.0, model.params());
    const auto x = model.equilibrium(c);
    std::vector<double> dx(x.size());
    model.rhs(x, c, dx);
    for (double d : dx) CHECK(std::abs(d) < 1e-10);
    const auto rec = simulate(model, scen);
    for (std::size_t s = 0; s < rec.states.size(); ++s) {
      for (double v : rec.states[s]) CHECK(std::abs(v - x[s]) <= 1e-8);
    }
  }
}

TEST_CASE("swing2 stays constant to 1e-10 without a disturbance") {
  const auto model = BenchmarkModel::make(ModelId::Swing2);
  const auto rec = simulate(model, quiet(ModelId::Swing2));
  for (const auto& st : rec.states) {
    for (double v : st) CHECK(std::abs(v - st.front()) <= 1e-10);
  }
}

TEST_CASE("swing2 oscillates after a power step and settles") {
  const auto model = BenchmarkModel::make(ModelId::Swing2);
  const auto rec = simulate(model, default_train_scenario(ModelId::Swing2));
  const auto& delta = rec.state("delta");
  const auto ddelta = differentiate(delta, 0.01);
  double early = 0.0, late = 0.0;
  for (std::size_t i = 100; i < 300; ++i) early = std::max(early, std::abs(ddelta[i]));
  for (std::size_t i = 800; i < ddelta.size(); ++i) late = std::max(late, std::abs(ddelta[i]));
  CHECK(early > 0.0);
  CHECK(late < 0.5 * early);
  CHECK(amplitude(delta) > 0.01);
}

TEST_CASE("RK4 self-convergence order on swing2") {
  const auto model = BenchmarkModel::make(ModelId::Swing2);
  auto scen = quiet(ModelId::Swing2);
  scen.total_time = 2.0;
  auto x0 = model.equilibrium(scen.conditions_at(0.0, model.params()));
  x0[0] += 0.5;
  std::vector<FullRecord> runs;
  for (double h : {0.02, 0.01, 0.005}) {
    scen.step = h;
    runs.push_back(simulate_from(model, scen, x0));
  }
  // Max-norm differences on the coarse grid between successive halvings.
  double e1 = 0.0, e2 = 0.0;
  for (std::size_t k = 0; k < runs[0].size(); ++k) {
    for (std::size_t s = 0; s < runs[0].states.size(); ++s) {
      e1 = std::max(e1, std::abs(runs[0].states[s][k] - runs[1].states[s][2 * k]));
      e2 = std::max(e2, std::abs(runs[1].states[s][2 * k] - runs[2].states[s][4 * k]));
    }
  }
  const double order = std::log2(e1 / e2);
  MESSAGE("observed RK4 order " << order);
  CHECK(order >= 3.8);
}

TEST_CASE("noise-free differentiation matches the right-hand side") {
  const auto model = BenchmarkModel::make(ModelId::Swing2);
  auto scen = default_train_scenario(ModelId::Swing2);
  scen.noise_fraction = 0.0;
  scen.disturbance.start = 0.0;
  auto rec = std::make_shared<const FullRecord>(simulate(model, scen));
  const auto ds = make_dataset(rec, scen);
  const auto names = model.state_names();
  std::vector<std::vector<double>> rhs(names.size(), std::vector<double>(rec->size()));
  for (std::size_t k = 0; k < rec->size(); ++k) {
    std::vector<double> x(names.size()), dx(names.size());
    for (std::size_t s = 0; s < names.size(); ++s) x[s] = rec->states[s][k];
    model.rhs(x, scen.conditions_at(rec->time[k], model.params()), dx);
    for (std::size_t s = 0; s < names.size(); ++s) rhs[s][k] = dx[s];
  }
  const double omega_b = model.params().omega_b();
  for (std::size_t s = 0; s < names.size(); ++s) {
    const auto& fd = ds.derivative(names[s]);
    double err = 0.0;
    for (std::size_t k = 1; k + 1 < fd.size(); ++k) err = std::max(err, std::abs(fd[k] - rhs[s][k]));
    const double rel = err / max_abs(rhs[s]);
    MESSAGE(names[s] << " max relative derivative error " << rel);
    CHECK(rel < 1e-3);
  }
  const auto& omega = rec->state("omega");
  const auto& dd = ds.derivative("delta");
  double err = 0.0, scale = 0.0;
  for (std::size_t k = 1; k + 1 < dd.size(); ++k) {
    err = std::max(err, std::abs(dd[k] - omega_b * (omega[k] - 1.0)));
    scale = std::max(scale, std::abs(omega_b * (omega[k] - 1.0)));
  }
  CHECK(err / scale < 1e-3);
}

TEST_CASE("finite differences") {
  const std::vector<double> flat(10, 3.0);
  for (double d : differentiate(flat, 0.1)) CHECK(d == 0.0);
  std::vector<double> quad;
  for (int i = 0; i < 6; ++i) quad.push_back(0.5 * i * i);
  const auto d = differentiate(quad, 1.0);
  for (int i = 0; i < 6; ++i) CHECK(d[static_cast<std::size_t>(i)] == doctest::Approx(i));
  CHECK(amplitude(std::vector<double>{1.0, -2.0, 0.5}) == 3.0);
}

TEST_CASE("noise is reproducible per seed") {
  const auto model = BenchmarkModel::make(ModelId::OneAxis3);
  auto scen = default_train_scenario(ModelId::OneAxis3);
  auto rec = std::make_shared<const FullRecord>(simulate(model, scen));
  const auto a = make_dataset(rec, scen);
  const auto b = make_dataset(rec, scen);
  scen.seed += 1;
  const auto c = make_dataset(rec, scen);
  for (const auto& n : model.state_names()) {
    CHECK(a.state(n) == b.state(n));
    CHECK(a.derivative(n) == b.derivative(n));
    CHECK(a.state(n) != c.state(n));
  }
  const auto& delta = rec->state("delta");
  double resid2 = 0.0;
  for (std::size_t k = 0; k < delta.size(); ++k) resid2 += std::pow(a.state("delta")[k] - delta[k], 2);
  const double sd = std::sqrt(resid2 / static_cast<double>(delta.size()));
  CHECK(sd == doctest::Approx(0.01 * amplitude(delta)).epsilon(0.1));
}

TEST_CASE("revealing hidden signals") {
  const auto model = BenchmarkModel::make(ModelId::OneAxis3);
  const auto scen = default_train_scenario(ModelId::OneAxis3);
  auto rec = std::make_shared<const FullRecord>(simulate(model, scen));
  auto ds = make_dataset(rec, scen);
  CHECK(ds.revealed_names().empty());
  CHECK_FALSE(ds.batch().has_column("i_d"));
  ds.reveal({"i_d"});
  CHECK(ds.batch().has_column("i_d"));
  CHECK(ds.revealed("i_d") == rec->signal("i_d"));
  ds.reveal({"i_d"});
  CHECK(ds.revealed_names().size() == 1);
  CHECK_THROWS_AS(ds.reveal({"stator_flux"}), UnknownSignal);
}

TEST_CASE("true swing equation closes on revealed signals") {
  const auto model = BenchmarkModel::make(ModelId::Swing2);
  auto scen = default_train_scenario(ModelId::Swing2);
  scen.noise_fraction = 0.0;
  scen.disturbance.start = 0.0;
  auto rec = std::make_shared<const FullRecord>(simulate(model, scen));
  auto ds = make_dataset(rec, scen);
  ds.reveal({"P_e", "P_m"});
  const SymbolScope scope({"delta", "omega"}, {"P_m", "P_e"});
  const auto sk = parse("domega/dt = (P_m - P_e - p0*(omega - 1))/p1", scope, {"omega"});
  const std::vector<double> p{model.params().D, 2.0 * model.params().H};
  const auto batch = ds.batch();
  const auto r = evaluate(sk, p, batch, false);
  REQUIRE(r.ok());
  const auto& target = batch.column("domega_dt");
  double err = 0.0;
  for (std::size_t k = 1; k + 1 < target.size(); ++k) err = std::max(err, std::abs(r.output(0, k) - target[k]));
  CHECK(err / max_abs(target) < 1e-3);
}

TEST_CASE("electrical power of the classical model") {
  const auto model = BenchmarkModel::make(ModelId::Swing2);
  const auto& p = model.params();
  const Conditions c{0.8, 0.0, p.line_reactance};
  const std::vector<double> x{0.6, 1.0};
  const auto sig = model.signals(x, c);
  const auto names = model.catalog_names();
  const auto idx = static_cast<std::size_t>(std::find(names.begin(), names.end(), "P_e") - names.begin());
  CHECK(sig[idx] == doctest::Approx(p.E1 * p.bus_voltage / (p.xd1 + p.line_reactance) * std::sin(0.6)));
}

TEST_CASE("dataset CSV round-trip") {
  const auto dir = temp_dir("csv");
  const auto model = BenchmarkModel::make(ModelId::OneAxis3);
  const auto scen = default_train_scenario(ModelId::OneAxis3);
  auto rec = std::make_shared<const FullRecord>(simulate(model, scen));
  auto ds = make_dataset(rec, scen);
  ds.reveal({"P_e", "v_f"});
  ds.export_csv(dir / "d.csv");
  std::ifstream in(dir / "d.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,delta,omega,e_q1,ddelta_dt,domega_dt,de_q1_dt,P_e,v_f");
  const auto back = TrajectoryDataset::import_csv(dir / "d.csv", rec);
  CHECK(back.time() == ds.time());
  for (const auto& n : model.state_names()) {
    CHECK(back.state(n) == ds.state(n));
    CHECK(back.derivative(n) == ds.derivative(n));
  }
  CHECK(back.revealed_names() == ds.revealed_names());
  CHECK(back.revealed("P_e") == ds.revealed("P_e"));
  CHECK(back.metadata() == ds.metadata());
}

TEST_CASE("CSV schema errors") {
  const auto dir = temp_dir("schema");
  const auto model = BenchmarkModel::make(ModelId::Swing2);
  const auto scen = default_train_scenario(ModelId::Swing2);
  auto rec = std::make_shared<const FullRecord>(simulate(model, scen));
  make_dataset(rec, scen).export_csv(dir / "d.csv");
  {
    std::ifstream in(dir / "d.csv");
    std::string header, rest, line;
    std::getline(in, header);
    while (std::getline(in, line)) rest += line.substr(0, line.rfind(',')) + "\n";
    std::ofstream out(dir / "d.csv");
    out << header.substr(0, header.rfind(',')) << "\n" << rest;
  }
  CHECK_THROWS_AS(TrajectoryDataset::import_csv(dir / "d.csv", rec), SchemaMismatch);
  CHECK_THROWS_AS(TrajectoryDataset::import_csv(dir / "missing.csv", rec), IoError);
}

TEST_CASE("record CSV round-trip") {
  const auto dir = temp_dir("record");
  const auto model = BenchmarkModel::make(ModelId::Type1Order5);
  const auto rec = simulate(model, default_test_scenario(ModelId::Type1Order5));
  write_record_csv(rec, dir / "r.csv");
  const auto back = read_record_csv(dir / "r.csv");
  CHECK(back.model == rec.model);
  CHECK(back.time == rec.time);
  CHECK(back.states == rec.states);
  CHECK(back.signals == rec.signals);
  CHECK(back.state_names == rec.state_names);
}

TEST_CASE("name resolution") {
  const auto model = BenchmarkModel::make(ModelId::OneAxis3);
  CHECK(model.resolve_name("P_e") == "P_e");
  CHECK(model.resolve_name("p_e") == "P_e");
  CHECK(model.resolve_name("Pe") == "P_e");
  CHECK(model.resolve_name("electrical power") == "P_e");
  CHECK(model.resolve_name("mechanical power") == "P_m");
  CHECK(model.resolve_name("Id") == "i_d");
  CHECK(model.resolve_name("stator_flux").empty());
  CHECK(BenchmarkModel::make(ModelId::Swing2).resolve_name("v_f").empty());
}

TEST_CASE("scenarios") {
  auto s = default_train_scenario(ModelId::Swing2);
  const MachineParams p;
  CHECK(s.conditions_at(0.0, p).P_m == 0.8);
  CHECK(s.conditions_at(s.disturbance.start, p).P_m == doctest::Approx(0.8 + s.disturbance.magnitude));
  CHECK(s.sample_count() == 1001);
  const auto j = to_json(s);
  const auto back = scenario_from_json(j);
  CHECK(to_json(back) == j);

  ScenarioConfig r;
  r.disturbance = {DisturbanceType::ReactanceStep, 1.0, 0.1, 0.2};
  CHECK(r.conditions_at(0.5, p).line_reactance == p.line_reactance);
  CHECK(r.conditions_at(1.05, p).line_reactance == doctest::Approx(p.line_reactance + 0.2));
  CHECK(r.conditions_at(1.2, p).line_reactance == p.line_reactance);

  ScenarioConfig bad;
  bad.step = -0.01;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ScenarioConfig{};
  bad.noise_fraction = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(model_from_string("ieee39"), std::invalid_argument);
}

TEST_CASE("simulation is deterministic") {
  const auto model = BenchmarkModel::make(ModelId::Type1Order5);
  const auto scen = default_train_scenario(ModelId::Type1Order5);
  auto a = std::make_shared<const FullRecord>(simulate(model, scen));
  auto b = std::make_shared<const FullRecord>(simulate(model, scen));
  CHECK(a->states == b->states);
  const auto da = make_dataset(a, scen);
  const auto db = make_dataset(b, scen);
  for (const auto& n : model.state_names()) CHECK(da.state(n) == db.state(n));
}
