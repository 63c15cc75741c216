#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "llmdmd/commands.hpp"

namespace cli = llmdmd::cli;

int main(int argc, char** argv) {
  CLI::App app{"Equation discovery for power-system component dynamics"};
  app.require_subcommand(1);

  std::string model, variant, replay_mode = "auto", label;
  std::string scenario, config, data, out, model_file;
  std::vector<std::string> runs, excluded;
  double threshold = 0.05;
  int iterations = 10;

  auto* gen = app.add_subcommand("gen-data", "simulate a benchmark and write train/test datasets");
  gen->add_option("--model", model, "swing2 | oneaxis3 | type1order5")->required();
  gen->add_option("--scenario", scenario, "scenario JSON file");
  gen->add_option("--out", out, "output directory")->required();

  auto* disc = app.add_subcommand("discover", "run the DE and AE discovery loops");
  disc->add_option("--config", config, "run configuration JSON")->required();
  disc->add_option("--data", data, "directory written by gen-data")->required();
  disc->add_option("--out", out, "run output directory")->required();

  auto* base = app.add_subcommand("baseline", "fit a SINDy baseline");
  base->add_option("--variant", variant, "accurate | overcomplete | missing")->required();
  base->add_option("--data", data, "directory written by gen-data")->required();
  base->add_option("--out", out, "output directory")->required();
  base->add_option("--lambda", threshold, "STLSQ threshold");
  base->add_option("--iters", iterations, "STLSQ iterations");
  base->add_option("--exclude", excluded, "variables removed by the missing variant");

  auto* eval = app.add_subcommand("evaluate", "replay a model on the test scenario and score it");
  eval->add_option("--model", model_file, "model.json from discover or baseline")->required();
  eval->add_option("--data", data, "directory written by gen-data")->required();
  eval->add_option("--out", out, "report JSON path")->required();
  eval->add_option("--replay", replay_mode, "auto | recorded | closed_loop | network");
  eval->add_option("--label", label, "row label in reports");

  auto* rep = app.add_subcommand("report", "merge evaluation reports into a comparison table");
  rep->add_option("--runs", runs, "report files or run directories")->required();
  rep->add_option("--out", out, "merged JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) {
      cli::gen_data(model, scenario.empty() ? std::nullopt : std::optional<cli::fs::path>(scenario), out);
    } else if (disc->parsed()) {
      std::cout << cli::discover(config, data, out).dump(2) << '\n';
    } else if (base->parsed()) {
      cli::BaselineOptions opt;
      opt.threshold = threshold;
      opt.iterations = iterations;
      opt.excluded = excluded;
      cli::baseline(variant, data, out, opt);
    } else if (eval->parsed()) {
      cli::EvaluateOptions opt;
      opt.replay_mode = replay_mode;
      opt.label = label;
      std::cout << llmdmd::format_table({cli::evaluate(model_file, data, out, opt)});
    } else if (rep->parsed()) {
      std::vector<cli::fs::path> paths(runs.begin(), runs.end());
      std::cout << cli::report(paths, out.empty() ? std::nullopt : std::optional<cli::fs::path>(out));
    }
  } catch (const std::exception& e) {
    std::cerr << cli::error_json(e).dump() << '\n';
    return 1;
  }
  return 0;
}
