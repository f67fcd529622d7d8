#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "exarnn/config.hpp"
#include "exarnn/experiment.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kDivergence = 3, kData = 4 };

int cmd_run(const std::string& config_path, const std::string& out, const std::optional<std::uint64_t>& seed) {
  auto cfg = exarnn::load_config(config_path);
  const std::string dir = out.empty() ? exarnn::resolve_path(cfg, cfg.output_dir) : out;
  auto result = exarnn::run_experiment(cfg, seed);
  exarnn::write_outputs(result, dir);
  std::cout << exarnn::metrics_csv(result.metrics);
  return kOk;
}

int cmd_compare(const std::vector<std::string>& paths, bool parallel, const std::string& out) {
  std::vector<std::pair<std::string, exarnn::ExperimentConfig>> configs;
  for (const auto& p : paths) configs.emplace_back(p, exarnn::load_config(p));
  const auto rows = exarnn::compare(configs, parallel);
  const std::string csv = exarnn::comparison_csv(rows);
  if (!out.empty()) exarnn::io::write_file(out, csv);
  std::cout << csv;
  std::cerr << exarnn::comparison_table(rows);
  return kOk;
}

int cmd_synth(const std::string& spec_path, const std::vector<std::string>& out) {
  std::string text;
  try {
    text = exarnn::io::read_file(spec_path);
  } catch (const exarnn::DataError& e) {
    throw exarnn::ConfigError(e.what());
  }
  const auto spec = exarnn::parse_synthetic_spec(text);
  const auto syn = exarnn::synth_regime_series(spec);
  exarnn::export_csv(syn.series, out.at(0), out.at(1));
  std::cout << "file,rows\n"
            << out[0] << ',' << syn.series.power.size() << '\n'
            << out[1] << ',' << syn.series.env.size() << '\n';
  return kOk;
}

int cmd_gradcheck(const std::string& config_path, std::size_t steps, double tolerance, double epsilon) {
  auto cfg = exarnn::load_config(config_path);
  const auto data = exarnn::prepare_data(cfg);
  auto model = exarnn::make_model(cfg, data, cfg.seed);
  exarnn::AlignedSeries probe = exarnn::truncate_rows(data.train, steps);
  exarnn::GradCheckOptions opts;
  opts.tolerance = tolerance;
  opts.epsilon = epsilon;
  const auto report = exarnn::grad_check(model, probe, opts);
  std::cout << "checked,max_relative_error,worst,analytic,numeric,passed\n"
            << report.checked << ',' << exarnn::io::format_double(report.max_relative_error) << ','
            << report.worst << ',' << exarnn::io::format_double(report.worst_analytic) << ','
            << exarnn::io::format_double(report.worst_numeric) << ','
            << (report.passed ? "true" : "false") << '\n';
  return report.passed ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ExARNN forecasting experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "train one model and write metrics, predictions and loss history");
  run->add_option("--config", config_path, "experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory (default: from config)");
  run->add_option("--seed", seed, "override the model seed");

  std::vector<std::string> config_paths;
  bool parallel = false;
  std::string compare_out;
  auto* cmp = app.add_subcommand("compare", "run several configs and print one comparison table");
  cmp->add_option("--configs", config_paths, "experiment configs")->required()->check(CLI::ExistingFile);
  cmp->add_flag("--parallel", parallel, "run the configs concurrently");
  cmp->add_option("--out", compare_out, "also write the comparison CSV here");

  std::string spec_path;
  std::vector<std::string> synth_out;
  auto* syn = app.add_subcommand("synth", "write the synthetic benchmark as a power/environment CSV pair");
  syn->add_option("--spec", spec_path, "file with a [synthetic] section")->required()->check(CLI::ExistingFile);
  syn->add_option("--out", synth_out, "power CSV and environment CSV")->required()->expected(2);

  std::size_t gc_steps = 16;
  double gc_tol = 1e-4;
  double gc_eps = exarnn::GradCheckOptions{}.epsilon;
  auto* gc = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  gc->add_option("--config", config_path, "experiment config")->required()->check(CLI::ExistingFile);
  gc->add_option("--steps", gc_steps, "power steps of the training split to use")->check(CLI::Range(2, 1 << 20));
  gc->add_option("--tolerance", gc_tol, "maximum relative error");
  gc->add_option("--epsilon", gc_eps, "finite-difference step")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir, seed);
    if (*cmp) return cmd_compare(config_paths, parallel, compare_out);
    if (*syn) return cmd_synth(spec_path, synth_out);
    if (*gc) return cmd_gradcheck(config_path, gc_steps, gc_tol, gc_eps);
  } catch (const exarnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const exarnn::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const exarnn::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const exarnn::DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
