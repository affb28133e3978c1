// Command-line front end: run, sweep, verify, mnist.
#include <CLI11.hpp>
#include <fmt/format.h>
#include <iostream>
#include <json.hpp>

#include "slowcal/config.hpp"
#include "slowcal/data.hpp"
#include "slowcal/errors.hpp"
#include "slowcal/runner.hpp"
#include "slowcal/verify.hpp"

namespace {

enum ExitCode { kOk = 0, kDiverged = 1, kConfigError = 2, kVerifyFailed = 3 };

slowcal::ExperimentSpec load(const std::string& path, const std::string& out) {
  auto spec = slowcal::load_spec(path);
  slowcal::apply_env_overrides(spec);
  if (!out.empty()) spec.output_dir = out;
  return spec;
}

void print_cells(const slowcal::ExperimentResult& result) {
  for (const auto& cell : result.cells) {
    double mean = 0.0;
    for (double v : cell.final_excess_loss) mean += v;
    mean /= static_cast<double>(cell.final_excess_loss.size());
    std::cout << fmt::format("{:<15} M={:<3} K={:<4} R={:<5} eta={:<12.6g} final excess loss {:.6g}{}\n",
                             slowcal::to_string(cell.algorithm), cell.machines, cell.local_steps, cell.rounds,
                             cell.eta, mean,
                             cell.diverged ? fmt::format(" ({} diverged)", cell.diverged) : "");
  }
}

int finish(const slowcal::ExperimentResult& result) {
  print_cells(result);
  std::cout << "wrote " << result.metrics_csv.string() << " and " << result.manifest.string() << "\n";
  return result.any_diverged ? kDiverged : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local Anytime-SGD experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::string inject;

  auto* run = app.add_subcommand("run", "Run one (algorithm, M, K) over the configured seeds");
  run->add_option("--config", config_path, "JSON config file")->required();
  run->add_option("--out", out_dir, "Output directory (overrides config and SLOWCAL_OUT_DIR)");

  auto* sweep = app.add_subcommand("sweep", "Run the cartesian product of algorithms, M and K");
  sweep->add_option("--config", config_path, "JSON config file")->required();
  sweep->add_option("--out", out_dir, "Output directory")->required();

  auto* verify = app.add_subcommand("verify", "Run the built-in identity and invariant checks");
  verify->add_option("--inject", inject, "Deliberate fault: gamma-off-by-one | alpha-shift")
      ->check(CLI::IsMember({"gamma-off-by-one", "alpha-shift"}));

  auto* mnist = app.add_subcommand("mnist", "Dirichlet-partitioned MNIST logistic regression");
  mnist->add_option("--data", data_dir, "Directory with the four IDX files")->required();
  mnist->add_option("--config", config_path, "JSON config file")->required();
  mnist->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      auto spec = load(config_path, out_dir);
      slowcal::require_single_cell(spec);
      return finish(slowcal::run_experiment(spec));
    }
    if (*sweep) {
      return finish(slowcal::run_experiment(load(config_path, out_dir)));
    }
    if (*verify) {
      slowcal::VerifyOptions options;
      options.fault.gamma_off_by_one = inject == "gamma-off-by-one";
      options.fault.alpha_shift_at_gradient = inject == "alpha-shift";
      const auto report = slowcal::verify_suite(options);
      slowcal::print_report(std::cout, report);
      return report.passed() ? kOk : kVerifyFailed;
    }
    if (*mnist) {
      auto spec = load(config_path, out_dir);
      if (spec.problem.kind != slowcal::ProblemKind::mnist_logistic) {
        throw slowcal::ConfigError("mnist subcommand expects problem = mnist-logistic");
      }
      const auto data = slowcal::load_mnist(data_dir);
      const auto result = slowcal::run_mnist(spec, data);
      for (const auto& cell : result.cells) {
        double acc = 0.0;
        for (double a : cell.test_accuracy) acc += a;
        acc /= static_cast<double>(cell.test_accuracy.size());
        std::cout << fmt::format("{:<15} M={:<3} K={:<4} R={:<5} eta={:<8.4g} test accuracy {:.4f}\n",
                                 slowcal::to_string(cell.algorithm), cell.machines, cell.local_steps, cell.rounds,
                                 cell.eta, acc);
      }
      return result.any_diverged ? kDiverged : kOk;
    }
  } catch (const slowcal::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const slowcal::FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}
