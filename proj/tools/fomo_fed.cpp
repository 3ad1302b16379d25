// fomo-fed: run, sweep and report personalised federated learning
// experiments.

#include <charconv>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "fomo/errors.hpp"
#include "fomo/experiment.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

std::optional<std::uint64_t> seed_from_env() {
  const char* raw = std::getenv("FOMO_FED_SEED");
  if (!raw || !*raw) return std::nullopt;
  const std::string text(raw);
  std::uint64_t seed = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw fomo::ConfigError("FOMO_FED_SEED",
                            fmt::format("expected a non-negative integer, got '{}'", text));
  }
  return seed;
}

std::filesystem::path output_dir(const fomo::ExperimentSpec& spec,
                                 const std::string& override_dir) {
  if (!override_dir.empty()) return override_dir;
  if (!spec.output_dir.empty()) return spec.output_dir;
  throw fomo::ConfigError("output.dir", "no output directory (set [output] dir or --out)");
}

int cmd_run(const std::string& spec_path, const std::string& out, bool force) {
  const auto spec = fomo::load_spec(spec_path, seed_from_env());
  const auto dir = output_dir(spec, out);
  const auto summary = fomo::run_to_directory(spec, dir, force);
  std::cout << fmt::format("{}: mean test accuracy {:.4f} over {} rounds -> {}\n",
                           summary.strategy, summary.mean_test_acc, summary.rounds,
                           dir.string());
  return 0;
}

int cmd_sweep(const std::string& spec_path, const std::string& out,
              std::size_t jobs, bool force) {
  const auto spec = fomo::load_spec(spec_path, seed_from_env());
  const auto dir = output_dir(spec, out);
  const auto cells = fomo::run_sweep(spec, dir, jobs, force);
  std::size_t failed = 0;
  for (const auto& cell : cells) {
    if (cell.ok) {
      std::cout << fmt::format("cell_{:03} ok {:.4f}\n", cell.index,
                               cell.summary.mean_test_acc);
    } else {
      ++failed;
      std::cerr << fmt::format("cell_{:03} failed: {}\n", cell.index, cell.error);
    }
  }
  std::cout << fmt::format("{} cells, {} failed -> {}\n", cells.size(), failed,
                           dir.string());
  return failed ? kExitRuntime : 0;
}

int cmd_report(const std::string& dir) {
  const auto rows = fomo::build_report(dir);
  fomo::print_report(rows, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalised federated learning simulator"};
  app.require_subcommand(1);

  std::string spec_path, out_dir, report_dir;
  bool force = false;
  std::size_t jobs = 1;

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("spec", spec_path, "Experiment spec")->required();
  run->add_option("--out", out_dir, "Output directory");
  run->add_flag("--force", force, "Overwrite a non-empty output directory");

  auto* sweep = app.add_subcommand("sweep", "Run every cell of a sweep");
  sweep->add_option("spec", spec_path, "Experiment spec with a [sweep] section")
      ->required();
  sweep->add_option("--jobs", jobs, "Cells run concurrently")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--out", out_dir, "Output directory");
  sweep->add_flag("--force", force, "Overwrite a non-empty output directory");

  auto* report = app.add_subcommand("report", "Summarise a run or sweep directory");
  report->add_option("dir", report_dir, "Run or sweep directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(spec_path, out_dir, force);
    if (*sweep) return cmd_sweep(spec_path, out_dir, jobs, force);
    return cmd_report(report_dir);
  } catch (const fomo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
