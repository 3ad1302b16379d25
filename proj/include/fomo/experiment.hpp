#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fomo/artifacts.hpp"
#include "fomo/experiment_spec.hpp"
#include "fomo/orchestrator.hpp"

namespace fomo {

/// Loads the dataset and applies partition, train/val split, optional data
/// sharing (fedavg_share) and optional target shuffling. All seeds derive
/// from federation.seed.
PartitionedDataset build_partition(const ExperimentSpec& spec);
Federation build_federation(const ExperimentSpec& spec);

struct RunOutput {
  Federation federation;
  ExperimentResult result;
  AffinityFrames frames;
};

/// Runs the experiment in memory, recording affinity frames for fomo
/// strategies.
RunOutput execute(const ExperimentSpec& spec);

/// Runs and writes artifacts. Refuses (ConfigError on output.dir) to write
/// into a non-empty directory unless `force` is set.
ExperimentSummary run_to_directory(const ExperimentSpec& spec,
                                   const std::filesystem::path& out, bool force);

struct SweepCell {
  std::size_t index = 0;
  std::vector<std::pair<std::string, std::string>> assignment;
  std::filesystem::path dir;
  bool ok = false;
  std::string error;
  ExperimentSummary summary;
};

/// Cartesian product of the sweep axes (first axis varies slowest).
std::vector<ExperimentSpec> expand_sweep(
    const ExperimentSpec& spec,
    std::vector<std::vector<std::pair<std::string, std::string>>>* assignments =
        nullptr);

/// One cell_NNN subdirectory per cell plus sweep_summary.csv. Failed cells
/// are recorded and the sweep goes on.
std::vector<SweepCell> run_sweep(const ExperimentSpec& spec,
                                 const std::filesystem::path& out,
                                 std::size_t jobs, bool force);

struct ReportRow {
  std::string strategy;
  std::string cell;  // swept values other than seed and strategy
  std::size_t runs = 0;
  double mean_acc = 0.0;
  double std_acc = 0.0;  // over runs (seeds)
  std::optional<AffinityMass> train_mass;
  std::optional<AffinityMass> target_mass;
};

/// Reads a run or sweep directory, writes `report.csv` into it and returns
/// the rows. Missing or corrupt artifacts raise FormatError or Error.
std::vector<ReportRow> build_report(const std::filesystem::path& dir);
void print_report(const std::vector<ReportRow>& rows, std::ostream& out);

}  // namespace fomo
