#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fomo/dataset.hpp"
#include "fomo/experiment_spec.hpp"
#include "fomo/fomo_engine.hpp"
#include "fomo/orchestrator.hpp"

namespace fomo {

/// Writes into a sibling temp file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// One JSON object per (round, client) record.
std::string metrics_jsonl(const std::vector<RoundMetrics>& rounds,
                          Strategy strategy);

/// Header `requester,0,...,K-1`; one row per requester.
std::string affinity_csv(const AffinityMatrix& affinity);
/// Throws FormatError on a malformed frame.
AffinityMatrix parse_affinity_csv(std::string_view text);
std::string affinity_frame_name(std::size_t round);

std::string summary_json(const ExperimentSummary& summary);
std::string partition_json(const PartitionedDataset& partition,
                           const ExperimentSpec& spec);

/// Fields of summary.json that the report needs.
struct SummaryRecord {
  std::string strategy;
  double mean_test_acc = 0.0;
  double std_test_acc = 0.0;
  std::size_t rounds = 0;
};
SummaryRecord parse_summary_json(std::string_view text);

struct PartitionRecord {
  std::vector<std::size_t> distribution_of_client;
  std::vector<std::size_t> target_of_client;
};
PartitionRecord parse_partition_json(std::string_view text);

/// Number of well-formed lines; throws FormatError on a corrupt line.
std::size_t count_metrics_records(std::string_view jsonl);

/// Affinity frames recorded while a run progresses.
struct AffinityFrames {
  std::vector<std::pair<std::size_t, AffinityMatrix>> frames;
};

/// Writes metrics.jsonl, affinity_round_{r}.csv (fomo strategies),
/// summary.json, partition.json and config.ini into `dir`.
void write_run_artifacts(const std::filesystem::path& dir,
                         const ExperimentSpec& spec,
                         const PartitionedDataset& partition,
                         const ExperimentResult& result,
                         const AffinityFrames& frames);

}  // namespace fomo
