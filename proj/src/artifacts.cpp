#include "fomo/artifacts.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "fomo/errors.hpp"

namespace fomo {
namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json optional_number(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

ordered_json number_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

ordered_json mass_json(const std::optional<AffinityMass>& mass) {
  if (!mass) return nullptr;
  // +inf ratio is stored as null; the report recomputes it from the frame.
  return ordered_json{{"intra", mass->intra},
                      {"inter", mass->inter},
                      {"ratio", number_or_null(mass->ratio)}};
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos
                                            ? std::string_view::npos
                                            : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(fmt::format("short write to '{}'", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string metrics_jsonl(const std::vector<RoundMetrics>& rounds,
                          Strategy strategy) {
  std::string out;
  for (const auto& round : rounds) {
    for (const auto& rec : round.clients) {
      ordered_json line;
      line["round"] = rec.round;
      line["client"] = rec.client;
      line["strategy"] = to_string(strategy);
      line["val_loss"] = optional_number(rec.val_loss);
      line["test_loss"] = optional_number(rec.test_loss);
      line["test_acc"] = optional_number(rec.test_acc);
      line["downloads"] = rec.downloads;
      line["weights"] = rec.weights;
      line["transfers"] = rec.transfers;
      line["self_weight"] = optional_number(rec.self_weight);
      line["explored"] = rec.explored;
      line["epsilon"] = rec.epsilon;
      out += line.dump();
      out += '\n';
    }
  }
  return out;
}

std::string affinity_frame_name(std::size_t round) {
  return fmt::format("affinity_round_{}.csv", round);
}

std::string affinity_csv(const AffinityMatrix& affinity) {
  const std::size_t k = affinity.size();
  std::string out = "requester";
  for (std::size_t j = 0; j < k; ++j) out += fmt::format(",{}", j);
  out += '\n';
  for (std::size_t i = 0; i < k; ++i) {
    out += fmt::format("{}", i);
    for (std::size_t j = 0; j < k; ++j) out += fmt::format(",{}", affinity.at(i, j));
    out += '\n';
  }
  return out;
}

AffinityMatrix parse_affinity_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    if (nl > start) lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.empty()) {
    throw FormatError(FormatError::Kind::kTruncated, "affinity frame is empty");
  }
  const auto header = split_fields(lines[0]);
  if (header.empty() || header[0] != "requester") {
    throw FormatError(FormatError::Kind::kMalformed,
                      "affinity frame: header must start with 'requester'");
  }
  const std::size_t k = header.size() - 1;
  if (lines.size() != k + 1) {
    throw FormatError(FormatError::Kind::kCountMismatch,
                      fmt::format("affinity frame: {} columns but {} rows", k,
                                  lines.size() - 1));
  }
  AffinityMatrix out(k);
  std::vector<double> row(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto cells = split_fields(lines[i + 1]);
    if (cells.size() != k + 1) {
      throw FormatError(FormatError::Kind::kCountMismatch,
                        fmt::format("affinity frame: row {} has {} cells", i,
                                    cells.size()));
    }
    for (std::size_t j = 0; j < k; ++j) {
      const auto& c = cells[j + 1];
      const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), row[j]);
      if (ec != std::errc{} || ptr != c.data() + c.size()) {
        throw FormatError(FormatError::Kind::kMalformed,
                          fmt::format("affinity frame: bad value '{}'", c));
      }
    }
    out.set_row(i, row);
  }
  return out;
}

std::string summary_json(const ExperimentSummary& s) {
  ordered_json j;
  j["strategy"] = s.strategy;
  j["rounds"] = s.rounds;
  ordered_json accs = ordered_json::array();
  for (const auto& a : s.final_test_acc) accs.push_back(optional_number(a));
  j["final_test_acc"] = accs;
  j["mean_test_acc"] = s.mean_test_acc;
  j["std_test_acc"] = s.std_test_acc;
  j["mean_test_loss"] = number_or_null(s.mean_test_loss);
  j["communications_per_client"] = s.communications_per_client;
  j["local_epochs_per_client"] = s.local_epochs_per_client;
  j["total_transfers"] = s.total_transfers;
  j["max_round_transfers"] = s.max_round_transfers;
  j["emd"] = s.emd;
  j["affinity_train_groups"] = mass_json(s.affinity_train_groups);
  j["affinity_target_groups"] = mass_json(s.affinity_target_groups);
  if (s.dp) {
    j["dp"] = ordered_json{{"noise_multiplier", s.dp->noise_multiplier},
                           {"clip_norm", s.dp->clip_norm},
                           {"delta", s.dp->delta},
                           {"max_steps", s.dp->max_steps},
                           {"sample_rate", s.dp->sample_rate}};
  } else {
    j["dp"] = nullptr;
  }
  return j.dump(2) + "\n";
}

std::string partition_json(const PartitionedDataset& partition,
                           const ExperimentSpec& spec) {
  ordered_json j;
  j["scheme"] = partition.scheme;
  j["distributions"] = partition.distributions;
  j["distribution_of_client"] = partition.distribution_of_client;
  j["target_of_client"] = partition.target_of_client;
  ordered_json train = ordered_json::array();
  ordered_json val = ordered_json::array();
  ordered_json test = ordered_json::array();
  for (const auto& c : partition.clients) {
    train.push_back(c.train);
    val.push_back(c.val);
    test.push_back(c.test);
  }
  j["client_train"] = std::move(train);
  j["client_val"] = std::move(val);
  j["client_test"] = std::move(test);
  j["seed"] = partition.seed;
  j["config"] = render_spec(spec);
  return j.dump() + "\n";
}

SummaryRecord parse_summary_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SummaryRecord r;
    r.strategy = j.at("strategy").get<std::string>();
    r.mean_test_acc = j.at("mean_test_acc").get<double>();
    r.std_test_acc = j.at("std_test_acc").get<double>();
    r.rounds = j.at("rounds").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed,
                      fmt::format("summary.json: {}", e.what()));
  }
}

PartitionRecord parse_partition_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    PartitionRecord r;
    r.distribution_of_client =
        j.at("distribution_of_client").get<std::vector<std::size_t>>();
    r.target_of_client = j.at("target_of_client").get<std::vector<std::size_t>>();
    if (r.distribution_of_client.size() != r.target_of_client.size()) {
      throw FormatError(FormatError::Kind::kCountMismatch,
                        "partition.json: client arrays differ in length");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed,
                      fmt::format("partition.json: {}", e.what()));
  }
}

std::size_t count_metrics_records(std::string_view jsonl) {
  std::size_t count = 0;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < jsonl.size()) {
    auto nl = jsonl.find('\n', start);
    if (nl == std::string_view::npos) {
      throw FormatError(FormatError::Kind::kTruncated,
                        fmt::format("metrics.jsonl: line {} is unterminated",
                                    line_no + 1));
    }
    ++line_no;
    const auto line = jsonl.substr(start, nl - start);
    start = nl + 1;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("round") ||
        !j.contains("client")) {
      throw FormatError(FormatError::Kind::kMalformed,
                        fmt::format("metrics.jsonl: line {} is corrupt", line_no));
    }
    ++count;
  }
  return count;
}

void write_run_artifacts(const std::filesystem::path& dir,
                         const ExperimentSpec& spec,
                         const PartitionedDataset& partition,
                         const ExperimentResult& result,
                         const AffinityFrames& frames) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "config.ini", render_spec(spec));
  write_file_atomic(dir / "partition.json", partition_json(partition, spec));
  for (const auto& [round, matrix] : frames.frames) {
    write_file_atomic(dir / affinity_frame_name(round), affinity_csv(matrix));
  }
  write_file_atomic(dir / "metrics.jsonl",
                    metrics_jsonl(result.rounds, spec.federation.strategy));
  write_file_atomic(dir / "summary.json", summary_json(result.summary));
}

}  // namespace fomo
