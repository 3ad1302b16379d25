#include "fomo/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include <fmt/format.h>

#include "fomo/errors.hpp"
#include "fomo/rng.hpp"

namespace fomo {
namespace {

namespace fs = std::filesystem;

Dataset load_source(const ExperimentSpec& spec) {
  const DatasetSpec& d = spec.dataset;
  const std::uint64_t seed = spec.federation.seed;
  if (d.source == "synthetic") {
    SyntheticSpec s = d.synthetic;
    s.seed = d.seed ? *d.seed : derive_seed(seed, "synthetic");
    return generate_synthetic(s);
  }
  if (d.source == "idx") {
    Dataset train = load_idx(d.images, d.labels);
    if (!d.test_images.empty()) {
      return concat_train_test(train, load_idx(d.test_images, d.test_labels));
    }
    return assign_test_split(std::move(train), d.test_fraction,
                             derive_seed(seed, "test_split"));
  }
  Dataset data = load_csv(d.csv);
  const bool has_test = std::any_of(data.split.begin(), data.split.end(),
                                    [](SplitTag t) { return t == SplitTag::kTestPool; });
  if (has_test) return data;
  return assign_test_split(std::move(data), d.test_fraction,
                           derive_seed(seed, "test_split"));
}

bool directory_has_entries(const fs::path& dir) {
  return fs::exists(dir) && fs::is_directory(dir) &&
         fs::directory_iterator(dir) != fs::directory_iterator();
}

void prepare_output(const fs::path& out, bool force) {
  if (fs::exists(out) && !fs::is_directory(out)) {
    throw ConfigError("output.dir",
                      fmt::format("'{}' exists and is not a directory", out.string()));
  }
  if (directory_has_entries(out) && !force) {
    throw ConfigError("output.dir",
                      fmt::format("'{}' is not empty; pass --force to overwrite",
                                  out.string()));
  }
  fs::create_directories(out);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::optional<std::size_t> last_frame_round(const fs::path& dir) {
  std::optional<std::size_t> best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string prefix = "affinity_round_";
    if (name.rfind(prefix, 0) != 0 || entry.path().extension() != ".csv") continue;
    const std::string digits =
        name.substr(prefix.size(), name.size() - prefix.size() - 4);
    if (digits.empty() ||
        !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      continue;
    }
    const std::size_t r = std::stoul(digits);
    if (!best || r > *best) best = r;
  }
  return best;
}

struct RunRecord {
  SummaryRecord summary;
  std::string cell;
  std::optional<AffinityMass> train_mass;
  std::optional<AffinityMass> target_mass;
};

RunRecord read_run(const fs::path& dir, const std::vector<std::string>& axis_keys) {
  for (const char* name : {"metrics.jsonl", "summary.json", "config.ini"}) {
    if (!fs::exists(dir / name)) {
      throw Error(fmt::format("'{}' is missing", (dir / name).string()));
    }
  }
  count_metrics_records(read_file(dir / "metrics.jsonl"));
  RunRecord rec;
  rec.summary = parse_summary_json(read_file(dir / "summary.json"));
  const ExperimentSpec spec = parse_spec(read_file(dir / "config.ini"));
  std::vector<std::string> parts;
  for (const auto& key : axis_keys) {
    if (key == "federation.seed" || key == "federation.strategy") continue;
    parts.push_back(
        fmt::format("{}={}", key, get_spec_field(spec, key).value_or("")));
  }
  rec.cell = fmt::format("{}", fmt::join(parts, ";"));

  if (const auto round = last_frame_round(dir); round && fs::exists(dir / "partition.json")) {
    const AffinityMatrix p =
        parse_affinity_csv(read_file(dir / affinity_frame_name(*round)));
    const PartitionRecord part = parse_partition_json(read_file(dir / "partition.json"));
    if (part.distribution_of_client.size() != p.size()) {
      throw FormatError(FormatError::Kind::kCountMismatch,
                        fmt::format("'{}': affinity frame and partition disagree on K",
                                    dir.string()));
    }
    std::vector<std::size_t> targets(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      targets[i] = part.distribution_of_client.at(part.target_of_client.at(i));
    }
    if (p.size() > 1) {
      rec.train_mass = affinity_mass(p, part.distribution_of_client,
                                     part.distribution_of_client);
      rec.target_mass = affinity_mass(p, targets, part.distribution_of_client);
    }
  }
  return rec;
}

std::string mass_cell(const std::optional<AffinityMass>& m, double AffinityMass::*f) {
  return m ? fmt::format("{}", (*m).*f) : std::string();
}

}  // namespace

PartitionedDataset build_partition(const ExperimentSpec& spec) {
  validate_spec(spec);
  const DatasetSpec& d = spec.dataset;
  const FederationConfig& cfg = spec.federation;
  auto data = std::make_shared<const Dataset>(load_source(spec));
  PartitionedDataset part;
  if (d.partition == "latent") {
    part = latent_partition(data, d.distributions, cfg.clients, d.pca_dims,
                            derive_seed(cfg.seed, "partition"),
                            d.samples_per_client);
  } else {
    part = pathological_partition(data, cfg.clients, d.classes_per_client,
                                  derive_seed(cfg.seed, "partition"));
  }
  part = split_train_val(part, cfg.val_fraction, derive_seed(cfg.seed, "val_split"));
  if (cfg.strategy == Strategy::kFedAvgShare) {
    part = share_data(part, cfg.share_fraction, derive_seed(cfg.seed, "share"));
  }
  if (d.shuffle_targets) {
    part = shuffle_targets(part, derive_seed(cfg.seed, "targets"));
  }
  part.validate();
  return part;
}

Federation build_federation(const ExperimentSpec& spec) {
  Federation fed;
  fed.config = spec.federation;
  fed.partition = build_partition(spec);
  fed.arch.kind = spec.model.arch;
  fed.arch.n_features = fed.partition.dataset->n_features;
  fed.arch.n_classes = fed.partition.dataset->n_classes;
  fed.arch.hidden_units = spec.model.hidden_units;
  fed.arch.validate();
  return fed;
}

RunOutput execute(const ExperimentSpec& spec) {
  RunOutput out;
  out.federation = build_federation(spec);
  const bool record = is_fomo(spec.federation.strategy);
  out.result = run_experiment(
      out.federation, [&](const RoundMetrics& m, const FederationState& state) {
        if (record) out.frames.frames.emplace_back(m.round, state.affinity);
      });
  return out;
}

ExperimentSummary run_to_directory(const ExperimentSpec& spec, const fs::path& out,
                                   bool force) {
  validate_spec(spec);
  prepare_output(out, force);
  RunOutput run = execute(spec);
  write_run_artifacts(out, spec, run.federation.partition, run.result, run.frames);
  return run.result.summary;
}

std::vector<ExperimentSpec> expand_sweep(
    const ExperimentSpec& spec,
    std::vector<std::vector<std::pair<std::string, std::string>>>* assignments) {
  std::vector<ExperimentSpec> cells{spec};
  std::vector<std::vector<std::pair<std::string, std::string>>> assigned{{}};
  for (const auto& axis : spec.sweep) {
    if (axis.values.empty()) {
      throw ConfigError("sweep." + axis.key, "axis has no values");
    }
    std::vector<ExperimentSpec> next;
    std::vector<std::vector<std::pair<std::string, std::string>>> next_assigned;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      for (const auto& value : axis.values) {
        ExperimentSpec s = cells[c];
        set_spec_field(s, axis.key, value);
        next.push_back(std::move(s));
        auto a = assigned[c];
        a.emplace_back(axis.key, value);
        next_assigned.push_back(std::move(a));
      }
    }
    cells = std::move(next);
    assigned = std::move(next_assigned);
  }
  for (auto& c : cells) c.sweep.clear();
  if (assignments) *assignments = std::move(assigned);
  return cells;
}

std::vector<SweepCell> run_sweep(const ExperimentSpec& spec, const fs::path& out,
                                 std::size_t jobs, bool force) {
  if (spec.sweep.empty()) {
    throw ConfigError("sweep", "a sweep needs at least one axis");
  }
  if (jobs == 0) throw ConfigError("jobs", "must be positive");
  std::vector<std::vector<std::pair<std::string, std::string>>> assigned;
  const auto specs = expand_sweep(spec, &assigned);
  prepare_output(out, force);
  write_file_atomic(out / "sweep.ini", render_spec(spec));

  std::vector<SweepCell> cells(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    cells[i].index = i;
    cells[i].assignment = assigned[i];
    cells[i].dir = out / fmt::format("cell_{:03}", i);
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      SweepCell& cell = cells[i];
      try {
        if (fs::exists(cell.dir)) fs::remove_all(cell.dir);
        cell.summary = run_to_directory(specs[i], cell.dir, false);
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  const std::size_t threads = std::min(jobs, specs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::string csv = "cell";
  for (const auto& axis : spec.sweep) csv += "," + axis.key;
  csv += ",status,mean_test_acc,std_test_acc,error\n";
  for (const auto& cell : cells) {
    csv += fmt::format("{:03}", cell.index);
    for (const auto& [key, value] : cell.assignment) csv += "," + csv_escape(value);
    if (cell.ok) {
      csv += fmt::format(",ok,{},{},\n", cell.summary.mean_test_acc,
                         cell.summary.std_test_acc);
    } else {
      csv += fmt::format(",failed,,,{}\n", csv_escape(cell.error));
    }
  }
  write_file_atomic(out / "sweep_summary.csv", csv);
  return cells;
}

std::vector<ReportRow> build_report(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw Error(fmt::format("'{}' is not a directory", dir.string()));
  }
  std::vector<RunRecord> runs;
  if (fs::exists(dir / "sweep.ini")) {
    const ExperimentSpec sweep = parse_spec(read_file(dir / "sweep.ini"));
    std::vector<std::string> keys;
    for (const auto& axis : sweep.sweep) keys.push_back(axis.key);
    std::vector<fs::path> cell_dirs;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() &&
          entry.path().filename().string().rfind("cell_", 0) == 0) {
        cell_dirs.push_back(entry.path());
      }
    }
    std::sort(cell_dirs.begin(), cell_dirs.end());
    for (const auto& cell : cell_dirs) {
      // Cells that failed during the sweep left no summary; skip them.
      if (!fs::exists(cell / "summary.json") && !fs::exists(cell / "metrics.jsonl")) {
        continue;
      }
      runs.push_back(read_run(cell, keys));
    }
    if (runs.empty()) {
      throw Error(fmt::format("'{}' holds no completed cells", dir.string()));
    }
  } else {
    runs.push_back(read_run(dir, {}));
  }

  std::map<std::pair<std::string, std::string>, std::vector<const RunRecord*>> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : runs) {
    const auto key = std::make_pair(r.summary.strategy, r.cell);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<ReportRow> rows;
  for (const auto& key : order) {
    const auto& members = groups[key];
    ReportRow row;
    row.strategy = key.first;
    row.cell = key.second;
    row.runs = members.size();
    const double n = static_cast<double>(members.size());
    for (const auto* m : members) row.mean_acc += m->summary.mean_test_acc / n;
    double var = 0.0;
    for (const auto* m : members) {
      const double d = m->summary.mean_test_acc - row.mean_acc;
      var += d * d;
    }
    row.std_acc = members.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    auto average = [&](auto member) -> std::optional<AffinityMass> {
      AffinityMass acc;
      for (const auto* m : members) {
        if (!(m->*member)) return std::nullopt;
        acc.intra += (m->*member)->intra / n;
        acc.inter += (m->*member)->inter / n;
      }
      acc.ratio = acc.inter > 0.0 ? acc.intra / acc.inter
                  : acc.intra > 0.0 ? std::numeric_limits<double>::infinity()
                                    : 0.0;
      return acc;
    };
    row.train_mass = average(&RunRecord::train_mass);
    row.target_mass = average(&RunRecord::target_mass);
    rows.push_back(std::move(row));
  }

  std::string csv =
      "strategy,cell,runs,mean_test_acc,std_test_acc,intra_mass,inter_mass,"
      "mass_ratio,target_intra_mass,target_inter_mass,target_mass_ratio\n";
  for (const auto& r : rows) {
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.strategy,
                       csv_escape(r.cell), r.runs, r.mean_acc, r.std_acc,
                       mass_cell(r.train_mass, &AffinityMass::intra),
                       mass_cell(r.train_mass, &AffinityMass::inter),
                       mass_cell(r.train_mass, &AffinityMass::ratio),
                       mass_cell(r.target_mass, &AffinityMass::intra),
                       mass_cell(r.target_mass, &AffinityMass::inter),
                       mass_cell(r.target_mass, &AffinityMass::ratio));
  }
  write_file_atomic(dir / "report.csv", csv);
  return rows;
}

void print_report(const std::vector<ReportRow>& rows, std::ostream& out) {
  std::size_t cell_width = 4;
  for (const auto& r : rows) cell_width = std::max(cell_width, r.cell.size());
  // Mass ratios: affinity grouped by training distribution, then by target.
  auto ratio = [](const std::optional<AffinityMass>& m) {
    return m ? fmt::format("{:.2f}", m->ratio) : std::string("-");
  };
  out << fmt::format("{:<18} {:<{}} {:>4} {:>18} {:>10} {:>10}\n", "strategy", "cell",
                     cell_width, "runs", "test acc", "train mass", "target mass");
  for (const auto& r : rows) {
    const std::string acc =
        fmt::format("{:.2f} +- {:.2f}", 100.0 * r.mean_acc, 100.0 * r.std_acc);
    out << fmt::format("{:<18} {:<{}} {:>4} {:>18} {:>10} {:>10}\n", r.strategy,
                       r.cell.empty() ? "-" : r.cell, cell_width, r.runs, acc,
                       ratio(r.train_mass), ratio(r.target_mass));
  }
}

}  // namespace fomo
