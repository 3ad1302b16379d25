#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "fomo/artifacts.hpp"
#include "fomo/errors.hpp"
#include "fomo/experiment.hpp"
#include "spec_fixture.hpp"

using namespace fomo;
namespace fs = std::filesystem;
using fomo::testing::small_spec_text;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fomo_test_experiment_" + name);
  fs::remove_all(p);
  return p;
}

std::string config_error_field(const std::string& text) {
  try {
    parse_spec(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_CASE("spec parsing") {
  const auto spec = parse_spec(small_spec_text("fedfomo", "epsilon = 0.25\n"));
  CHECK(spec.federation.clients == 6);
  CHECK(spec.federation.active == 6);
  CHECK(spec.federation.epsilon == 0.25);
  CHECK(spec.federation.strategy == Strategy::kFedFomo);
  CHECK(spec.dataset.distributions == 2);
  CHECK(spec.model.arch == ArchKind::kSoftmaxLinear);
  CHECK(parse_spec(render_spec(spec)) == spec);

  CHECK(config_error_field(small_spec_text("fedfomo", "bogus = 1\n")) == "federation.bogus");
  CHECK(config_error_field(small_spec_text("fedfomo", "epsilon = 2\n")) == "federation.epsilon");
  CHECK(config_error_field(small_spec_text("nonsense")) == "federation.strategy");
  CHECK(config_error_field(small_spec_text("fedfomo", "", "distributions = 9\n")) ==
        "dataset.distributions");
  CHECK(config_error_field(small_spec_text("fedfomo") + "[extra]\nx = 1\n") == "extra");
}

TEST_CASE("the seed is required unless overridden") {
  std::string text = small_spec_text("fedfomo");
  text.erase(text.find("seed = 11\n"), 10);
  CHECK(config_error_field(text) == "federation.seed");
  const auto spec = parse_spec(text, 99);
  CHECK(spec.federation.seed == 99);
  CHECK(parse_spec(small_spec_text("fedfomo"), 5).federation.seed == 5);
}

TEST_CASE("sweep axes") {
  const auto spec = parse_spec(small_spec_text("fedfomo") +
                               "[sweep]\nstrategy = fedfomo, local\nseed = 1,2,3\n");
  REQUIRE(spec.sweep.size() == 2);
  CHECK(spec.sweep[0].key == "federation.strategy");
  CHECK(spec.sweep[1].key == "federation.seed");
  std::vector<std::vector<std::pair<std::string, std::string>>> assignments;
  const auto cells = expand_sweep(spec, &assignments);
  REQUIRE(cells.size() == 6);
  CHECK(cells[0].federation.strategy == Strategy::kFedFomo);
  CHECK(cells[2].federation.seed == 3);
  CHECK(cells[3].federation.strategy == Strategy::kLocal);
  CHECK(assignments[4][1].second == "2");
  for (const auto& c : cells) CHECK(c.sweep.empty());

  CHECK(config_error_field(small_spec_text("fedfomo") + "[sweep]\nepsilon =\n") ==
        "sweep.federation.epsilon");
  CHECK(config_error_field(small_spec_text("fedfomo") + "[sweep]\nepsilon = 0.1, 7\n") ==
        "federation.epsilon");
  CHECK_FALSE(config_error_field(small_spec_text("fedfomo") + "[sweep]\nnope = 1\n").empty());
}

TEST_CASE("atomic writes") {
  const auto dir = scratch("atomic");
  fs::create_directories(dir);
  write_file_atomic(dir / "a.txt", "one");
  write_file_atomic(dir / "a.txt", "two");
  CHECK(read_file(dir / "a.txt") == "two");
  CHECK_FALSE(fs::exists(dir / "a.txt.tmp"));
  CHECK_THROWS_AS(read_file(dir / "missing.txt"), Error);
  fs::remove_all(dir);
}

TEST_CASE("affinity frames round trip") {
  AffinityMatrix p(3);
  p.set_row(1, std::vector{0.125, 1.0, -0.3333333333333333});
  CHECK(parse_affinity_csv(affinity_csv(p)) == p);
  CHECK(affinity_csv(AffinityMatrix(2)).rfind("requester,0,1\n", 0) == 0);
  CHECK_THROWS_AS(parse_affinity_csv("requester,0,1\n0,1\n"), FormatError);
  CHECK_THROWS_AS(parse_affinity_csv("requester,0\n0,abc\n"), FormatError);
  CHECK_THROWS_AS(parse_affinity_csv(""), FormatError);
  CHECK(affinity_frame_name(7) == "affinity_round_7.csv");
}

TEST_CASE("run artifacts") {
  const auto dir = scratch("run");
  const auto spec = parse_spec(small_spec_text("fedfomo"));
  const auto summary = run_to_directory(spec, dir, false);
  for (const char* f : {"config.ini", "metrics.jsonl", "summary.json", "partition.json"}) {
    CHECK(fs::exists(dir / f));
  }
  for (std::size_t r = 1; r <= spec.federation.rounds; ++r) {
    CHECK(fs::exists(dir / affinity_frame_name(r)));
  }
  CHECK(load_spec(dir / "config.ini") == spec);

  // One record per (round, participant), each carrying the documented fields.
  const std::string jsonl = read_file(dir / "metrics.jsonl");
  CHECK(count_metrics_records(jsonl) == spec.federation.rounds * spec.federation.clients);
  std::istringstream lines(jsonl);
  std::string line;
  std::getline(lines, line);
  const auto rec = nlohmann::json::parse(line);
  for (const char* key : {"round", "client", "strategy", "val_loss", "test_loss", "test_acc",
                          "downloads", "weights", "transfers"}) {
    CHECK(rec.contains(key));
  }
  CHECK(rec["round"] == 1);
  CHECK(rec["strategy"] == "fedfomo");

  const auto s = parse_summary_json(read_file(dir / "summary.json"));
  CHECK(s.strategy == "fedfomo");
  CHECK(s.mean_test_acc == doctest::Approx(summary.mean_test_acc).epsilon(1e-12));
  const auto part = parse_partition_json(read_file(dir / "partition.json"));
  CHECK(part.distribution_of_client.size() == 6);

  CHECK_THROWS_AS(run_to_directory(spec, dir, false), ConfigError);
  CHECK_NOTHROW(run_to_directory(spec, dir, true));

  CHECK_THROWS_AS(count_metrics_records("{\"round\": 1}\n{\"rou"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("reruns are byte-identical") {
  const auto a = scratch("same_a"), b = scratch("same_b");
  const auto spec = parse_spec(small_spec_text("fedfomo"));
  run_to_directory(spec, a, false);
  run_to_directory(spec, b, false);
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.insert(e.path().filename().string());
  for (const auto& n : names) {
    CAPTURE(n);
    CHECK(read_file(a / n) == read_file(b / n));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("sweep and report") {
  const auto dir = scratch("sweep");
  const auto spec = parse_spec(small_spec_text("fedfomo", "rounds = 2\n") +
                               "[sweep]\nstrategy = fedfomo, local\n"
                               "epsilon = 0.0, 0.5\nseed = 1, 2\n");
  const auto cells = run_sweep(spec, dir, 2, false);
  REQUIRE(cells.size() == 8);
  for (const auto& c : cells) CHECK(c.ok);
  CHECK(fs::exists(dir / "sweep_summary.csv"));
  CHECK(fs::exists(dir / "cell_000" / "summary.json"));

  const auto rows = build_report(dir);
  CHECK(rows.size() == 4);  // strategy x epsilon
  for (const auto& r : rows) {
    CHECK(r.runs == 2);
    CHECK(r.cell.find("epsilon") != std::string::npos);
    CHECK(r.cell.find("seed") == std::string::npos);
    CHECK(r.train_mass.has_value() == (r.strategy == "fedfomo"));
  }
  // report.csv: header plus one line per row.
  std::ifstream in(dir / "report.csv");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == rows.size() + 1);

  CHECK_THROWS(build_report(scratch("absent")));
  fs::remove_all(dir);
}

TEST_CASE("failed sweep cells are recorded") {
  const auto dir = scratch("sweep_fail");
  const auto spec = parse_spec(small_spec_text("local", "rounds = 1\n") +
                               "[sweep]\nlr = 0.1, 1e308\n");
  const auto cells = run_sweep(spec, dir, 1, false);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].ok);
  CHECK_FALSE(cells[1].ok);
  CHECK_FALSE(cells[1].error.empty());
  CHECK(read_file(dir / "sweep_summary.csv").find("failed") != std::string::npos);
  fs::remove_all(dir);
}
