#include <doctest.h>

#include <numeric>
#include <set>
#include <string>

#include "fomo/errors.hpp"
#include "fomo/orchestrator.hpp"
#include "spec_fixture.hpp"

using namespace fomo;
using fomo::testing::small_federation;

namespace {

std::vector<ParamVector> final_params(const ExperimentResult& r) {
  std::vector<ParamVector> out;
  for (const auto& c : r.final_state.clients) out.push_back(c.params);
  return out;
}

}  // namespace

TEST_CASE("runs are deterministic") {
  for (const char* s : {"fedfomo", "fedfomo_model_avg", "fedavg", "fedprox", "local"}) {
    CAPTURE(s);
    const auto fed = small_federation(s);
    const auto a = run_experiment(fed);
    const auto b = run_experiment(fed);
    CHECK(final_params(a) == final_params(b));
    CHECK(a.summary.mean_test_acc == b.summary.mean_test_acc);
    CHECK(a.final_state.affinity == b.final_state.affinity);
  }
}

TEST_CASE("worker threads do not change the result") {
  const auto seq = run_experiment(small_federation("fedfomo"));
  const auto par = run_experiment(small_federation("fedfomo", "workers = 2\n"));
  CHECK(final_params(seq) == final_params(par));
  CHECK(seq.final_state.affinity == par.final_state.affinity);
}

TEST_CASE("communication ledger under full participation") {
  const auto fed = small_federation("fedfomo");
  const auto r = run_experiment(fed);
  const auto& ledger = r.final_state.ledger;
  CHECK(ledger.consistent());
  for (auto e : ledger.events_per_client) CHECK(e == 2 * fed.config.rounds);
  CHECK(r.summary.communications_per_client == ledger.events_per_client);
  for (const auto& rc : ledger.per_round) {
    CHECK(rc.transfers <= fed.config.active * fed.config.downloads);
  }
  // Round 1 has nothing to download yet.
  CHECK(ledger.per_round.front().transfers == 0);
  CHECK(ledger.per_round.back().transfers == fed.config.active * fed.config.downloads);
  for (auto e : r.summary.local_epochs_per_client) {
    CHECK(e == fed.config.local_epochs * fed.config.rounds);
  }
}

TEST_CASE("local training never communicates") {
  const auto r = run_experiment(small_federation("local"));
  for (auto e : r.final_state.ledger.events_per_client) CHECK(e == 0);
  CHECK(r.summary.total_transfers == 0);
}

TEST_CASE("global strategies send one model per participant") {
  const auto fed = small_federation("fedavg");
  const auto r = run_experiment(fed);
  CHECK(r.final_state.ledger.per_round.front().transfers == 0);
  CHECK(r.final_state.ledger.per_round.back().transfers == fed.config.active);
  REQUIRE(r.final_state.global_model.has_value());
}

TEST_CASE("a lone client is unaffected by the fomo machinery") {
  const std::string one = "[federation]\nclients = 1\ndownloads = 0\nrounds = 3\nlocal_epochs = 2\n"
                          "seed = 4\nstrategy = ";
  const std::string rest = "\n[dataset]\nsource = synthetic\nn_classes = 3\nn_features = 4\n"
                           "samples_per_class = 40\npartition = latent\ndistributions = 1\n"
                           "pca_dims = 2\n";
  const auto fomo = run_experiment(build_federation(parse_spec(one + "fedfomo" + rest)));
  const auto local = run_experiment(build_federation(parse_spec(one + "local" + rest)));
  CHECK(final_params(fomo) == final_params(local));
  REQUIRE(fomo.rounds.size() == local.rounds.size());
  for (std::size_t t = 0; t < fomo.rounds.size(); ++t) {
    CHECK(fomo.rounds[t].clients[0].test_acc == local.rounds[t].clients[0].test_acc);
  }
}

TEST_CASE("partial participation") {
  const auto fed = small_federation("fedfomo", "active = 3\nrounds = 6\n");
  const auto r = run_experiment(fed);
  std::size_t total = 0;
  for (const auto& m : r.rounds) {
    CHECK(m.participants.size() == 3);
    CHECK(std::set<std::size_t>(m.participants.begin(), m.participants.end()).size() == 3);
    CHECK(m.comm.transfers <= 3 * fed.config.downloads);
  }
  for (std::size_t i = 0; i < fed.config.clients; ++i) {
    CHECK(r.summary.local_epochs_per_client[i] ==
          r.final_state.participations[i] * fed.config.local_epochs);
    CHECK(r.summary.communications_per_client[i] == 2 * r.final_state.participations[i]);
    total += r.final_state.participations[i];
  }
  CHECK(total == 3 * fed.config.rounds);
  CHECK(r.final_state.ledger.consistent());
}

TEST_CASE("fedavg on iid clients tracks a model trained on the pooled data") {
  const std::string data =
      "\n[dataset]\nsource = synthetic\nn_classes = 4\nn_features = 8\n"
      "samples_per_class = 500\nclass_separation = 3\npartition = latent\n"
      "distributions = 1\npca_dims = 4\n";
  const auto fedavg = run_experiment(build_federation(parse_spec(
      "[federation]\nclients = 6\nrounds = 15\nlocal_epochs = 1\nseed = 2\n"
      "strategy = fedavg\n" + data)));
  const auto pooled = run_experiment(build_federation(parse_spec(
      "[federation]\nclients = 1\ndownloads = 0\nrounds = 15\nlocal_epochs = 1\nseed = 2\n"
      "strategy = local\n" + data)));
  CAPTURE(fedavg.summary.mean_test_acc);
  CAPTURE(pooled.summary.mean_test_acc);
  CHECK(std::abs(fedavg.summary.mean_test_acc - pooled.summary.mean_test_acc) <= 0.05);
}

TEST_CASE("failures carry context") {
  auto fed = small_federation("fedfomo");
  for (auto& c : fed.partition.clients) {
    c.train.insert(c.train.end(), c.val.begin(), c.val.end());
    c.val.clear();
  }
  try {
    run_experiment(fed);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("validation") != std::string::npos);
  }

  const auto blow = small_federation("local", "lr = 1e308\nlr_decay = 1\n");
  try {
    run_experiment(blow);
    FAIL("expected a numeric failure");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("round 1, client") != std::string::npos);
    CHECK(msg.find("epoch") != std::string::npos);
  }
}
