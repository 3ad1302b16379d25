#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "fomo/dataset.hpp"
#include "fomo/federation.hpp"
#include "fomo/fomo_engine.hpp"
#include "fomo/model.hpp"

namespace fomo {

/// Most recent upload of every client.
class ModelStore {
 public:
  void upload(ClientId id, ParamVector params);
  bool contains(ClientId id) const { return latest_.count(id.index) != 0; }
  const ParamVector& get(ClientId id) const;
  /// Clients with a stored model, ascending.
  std::vector<ClientId> uploaded() const;

 private:
  std::map<std::size_t, ParamVector> latest_;
};

struct RoundComm {
  std::size_t uploads = 0;
  std::size_t downloads = 0;
  std::size_t transfers = 0;
};

/// Communication counters. A download event is one server-to-client
/// message (carrying any number of models); transfers count the models.
struct CommLedger {
  std::size_t upload_events = 0;
  std::size_t download_events = 0;
  std::size_t models_transferred = 0;
  std::vector<RoundComm> per_round;
  std::vector<std::size_t> events_per_client;

  /// Totals equal the sums of the per-round entries.
  bool consistent() const;
};

struct ClientRoundRecord {
  std::size_t round = 0;
  std::size_t client = 0;
  std::optional<double> val_loss;
  std::optional<double> test_loss;
  std::optional<double> test_acc;
  std::vector<std::size_t> downloads;
  std::vector<bool> explored;
  std::vector<double> weights;  // normalized, aligned with downloads
  std::optional<double> self_weight;
  std::size_t transfers = 0;
  double epsilon = 0.0;
};

struct RoundMetrics {
  std::size_t round = 0;  // 1-based
  std::vector<std::size_t> participants;
  std::vector<ClientRoundRecord> clients;
  RoundComm comm;
};

struct FederationState {
  std::vector<ClientState> clients;
  ModelStore store;
  AffinityMatrix affinity;
  CommLedger ledger;
  std::optional<ParamVector> global_model;
  std::vector<std::size_t> participations;
  std::size_t rounds_completed = 0;
};

/// Static inputs of a simulation.
struct Federation {
  FederationConfig config;
  Architecture arch;
  PartitionedDataset partition;
  /// Receives every clipped per-example gradient norm under DP-SGD. Test
  /// instrumentation; must be thread-safe when workers > 1.
  std::function<void(double)> clip_observer;
};

FederationState init_federation(const Federation& fed);

/// Executes round `round` (1-based): participation sampling, download
/// planning, evaluation, personalised update, local training and upload.
/// Clients are processed independently and merged at the round barrier.
RoundMetrics run_round(FederationState& state, const Federation& fed,
                       std::size_t round);

struct DPReport {
  double noise_multiplier = 0.0;
  double clip_norm = 0.0;
  double delta = 0.0;
  std::size_t max_steps = 0;
  double sample_rate = 0.0;  // batch_size / smallest train size
};

struct ExperimentSummary {
  std::string strategy;
  std::size_t rounds = 0;
  std::vector<std::optional<double>> final_test_acc;
  double mean_test_acc = 0.0;
  double std_test_acc = 0.0;
  double mean_test_loss = 0.0;
  std::vector<std::size_t> communications_per_client;
  std::vector<std::size_t> local_epochs_per_client;
  std::size_t total_transfers = 0;
  std::size_t max_round_transfers = 0;
  double emd = 0.0;
  std::optional<AffinityMass> affinity_train_groups;
  std::optional<AffinityMass> affinity_target_groups;
  std::optional<DPReport> dp;
};

struct ExperimentResult {
  std::vector<RoundMetrics> rounds;
  FederationState final_state;
  ExperimentSummary summary;
};

using RoundObserver =
    std::function<void(const RoundMetrics&, const FederationState&)>;

/// Runs config.rounds rounds in order.
ExperimentResult run_experiment(const Federation& fed,
                                const RoundObserver& observer = {});

ExperimentSummary summarize(const Federation& fed, const FederationState& state,
                            const std::vector<RoundMetrics>& rounds);

}  // namespace fomo
