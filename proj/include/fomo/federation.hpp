#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fomo/learner_config.hpp"
#include "fomo/param_vector.hpp"

namespace fomo {

/// Index of a client in [0, K).
struct ClientId {
  std::size_t index = 0;

  auto operator<=>(const ClientId&) const = default;
};

enum class Strategy {
  kFedFomo,
  kFedFomoModelAvg,
  kFedAvg,
  kFedAvgShare,
  kFedProx,
  kLocal,
};

std::string_view to_string(Strategy s);
/// Throws ValidationError on an unknown name.
Strategy parse_strategy(std::string_view name);

/// True for the strategies driven by first-order combination weights.
inline bool is_fomo(Strategy s) {
  return s == Strategy::kFedFomo || s == Strategy::kFedFomoModelAvg;
}
/// True for the strategies that train one shared global model.
inline bool is_global(Strategy s) {
  return s == Strategy::kFedAvg || s == Strategy::kFedAvgShare ||
         s == Strategy::kFedProx;
}

struct FederationConfig {
  std::size_t clients = 15;         // K
  std::size_t active = 15;          // participants per round
  std::size_t downloads = 5;        // M
  double epsilon = 0.3;
  double epsilon_decay = 0.05;
  std::size_t local_epochs = 5;     // E
  std::size_t rounds = 20;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::kFedFomo;
  std::optional<DPConfig> dp;
  double fedprox_mu = 0.1;
  double share_fraction = 0.05;
  /// Worker threads used for within-round client work.
  std::size_t workers = 1;

  /// Throws ConfigError naming the first offending field.
  void validate() const;
  /// Exploration probability used in the 1-based round `round`.
  double epsilon_at(std::size_t round) const;

  bool operator==(const FederationConfig&) const = default;
};

/// Momentum buffer plus the learning rate currently in effect.
struct OptimizerState {
  std::vector<double> momentum;
  double lr = 0.0;

  bool operator==(const OptimizerState&) const = default;
};

/// Indices into a dataset owned by one client.
struct ClientSplits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  /// True when the three index sets are pairwise disjoint.
  bool disjoint() const;
  bool operator==(const ClientSplits&) const = default;
};

/// Everything one client carries between rounds.
struct ClientState {
  ClientId id;
  ParamVector params;       // latest local model (after local training)
  ParamVector prev_params;  // model held before that training
  std::vector<double> affinity_row;
  OptimizerState optimizer;
  ClientSplits splits;

  /// Throws StructuralError when the documented invariants do not hold for
  /// a population of `population` clients.
  void check_invariants(std::size_t population) const;
};

}  // namespace fomo
