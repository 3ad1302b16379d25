#include "fomo/federation.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "fomo/errors.hpp"

namespace fomo {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kFedFomo: return "fedfomo";
    case Strategy::kFedFomoModelAvg: return "fedfomo_model_avg";
    case Strategy::kFedAvg: return "fedavg";
    case Strategy::kFedAvgShare: return "fedavg_share";
    case Strategy::kFedProx: return "fedprox";
    case Strategy::kLocal: return "local";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::kFedFomo, Strategy::kFedFomoModelAvg,
                     Strategy::kFedAvg, Strategy::kFedAvgShare,
                     Strategy::kFedProx, Strategy::kLocal}) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError(fmt::format("unknown strategy '{}'", name));
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr", "must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
    throw ConfigError("lr_decay", "must lie in (0, 1]");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum", "must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) {
    throw ConfigError("weight_decay", "must be non-negative");
  }
}

void DPConfig::validate() const {
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm", "must be positive");
  if (!(noise_multiplier >= 0.0)) {
    throw ConfigError("noise_multiplier", "must be non-negative");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("delta", "must lie in (0, 1)");
  }
}

void FederationConfig::validate() const {
  if (clients == 0) throw ConfigError("clients", "must be positive");
  if (active == 0 || active > clients) {
    throw ConfigError("active", "must lie in [1, clients]");
  }
  if (downloads > active - 1) {
    throw ConfigError("downloads", "must not exceed active - 1");
  }
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ConfigError("epsilon", "must lie in [0, 1]");
  }
  if (!(epsilon_decay >= 0.0)) {
    throw ConfigError("epsilon_decay", "must be non-negative");
  }
  if (rounds == 0) throw ConfigError("rounds", "must be positive");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction", "must lie in (0, 1)");
  }
  if (!(fedprox_mu >= 0.0)) {
    throw ConfigError("fedprox_mu", "must be non-negative");
  }
  if (!(share_fraction >= 0.0 && share_fraction < 1.0)) {
    throw ConfigError("share_fraction", "must lie in [0, 1)");
  }
  if (workers == 0) throw ConfigError("workers", "must be positive");
  optimizer.validate();
  if (dp) dp->validate();
}

double FederationConfig::epsilon_at(std::size_t round) const {
  const double steps = round > 0 ? static_cast<double>(round - 1) : 0.0;
  return std::max(0.0, epsilon - steps * epsilon_decay);
}

bool ClientSplits::disjoint() const {
  std::unordered_set<std::size_t> seen;
  for (const auto* set : {&train, &val, &test}) {
    std::unordered_set<std::size_t> local(set->begin(), set->end());
    for (std::size_t idx : local) {
      if (!seen.insert(idx).second) return false;
    }
  }
  return true;
}

void ClientState::check_invariants(std::size_t population) const {
  require_same_dim(params, prev_params, "ClientState");
  if (affinity_row.size() != population) {
    throw StructuralError(
        fmt::format("client {}: affinity row has {} entries, expected {}",
                    id.index, affinity_row.size(), population));
  }
  if (!splits.disjoint()) {
    throw StructuralError(
        fmt::format("client {}: train/val/test index sets overlap", id.index));
  }
}

}  // namespace fomo
