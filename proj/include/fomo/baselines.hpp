#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fomo/param_vector.hpp"
#include "fomo/trainer.hpp"

namespace fomo {

struct AggregationInput {
  std::vector<ParamVector> models;
  std::vector<std::size_t> train_sizes;
};

/// Training-set-size weighted mean of the models.
ParamVector fedavg_aggregate(const AggregationInput& input);

/// One round of isolated local training; no parameters leave the client.
TrainResult local_only_round(const ClientState& state, const Architecture& arch,
                             const Dataset& data, const TrainOptions& options,
                             std::uint64_t seed);

}  // namespace fomo
