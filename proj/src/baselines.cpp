#include "fomo/baselines.hpp"

#include <fmt/format.h>

#include "fomo/errors.hpp"

namespace fomo {

ParamVector fedavg_aggregate(const AggregationInput& input) {
  if (input.models.empty()) {
    throw ValidationError("fedavg_aggregate: empty input");
  }
  if (input.models.size() != input.train_sizes.size()) {
    throw StructuralError(fmt::format(
        "fedavg_aggregate: {} models but {} sizes", input.models.size(),
        input.train_sizes.size()));
  }
  double total = 0.0;
  for (std::size_t s : input.train_sizes) {
    if (s == 0) throw ValidationError("fedavg_aggregate: zero training size");
    total += static_cast<double>(s);
  }
  const std::size_t dim = input.models.front().dim();
  std::vector<double> out(dim, 0.0);
  for (std::size_t n = 0; n < input.models.size(); ++n) {
    require_same_dim(input.models.front(), input.models[n], "fedavg_aggregate");
    const double w = static_cast<double>(input.train_sizes[n]) / total;
    const auto v = input.models[n].values();
    for (std::size_t j = 0; j < dim; ++j) out[j] += w * v[j];
  }
  return ParamVector(std::move(out));
}

TrainResult local_only_round(const ClientState& state, const Architecture& arch,
                             const Dataset& data, const TrainOptions& options,
                             std::uint64_t seed) {
  return train_local(state, arch, data, options, seed);
}

}  // namespace fomo
