#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fomo/dataset.hpp"
#include "fomo/federation.hpp"
#include "fomo/learner_config.hpp"
#include "fomo/model.hpp"

namespace fomo {

struct TrainOptions {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer;
  std::optional<DPConfig> dp;
  /// Proximal coefficient; 0 disables the FedProx term.
  double fedprox_mu = 0.0;
  /// Called with the norm of every clipped per-example gradient that
  /// enters a DP-SGD sum. Test instrumentation only.
  std::function<void(double)> clip_observer;
};

struct TrainResult {
  ParamVector params;
  OptimizerState optimizer;
  std::size_t steps = 0;
};

/// One optimizer step on `params` in place.
///
/// With zero momentum: params <- params * (1 - lr * wd) - lr * (grad + prox).
/// Otherwise weight decay and the proximal term are folded into the
/// momentum buffer before the step. `anchor` may be empty when mu == 0.
void sgd_step(std::span<double> params, std::span<const double> grad,
              const OptimizerConfig& config, double lr,
              std::vector<double>& momentum, std::span<const double> anchor,
              double mu);

/// Runs `epochs` epochs of seeded mini-batch SGD (or DP-SGD) over the
/// client's train split, starting from state.params at state.optimizer.lr.
/// The FedProx anchor is state.params.
TrainResult train_local(const ClientState& state, const Architecture& arch,
                        const Dataset& data, const TrainOptions& options,
                        std::uint64_t seed);

}  // namespace fomo
