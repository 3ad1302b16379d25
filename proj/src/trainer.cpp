#include "fomo/trainer.hpp"

#include <cmath>

#include <fmt/format.h>

#include "fomo/errors.hpp"
#include "fomo/rng.hpp"

namespace fomo {

void sgd_step(std::span<double> params, std::span<const double> grad,
              const OptimizerConfig& config, double lr,
              std::vector<double>& momentum, std::span<const double> anchor,
              double mu) {
  if (grad.size() != params.size()) {
    throw StructuralError("sgd_step: gradient and parameter sizes differ");
  }
  const bool prox = mu != 0.0;
  if (prox && anchor.size() != params.size()) {
    throw StructuralError("sgd_step: proximal anchor size differs");
  }
  const double wd = config.weight_decay;
  if (config.momentum == 0.0) {
    const double shrink = 1.0 - lr * wd;
    for (std::size_t j = 0; j < params.size(); ++j) {
      double g = grad[j];
      if (prox) g += mu * (params[j] - anchor[j]);
      params[j] = params[j] * shrink - lr * g;
    }
    return;
  }
  if (momentum.size() != params.size()) momentum.assign(params.size(), 0.0);
  for (std::size_t j = 0; j < params.size(); ++j) {
    double g = grad[j] + wd * params[j];
    if (prox) g += mu * (params[j] - anchor[j]);
    momentum[j] = config.momentum * momentum[j] + g;
    params[j] -= lr * momentum[j];
  }
}

TrainResult train_local(const ClientState& state, const Architecture& arch,
                        const Dataset& data, const TrainOptions& options,
                        std::uint64_t seed) {
  TrainResult result{state.params, state.optimizer, 0};
  if (options.epochs == 0) return result;
  const auto& train = state.splits.train;
  if (train.empty()) {
    throw ValidationError(
        fmt::format("train_local: client {} has an empty training set",
                    state.id.index));
  }
  if (state.params.dim() != arch.param_count()) {
    throw StructuralError("train_local: parameter count does not match model");
  }
  if (options.batch_size == 0) {
    throw ValidationError("train_local: batch_size must be positive");
  }
  if (options.dp) options.dp->validate();

  Rng batch_rng = make_rng(seed, "batches");
  Rng noise_rng = make_rng(seed, "dp_noise");
  const std::size_t dim = state.params.dim();
  std::vector<double> params(state.params.values().begin(),
                             state.params.values().end());
  const std::vector<double> anchor = params;
  std::vector<double> sum(dim);
  std::vector<double> g(dim);
  Workspace ws;
  std::vector<std::size_t> order = train;
  const double lr = state.optimizer.lr;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    shuffle_in_place(order, batch_rng);
    for (std::size_t start = 0; start < order.size();
         start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::fill(sum.begin(), sum.end(), 0.0);
      double loss = 0.0;
      for (std::size_t p = start; p < end; ++p) {
        const std::size_t idx = order[p];
        try {
          loss += example_loss_grad(params, arch, data.row(idx),
                                    data.labels[idx], g, ws);
        } catch (const NumericError& e) {
          throw NumericError(fmt::format(
              "train_local: client {} at epoch {}, step {}: {}",
              state.id.index, epoch, result.steps, e.what()));
        }
        if (options.dp) {
          double sq = 0.0;
          for (double v : g) sq += v * v;
          const double norm = std::sqrt(sq);
          const double clip = options.dp->clip_norm;
          if (norm > clip) {
            // Shrink slightly so rounding never lifts the norm above C.
            const double scale = clip / norm * (1.0 - 1e-12);
            for (auto& v : g) v *= scale;
          }
          if (options.clip_observer) {
            double clipped = 0.0;
            for (double v : g) clipped += v * v;
            options.clip_observer(std::sqrt(clipped));
          }
        }
        for (std::size_t j = 0; j < dim; ++j) sum[j] += g[j];
      }
      const auto count = static_cast<double>(end - start);
      if (!std::isfinite(loss)) {
        throw NumericError(fmt::format(
            "train_local: client {} hit a non-finite loss at epoch {}, step {}",
            state.id.index, epoch, result.steps));
      }
      if (options.dp && options.dp->noise_multiplier > 0.0) {
        const double stddev = options.dp->noise_multiplier * options.dp->clip_norm;
        for (auto& v : sum) v += stddev * standard_normal(noise_rng);
      }
      for (auto& v : sum) v /= count;
      sgd_step(params, sum, options.optimizer, lr, result.optimizer.momentum,
               anchor, options.fedprox_mu);
      for (double v : params) {
        if (!std::isfinite(v)) {
          throw NumericError(fmt::format(
              "train_local: client {} produced non-finite parameters at "
              "epoch {}, step {}",
              state.id.index, epoch, result.steps));
        }
      }
      ++result.steps;
    }
  }
  result.params = ParamVector(std::move(params));
  return result;
}

}  // namespace fomo
