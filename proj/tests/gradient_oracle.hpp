#pragma once

// Shared by the model tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <random>

#include "fomo/dataset.hpp"
#include "fomo/model.hpp"

namespace fomo::testing {

/// Gaussian features, labels drawn uniformly (or cycled when balanced).
inline Dataset random_dataset(std::size_t features, std::size_t classes,
                              std::size_t n, std::uint64_t seed,
                              bool balanced = false) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, static_cast<int>(classes) - 1);
  Dataset d;
  d.n_features = features;
  d.n_classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < features; ++j) d.features.push_back(normal(gen));
    d.labels.push_back(balanced ? static_cast<int>(i % classes) : label(gen));
    d.split.push_back(SplitTag::kTrainPool);
  }
  return d;
}

/// Largest per-coordinate relative error between the analytic gradient and
/// a central difference (h = 1e-5) on a random small instance. Coordinates
/// where both values are below 1e-10 count as agreeing.
inline double gradient_check_error(ArchKind kind, std::uint64_t seed) {
  std::mt19937_64 gen(1000 + seed);
  std::uniform_int_distribution<std::size_t> dim(2, 6);
  const Architecture arch{kind, dim(gen), dim(gen), dim(gen)};
  const auto data = random_dataset(arch.n_features, arch.n_classes, 5, seed);
  const std::vector<std::size_t> batch{0, 1, 2, 3, 4};
  std::normal_distribution<double> normal(0.0, 0.7);
  std::vector<double> values(arch.param_count());
  for (auto& v : values) v = normal(gen);
  const ParamVector params(values);
  const auto analytic = loss_and_grad(params, arch, data, batch);

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto plus = values;
    auto minus = values;
    plus[i] += h;
    minus[i] -= h;
    const double lp = loss_and_grad(ParamVector(plus), arch, data, batch).loss;
    const double lm = loss_and_grad(ParamVector(minus), arch, data, batch).loss;
    const double numeric = (lp - lm) / (2.0 * h);
    const double a = analytic.gradient[i];
    const double scale = std::max(std::abs(a), std::abs(numeric));
    if (scale < 1e-10) continue;
    worst = std::max(worst, std::abs(a - numeric) / scale);
  }
  return worst;
}

}  // namespace fomo::testing
