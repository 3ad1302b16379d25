#include "fomo/param_vector.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fomo/errors.hpp"

namespace fomo {

ParamVector::ParamVector(std::size_t dim, double fill) : values_(dim, fill) {
  check_finite();
}

ParamVector::ParamVector(std::vector<double> values)
    : values_(std::move(values)) {
  check_finite();
}

ParamVector::ParamVector(std::initializer_list<double> values)
    : values_(values) {
  check_finite();
}

bool ParamVector::is_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

void ParamVector::check_finite(const char* what) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw ValidationError(
          fmt::format("{} has non-finite entry at index {}", what, i));
    }
  }
}

void require_same_dim(const ParamVector& a, const ParamVector& b,
                      const char* context) {
  if (a.dim() != b.dim()) {
    throw StructuralError(fmt::format("{}: dimension mismatch ({} vs {})",
                                      context, a.dim(), b.dim()));
  }
}

ParamVector weighted_combination(const ParamVector& base,
                                 std::span<const ParamVector> models,
                                 std::span<const double> weights) {
  if (weights.size() != models.size()) {
    throw StructuralError(
        fmt::format("weighted_combination: {} weights for {} models",
                    weights.size(), models.size()));
  }
  base.check_finite("weighted_combination base");
  for (const auto& m : models) {
    require_same_dim(base, m, "weighted_combination");
    m.check_finite("weighted_combination model");
  }
  double total = 0.0;
  std::size_t ones = 0;
  std::size_t one_at = 0;
  for (std::size_t n = 0; n < weights.size(); ++n) {
    const double w = weights[n];
    if (!std::isfinite(w) || w < 0.0 || w > 1.0) {
      throw ValidationError(
          fmt::format("weighted_combination: weight[{}] = {} outside [0, 1]",
                      n, w));
    }
    if (w == 1.0) {
      ++ones;
      one_at = n;
    }
    total += w;
  }
  if (total != 0.0 && std::abs(total - 1.0) > 1e-9) {
    throw ValidationError(fmt::format(
        "weighted_combination: weights sum to {}, expected 0 or 1", total));
  }

  if (total == 0.0) return base;
  if (ones == 1 && total == 1.0) return models[one_at];

  std::vector<double> out(base.values().begin(), base.values().end());
  for (std::size_t n = 0; n < models.size(); ++n) {
    const double w = weights[n];
    if (w == 0.0) continue;
    const auto m = models[n].values();
    const auto b = base.values();
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * (m[j] - b[j]);
  }
  ParamVector result(std::move(out));
  return result;
}

double l2_distance(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "l2_distance");
  double sum = 0.0;
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - y[j];
    sum += d * d;
  }
  return std::sqrt(sum);
}

ParamVector uniform_average(std::span<const ParamVector> models) {
  if (models.empty()) {
    throw ValidationError("uniform_average: empty model list");
  }
  std::vector<double> acc(models.front().dim(), 0.0);
  for (const auto& m : models) {
    require_same_dim(models.front(), m, "uniform_average");
    const auto v = m.values();
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += v[j];
  }
  const double inv = static_cast<double>(models.size());
  for (auto& v : acc) v /= inv;
  return ParamVector(std::move(acc));
}

}  // namespace fomo
