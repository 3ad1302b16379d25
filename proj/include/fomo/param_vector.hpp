#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace fomo {

/// Flat vector holding every parameter of one model. Entries are always
/// finite and the dimension is fixed at construction.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0);
  explicit ParamVector(std::vector<double> values);
  ParamVector(std::initializer_list<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> mutable_values() noexcept { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  /// True when every entry is finite.
  bool is_finite() const noexcept;

  /// Throws ValidationError if some entry is NaN or infinite.
  void check_finite(const char* what = "parameter vector") const;

  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<double> values_;
};

/// base + sum_n weights[n] * (models[n] - base).
///
/// Weights must lie in [0, 1] and sum to either 0 or 1 (within 1e-9). An
/// exact one-hot weight returns the selected model bit-for-bit and an
/// all-zero weight returns `base` bit-for-bit.
ParamVector weighted_combination(const ParamVector& base,
                                 std::span<const ParamVector> models,
                                 std::span<const double> weights);

/// Euclidean distance between two vectors of equal dimension.
double l2_distance(const ParamVector& a, const ParamVector& b);

/// Elementwise arithmetic mean of a nonempty list.
ParamVector uniform_average(std::span<const ParamVector> models);

/// Throws StructuralError unless a.dim() == b.dim().
void require_same_dim(const ParamVector& a, const ParamVector& b,
                      const char* context);

}  // namespace fomo
