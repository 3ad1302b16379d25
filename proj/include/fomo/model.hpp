#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fomo/dataset.hpp"
#include "fomo/param_vector.hpp"

namespace fomo {

enum class ArchKind { kSoftmaxLinear, kMlpOneHidden };

std::string_view to_string(ArchKind kind);
ArchKind parse_arch(std::string_view name);

/// One dense layer inside the flat parameter vector: a fan_out x fan_in
/// row-major weight block followed later by fan_out biases.
struct LayerShape {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

struct Architecture {
  ArchKind kind = ArchKind::kSoftmaxLinear;
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::size_t hidden_units = 32;  // mlp only

  /// Closed-form parameter count.
  std::size_t param_count() const;
  /// Shape manifest, input layer first.
  std::vector<LayerShape> layers() const;
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

/// Glorot-uniform weights, zero biases.
ParamVector init_params(const Architecture& arch, std::uint64_t seed);

/// Scratch buffers reused across samples.
struct Workspace {
  std::vector<double> hidden;
  std::vector<double> logits;
  std::vector<double> delta_out;
  std::vector<double> delta_hidden;
};

/// Cross-entropy of a single sample; writes its gradient into `grad`
/// (overwritten, size param_count()). Throws NumericError naming the layer
/// whose activations became non-finite.
double example_loss_grad(std::span<const double> params,
                         const Architecture& arch,
                         std::span<const double> features, int label,
                         std::span<double> grad, Workspace& ws);

/// Cross-entropy of a single sample without gradient.
double example_loss(std::span<const double> params, const Architecture& arch,
                    std::span<const double> features, int label,
                    Workspace& ws, int* predicted = nullptr);

struct LossAndGrad {
  double loss = 0.0;
  ParamVector gradient;
};

/// Mean cross-entropy over `batch` and its analytic gradient.
LossAndGrad loss_and_grad(const ParamVector& params, const Architecture& arch,
                          const Dataset& data,
                          std::span<const std::size_t> batch);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t n_samples = 0;
};

/// Full-split evaluation: mean cross-entropy and argmax accuracy.
EvalResult evaluate(const ParamVector& params, const Architecture& arch,
                    const Dataset& data, std::span<const std::size_t> split);

}  // namespace fomo
