#pragma once

namespace fomo {

struct OptimizerConfig {
  double lr = 0.1;
  /// Multiplicative factor applied once per federation round.
  double lr_decay = 0.99;
  double momentum = 0.0;
  double weight_decay = 1e-4;

  void validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

/// DP-SGD parameters. The privacy loss itself is left to an external
/// accountant; runs report these values together with step counts.
struct DPConfig {
  double clip_norm = 1.0;
  double noise_multiplier = 1.0;
  double delta = 1e-5;

  void validate() const;
  bool operator==(const DPConfig&) const = default;
};

}  // namespace fomo
