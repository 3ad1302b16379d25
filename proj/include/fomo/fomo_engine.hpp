#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fomo/federation.hpp"
#include "fomo/param_vector.hpp"
#include "fomo/rng.hpp"

namespace fomo {

/// A model offered to a requesting client, scored on that client's
/// validation split.
struct CandidateModel {
  ClientId owner;
  ParamVector params;
  double val_loss = 0.0;
};

struct WeightVector {
  std::vector<double> raw;         // first-order scores, may be negative
  std::vector<double> normalized;  // clamped to >= 0, sums to 0 or 1

  double normalized_sum() const;
};

/// K x K routing scores; row i ranks the owners whose models client i
/// should receive.
class AffinityMatrix {
 public:
  AffinityMatrix() = default;
  /// Identity initialisation.
  explicit AffinityMatrix(std::size_t clients);

  std::size_t size() const noexcept { return k_; }
  std::span<const double> row(std::size_t i) const {
    return {p_.data() + i * k_, k_};
  }
  double at(std::size_t i, std::size_t j) const { return p_[i * k_ + j]; }
  void set_row(std::size_t i, std::span<const double> values);

  bool operator==(const AffinityMatrix&) const = default;

 private:
  std::size_t k_ = 0;
  std::vector<double> p_;
};

struct DownloadPlan {
  ClientId requester;
  std::vector<ClientId> chosen;
  std::vector<bool> explored;  // per slot: filled at random
};

/// Distance floor guarding the first-order score against identical models.
inline constexpr double kMinDistance = 1e-8;

/// raw[n] = (baseline_loss - val_loss_n) / max(|theta_n - baseline|, 1e-8).
std::vector<double> fomo_raw_weights(const ParamVector& baseline_params,
                                     double baseline_loss,
                                     std::span<const CandidateModel> candidates);

/// Clamps negatives to zero and rescales the positives onto the simplex.
/// With no positive entry the result is all zeros.
WeightVector normalize_weights(std::span<const double> raw);

/// baseline + sum_n w_n (theta_n - baseline); returns the baseline itself
/// when every normalized weight is zero.
ParamVector apply_fomo_update(const ParamVector& baseline_params,
                              std::span<const CandidateModel> candidates,
                              const WeightVector& weights);

/// Leave-one-out score for the model-average variant:
/// loss(mean of all but n) - loss(mean of all).
double fomo_model_average_weight(
    const std::function<double(const ParamVector&)>& requesting_val_loss,
    std::span<const ParamVector> all_models, std::size_t n);

/// row[owner_n] += raw[n] / max(sum_m |raw[m]|, 1e-12).
std::vector<double> update_affinity(std::span<const double> row,
                                    std::span<const CandidateModel> candidates,
                                    std::span<const double> raw);

/// Fills min(M, |available minus requester|) slots. Each slot independently
/// picks a random remaining candidate with probability epsilon, otherwise
/// the highest-affinity remaining candidate (ties to the lower id).
DownloadPlan select_downloads(std::span<const double> row, ClientId requester,
                              std::span<const ClientId> available,
                              std::size_t downloads, double epsilon, Rng& rng);

struct AffinityMass {
  double intra = 0.0;  // mean positive affinity towards same-group owners
  double inter = 0.0;  // mean positive affinity towards other owners
  double ratio = 0.0;  // intra / inter; +inf when inter is 0 and intra > 0
};

/// Averages max(P_ij, 0) over off-diagonal owners j grouped by whether
/// owner_group[j] equals requester_group[i], then over requesters.
AffinityMass affinity_mass(const AffinityMatrix& affinity,
                           std::span<const std::size_t> requester_group,
                           std::span<const std::size_t> owner_group);

}  // namespace fomo
