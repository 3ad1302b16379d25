#include "fomo/fomo_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "fomo/errors.hpp"

namespace fomo {

double WeightVector::normalized_sum() const {
  double s = 0.0;
  for (double w : normalized) s += w;
  return s;
}

AffinityMatrix::AffinityMatrix(std::size_t clients)
    : k_(clients), p_(clients * clients, 0.0) {
  for (std::size_t i = 0; i < clients; ++i) p_[i * clients + i] = 1.0;
}

void AffinityMatrix::set_row(std::size_t i, std::span<const double> values) {
  if (i >= k_ || values.size() != k_) {
    throw StructuralError("AffinityMatrix::set_row: shape mismatch");
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw ValidationError("AffinityMatrix::set_row: non-finite entry");
    }
  }
  std::copy(values.begin(), values.end(), p_.begin() + i * k_);
}

std::vector<double> fomo_raw_weights(const ParamVector& baseline_params,
                                     double baseline_loss,
                                     std::span<const CandidateModel> candidates) {
  if (candidates.empty()) {
    throw ValidationError("fomo_raw_weights: no candidates");
  }
  if (!std::isfinite(baseline_loss)) {
    throw NumericError("fomo_raw_weights: non-finite baseline loss");
  }
  std::vector<double> raw;
  raw.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (!std::isfinite(c.val_loss)) {
      throw NumericError(fmt::format(
          "fomo_raw_weights: non-finite loss for model of client {}",
          c.owner.index));
    }
    const double dist =
        std::max(l2_distance(c.params, baseline_params), kMinDistance);
    raw.push_back((baseline_loss - c.val_loss) / dist);
  }
  return raw;
}

WeightVector normalize_weights(std::span<const double> raw) {
  WeightVector w;
  w.raw.assign(raw.begin(), raw.end());
  w.normalized.assign(raw.size(), 0.0);
  double positive = 0.0;
  for (double r : raw) {
    if (!std::isfinite(r)) {
      throw ValidationError("normalize_weights: non-finite raw weight");
    }
    if (r > 0.0) positive += r;
  }
  if (positive == 0.0) return w;
  for (std::size_t n = 0; n < raw.size(); ++n) {
    if (raw[n] > 0.0) w.normalized[n] = raw[n] / positive;
  }
  return w;
}

ParamVector apply_fomo_update(const ParamVector& baseline_params,
                              std::span<const CandidateModel> candidates,
                              const WeightVector& weights) {
  if (weights.normalized.size() != candidates.size()) {
    throw StructuralError(fmt::format(
        "apply_fomo_update: {} weights for {} candidates",
        weights.normalized.size(), candidates.size()));
  }
  for (const auto& c : candidates) {
    require_same_dim(baseline_params, c.params, "apply_fomo_update");
  }
  if (weights.normalized_sum() == 0.0) return baseline_params;
  std::vector<ParamVector> models;
  models.reserve(candidates.size());
  for (const auto& c : candidates) models.push_back(c.params);
  return weighted_combination(baseline_params, models, weights.normalized);
}

double fomo_model_average_weight(
    const std::function<double(const ParamVector&)>& requesting_val_loss,
    std::span<const ParamVector> all_models, std::size_t n) {
  if (all_models.size() < 2) {
    throw ValidationError(
        "fomo_model_average_weight: need at least two models");
  }
  if (n >= all_models.size()) {
    throw StructuralError("fomo_model_average_weight: index out of range");
  }
  std::vector<ParamVector> without;
  without.reserve(all_models.size() - 1);
  for (std::size_t j = 0; j < all_models.size(); ++j) {
    if (j != n) without.push_back(all_models[j]);
  }
  return requesting_val_loss(uniform_average(without)) -
         requesting_val_loss(uniform_average(all_models));
}

std::vector<double> update_affinity(std::span<const double> row,
                                    std::span<const CandidateModel> candidates,
                                    std::span<const double> raw) {
  if (raw.size() != candidates.size()) {
    throw StructuralError("update_affinity: raw weights not aligned");
  }
  std::vector<double> out(row.begin(), row.end());
  double scale = 0.0;
  for (double r : raw) scale += std::abs(r);
  scale = std::max(scale, 1e-12);
  for (std::size_t n = 0; n < candidates.size(); ++n) {
    const std::size_t owner = candidates[n].owner.index;
    if (owner >= out.size()) {
      throw StructuralError(fmt::format(
          "update_affinity: owner {} outside a row of {}", owner, out.size()));
    }
    out[owner] += raw[n] / scale;
  }
  return out;
}

DownloadPlan select_downloads(std::span<const double> row, ClientId requester,
                              std::span<const ClientId> available,
                              std::size_t downloads, double epsilon, Rng& rng) {
  std::vector<ClientId> remaining;
  for (ClientId id : available) {
    if (id == requester) continue;
    if (id.index >= row.size()) {
      throw StructuralError(fmt::format(
          "select_downloads: client {} outside affinity row", id.index));
    }
    remaining.push_back(id);
  }
  std::sort(remaining.begin(), remaining.end());
  remaining.erase(std::unique(remaining.begin(), remaining.end()),
                  remaining.end());

  DownloadPlan plan;
  plan.requester = requester;
  const std::size_t slots = std::min(downloads, remaining.size());
  for (std::size_t s = 0; s < slots; ++s) {
    const bool explore = uniform01(rng) < epsilon;
    std::size_t pick = 0;
    if (explore) {
      pick = uniform_index(rng, remaining.size());
    } else {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < remaining.size(); ++r) {
        const double score = row[remaining[r].index];
        if (score > best) {
          best = score;
          pick = r;
        }
      }
    }
    plan.chosen.push_back(remaining[pick]);
    plan.explored.push_back(explore);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return plan;
}

AffinityMass affinity_mass(const AffinityMatrix& affinity,
                           std::span<const std::size_t> requester_group,
                           std::span<const std::size_t> owner_group) {
  const std::size_t k = affinity.size();
  if (requester_group.size() != k || owner_group.size() != k) {
    throw StructuralError("affinity_mass: group labels not aligned");
  }
  double intra_total = 0.0;
  double inter_total = 0.0;
  std::size_t intra_rows = 0;
  std::size_t inter_rows = 0;
  for (std::size_t i = 0; i < k; ++i) {
    double intra = 0.0;
    double inter = 0.0;
    std::size_t n_intra = 0;
    std::size_t n_inter = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      const double mass = std::max(affinity.at(i, j), 0.0);
      if (owner_group[j] == requester_group[i]) {
        intra += mass;
        ++n_intra;
      } else {
        inter += mass;
        ++n_inter;
      }
    }
    if (n_intra) {
      intra_total += intra / static_cast<double>(n_intra);
      ++intra_rows;
    }
    if (n_inter) {
      inter_total += inter / static_cast<double>(n_inter);
      ++inter_rows;
    }
  }
  AffinityMass m;
  m.intra = intra_rows ? intra_total / static_cast<double>(intra_rows) : 0.0;
  m.inter = inter_rows ? inter_total / static_cast<double>(inter_rows) : 0.0;
  if (m.inter > 0.0) {
    m.ratio = m.intra / m.inter;
  } else {
    m.ratio = m.intra > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return m;
}

}  // namespace fomo
