#include "fomo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "fomo/errors.hpp"
#include "fomo/rng.hpp"

namespace fomo {

std::vector<std::size_t> Dataset::pool_indices(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == tag) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Dataset::label_counts() const {
  std::vector<std::size_t> counts(n_classes, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

void Dataset::validate() const {
  if (n_features == 0) throw ValidationError("dataset has zero features");
  if (n_classes == 0) throw ValidationError("dataset has zero classes");
  if (features.size() != labels.size() * n_features) {
    throw StructuralError(fmt::format(
        "dataset holds {} feature values for {} samples of width {}",
        features.size(), labels.size(), n_features));
  }
  if (split.size() != labels.size()) {
    throw StructuralError("dataset split tags do not match sample count");
  }
  if (labels.size() < n_classes) {
    throw ValidationError(
        fmt::format("dataset has {} samples but {} classes", labels.size(),
                    n_classes));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) {
      throw ValidationError(
          fmt::format("label {} of sample {} outside [0, {})", labels[i], i,
                      n_classes));
    }
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!std::isfinite(features[i])) {
      throw ValidationError(
          fmt::format("non-finite feature in sample {}", i / n_features));
    }
  }
}

void PartitionedDataset::validate() const {
  if (!dataset) throw StructuralError("partition has no dataset");
  const std::size_t n = dataset->size();
  if (distribution_of_client.size() != clients.size() ||
      target_of_client.size() != clients.size()) {
    throw StructuralError("partition metadata does not match client count");
  }
  for (std::size_t c = 0; c < clients.size(); ++c) {
    const auto& s = clients[c];
    for (const auto* set : {&s.train, &s.val, &s.test}) {
      std::unordered_set<std::size_t> seen;
      for (std::size_t idx : *set) {
        if (idx >= n) {
          throw StructuralError(
              fmt::format("client {}: index {} out of range", c, idx));
        }
        if (!seen.insert(idx).second) {
          throw StructuralError(
              fmt::format("client {}: duplicate index {}", c, idx));
        }
      }
    }
    if (!s.disjoint()) {
      throw StructuralError(
          fmt::format("client {}: train/val/test overlap", c));
    }
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_classes == 0 || spec.n_features == 0 ||
      spec.samples_per_class == 0) {
    throw ValidationError("generate_synthetic: counts must be positive");
  }
  if (!(spec.class_separation > 0.0)) {
    throw ValidationError("generate_synthetic: class_separation must be > 0");
  }
  Rng rng = make_rng(spec.seed, "synthetic");
  const std::size_t d = spec.n_features;

  // E|z_a - z_b|^2 = 2d for standard normal means, hence the scaling.
  const double scale = spec.class_separation / std::sqrt(2.0 * d);
  std::vector<double> means(spec.n_classes * d);
  for (auto& m : means) m = scale * standard_normal(rng);

  Dataset out;
  out.n_features = d;
  out.n_classes = spec.n_classes;
  const std::size_t n = spec.n_classes * spec.samples_per_class;
  out.features.reserve(n * d);
  out.labels.reserve(n);
  out.split.reserve(n);
  const auto test_per_class = static_cast<std::size_t>(
      std::nearbyint(0.2 * static_cast<double>(spec.samples_per_class)));
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      for (std::size_t j = 0; j < d; ++j) {
        out.features.push_back(means[c * d + j] + standard_normal(rng));
      }
      out.labels.push_back(static_cast<int>(c));
      out.split.push_back(s + test_per_class < spec.samples_per_class
                              ? SplitTag::kTrainPool
                              : SplitTag::kTestPool);
    }
  }
  return out;
}

Dataset concat_train_test(const Dataset& train, const Dataset& test) {
  if (train.n_features != test.n_features) {
    throw StructuralError(fmt::format(
        "train and test feature widths differ ({} vs {})", train.n_features,
        test.n_features));
  }
  Dataset out = train;
  out.n_classes = std::max(train.n_classes, test.n_classes);
  out.features.insert(out.features.end(), test.features.begin(),
                      test.features.end());
  out.labels.insert(out.labels.end(), test.labels.begin(), test.labels.end());
  out.split.insert(out.split.end(), test.size(), SplitTag::kTestPool);
  return out;
}

Dataset assign_test_split(Dataset data, double test_fraction,
                          std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("assign_test_split: fraction must lie in (0, 1)");
  }
  Rng rng = make_rng(seed, "test_split");
  std::vector<std::vector<std::size_t>> by_class(data.n_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  }
  std::fill(data.split.begin(), data.split.end(), SplitTag::kTrainPool);
  for (auto& members : by_class) {
    shuffle_in_place(members, rng);
    const auto take = static_cast<std::size_t>(
        std::nearbyint(test_fraction * static_cast<double>(members.size())));
    for (std::size_t t = 0; t < take; ++t) {
      data.split[members[t]] = SplitTag::kTestPool;
    }
  }
  return data;
}

EmdReport compute_emd(const PartitionedDataset& partition) {
  const Dataset& data = *partition.dataset;
  const auto global_counts = data.label_counts();
  std::vector<double> global(data.n_classes);
  for (std::size_t c = 0; c < data.n_classes; ++c) {
    global[c] = static_cast<double>(global_counts[c]) /
                static_cast<double>(data.size());
  }
  EmdReport report;
  for (std::size_t k = 0; k < partition.num_clients(); ++k) {
    const auto& train = partition.clients[k].train;
    if (train.empty()) {
      throw ValidationError(
          fmt::format("compute_emd: client {} has no training data", k));
    }
    std::vector<double> local(data.n_classes, 0.0);
    for (std::size_t idx : train) {
      local[static_cast<std::size_t>(data.labels[idx])] += 1.0;
    }
    double emd = 0.0;
    for (std::size_t c = 0; c < data.n_classes; ++c) {
      emd += std::abs(local[c] / static_cast<double>(train.size()) - global[c]);
    }
    report.per_client.push_back(emd);
  }
  double sum = 0.0;
  for (double v : report.per_client) sum += v;
  report.mean = report.per_client.empty()
                    ? 0.0
                    : sum / static_cast<double>(report.per_client.size());
  return report;
}

}  // namespace fomo
