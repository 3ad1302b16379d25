#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fomo/federation.hpp"

namespace fomo {

enum class SplitTag : std::uint8_t { kTrainPool, kTestPool };

/// Labelled samples stored row-major, each tagged with its source split.
struct Dataset {
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<double> features;  // size() * n_features values
  std::vector<int> labels;
  std::vector<SplitTag> split;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * n_features, n_features};
  }
  /// Indices carrying `tag`, ascending.
  std::vector<std::size_t> pool_indices(SplitTag tag) const;
  /// Number of samples per label over the whole dataset.
  std::vector<std::size_t> label_counts() const;

  /// Throws ValidationError or StructuralError on broken invariants.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

/// A dataset split among K clients.
struct PartitionedDataset {
  std::shared_ptr<const Dataset> dataset;
  std::vector<ClientSplits> clients;
  /// Latent distribution (or label-set group) of each client's training data.
  std::vector<std::size_t> distribution_of_client;
  std::size_t distributions = 0;  // D
  /// target_of_client[i] = client whose original (val, test) pair client i
  /// now holds. Identity until shuffle_targets runs.
  std::vector<std::size_t> target_of_client;
  std::string scheme;
  std::uint64_t seed = 0;

  std::size_t num_clients() const noexcept { return clients.size(); }
  /// Distribution each client's (val, test) pair was drawn from.
  std::size_t target_distribution(std::size_t client) const {
    return distribution_of_client[target_of_client[client]];
  }
  /// Checks per-client disjointness and index ranges.
  void validate() const;
};

struct EmdReport {
  std::vector<double> per_client;
  double mean = 0.0;
};

struct SyntheticSpec {
  std::size_t n_classes = 10;
  std::size_t n_features = 16;
  std::size_t samples_per_class = 100;
  double class_separation = 3.0;
  std::uint64_t seed = 1;

  bool operator==(const SyntheticSpec&) const = default;
};

/// Isotropic unit-variance Gaussian blobs, one per class. Class means are
/// drawn so that the typical distance between two means equals
/// `class_separation` noise standard deviations. Per class, 80% of the
/// samples are tagged train_pool and the rest test_pool.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Reads an IDX image/label file pair (MNIST layout). Pixels are scaled to
/// [0, 1]; every sample is tagged train_pool.
Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels);

/// Reads a CSV with header feature_0..feature_{d-1},label,split where split
/// is `train` or `test`.
Dataset load_csv(const std::filesystem::path& path);
void write_csv(const Dataset& data, const std::filesystem::path& path);

/// Appends `test` to `train`, retagging the appended rows as test_pool.
Dataset concat_train_test(const Dataset& train, const Dataset& test);

/// Retags a per-class `test_fraction` of each label as test_pool.
Dataset assign_test_split(Dataset data, double test_fraction,
                          std::uint64_t seed);

/// Two-class-per-client shards: each label's train pool is cut into equal
/// shards and every client receives `classes_per_client` shards of distinct
/// labels. Test sets come from the same labels' test pools.
PartitionedDataset pathological_partition(
    std::shared_ptr<const Dataset> data, std::size_t clients,
    std::size_t classes_per_client, std::uint64_t seed);

/// PCA + K-means cluster label of every sample (train and test pooled).
std::vector<std::size_t> latent_clusters(const Dataset& data,
                                         std::size_t distributions,
                                         std::size_t pca_dims,
                                         std::uint64_t seed);

/// Clusters the dataset into D latent distributions, assigns clients evenly
/// to clusters and lets each client sample without replacement from its
/// cluster. With no explicit quota a cluster's pools are split evenly among
/// its clients.
PartitionedDataset latent_partition(
    std::shared_ptr<const Dataset> data, std::size_t distributions,
    std::size_t clients, std::size_t pca_dims, std::uint64_t seed,
    std::optional<std::size_t> samples_per_client = std::nullopt);

/// Moves round(val_fraction * |pool|) of each client's local pool into its
/// validation set (round half to even).
PartitionedDataset split_train_val(const PartitionedDataset& partition,
                                   double val_fraction, std::uint64_t seed);

/// Moves the (val, test) pairs among clients with a seeded derangement.
PartitionedDataset shuffle_targets(const PartitionedDataset& partition,
                                   std::uint64_t seed);
/// Client i receives the (val, test) pair currently held by perm[i].
PartitionedDataset shuffle_targets(const PartitionedDataset& partition,
                                   std::span<const std::size_t> perm);

/// Every client contributes share_fraction of its train set to a common
/// pool that is then appended to every client's train set.
PartitionedDataset share_data(const PartitionedDataset& partition,
                              double share_fraction, std::uint64_t seed);

/// L1 distance between each client's train label histogram and the label
/// histogram of the whole dataset.
EmdReport compute_emd(const PartitionedDataset& partition);

}  // namespace fomo
