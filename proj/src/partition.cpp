#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include <fmt/format.h>

#include "fomo/clustering.hpp"
#include "fomo/dataset.hpp"
#include "fomo/errors.hpp"
#include "fomo/rng.hpp"

namespace fomo {
namespace {

/// Cuts `items` into `parts` contiguous chunks whose sizes differ by <= 1.
std::vector<std::vector<std::size_t>> even_chunks(
    const std::vector<std::size_t>& items, std::size_t parts) {
  std::vector<std::vector<std::size_t>> out(parts);
  const std::size_t base = items.size() / parts;
  const std::size_t extra = items.size() % parts;
  std::size_t pos = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    out[p].assign(items.begin() + static_cast<std::ptrdiff_t>(pos),
                  items.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

std::vector<std::vector<std::size_t>> indices_by_class(
    const Dataset& data, SplitTag tag) {
  std::vector<std::vector<std::size_t>> out(data.n_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.split[i] == tag) {
      out[static_cast<std::size_t>(data.labels[i])].push_back(i);
    }
  }
  return out;
}

void sort_splits(ClientSplits& s) {
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
}

}  // namespace

PartitionedDataset pathological_partition(std::shared_ptr<const Dataset> data,
                                          std::size_t clients,
                                          std::size_t classes_per_client,
                                          std::uint64_t seed) {
  if (!data) throw StructuralError("pathological_partition: null dataset");
  if (clients == 0) {
    throw ValidationError("pathological_partition: need at least one client");
  }
  if (classes_per_client == 0 || classes_per_client > data->n_classes) {
    throw ValidationError(fmt::format(
        "pathological_partition: infeasible shard count, {} classes per "
        "client with {} classes",
        classes_per_client, data->n_classes));
  }
  Rng rng = make_rng(seed, "pathological");
  auto train_by_class = indices_by_class(*data, SplitTag::kTrainPool);
  auto test_by_class = indices_by_class(*data, SplitTag::kTestPool);
  for (auto& v : train_by_class) shuffle_in_place(v, rng);
  for (auto& v : test_by_class) shuffle_in_place(v, rng);

  const std::size_t n_classes = data->n_classes;
  const std::size_t total_shards = clients * classes_per_client;
  const auto class_order = random_permutation(n_classes, rng);
  std::vector<std::size_t> shards_of_class(n_classes, 0);
  if (total_shards <= n_classes) {
    for (std::size_t s = 0; s < total_shards; ++s) {
      shards_of_class[class_order[s]] = 1;
    }
  } else {
    const std::size_t base = total_shards / n_classes;
    const std::size_t extra = total_shards % n_classes;
    for (std::size_t r = 0; r < n_classes; ++r) {
      shards_of_class[class_order[r]] = base + (r < extra ? 1 : 0);
    }
  }

  // Class-sorted shards dealt round-robin: a run of one class never exceeds
  // K shards, so no client receives the same label twice.
  const auto client_order = random_permutation(clients, rng);
  PartitionedDataset out;
  out.dataset = data;
  out.clients.resize(clients);
  out.scheme = "pathological";
  out.seed = seed;
  std::size_t position = 0;
  for (std::size_t r = 0; r < n_classes; ++r) {
    const std::size_t c = class_order[r];
    const std::size_t shards = shards_of_class[c];
    if (shards == 0) continue;
    if (train_by_class[c].size() < shards) {
      throw ValidationError(fmt::format(
          "pathological_partition: infeasible shard count, class {} has {} "
          "training samples for {} shards",
          c, train_by_class[c].size(), shards));
    }
    const auto train_chunks = even_chunks(train_by_class[c], shards);
    const auto test_chunks = even_chunks(test_by_class[c], shards);
    for (std::size_t s = 0; s < shards; ++s, ++position) {
      auto& client = out.clients[client_order[position % clients]];
      client.train.insert(client.train.end(), train_chunks[s].begin(),
                          train_chunks[s].end());
      client.test.insert(client.test.end(), test_chunks[s].begin(),
                         test_chunks[s].end());
    }
  }

  std::map<std::vector<int>, std::size_t> group_of_labels;
  out.distribution_of_client.resize(clients);
  for (std::size_t k = 0; k < clients; ++k) {
    sort_splits(out.clients[k]);
    std::vector<int> labels;
    for (std::size_t idx : out.clients[k].train) {
      labels.push_back(data->labels[idx]);
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    const auto [it, inserted] =
        group_of_labels.emplace(labels, group_of_labels.size());
    out.distribution_of_client[k] = it->second;
  }
  out.distributions = group_of_labels.size();
  out.target_of_client.resize(clients);
  for (std::size_t k = 0; k < clients; ++k) out.target_of_client[k] = k;
  out.validate();
  return out;
}

std::vector<std::size_t> latent_clusters(const Dataset& data,
                                         std::size_t distributions,
                                         std::size_t pca_dims,
                                         std::uint64_t seed) {
  if (distributions == 0) {
    throw ValidationError("latent_clusters: need at least one distribution");
  }
  if (pca_dims == 0 || pca_dims > data.n_features) {
    throw ValidationError(fmt::format(
        "latent_clusters: pca_dims {} outside [1, {}]", pca_dims,
        data.n_features));
  }
  if (distributions == 1) return std::vector<std::size_t>(data.size(), 0);
  PointSet raw;
  raw.dims = data.n_features;
  raw.values = data.features;
  const PointSet embedded = pca_project(raw, pca_dims);
  return kmeans(embedded, distributions, derive_seed(seed, "latent_kmeans"))
      .assignment;
}

PartitionedDataset latent_partition(std::shared_ptr<const Dataset> data,
                                    std::size_t distributions,
                                    std::size_t clients, std::size_t pca_dims,
                                    std::uint64_t seed,
                                    std::optional<std::size_t> samples_per_client) {
  if (!data) throw StructuralError("latent_partition: null dataset");
  if (distributions == 0 || distributions > clients) {
    throw ValidationError(fmt::format(
        "latent_partition: need 1 <= D <= K, got D={} K={}", distributions,
        clients));
  }
  const auto cluster = latent_clusters(*data, distributions, pca_dims, seed);

  Rng rng = make_rng(seed, "latent_partition");
  std::vector<std::size_t> assignment(clients);
  for (std::size_t k = 0; k < clients; ++k) assignment[k] = k % distributions;
  shuffle_in_place(assignment, rng);

  std::vector<std::vector<std::size_t>> train_pool(distributions);
  std::vector<std::vector<std::size_t>> test_pool(distributions);
  for (std::size_t i = 0; i < data->size(); ++i) {
    auto& pool = data->split[i] == SplitTag::kTrainPool ? train_pool : test_pool;
    pool[cluster[i]].push_back(i);
  }

  PartitionedDataset out;
  out.dataset = data;
  out.clients.resize(clients);
  out.distribution_of_client = assignment;
  out.distributions = distributions;
  out.scheme = "latent";
  out.seed = seed;
  for (std::size_t d = 0; d < distributions; ++d) {
    std::vector<std::size_t> members;
    for (std::size_t k = 0; k < clients; ++k) {
      if (assignment[k] == d) members.push_back(k);
    }
    shuffle_in_place(train_pool[d], rng);
    shuffle_in_place(test_pool[d], rng);
    const std::size_t quota = samples_per_client.value_or(
        train_pool[d].size() / members.size());
    if (quota == 0 || quota * members.size() > train_pool[d].size()) {
      throw CapacityError(fmt::format(
          "latent_partition: cluster {} holds {} training samples, cannot "
          "serve {} clients with {} samples each",
          d, train_pool[d].size(), members.size(),
          samples_per_client.value_or(1)));
    }
    if (test_pool[d].size() < members.size()) {
      throw CapacityError(fmt::format(
          "latent_partition: cluster {} holds {} test samples for {} clients",
          d, test_pool[d].size(), members.size()));
    }
    const auto tests = even_chunks(test_pool[d], members.size());
    for (std::size_t m = 0; m < members.size(); ++m) {
      auto& split = out.clients[members[m]];
      const auto first = train_pool[d].begin() +
                         static_cast<std::ptrdiff_t>(m * quota);
      split.train.assign(first, first + static_cast<std::ptrdiff_t>(quota));
      split.test = tests[m];
      sort_splits(split);
    }
  }
  out.target_of_client.resize(clients);
  for (std::size_t k = 0; k < clients; ++k) out.target_of_client[k] = k;
  out.validate();
  return out;
}

PartitionedDataset split_train_val(const PartitionedDataset& partition,
                                   double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ValidationError("split_train_val: val_fraction must lie in (0, 1)");
  }
  PartitionedDataset out = partition;
  for (std::size_t k = 0; k < out.num_clients(); ++k) {
    auto& s = out.clients[k];
    std::vector<std::size_t> pool = s.train;
    pool.insert(pool.end(), s.val.begin(), s.val.end());
    std::sort(pool.begin(), pool.end());
    if (pool.size() < 2) {
      throw ValidationError(fmt::format(
          "split_train_val: client {} has {} samples, need at least 2", k,
          pool.size()));
    }
    Rng rng = make_rng(seed, "val_split", k);
    shuffle_in_place(pool, rng);
    const auto n_val = static_cast<std::size_t>(
        std::nearbyint(val_fraction * static_cast<double>(pool.size())));
    s.val.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_val), pool.end());
    sort_splits(s);
  }
  out.validate();
  return out;
}

PartitionedDataset shuffle_targets(const PartitionedDataset& partition,
                                   std::span<const std::size_t> perm) {
  const std::size_t k = partition.num_clients();
  if (perm.size() != k) {
    throw StructuralError(fmt::format(
        "shuffle_targets: permutation of length {} for {} clients",
        perm.size(), k));
  }
  std::vector<bool> seen(k, false);
  for (std::size_t p : perm) {
    if (p >= k || seen[p]) {
      throw ValidationError("shuffle_targets: not a permutation");
    }
    seen[p] = true;
  }
  PartitionedDataset out = partition;
  for (std::size_t i = 0; i < k; ++i) {
    out.clients[i].val = partition.clients[perm[i]].val;
    out.clients[i].test = partition.clients[perm[i]].test;
    out.target_of_client[i] = partition.target_of_client[perm[i]];
  }
  out.validate();
  return out;
}

PartitionedDataset shuffle_targets(const PartitionedDataset& partition,
                                   std::uint64_t seed) {
  const std::size_t k = partition.num_clients();
  if (k < 2) throw ValidationError("shuffle_targets: need at least 2 clients");
  Rng rng = make_rng(seed, "shuffle_targets");
  // Rejection sampling gives a uniform derangement in ~e attempts.
  std::vector<std::size_t> perm;
  bool fixed_point = true;
  while (fixed_point) {
    perm = random_permutation(k, rng);
    fixed_point = false;
    for (std::size_t i = 0; i < k; ++i) fixed_point |= perm[i] == i;
  }
  return shuffle_targets(partition, perm);
}

PartitionedDataset share_data(const PartitionedDataset& partition,
                              double share_fraction, std::uint64_t seed) {
  if (!(share_fraction >= 0.0 && share_fraction < 1.0)) {
    throw ValidationError("share_data: share_fraction must lie in [0, 1)");
  }
  PartitionedDataset out = partition;
  if (share_fraction == 0.0) return out;
  std::vector<std::size_t> pool;
  for (std::size_t k = 0; k < out.num_clients(); ++k) {
    std::vector<std::size_t> train = out.clients[k].train;
    Rng rng = make_rng(seed, "share", k);
    shuffle_in_place(train, rng);
    const auto take = static_cast<std::size_t>(std::nearbyint(
        share_fraction * static_cast<double>(train.size())));
    pool.insert(pool.end(), train.begin(),
                train.begin() + static_cast<std::ptrdiff_t>(take));
  }
  for (auto& s : out.clients) {
    std::unordered_set<std::size_t> taken(s.train.begin(), s.train.end());
    taken.insert(s.val.begin(), s.val.end());
    taken.insert(s.test.begin(), s.test.end());
    for (std::size_t idx : pool) {
      if (taken.insert(idx).second) s.train.push_back(idx);
    }
    std::sort(s.train.begin(), s.train.end());
  }
  out.validate();
  return out;
}

}  // namespace fomo
