#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "fomo/clustering.hpp"
#include "fomo/dataset.hpp"
#include "fomo/errors.hpp"

namespace fs = std::filesystem;
using namespace fomo;

namespace {

const fs::path kFixtures = FOMO_FIXTURE_DIR;

std::shared_ptr<const Dataset> blobs(std::size_t classes, std::size_t per_class,
                                     double sep, std::uint64_t seed = 1,
                                     std::size_t features = 16) {
  SyntheticSpec s;
  s.n_classes = classes;
  s.n_features = features;
  s.samples_per_class = per_class;
  s.class_separation = sep;
  s.seed = seed;
  return std::make_shared<const Dataset>(generate_synthetic(s));
}

std::set<int> label_set(const Dataset& d, const std::vector<std::size_t>& idx) {
  std::set<int> out;
  for (auto i : idx) out.insert(d.labels[i]);
  return out;
}

std::vector<double> histogram(const Dataset& d, const std::vector<std::size_t>& idx) {
  std::vector<double> h(d.n_classes, 0.0);
  for (auto i : idx) h[static_cast<std::size_t>(d.labels[i])] += 1.0;
  for (auto& v : h) v /= static_cast<double>(idx.size());
  return h;
}

}  // namespace

TEST_CASE("synthetic blobs: shape, balance, determinism") {
  const auto d = blobs(10, 100, 3.0);
  CHECK(d->size() == 1000);
  CHECK(d->n_features == 16);
  for (auto c : d->label_counts()) CHECK(c == 100);
  std::size_t test = 0;
  for (auto t : d->split) test += t == SplitTag::kTestPool;
  CHECK(test == 200);
  const auto again = blobs(10, 100, 3.0);
  CHECK(again->features == d->features);
  CHECK(again->labels == d->labels);
  CHECK(blobs(10, 100, 3.0, 2)->features != d->features);
}

TEST_CASE("synthetic blobs: wide separation is nearest-centroid separable") {
  const auto d = blobs(10, 100, 10.0);
  const std::size_t dim = d->n_features;
  std::vector<double> centroid(10 * dim, 0.0);
  std::vector<double> count(10, 0.0);
  for (std::size_t i = 0; i < d->size(); ++i) {
    const auto c = static_cast<std::size_t>(d->labels[i]);
    for (std::size_t j = 0; j < dim; ++j) centroid[c * dim + j] += d->row(i)[j];
    count[c] += 1.0;
  }
  for (std::size_t c = 0; c < 10; ++c) {
    for (std::size_t j = 0; j < dim; ++j) centroid[c * dim + j] /= count[c];
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d->size(); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < 10; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = d->row(i)[j] - centroid[c * dim + j];
        s += diff * diff;
      }
      if (s < best_d) best_d = s, best = c;
    }
    correct += static_cast<int>(best) == d->labels[i];
  }
  CHECK(static_cast<double>(correct) / d->size() >= 0.99);
}

TEST_CASE("idx loader recovers the fixture written by the independent script") {
  const auto d = load_idx(kFixtures / "tiny-images.idx3-ubyte",
                          kFixtures / "tiny-labels.idx1-ubyte");
  REQUIRE(d.size() == 2);
  CHECK(d.n_features == 6);
  CHECK(d.labels == std::vector<int>{7, 2});
  CHECK(d.n_classes == 8);
  const std::vector<double> first{0, 255, 128, 64, 32, 1};
  const std::vector<double> second{10, 20, 30, 40, 50, 60};
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(d.row(0)[j] == first[j] / 255.0);
    CHECK(d.row(1)[j] == second[j] / 255.0);
  }
}

TEST_CASE("idx loader reports each failure distinctly") {
  auto kind_of = [](const fs::path& images, const fs::path& labels) {
    try {
      load_idx(images, labels);
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      const bool named = msg.find(images.filename().string()) != std::string::npos ||
                         msg.find(labels.filename().string()) != std::string::npos;
      CHECK(named);
      return e.kind();
    }
    FAIL("expected a format error");
    return FormatError::Kind::kMalformed;
  };
  CHECK(kind_of(kFixtures / "bad-magic-images.idx3-ubyte",
                kFixtures / "tiny-labels.idx1-ubyte") == FormatError::Kind::kBadMagic);
  CHECK(kind_of(kFixtures / "truncated-images.idx3-ubyte",
                kFixtures / "tiny-labels.idx1-ubyte") == FormatError::Kind::kTruncated);
  CHECK(kind_of(kFixtures / "tiny-images.idx3-ubyte",
                kFixtures / "three-labels.idx1-ubyte") == FormatError::Kind::kCountMismatch);
  // Label file passed as the image file: wrong magic names that file.
  CHECK(kind_of(kFixtures / "tiny-labels.idx1-ubyte",
                kFixtures / "tiny-labels.idx1-ubyte") == FormatError::Kind::kBadMagic);
}

TEST_CASE("csv round trip") {
  const auto d = blobs(3, 10, 3.0, 4, 3);
  const auto path = fs::temp_directory_path() / "fomo_csv_roundtrip.csv";
  write_csv(*d, path);
  const auto back = load_csv(path);
  CHECK(back.features == d->features);
  CHECK(back.labels == d->labels);
  CHECK(back.split == d->split);
  {
    std::ofstream out(path);
    out << "feature_0,label,split\n1.0,0,train\n2.0,x,train\n";
  }
  CHECK_THROWS_AS(load_csv(path), FormatError);
  fs::remove(path);
}

TEST_CASE("pathological partition") {
  const auto d = blobs(10, 100, 3.0);

  SUBCASE("five clients hold exactly two labels each") {
    const auto p = pathological_partition(d, 5, 2, 3);
    std::vector<std::size_t> all;
    for (const auto& c : p.clients) {
      CHECK(label_set(*d, c.train).size() == 2);
      CHECK(label_set(*d, c.test) == label_set(*d, c.train));
      for (auto i : c.test) CHECK(d->split[i] == SplitTag::kTestPool);
      all.insert(all.end(), c.train.begin(), c.train.end());
    }
    // Set cover: every train_pool index of every assigned shard, once.
    std::vector<std::size_t> expected;
    for (std::size_t i = 0; i < d->size(); ++i) {
      if (d->split[i] == SplitTag::kTrainPool) expected.push_back(i);
    }
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    CHECK(all == expected);
  }
  SUBCASE("one client takes every shard of its two labels") {
    const auto p = pathological_partition(d, 1, 2, 3);
    const auto labels = label_set(*d, p.clients[0].train);
    REQUIRE(labels.size() == 2);
    std::size_t expected = 0;
    for (std::size_t i = 0; i < d->size(); ++i) {
      expected += d->split[i] == SplitTag::kTrainPool && labels.count(d->labels[i]);
    }
    CHECK(p.clients[0].train.size() == expected);
  }
  SUBCASE("many clients never exceed the label budget") {
    const auto p = pathological_partition(d, 15, 2, 9);
    for (const auto& c : p.clients) CHECK(label_set(*d, c.train).size() <= 2);
    CHECK(p.distributions >= 1);
  }
  CHECK_THROWS_AS(pathological_partition(d, 5, 11, 3), ValidationError);
  CHECK_THROWS_AS(pathological_partition(blobs(2, 3, 3.0), 10, 2, 3), ValidationError);
}

TEST_CASE("latent partition degenerate cases") {
  const auto d = blobs(10, 100, 3.0);
  SUBCASE("one distribution is IID") {
    const auto p = latent_partition(d, 1, 4, 8, 5);
    for (auto g : p.distribution_of_client) CHECK(g == 0);
  }
  SUBCASE("D = K gives one cluster per client") {
    const auto p = latent_partition(d, 5, 5, 8, 5);
    auto groups = p.distribution_of_client;
    std::sort(groups.begin(), groups.end());
    CHECK(groups == std::vector<std::size_t>{0, 1, 2, 3, 4});
  }
  SUBCASE("clients are spread evenly and keep the original test split") {
    const auto p = latent_partition(d, 3, 7, 8, 5);
    std::vector<int> per(3, 0);
    for (auto g : p.distribution_of_client) ++per[g];
    CHECK(*std::max_element(per.begin(), per.end()) -
              *std::min_element(per.begin(), per.end()) <= 1);
    for (const auto& c : p.clients) {
      for (auto i : c.test) CHECK(d->split[i] == SplitTag::kTestPool);
      for (auto i : c.train) CHECK(d->split[i] == SplitTag::kTrainPool);
    }
  }
  CHECK_THROWS_AS(latent_partition(d, 2, 4, 8, 5, 5000), CapacityError);
  CHECK_THROWS_AS(latent_partition(d, 5, 4, 8, 5), ValidationError);
  CHECK_THROWS_AS(latent_partition(d, 2, 4, 17, 5), ValidationError);
}

TEST_CASE("latent clusters recover well separated blobs up to permutation") {
  const auto d = blobs(5, 200, 8.0, 21);
  const auto cluster = latent_clusters(*d, 5, 16, 3);
  std::vector<std::size_t> perm{0, 1, 2, 3, 4};
  std::size_t best = 0;
  do {
    std::size_t agree = 0;
    for (std::size_t i = 0; i < d->size(); ++i) {
      agree += perm[cluster[i]] == static_cast<std::size_t>(d->labels[i]);
    }
    best = std::max(best, agree);
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(static_cast<double>(best) / d->size() >= 0.95);
}

TEST_CASE("kmeans is deterministic and breaks ties towards the lower centroid") {
  PointSet pts;
  pts.dims = 1;
  pts.values = {0.0, 0.1, 10.0, 10.1, 5.05};
  const auto a = kmeans(pts, 2, 4);
  const auto b = kmeans(pts, 2, 4);
  CHECK(a.assignment == b.assignment);
  CHECK(a.assignment[0] == a.assignment[1]);
  CHECK(a.assignment[2] == a.assignment[3]);
  CHECK(a.assignment[0] != a.assignment[2]);
}

TEST_CASE("train/val split sizes and determinism") {
  const auto d = blobs(2, 100, 3.0);
  PartitionedDataset p;
  p.dataset = d;
  p.clients.resize(2);
  p.distribution_of_client = {0, 0};
  p.target_of_client = {0, 1};
  p.distributions = 1;
  for (std::size_t i = 0; i < 100; ++i) p.clients[0].train.push_back(i);
  p.clients[1].train = {100, 101, 102};
  const auto s = split_train_val(p, 0.2, 1);
  CHECK(s.clients[0].train.size() == 80);
  CHECK(s.clients[0].val.size() == 20);
  const auto half = split_train_val(p, 0.5, 1);
  CHECK(half.clients[1].val.size() == 2);
  CHECK(half.clients[1].train.size() == 1);
  const auto again = split_train_val(p, 0.2, 1);
  CHECK(again.clients[0].val == s.clients[0].val);
  CHECK(s.clients[0].disjoint());
  CHECK_THROWS_AS(split_train_val(p, 1.0, 1), ValidationError);
}

TEST_CASE("shuffle targets") {
  const auto d = blobs(10, 100, 3.0);
  const auto base = split_train_val(latent_partition(d, 2, 6, 8, 1), 0.2, 2);

  SUBCASE("identity permutation leaves the partition unchanged") {
    const std::vector<std::size_t> id{0, 1, 2, 3, 4, 5};
    const auto out = shuffle_targets(base, id);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(out.clients[i].val == base.clients[i].val);
      CHECK(out.clients[i].test == base.clients[i].test);
    }
  }
  SUBCASE("composition with the inverse restores the original") {
    const std::vector<std::size_t> sigma{3, 0, 5, 1, 2, 4};
    std::vector<std::size_t> inverse(6);
    for (std::size_t i = 0; i < 6; ++i) inverse[sigma[i]] = i;
    const auto back = shuffle_targets(shuffle_targets(base, sigma), inverse);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(back.clients[i].val == base.clients[i].val);
      CHECK(back.clients[i].test == base.clients[i].test);
      CHECK(back.target_of_client[i] == i);
    }
  }
  SUBCASE("seeded shuffle moves every pair and keeps train sets") {
    const auto out = shuffle_targets(base, 17);
    std::multiset<std::vector<std::size_t>> before, after;
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(out.clients[i].train == base.clients[i].train);
      CHECK(out.target_of_client[i] != i);
      CHECK(out.clients[i].test == base.clients[out.target_of_client[i]].test);
      before.insert(base.clients[i].val);
      after.insert(out.clients[i].val);
    }
    CHECK(before == after);
  }
  SUBCASE("two clients swap") {
    auto two = latent_partition(d, 1, 2, 8, 1);
    two = split_train_val(two, 0.2, 1);
    const auto out = shuffle_targets(two, 3);
    CHECK(out.clients[0].test == two.clients[1].test);
    CHECK(out.clients[1].val == two.clients[0].val);
  }
  CHECK_THROWS_AS(shuffle_targets(base, std::vector<std::size_t>{0, 0, 1, 2, 3, 4}),
                  ValidationError);
}

TEST_CASE("data sharing") {
  const auto d = blobs(10, 100, 3.0);
  auto p = latent_partition(d, 1, 5, 8, 1, 100);
  CHECK(share_data(p, 0.0, 1).clients[2].train == p.clients[2].train);
  const auto shared = share_data(p, 0.05, 1);
  std::set<std::size_t> pool;
  for (std::size_t k = 0; k < 5; ++k) {
    const auto& after = shared.clients[k].train;
    const auto& before = p.clients[k].train;
    CHECK(std::includes(after.begin(), after.end(), before.begin(), before.end()));
    CHECK(std::adjacent_find(after.begin(), after.end()) == after.end());
    CHECK(after.size() == before.size() + 20);
    for (auto i : after) {
      if (!std::binary_search(before.begin(), before.end(), i)) pool.insert(i);
    }
  }
  CHECK(pool.size() == 25);
}

TEST_CASE("earth mover's distance") {
  SUBCASE("hand arithmetic for a two-label client") {
    auto data = std::make_shared<Dataset>();
    data->n_features = 1;
    data->n_classes = 10;
    for (int c = 0; c < 10; ++c) {
      for (int r = 0; r < 10; ++r) {
        data->features.push_back(0.0);
        data->labels.push_back(c);
        data->split.push_back(SplitTag::kTrainPool);
      }
    }
    PartitionedDataset p;
    p.dataset = data;
    p.clients.resize(1);
    for (std::size_t i = 0; i < 20; ++i) p.clients[0].train.push_back(i);
    p.distribution_of_client = {0};
    p.target_of_client = {0};
    const auto r = compute_emd(p);
    CHECK(r.per_client[0] == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(r.mean == r.per_client[0]);
  }
  SUBCASE("iid clients stay near zero, label skew does not") {
    const auto d = blobs(10, 1000, 3.0);
    const auto iid = compute_emd(latent_partition(d, 1, 8, 8, 2));
    CHECK(iid.mean <= 0.1);
    const auto patho = compute_emd(pathological_partition(d, 8, 2, 2));
    CHECK(iid.mean <= patho.mean);
    for (double v : patho.per_client) CHECK((v >= 0.0 && v <= 2.0));
    const auto latent5 = compute_emd(latent_partition(d, 5, 10, 8, 2));
    CHECK(iid.mean < latent5.mean);
  }
  SUBCASE("single distribution histograms stay close to the global one") {
    const auto d = blobs(10, 1000, 3.0);
    const auto p = latent_partition(d, 1, 8, 8, 6);
    std::vector<std::size_t> all(d->size());
    std::iota(all.begin(), all.end(), 0);
    const auto global = histogram(*d, all);
    for (const auto& c : p.clients) {
      REQUIRE(c.train.size() >= 200);
      const auto h = histogram(*d, c.train);
      double l1 = 0.0;
      for (std::size_t k = 0; k < 10; ++k) l1 += std::abs(h[k] - global[k]);
      CHECK(l1 <= 0.15);
    }
  }
}
