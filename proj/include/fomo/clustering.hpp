#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fomo {

/// Row-major n x dims matrix.
struct PointSet {
  std::size_t dims = 0;
  std::vector<double> values;

  std::size_t size() const noexcept { return dims ? values.size() / dims : 0; }
  std::span<const double> point(std::size_t i) const {
    return {values.data() + i * dims, dims};
  }
};

/// Projects centred rows onto the top `dims` principal axes.
PointSet pca_project(const PointSet& data, std::size_t dims);

struct KMeansOptions {
  std::size_t max_iterations = 100;
  /// Independent random-partition restarts; the lowest inertia wins.
  std::size_t restarts = 10;
};

struct KMeansResult {
  std::vector<std::size_t> assignment;
  PointSet centroids;
  double inertia = 0.0;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm from seeded random-partition starts. Ties between
/// equidistant centroids go to the lower index.
KMeansResult kmeans(const PointSet& data, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options = {});

}  // namespace fomo
