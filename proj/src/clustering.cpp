#include "fomo/clustering.hpp"

#include <algorithm>
#include <limits>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "fomo/errors.hpp"
#include "fomo/rng.hpp"

namespace fomo {

PointSet pca_project(const PointSet& data, std::size_t dims) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto d = static_cast<Eigen::Index>(data.dims);
  if (dims == 0 || dims > data.dims) {
    throw ValidationError(fmt::format(
        "pca_project: {} components requested from {} features", dims,
        data.dims));
  }
  if (n < 2) throw ValidationError("pca_project: need at least two points");

  using RowMatrix =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMatrix> x(data.values.data(), n, d);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const RowMatrix centred = x.rowwise() - mean;
  const Eigen::MatrixXd cov =
      (centred.transpose() * centred) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw NumericError("pca_project: eigendecomposition failed");
  }
  // Eigenvalues ascend; keep the trailing columns in descending order.
  const auto k = static_cast<Eigen::Index>(dims);
  Eigen::MatrixXd basis(d, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - c);
    // Fix the sign so the largest-magnitude loading is positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.col(c) = v;
  }

  PointSet out;
  out.dims = dims;
  out.values.resize(static_cast<std::size_t>(n) * dims);
  Eigen::Map<RowMatrix> projected(out.values.data(), n, k);
  projected = centred * basis;
  return out;
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

void recompute_centroids(const PointSet& data,
                         const std::vector<std::size_t>& assignment,
                         PointSet& centroids, std::vector<std::size_t>& counts) {
  std::fill(centroids.values.begin(), centroids.values.end(), 0.0);
  std::fill(counts.begin(), counts.end(), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = data.point(i);
    double* c = centroids.values.data() + assignment[i] * data.dims;
    for (std::size_t j = 0; j < data.dims; ++j) c[j] += p[j];
    ++counts[assignment[i]];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    double* row = centroids.values.data() + c * data.dims;
    for (std::size_t j = 0; j < data.dims; ++j) {
      row[j] /= static_cast<double>(counts[c]);
    }
  }
}

std::size_t nearest(const PointSet& centroids, std::span<const double> p,
                    double* best_out) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids.point(c));
    if (d < best_d) {  // strict: ties keep the lower index
      best_d = d;
      best = c;
    }
  }
  if (best_out) *best_out = best_d;
  return best;
}

KMeansResult lloyd(const PointSet& data, std::size_t k, Rng& rng,
                   std::size_t max_iterations) {
  const std::size_t n = data.size();
  KMeansResult r;
  r.assignment.resize(n);
  for (auto& a : r.assignment) a = uniform_index(rng, k);
  r.centroids.dims = data.dims;
  r.centroids.values.assign(k * data.dims, 0.0);
  std::vector<std::size_t> counts(k);
  recompute_centroids(data, r.assignment, r.centroids, counts);

  for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
    // Empty clusters restart at the point farthest from its centroid.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[r.assignment[i]] <= 1) continue;
        const double d =
            squared_distance(data.point(i), r.centroids.point(r.assignment[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far_d < 0.0) continue;
      --counts[r.assignment[far]];
      r.assignment[far] = c;
      counts[c] = 1;
      const auto p = data.point(far);
      std::copy(p.begin(), p.end(), r.centroids.values.begin() + c * data.dims);
    }

    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(r.centroids, data.point(i), nullptr);
      if (c != r.assignment[i]) {
        r.assignment[i] = c;
        changed = true;
      }
    }
    recompute_centroids(data, r.assignment, r.centroids, counts);
    if (!changed && r.iterations > 0) break;
  }

  r.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r.inertia +=
        squared_distance(data.point(i), r.centroids.point(r.assignment[i]));
  }
  return r;
}

}  // namespace

KMeansResult kmeans(const PointSet& data, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options) {
  if (k == 0 || k > data.size()) {
    throw ValidationError(fmt::format(
        "kmeans: {} clusters requested for {} points", k, data.size()));
  }
  KMeansResult best;
  bool have = false;
  const std::size_t restarts = std::max<std::size_t>(options.restarts, 1);
  for (std::size_t attempt = 0; attempt < restarts; ++attempt) {
    Rng rng = make_rng(seed, "kmeans", attempt);
    KMeansResult r = lloyd(data, k, rng, options.max_iterations);
    if (!have || r.inertia < best.inertia) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

}  // namespace fomo
