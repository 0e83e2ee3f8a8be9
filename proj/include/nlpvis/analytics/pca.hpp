#pragma once

#include "nlpvis/core.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace nlpvis {

struct PcaBasis {
  Vector mean;
  /// Orthonormal principal directions as columns, by descending variance.
  /// Holds min(k, rank) columns.
  Matrix components;
  /// Variance along each of the k requested directions (0 past the rank).
  Vector variances;
  std::size_t rank = 0;
  bool rank_deficient = false;
};

/// Flips `v` so that its largest-magnitude entry (first one on ties) is
/// positive.
inline void canonical_sign(Eigen::Ref<Vector> v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  }
  if (v.size() > 0 && v[best] < 0.0) v = -v;
}

/// Top-k principal components of `points` (covariance normalized by m − 1),
/// computed from the thin SVD of the centered data matrix.
inline PcaBasis pca_basis(std::span<const Vector> points, std::size_t k) {
  if (points.size() < 2) throw InvalidArgument("PCA needs at least two points");
  const auto n = points.front().size();
  if (k == 0 || static_cast<Eigen::Index>(k) > n) throw InvalidArgument("PCA component count must lie in [1, dimension]");
  const auto m = static_cast<Eigen::Index>(points.size());

  PcaBasis out;
  out.mean = Vector::Zero(n);
  for (const auto& p : points) {
    if (p.size() != n) throw InvalidArgument("PCA points must share one dimension");
    out.mean += p;
  }
  out.mean /= static_cast<double>(m);

  Matrix centered(m, n);
  for (Eigen::Index i = 0; i < m; ++i) centered.row(i) = (points[static_cast<std::size_t>(i)] - out.mean).transpose();

  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector sigma = svd.singularValues();
  const double cutoff = sigma.size() > 0 ? sigma[0] * static_cast<double>(std::max(m, n)) *
                                               std::numeric_limits<double>::epsilon()
                                         : 0.0;
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma[i] > cutoff && sigma[i] > 0.0) ++rank;
  }
  if (rank == 0) throw InvalidArgument("PCA needs at least two distinct points");

  const std::size_t kept = std::min(k, rank);
  out.rank = rank;
  out.rank_deficient = rank < k;
  out.components = svd.matrixV().leftCols(static_cast<Eigen::Index>(kept));
  for (Eigen::Index c = 0; c < out.components.cols(); ++c) canonical_sign(out.components.col(c));
  out.variances = Vector::Zero(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < kept; ++i) {
    const auto s = sigma[static_cast<Eigen::Index>(i)];
    out.variances[static_cast<Eigen::Index>(i)] = s * s / static_cast<double>(m - 1);
  }
  return out;
}

inline PcaBasis pca_basis(const std::vector<Vector>& points, std::size_t k) {
  return pca_basis(std::span<const Vector>(points), k);
}

}  // namespace nlpvis
