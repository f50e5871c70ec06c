#include "rpg/geometry.hpp"

#include <cmath>

namespace rpg {

PointCloud normalize_cloud(const PointCloud& raw) {
  if (raw.size() == 0) throw GeometryError("normalize_cloud: empty cloud");
  if (!raw.points.allFinite()) throw GeometryError("normalize_cloud: non-finite coordinate");

  const Eigen::Vector3d centroid = raw.points.rowwise().mean();
  PointCloud out;
  out.points = raw.points.colwise() - centroid;
  double radius = 0.0;
  for (Eigen::Index i = 0; i < out.points.cols(); ++i)
    radius = std::max(radius, out.points.col(i).norm());
  out.points /= std::max(radius, kNormalizeEpsilon);
  out.normalized = true;
  out.labels = raw.labels;
  return out;
}

}  // namespace rpg
