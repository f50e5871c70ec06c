#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace rpg {

template <typename Scalar>
using Points3 = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

/// A point set in model space, one point per column.
struct PointCloud {
  Points3<double> points;
  /// True once zero-centered and scaled into the unit ball.
  bool normalized = false;
  /// Optional per-point part labels; empty when absent.
  std::vector<int> labels;

  Eigen::Index size() const { return points.cols(); }
  bool has_labels() const { return !labels.empty(); }
};

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Zero-centers and scales so the farthest point lies on the unit sphere.
/// An all-identical cloud maps to zeros (divisor clamped at 1e-12).
PointCloud normalize_cloud(const PointCloud& raw);

inline constexpr double kNormalizeEpsilon = 1e-12;

/// Exact squared Euclidean distance. Every distance in this library goes
/// through this one expression so different search paths agree bitwise.
template <typename Scalar>
inline Scalar squared_distance(const Scalar* a, const Scalar* b) {
  const Scalar dx = a[0] - b[0];
  const Scalar dy = a[1] - b[1];
  const Scalar dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

template <typename Scalar>
struct Neighbor {
  Eigen::Index index = -1;
  Scalar squared_distance = std::numeric_limits<Scalar>::infinity();

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Axis-aligned kd-tree over a fixed point set. Splits at the median of the
/// widest axis; queries are exact and break ties by lowest point index.
/// Immutable after construction, so concurrent queries are safe.
template <typename Scalar>
class KdTree {
 public:
  static constexpr int kDefaultLeafSize = 16;

  explicit KdTree(Points3<Scalar> points, int leaf_size = kDefaultLeafSize)
      : points_(std::move(points)), leaf_size_(std::max(1, leaf_size)) {
    if (points_.cols() == 0) throw GeometryError("kd-tree: empty target cloud");
    order_.resize(static_cast<std::size_t>(points_.cols()));
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    nodes_.reserve(static_cast<std::size_t>(2 * points_.cols() / leaf_size_ + 2));
    build(0, static_cast<Eigen::Index>(order_.size()));
  }

  Neighbor<Scalar> nearest(const Scalar* query) const {
    Neighbor<Scalar> best;
    search(0, query, best);
    return best;
  }

  Eigen::Index size() const { return points_.cols(); }
  const Points3<Scalar>& points() const { return points_; }

 private:
  struct Node {
    Scalar lo[3];
    Scalar hi[3];
    Eigen::Index begin = 0;
    Eigen::Index end = 0;
    int left = -1;
    int right = -1;
  };

  int build(Eigen::Index begin, Eigen::Index end) {
    Node node;
    node.begin = begin;
    node.end = end;
    for (int a = 0; a < 3; ++a) {
      node.lo[a] = std::numeric_limits<Scalar>::infinity();
      node.hi[a] = -std::numeric_limits<Scalar>::infinity();
    }
    for (Eigen::Index i = begin; i < end; ++i) {
      const Scalar* p = points_.col(order_[i]).data();
      for (int a = 0; a < 3; ++a) {
        node.lo[a] = std::min(node.lo[a], p[a]);
        node.hi[a] = std::max(node.hi[a], p[a]);
      }
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= leaf_size_) return id;

    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (node.hi[a] - node.lo[a] > node.hi[axis] - node.lo[axis]) axis = a;
    const Eigen::Index mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](Eigen::Index x, Eigen::Index y) {
                       const Scalar px = points_(axis, x);
                       const Scalar py = points_(axis, y);
                       return px < py || (px == py && x < y);
                     });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  // Lower bound on the squared distance from the query to anything in the box.
  // Rounding is monotone, so this never exceeds a computed point distance.
  static Scalar box_distance(const Node& n, const Scalar* q) {
    Scalar d = 0;
    for (int a = 0; a < 3; ++a) {
      Scalar g = 0;
      if (q[a] < n.lo[a]) {
        g = n.lo[a] - q[a];
      } else if (q[a] > n.hi[a]) {
        g = q[a] - n.hi[a];
      }
      d += g * g;
    }
    return d;
  }

  void search(int id, const Scalar* q, Neighbor<Scalar>& best) const {
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (Eigen::Index i = n.begin; i < n.end; ++i) {
        const Eigen::Index idx = order_[i];
        const Scalar d = squared_distance(q, points_.col(idx).data());
        if (d < best.squared_distance || (d == best.squared_distance && idx < best.index)) {
          best.squared_distance = d;
          best.index = idx;
        }
      }
      return;
    }
    const Scalar dl = box_distance(nodes_[n.left], q);
    const Scalar dr = box_distance(nodes_[n.right], q);
    const int first = dl <= dr ? n.left : n.right;
    const int second = dl <= dr ? n.right : n.left;
    const Scalar d_first = std::min(dl, dr);
    const Scalar d_second = std::max(dl, dr);
    // Equal bounds are still visited: an equidistant point may have a lower index.
    if (d_first <= best.squared_distance) search(first, q, best);
    if (d_second <= best.squared_distance) search(second, q, best);
  }

  Points3<Scalar> points_;
  int leaf_size_;
  std::vector<Eigen::Index> order_;
  std::vector<Node> nodes_;
};

/// Closest target point for every query column.
template <typename Scalar>
std::vector<Neighbor<Scalar>> nearest_neighbors(const KdTree<Scalar>& target,
                                                const Points3<Scalar>& queries) {
  std::vector<Neighbor<Scalar>> out(static_cast<std::size_t>(queries.cols()));
  for (Eigen::Index i = 0; i < queries.cols(); ++i)
    out[static_cast<std::size_t>(i)] = target.nearest(queries.col(i).data());
  return out;
}

template <typename Scalar>
std::vector<Neighbor<Scalar>> nearest_neighbors(const Points3<Scalar>& queries,
                                                const Points3<Scalar>& target) {
  if (queries.cols() == 0) throw GeometryError("nearest_neighbors: empty query cloud");
  if (target.cols() == 0) throw GeometryError("nearest_neighbors: empty target cloud");
  return nearest_neighbors(KdTree<Scalar>(target), queries);
}

template <typename Scalar>
struct ChamferResult {
  Scalar distance = 0;
  /// Mean squared distance from each point of P to its closest point in Q.
  Scalar p_to_q = 0;
  /// Mean squared distance from each point of Q to its closest point in P.
  Scalar q_to_p = 0;
  std::vector<Neighbor<Scalar>> p_matches;
  std::vector<Neighbor<Scalar>> q_matches;
};

namespace detail {
template <typename Scalar>
Scalar mean_distance(const std::vector<Neighbor<Scalar>>& matches) {
  Scalar total = 0;
  for (const auto& m : matches) total += m.squared_distance;
  return total / static_cast<Scalar>(matches.size());
}
}  // namespace detail

/// Symmetric Chamfer distance on squared distances. Sizes may differ.
template <typename Scalar>
ChamferResult<Scalar> chamfer_distance(const Points3<Scalar>& p, const Points3<Scalar>& q) {
  if (p.cols() == 0 || q.cols() == 0) throw GeometryError("chamfer_distance: empty cloud");
  ChamferResult<Scalar> r;
  r.p_matches = nearest_neighbors(KdTree<Scalar>(q), p);
  r.q_matches = nearest_neighbors(KdTree<Scalar>(p), q);
  r.p_to_q = detail::mean_distance(r.p_matches);
  r.q_to_p = detail::mean_distance(r.q_matches);
  r.distance = r.p_to_q + r.q_to_p;
  return r;
}

template <typename Scalar>
Scalar chamfer(const Points3<Scalar>& p, const Points3<Scalar>& q) {
  return chamfer_distance(p, q).distance;
}

}  // namespace rpg
