#pragma once

// Shared test helpers and brute-force oracles. The oracles deliberately avoid
// the library's search structures so they can be compared against it.

#include "rpg/geometry.hpp"
#include "rpg/model.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace rpg::test {

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::path(RPG_BINARY_DIR) / "scratch" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

template <typename Scalar = double>
Points3<Scalar> random_points(Eigen::Index n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Points3<Scalar> p(3, n);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<Scalar>(u(rng));
  return p;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                                     double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double den = std::max(a.norm(), b.norm());
  return den == 0 ? 0.0 : (a - b).norm() / den;
}

/// Central differences of f with respect to every entry of x.
inline Eigen::MatrixXd numeric_gradient(const std::function<double(const Eigen::MatrixXd&)>& f,
                                        const Eigen::MatrixXd& x, double step = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  Eigen::MatrixXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + step;
    const double up = f(probe);
    probe.data()[i] = orig - step;
    const double down = f(probe);
    probe.data()[i] = orig;
    g.data()[i] = (up - down) / (2 * step);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Oracles

struct BruteNeighbor {
  Eigen::Index index;
  double squared_distance;
};

/// Exhaustive double loop; strict '<' keeps the lowest index on ties.
inline std::vector<BruteNeighbor> brute_nearest(const Points3<double>& queries,
                                                const Points3<double>& target) {
  std::vector<BruteNeighbor> out;
  for (Eigen::Index i = 0; i < queries.cols(); ++i) {
    BruteNeighbor best{-1, std::numeric_limits<double>::infinity()};
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
      const double dx = queries(0, i) - target(0, j);
      const double dy = queries(1, i) - target(1, j);
      const double dz = queries(2, i) - target(2, j);
      const double d = dx * dx + dy * dy + dz * dz;
      if (d < best.squared_distance) best = {j, d};
    }
    out.push_back(best);
  }
  return out;
}

inline double brute_chamfer(const Points3<double>& p, const Points3<double>& q) {
  double a = 0, b = 0;
  for (const auto& n : brute_nearest(p, q)) a += n.squared_distance;
  for (const auto& n : brute_nearest(q, p)) b += n.squared_distance;
  return a / static_cast<double>(p.cols()) + b / static_cast<double>(q.cols());
}

inline std::vector<std::vector<double>> brute_distances(const std::vector<Points3<double>>& a,
                                                        const std::vector<Points3<double>>& b) {
  std::vector<std::vector<double>> d(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) d[i][j] = brute_chamfer(a[i], b[j]);
  return d;
}

inline double brute_mmd(const std::vector<Points3<double>>& ref, const std::vector<Points3<double>>& gen) {
  const auto d = brute_distances(ref, gen);
  double total = 0;
  for (const auto& row : d) total += *std::min_element(row.begin(), row.end());
  return total / static_cast<double>(ref.size());
}

inline double brute_coverage(const std::vector<Points3<double>>& ref, const std::vector<Points3<double>>& gen) {
  const auto d = brute_distances(ref, gen);
  std::vector<int> hit(ref.size(), 0);
  for (std::size_t j = 0; j < gen.size(); ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < ref.size(); ++i)
      if (d[i][j] < d[best][j]) best = i;
    hit[best] = 1;
  }
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(ref.size());
}

inline double brute_one_nna(const std::vector<Points3<double>>& ref, const std::vector<Points3<double>>& gen) {
  std::vector<Points3<double>> all = ref;
  all.insert(all.end(), gen.begin(), gen.end());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::size_t best = all.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < all.size(); ++j) {
      if (j == i) continue;
      const double d = brute_chamfer(all[i], all[j]);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if ((best < ref.size()) == (i < ref.size())) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(all.size());
}

/// Tiny generator configuration used by gradient and property tests.
inline GeneratorConfig tiny_config(std::vector<int> k = {2, 2}, int width = 8, bool vae = false) {
  GeneratorConfig c;
  c.k_schedule = std::move(k);
  c.latent_width = width;
  c.embed_width = 4;
  c.mlp_hidden = {8, 8};
  c.encoder_widths = {8, 8};
  c.vae_mode = vae;
  return c;
}

}  // namespace rpg::test
