#pragma once

#include "rpg/geometry.hpp"
#include "rpg/model.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace rpg {

enum class SetRole { Reference, Generated };

/// A collection of normalized clouds playing one side of a comparison.
struct CloudSet {
  std::vector<Points3<double>> clouds;
  SetRole role = SetRole::Reference;

  std::size_t size() const { return clouds.size(); }
};

/// Scale applied to Chamfer-based numbers in reports.
inline constexpr double kReportScale = 1e4;

/// Chamfer distance between every pair: entry (i, j) compares a[i] with b[j].
Eigen::MatrixXd pairwise_chamfer(const CloudSet& a, const CloudSet& b, int threads = 1);
/// Symmetric matrix of a set against itself, zero diagonal.
Eigen::MatrixXd self_chamfer(const CloudSet& a, int threads = 1);

// Reductions over precomputed distances. Rows index references, columns
// generated clouds. Ties resolve to the lowest index.

/// Mean over references of the distance to the closest generated cloud.
double mmd_from_distances(const Eigen::MatrixXd& ref_by_gen);
/// Fraction of references that are the nearest reference of some generated
/// cloud.
double coverage_from_distances(const Eigen::MatrixXd& ref_by_gen);
/// Leave-one-out 1-NN accuracy over the union (references first).
double one_nna_from_distances(const Eigen::MatrixXd& ref_by_ref, const Eigen::MatrixXd& ref_by_gen,
                              const Eigen::MatrixXd& gen_by_gen);

double mmd(const CloudSet& reference, const CloudSet& generated, int threads = 1);
double coverage(const CloudSet& reference, const CloudSet& generated, int threads = 1);
double one_nna(const CloudSet& reference, const CloudSet& generated, int threads = 1);

/// Sum over predicted segments of the largest ground-truth count inside the
/// segment, divided by the number of points.
double purity(const std::vector<int>& predicted, const std::vector<int>& ground_truth);

/// Label of the nearest source point for every target point.
std::vector<int> transfer_labels(const Points3<double>& target, const Points3<double>& source,
                                 const std::vector<int>& source_labels);

struct ReconstructionReport {
  std::vector<double> per_shape;
  double mean = 0;
};

using Reconstructor = std::function<Points3<double>(const Points3<double>&)>;

/// Chamfer distance between every cloud and its reconstruction (unscaled).
ReconstructionReport reconstruction_cd(const std::vector<PointCloud>& dataset,
                                       const Reconstructor& reconstruct);

/// Encode then decode with the mean latent code.
template <typename Scalar>
Reconstructor autoencoder(const Parameters<Scalar>& params, const GeneratorConfig& config) {
  return [&params, config](const Points3<double>& cloud) -> Points3<double> {
    const auto z = encode<Scalar>(cloud.template cast<Scalar>(), params, config);
    return generate<Scalar>(z.mean, params, config).output().template cast<double>();
  };
}

/// One structured report line:
/// metric=<name> value=<v> scaled_1e4=<bool> n_reference=<r> n_generated=<g>
struct MetricRecord {
  std::string metric;
  double value = 0;
  bool scaled_1e4 = false;
  std::size_t n_reference = 0;
  std::size_t n_generated = 0;
};

std::string format_metric(const MetricRecord& r);

}  // namespace rpg
