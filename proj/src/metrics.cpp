#include "rpg/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace rpg {

namespace {

void require_nonempty(const CloudSet& s, const char* what) {
  if (s.clouds.empty()) throw std::invalid_argument(std::string(what) + ": empty cloud set");
}

// Fills rows [0, rows) of `out` using up to `threads` workers; each entry is
// written by exactly one worker so the result is order independent.
template <typename F>
void parallel_rows(Eigen::Index rows, int threads, F&& fill_row) {
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(rows)));
  if (workers == 1) {
    for (Eigen::Index i = 0; i < rows; ++i) fill_row(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (Eigen::Index i = w; i < rows; i += workers) fill_row(i);
    });
  }
  for (auto& t : pool) t.join();
}

Eigen::Index argmin_lowest(const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Index skip = -1) {
  Eigen::Index best = -1;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i == skip) continue;
    if (best < 0 || v(i) < v(best)) best = i;
  }
  return best;
}

}  // namespace

Eigen::MatrixXd pairwise_chamfer(const CloudSet& a, const CloudSet& b, int threads) {
  Eigen::MatrixXd d(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  parallel_rows(d.rows(), threads, [&](Eigen::Index i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j)
      d(i, j) = chamfer(a.clouds[static_cast<std::size_t>(i)], b.clouds[static_cast<std::size_t>(j)]);
  });
  return d;
}

Eigen::MatrixXd self_chamfer(const CloudSet& a, int threads) {
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  parallel_rows(n, threads, [&](Eigen::Index i) {
    for (Eigen::Index j = i + 1; j < n; ++j)
      d(i, j) = chamfer(a.clouds[static_cast<std::size_t>(i)], a.clouds[static_cast<std::size_t>(j)]);
  });
  // Chamfer is exactly symmetric, so mirroring loses nothing.
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) d(i, j) = d(j, i);
  return d;
}

double mmd_from_distances(const Eigen::MatrixXd& ref_by_gen) {
  if (ref_by_gen.size() == 0) throw std::invalid_argument("mmd: empty distance matrix");
  double total = 0;
  for (Eigen::Index i = 0; i < ref_by_gen.rows(); ++i) total += ref_by_gen.row(i).minCoeff();
  return total / static_cast<double>(ref_by_gen.rows());
}

double coverage_from_distances(const Eigen::MatrixXd& ref_by_gen) {
  if (ref_by_gen.size() == 0) throw std::invalid_argument("coverage: empty distance matrix");
  std::vector<bool> matched(static_cast<std::size_t>(ref_by_gen.rows()), false);
  for (Eigen::Index j = 0; j < ref_by_gen.cols(); ++j)
    matched[static_cast<std::size_t>(argmin_lowest(ref_by_gen.col(j)))] = true;
  return static_cast<double>(std::count(matched.begin(), matched.end(), true)) /
         static_cast<double>(ref_by_gen.rows());
}

double one_nna_from_distances(const Eigen::MatrixXd& ref_by_ref, const Eigen::MatrixXd& ref_by_gen,
                              const Eigen::MatrixXd& gen_by_gen) {
  const Eigen::Index nr = ref_by_ref.rows();
  const Eigen::Index ng = gen_by_gen.rows();
  if (nr + ng < 2) throw std::invalid_argument("one_nna: need at least two clouds in total");
  if (ref_by_ref.cols() != nr || gen_by_gen.cols() != ng || ref_by_gen.rows() != nr ||
      ref_by_gen.cols() != ng) {
    throw std::invalid_argument("one_nna: inconsistent distance matrices");
  }
  const Eigen::Index n = nr + ng;
  Eigen::MatrixXd all(n, n);
  all.topLeftCorner(nr, nr) = ref_by_ref;
  all.topRightCorner(nr, ng) = ref_by_gen;
  all.bottomLeftCorner(ng, nr) = ref_by_gen.transpose();
  all.bottomRightCorner(ng, ng) = gen_by_gen;
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index nn = argmin_lowest(all.row(i).transpose(), i);
    if ((nn < nr) == (i < nr)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double mmd(const CloudSet& reference, const CloudSet& generated, int threads) {
  require_nonempty(reference, "mmd");
  require_nonempty(generated, "mmd");
  return mmd_from_distances(pairwise_chamfer(reference, generated, threads));
}

double coverage(const CloudSet& reference, const CloudSet& generated, int threads) {
  require_nonempty(reference, "coverage");
  require_nonempty(generated, "coverage");
  return coverage_from_distances(pairwise_chamfer(reference, generated, threads));
}

double one_nna(const CloudSet& reference, const CloudSet& generated, int threads) {
  return one_nna_from_distances(self_chamfer(reference, threads),
                                pairwise_chamfer(reference, generated, threads),
                                self_chamfer(generated, threads));
}

double purity(const std::vector<int>& predicted, const std::vector<int>& ground_truth) {
  if (predicted.size() != ground_truth.size())
    throw std::invalid_argument("purity: label lists differ in length");
  if (predicted.empty()) throw std::invalid_argument("purity: empty label lists");
  std::map<int, std::map<int, std::size_t>> counts;
  for (std::size_t i = 0; i < predicted.size(); ++i) ++counts[predicted[i]][ground_truth[i]];
  std::size_t majority = 0;
  for (const auto& [segment, hist] : counts) {
    std::size_t best = 0;
    for (const auto& [label, c] : hist) best = std::max(best, c);
    majority += best;
  }
  return static_cast<double>(majority) / static_cast<double>(predicted.size());
}

std::vector<int> transfer_labels(const Points3<double>& target, const Points3<double>& source,
                                 const std::vector<int>& source_labels) {
  if (source_labels.size() != static_cast<std::size_t>(source.cols()))
    throw std::invalid_argument("transfer_labels: one label per source point required");
  const auto nn = nearest_neighbors(target, source);
  std::vector<int> out;
  out.reserve(nn.size());
  for (const auto& n : nn) out.push_back(source_labels[static_cast<std::size_t>(n.index)]);
  return out;
}

ReconstructionReport reconstruction_cd(const std::vector<PointCloud>& dataset,
                                       const Reconstructor& reconstruct) {
  if (dataset.empty()) throw std::invalid_argument("reconstruction_cd: empty dataset");
  ReconstructionReport r;
  for (const auto& cloud : dataset) r.per_shape.push_back(chamfer(cloud.points, reconstruct(cloud.points)));
  double total = 0;
  for (double v : r.per_shape) total += v;
  r.mean = total / static_cast<double>(r.per_shape.size());
  return r;
}

std::string format_metric(const MetricRecord& r) {
  std::ostringstream os;
  os << "metric=" << r.metric << " value=" << std::setprecision(10) << r.value
     << " scaled_1e4=" << (r.scaled_1e4 ? "true" : "false") << " n_reference=" << r.n_reference
     << " n_generated=" << r.n_generated;
  return os.str();
}

}  // namespace rpg
