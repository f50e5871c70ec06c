#pragma once

#include "rpg/autodiff.hpp"
#include "rpg/geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace rpg {

/// Architecture of the recursive generator and its encoder.
struct GeneratorConfig {
  /// Branching factor k(d) of every expansion stage; its length is the stage
  /// count D.
  std::vector<int> k_schedule{8, 4, 4, 4, 4};
  /// Width U of latent codes and structural representations.
  int latent_width = 512;
  /// Width of the per-stage child embeddings.
  int embed_width = 64;
  /// Hidden widths of the shared expansion MLP.
  std::vector<int> mlp_hidden{256, 256};
  /// Per-point shared MLP widths of the encoder, before max-pooling.
  std::vector<int> encoder_widths{64, 128, 256};
  bool vae_mode = false;

  int stages() const { return static_cast<int>(k_schedule.size()); }
  /// Number of points at `stage` (stage 0 holds the single root).
  std::int64_t points_at(int stage) const;
  std::int64_t leaf_count() const { return points_at(stages()); }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// 2048 output points: k = [8, 4, 4, 4, 4].
  static GeneratorConfig rpg2048();
  /// 3125 output points: k = [5, 5, 5, 5, 5].
  static GeneratorConfig rpg3125();

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

/// Weights of one affine layer; applied as weight * X + bias per column.
template <typename T>
struct DenseLayer {
  T weight;
  T bias;
};

/// All trainable tensors of the model, generic over the stored element so the
/// same layout holds plain matrices, autodiff handles, gradients, or optimizer
/// moments.
template <typename T>
struct ParameterTree {
  std::vector<DenseLayer<T>> encoder_layers;
  /// Fully-connected head to the latent code (the mean in VAE mode).
  DenseLayer<T> encoder_head;
  /// Log-variance head; present only in VAE mode.
  std::vector<DenseLayer<T>> encoder_logvar;
  /// Point-to-structure projection, U x 3.
  T point_proj;
  /// Structure-to-structure projection, U x U.
  T structure_proj;
  std::vector<DenseLayer<T>> expansion_layers;
  DenseLayer<T> offset_head;
  DenseLayer<T> scale_head;
  /// One embed_width x k(d) matrix per stage; column m is the m-th child
  /// embedding.
  std::vector<T> embeddings;

  /// Calls f(name, tensor) on every tensor in a fixed order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  /// Builds a tree of the same layout with g(name, tensor) as elements.
  template <typename G>
  auto map(G&& g) const {
    using U = std::decay_t<decltype(g(std::string{}, std::declval<const T&>()))>;
    ParameterTree<U> out;
    auto dense = [&](const std::string& name, const DenseLayer<T>& l) {
      return DenseLayer<U>{g(name + ".weight", l.weight), g(name + ".bias", l.bias)};
    };
    for (std::size_t i = 0; i < encoder_layers.size(); ++i)
      out.encoder_layers.push_back(dense("encoder.point_mlp." + std::to_string(i), encoder_layers[i]));
    out.encoder_head = dense("encoder.head", encoder_head);
    for (const auto& l : encoder_logvar) out.encoder_logvar.push_back(dense("encoder.logvar", l));
    out.point_proj = g("expansion.point_proj", point_proj);
    out.structure_proj = g("expansion.structure_proj", structure_proj);
    for (std::size_t i = 0; i < expansion_layers.size(); ++i)
      out.expansion_layers.push_back(dense("expansion.mlp." + std::to_string(i), expansion_layers[i]));
    out.offset_head = dense("expansion.offset_head", offset_head);
    out.scale_head = dense("expansion.scale_head", scale_head);
    for (std::size_t d = 0; d < embeddings.size(); ++d)
      out.embeddings.push_back(g("embedding." + std::to_string(d), embeddings[d]));
    return out;
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    auto dense = [&](const std::string& name, auto& l) {
      f(name + ".weight", l.weight);
      f(name + ".bias", l.bias);
    };
    for (std::size_t i = 0; i < self.encoder_layers.size(); ++i)
      dense("encoder.point_mlp." + std::to_string(i), self.encoder_layers[i]);
    dense("encoder.head", self.encoder_head);
    for (auto& l : self.encoder_logvar) dense("encoder.logvar", l);
    f("expansion.point_proj", self.point_proj);
    f("expansion.structure_proj", self.structure_proj);
    for (std::size_t i = 0; i < self.expansion_layers.size(); ++i)
      dense("expansion.mlp." + std::to_string(i), self.expansion_layers[i]);
    dense("expansion.offset_head", self.offset_head);
    dense("expansion.scale_head", self.scale_head);
    for (std::size_t d = 0; d < self.embeddings.size(); ++d)
      f("embedding." + std::to_string(d), self.embeddings[d]);
  }
};

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Parameters = ParameterTree<MatrixX<Scalar>>;

template <typename Scalar>
using ParameterVars = ParameterTree<ad::Var<Scalar>>;

struct ParameterCount {
  std::int64_t encoder = 0;
  std::int64_t generator = 0;
  std::int64_t total() const { return encoder + generator; }
};

/// Deterministic initialization: fan-in scaled uniform weights and biases,
/// embeddings drawn from N(0, 1) scaled by 0.1.
template <typename Scalar>
Parameters<Scalar> init_parameters(const GeneratorConfig& config, std::uint64_t seed);

/// All-zero tensors with the shapes `config` implies.
template <typename Scalar>
Parameters<Scalar> zero_parameters(const GeneratorConfig& config);

/// Parameter counts from the configuration alone.
ParameterCount count_parameters(const GeneratorConfig& config);

template <typename Scalar>
ParameterCount count_parameters(const Parameters<Scalar>& params);

/// Element-type conversion between parameter trees.
template <typename To, typename From>
Parameters<To> cast_parameters(const Parameters<From>& params) {
  return params.map([](const std::string&, const MatrixX<From>& m) -> MatrixX<To> {
    return m.template cast<To>();
  });
}

/// Puts every parameter on the tape as a leaf.
template <typename Scalar>
ParameterVars<Scalar> bind_parameters(ad::Tape<Scalar>& tape, const Parameters<Scalar>& params,
                                      bool requires_grad) {
  return params.map([&](const std::string&, const MatrixX<Scalar>& m) {
    return tape.leaf(m, requires_grad);
  });
}

/// Gathers the gradient of every bound parameter.
template <typename Scalar>
Parameters<Scalar> collect_gradients(const ad::Gradients<Scalar>& grads,
                                     const ParameterVars<Scalar>& vars) {
  return vars.map([&](const std::string&, const ad::Var<Scalar>& v) -> MatrixX<Scalar> {
    return grads[v];
  });
}

// ---------------------------------------------------------------------------
// Graph-level building blocks (operate on tape handles).

template <typename Scalar>
struct EncoderVars {
  ad::Var<Scalar> mean;
  /// Valid only in VAE mode.
  ad::Var<Scalar> log_variance;
};

/// PointNet-style encoder: shared per-point MLP, max-pool over points, then a
/// fully-connected head. `cloud` is 3 x N.
template <typename Scalar>
EncoderVars<Scalar> encode_graph(const ParameterVars<Scalar>& params, const ad::Var<Scalar>& cloud,
                                 const GeneratorConfig& config);

/// tanh(Ms * s + Mh * h), column-wise. `points` is 3 x n, `structure` U x n.
template <typename Scalar>
ad::Var<Scalar> extract_substructure_graph(const ParameterVars<Scalar>& params,
                                           const ad::Var<Scalar>& points,
                                           const ad::Var<Scalar>& structure);

template <typename Scalar>
struct StageVars {
  ad::Var<Scalar> points;     // 3 x n
  ad::Var<Scalar> structure;  // U x n
  ad::Var<Scalar> scales;     // 1 x n
  std::vector<Eigen::Index> parent;  // empty at stage 0
};

/// Expands every point of a stage into k(stage) children. Children of point i
/// occupy columns [i*k, (i+1)*k) of the result.
template <typename Scalar>
StageVars<Scalar> expand_stage_graph(const ParameterVars<Scalar>& params, const StageVars<Scalar>& in,
                                     int stage, const GeneratorConfig& config);

/// Root stage followed by all D expansions; returns D + 1 stages.
template <typename Scalar>
std::vector<StageVars<Scalar>> generate_graph(const ParameterVars<Scalar>& params,
                                              const ad::Var<Scalar>& latent,
                                              const GeneratorConfig& config);

// ---------------------------------------------------------------------------
// Value-level API.

template <typename Scalar>
struct LatentCode {
  VectorX<Scalar> mean;
  /// Empty unless the model runs in VAE mode.
  VectorX<Scalar> log_variance;
};

template <typename Scalar>
struct StageState {
  Points3<Scalar> points;
  MatrixX<Scalar> structure;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> scales;
  std::vector<Eigen::Index> parent;

  Eigen::Index size() const { return points.cols(); }
};

template <typename Scalar>
struct GenerationTrace {
  std::vector<StageState<Scalar>> stages;
  GeneratorConfig config;

  const Points3<Scalar>& output() const { return stages.back().points; }
};

template <typename Scalar>
struct ExpandedChild {
  Eigen::Matrix<Scalar, 3, 1> point;
  VectorX<Scalar> structure;
  Scalar scale;
};

template <typename Scalar>
LatentCode<Scalar> encode(const Points3<Scalar>& cloud, const Parameters<Scalar>& params,
                          const GeneratorConfig& config);

template <typename Scalar>
VectorX<Scalar> extract_substructure(const Eigen::Matrix<Scalar, 3, 1>& point,
                                     const VectorX<Scalar>& structure,
                                     const Parameters<Scalar>& params);

template <typename Scalar>
std::vector<ExpandedChild<Scalar>> expand_point(const Eigen::Matrix<Scalar, 3, 1>& point,
                                                const VectorX<Scalar>& structure, Scalar scale,
                                                int stage, const Parameters<Scalar>& params,
                                                const GeneratorConfig& config);

template <typename Scalar>
GenerationTrace<Scalar> generate(const VectorX<Scalar>& latent, const Parameters<Scalar>& params,
                                 const GeneratorConfig& config);

/// Labels every point of `stage` with the index of its ancestor at
/// `ancestor_stage`.
template <typename Scalar>
std::vector<int> segment(const GenerationTrace<Scalar>& trace, int stage, int ancestor_stage);

}  // namespace rpg
