#include "rpg/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace rpg {

std::int64_t GeneratorConfig::points_at(int stage) const {
  if (stage < 0 || stage > stages()) {
    throw std::out_of_range("points_at: stage " + std::to_string(stage) + " outside [0, " +
                            std::to_string(stages()) + "]");
  }
  std::int64_t n = 1;
  for (int d = 0; d < stage; ++d) n *= k_schedule[static_cast<std::size_t>(d)];
  return n;
}

void GeneratorConfig::validate() const {
  if (k_schedule.empty()) throw std::invalid_argument("k_schedule: at least one stage required");
  for (std::size_t d = 0; d < k_schedule.size(); ++d) {
    if (k_schedule[d] < 1) {
      throw std::invalid_argument("k_schedule[" + std::to_string(d) + "] must be >= 1, got " +
                                  std::to_string(k_schedule[d]));
    }
  }
  if (latent_width < 1) throw std::invalid_argument("latent_width must be >= 1");
  if (embed_width < 1) throw std::invalid_argument("embed_width must be >= 1");
  if (mlp_hidden.empty()) throw std::invalid_argument("mlp_hidden: at least one layer required");
  for (int w : mlp_hidden)
    if (w < 1) throw std::invalid_argument("mlp_hidden widths must be >= 1");
  if (encoder_widths.empty())
    throw std::invalid_argument("encoder_widths: at least one layer required");
  for (int w : encoder_widths)
    if (w < 1) throw std::invalid_argument("encoder_widths must be >= 1");
}

GeneratorConfig GeneratorConfig::rpg2048() {
  GeneratorConfig c;
  c.k_schedule = {8, 4, 4, 4, 4};
  return c;
}

GeneratorConfig GeneratorConfig::rpg3125() {
  GeneratorConfig c;
  c.k_schedule = {5, 5, 5, 5, 5};
  return c;
}

template <typename Scalar>
Parameters<Scalar> zero_parameters(const GeneratorConfig& c) {
  using M = MatrixX<Scalar>;
  auto dense = [](int out, int in) { return DenseLayer<M>{M::Zero(out, in), M::Zero(out, 1)}; };
  Parameters<Scalar> p;
  int width = 3;
  for (int w : c.encoder_widths) {
    p.encoder_layers.push_back(dense(w, width));
    width = w;
  }
  p.encoder_head = dense(c.latent_width, width);
  if (c.vae_mode) p.encoder_logvar.push_back(dense(c.latent_width, width));
  p.point_proj = M::Zero(c.latent_width, 3);
  p.structure_proj = M::Zero(c.latent_width, c.latent_width);
  width = c.embed_width + c.latent_width;
  for (int w : c.mlp_hidden) {
    p.expansion_layers.push_back(dense(w, width));
    width = w;
  }
  p.offset_head = dense(3, width);
  p.scale_head = dense(1, width);
  for (int k : c.k_schedule) p.embeddings.push_back(M::Zero(c.embed_width, k));
  return p;
}

template <typename Scalar>
Parameters<Scalar> init_parameters(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  Parameters<Scalar> p = zero_parameters<Scalar>(config);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Ms and Mh act as one layer over the concatenation [s; h].
  const double recurrent_bound = 1.0 / std::sqrt(static_cast<double>(config.latent_width + 3));
  double bound = 1.0;
  p.visit([&](const std::string& name, MatrixX<Scalar>& m) {
    const bool is_bias = name.size() > 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
    if (name.rfind("embedding.", 0) == 0) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(0.1 * normal(rng));
      return;
    }
    double b = bound;
    if (name == "expansion.point_proj" || name == "expansion.structure_proj") {
      b = recurrent_bound;
    } else if (!is_bias) {
      bound = 1.0 / std::sqrt(static_cast<double>(m.cols()));
      b = bound;
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(b * unit(rng));
  });
  return p;
}

ParameterCount count_parameters(const GeneratorConfig& config) {
  return count_parameters(zero_parameters<float>(config));
}

template <typename Scalar>
ParameterCount count_parameters(const Parameters<Scalar>& params) {
  ParameterCount c;
  params.visit([&](const std::string& name, const MatrixX<Scalar>& m) {
    if (name.rfind("encoder.", 0) == 0) {
      c.encoder += m.size();
    } else {
      c.generator += m.size();
    }
  });
  return c;
}

template <typename Scalar>
EncoderVars<Scalar> encode_graph(const ParameterVars<Scalar>& params, const ad::Var<Scalar>& cloud,
                                 const GeneratorConfig& config) {
  if (cloud.cols() == 0) throw GeometryError("encode: empty cloud");
  if (cloud.rows() != 3) throw ad::ShapeError("encode: cloud must be 3 x N");
  const Eigen::Index n = cloud.cols();
  ad::Var<Scalar> x = cloud;
  for (const auto& layer : params.encoder_layers) {
    x = ad::leaky_relu(ad::matmul(layer.weight, x) + ad::repeat_col(layer.bias, n));
  }
  const ad::Var<Scalar> pooled = ad::max_reduce(x, ad::Axis::Rows);
  EncoderVars<Scalar> out;
  out.mean = ad::matmul(params.encoder_head.weight, pooled) + params.encoder_head.bias;
  if (config.vae_mode) {
    if (params.encoder_logvar.empty())
      throw std::invalid_argument("encode: VAE mode requires a log-variance head");
    const auto& lv = params.encoder_logvar.front();
    out.log_variance = ad::matmul(lv.weight, pooled) + lv.bias;
  }
  return out;
}

template <typename Scalar>
ad::Var<Scalar> extract_substructure_graph(const ParameterVars<Scalar>& params,
                                           const ad::Var<Scalar>& points,
                                           const ad::Var<Scalar>& structure) {
  return ad::tanh(ad::matmul(params.point_proj, points) +
                  ad::matmul(params.structure_proj, structure));
}

template <typename Scalar>
StageVars<Scalar> expand_stage_graph(const ParameterVars<Scalar>& params, const StageVars<Scalar>& in,
                                     int stage, const GeneratorConfig& config) {
  if (stage < 0 || stage >= config.stages())
    throw std::out_of_range("expand: stage " + std::to_string(stage) + " out of range");
  const Eigen::Index k = config.k_schedule[static_cast<std::size_t>(stage)];
  if (k < 1) throw std::invalid_argument("expand: k(d) must be >= 1");
  const Eigen::Index n = in.points.cols();
  const Eigen::Index total = n * k;

  std::vector<Eigen::Index> parent(static_cast<std::size_t>(total));
  std::vector<Eigen::Index> slot(static_cast<std::size_t>(total));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index m = 0; m < k; ++m) {
      parent[static_cast<std::size_t>(i * k + m)] = i;
      slot[static_cast<std::size_t>(i * k + m)] = m;
    }
  }

  const ad::Var<Scalar> shared = extract_substructure_graph(params, in.points, in.structure);
  const ad::Var<Scalar> child_structure = ad::gather_cols(shared, parent);
  const ad::Var<Scalar> embed =
      ad::gather_cols(params.embeddings[static_cast<std::size_t>(stage)], slot);

  ad::Var<Scalar> x = ad::concat(embed, child_structure, ad::Axis::Rows);
  for (const auto& layer : params.expansion_layers) {
    x = ad::leaky_relu(ad::matmul(layer.weight, x) + ad::repeat_col(layer.bias, total));
  }
  const ad::Var<Scalar> offsets =
      ad::matmul(params.offset_head.weight, x) + ad::repeat_col(params.offset_head.bias, total);
  const ad::Var<Scalar> raw_scale =
      ad::matmul(params.scale_head.weight, x) + ad::repeat_col(params.scale_head.bias, total);

  // Largest sibling offset norm per parent: the k x n reshape puts each
  // parent's children in one column.
  const ad::Var<Scalar> norms = ad::reshape(ad::col_norm(offsets), k, n);
  const ad::Var<Scalar> max_norm = ad::clamp_min(ad::max_reduce(norms, ad::Axis::Cols), 1e-12);

  StageVars<Scalar> out;
  out.scales = ad::sigmoid(raw_scale) * ad::gather_cols(in.scales, parent);
  const ad::Var<Scalar> step = out.scales / ad::gather_cols(max_norm, parent);
  out.points = ad::gather_cols(in.points, parent) + offsets * ad::gather_rows(step, {0, 0, 0});
  out.structure = child_structure;
  out.parent = std::move(parent);
  return out;
}

template <typename Scalar>
std::vector<StageVars<Scalar>> generate_graph(const ParameterVars<Scalar>& params,
                                              const ad::Var<Scalar>& latent,
                                              const GeneratorConfig& config) {
  config.validate();
  if (latent.rows() != config.latent_width || latent.cols() != 1) {
    throw ad::ShapeError("generate: latent code must be " + std::to_string(config.latent_width) +
                         "x1, got " + ad::detail::shape_str(latent.rows(), latent.cols()));
  }
  ad::Tape<Scalar>& tape = *latent.tape();
  std::vector<StageVars<Scalar>> stages;
  stages.reserve(static_cast<std::size_t>(config.stages() + 1));
  StageVars<Scalar> root;
  root.points = tape.constant(MatrixX<Scalar>::Zero(3, 1));
  root.structure = latent;
  root.scales = tape.constant(MatrixX<Scalar>::Ones(1, 1));
  stages.push_back(std::move(root));
  for (int d = 0; d < config.stages(); ++d) {
    stages.push_back(expand_stage_graph(params, stages.back(), d, config));
  }
  return stages;
}

template <typename Scalar>
LatentCode<Scalar> encode(const Points3<Scalar>& cloud, const Parameters<Scalar>& params,
                          const GeneratorConfig& config) {
  ad::Tape<Scalar> tape;
  const auto vars = bind_parameters(tape, params, false);
  const auto enc = encode_graph(vars, tape.constant(cloud), config);
  LatentCode<Scalar> z;
  z.mean = enc.mean.value();
  if (config.vae_mode) z.log_variance = enc.log_variance.value();
  return z;
}

template <typename Scalar>
VectorX<Scalar> extract_substructure(const Eigen::Matrix<Scalar, 3, 1>& point,
                                     const VectorX<Scalar>& structure,
                                     const Parameters<Scalar>& params) {
  ad::Tape<Scalar> tape;
  const auto vars = bind_parameters(tape, params, false);
  return extract_substructure_graph(vars, tape.constant(point), tape.constant(structure)).value();
}

template <typename Scalar>
std::vector<ExpandedChild<Scalar>> expand_point(const Eigen::Matrix<Scalar, 3, 1>& point,
                                                const VectorX<Scalar>& structure, Scalar scale,
                                                int stage, const Parameters<Scalar>& params,
                                                const GeneratorConfig& config) {
  if (!(scale > 0)) throw std::invalid_argument("expand_point: scale must be positive");
  ad::Tape<Scalar> tape;
  const auto vars = bind_parameters(tape, params, false);
  StageVars<Scalar> in;
  in.points = tape.constant(point);
  in.structure = tape.constant(structure);
  in.scales = tape.constant(MatrixX<Scalar>::Constant(1, 1, scale));
  const StageVars<Scalar> out = expand_stage_graph(vars, in, stage, config);
  std::vector<ExpandedChild<Scalar>> children;
  for (Eigen::Index m = 0; m < out.points.cols(); ++m) {
    children.push_back({out.points.value().col(m), out.structure.value().col(m),
                        out.scales.value()(0, m)});
  }
  return children;
}

template <typename Scalar>
GenerationTrace<Scalar> generate(const VectorX<Scalar>& latent, const Parameters<Scalar>& params,
                                 const GeneratorConfig& config) {
  ad::Tape<Scalar> tape;
  const auto vars = bind_parameters(tape, params, false);
  const auto stages = generate_graph(vars, tape.constant(latent), config);
  GenerationTrace<Scalar> trace;
  trace.config = config;
  for (const auto& s : stages) {
    StageState<Scalar> st;
    st.points = s.points.value();
    st.structure = s.structure.value();
    st.scales = s.scales.value();
    st.parent = s.parent;
    trace.stages.push_back(std::move(st));
  }
  return trace;
}

template <typename Scalar>
std::vector<int> segment(const GenerationTrace<Scalar>& trace, int stage, int ancestor_stage) {
  const int last = static_cast<int>(trace.stages.size()) - 1;
  if (ancestor_stage < 0 || ancestor_stage >= stage || stage > last) {
    throw std::invalid_argument("segment: need 0 <= ancestor stage < stage <= " +
                                std::to_string(last) + ", got ancestor " +
                                std::to_string(ancestor_stage) + ", stage " + std::to_string(stage));
  }
  const auto& target = trace.stages[static_cast<std::size_t>(stage)];
  std::vector<int> labels(static_cast<std::size_t>(target.size()));
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    Eigen::Index idx = i;
    for (int d = stage; d > ancestor_stage; --d)
      idx = trace.stages[static_cast<std::size_t>(d)].parent[static_cast<std::size_t>(idx)];
    labels[static_cast<std::size_t>(i)] = static_cast<int>(idx);
  }
  return labels;
}

#define RPG_INSTANTIATE_MODEL(S)                                                               \
  template Parameters<S> zero_parameters<S>(const GeneratorConfig&);                           \
  template Parameters<S> init_parameters<S>(const GeneratorConfig&, std::uint64_t);            \
  template ParameterCount count_parameters<S>(const Parameters<S>&);                           \
  template EncoderVars<S> encode_graph<S>(const ParameterVars<S>&, const ad::Var<S>&,          \
                                          const GeneratorConfig&);                             \
  template ad::Var<S> extract_substructure_graph<S>(const ParameterVars<S>&, const ad::Var<S>&, \
                                                    const ad::Var<S>&);                        \
  template StageVars<S> expand_stage_graph<S>(const ParameterVars<S>&, const StageVars<S>&,    \
                                              int, const GeneratorConfig&);                    \
  template std::vector<StageVars<S>> generate_graph<S>(const ParameterVars<S>&,                \
                                                       const ad::Var<S>&,                      \
                                                       const GeneratorConfig&);                \
  template LatentCode<S> encode<S>(const Points3<S>&, const Parameters<S>&,                    \
                                   const GeneratorConfig&);                                    \
  template VectorX<S> extract_substructure<S>(const Eigen::Matrix<S, 3, 1>&, const VectorX<S>&, \
                                              const Parameters<S>&);                           \
  template std::vector<ExpandedChild<S>> expand_point<S>(                                      \
      const Eigen::Matrix<S, 3, 1>&, const VectorX<S>&, S, int, const Parameters<S>&,          \
      const GeneratorConfig&);                                                                 \
  template GenerationTrace<S> generate<S>(const VectorX<S>&, const Parameters<S>&,             \
                                          const GeneratorConfig&);                             \
  template std::vector<int> segment<S>(const GenerationTrace<S>&, int, int);

RPG_INSTANTIATE_MODEL(float)
RPG_INSTANTIATE_MODEL(double)

#undef RPG_INSTANTIATE_MODEL

}  // namespace rpg
