#pragma once

// Finite-difference and structural checks shared by the unit tests and the
// acceptance runner. Each returns the worst error it saw so callers choose
// their own reporting.

#include "rpg/autodiff.hpp"
#include "rpg/model.hpp"
#include "rpg/training.hpp"
#include "support.hpp"

#include <cstring>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace rpg::test {

using Mat = Eigen::MatrixXd;

template <typename M>
bool bit_equal(const M& a, const M& b) {
  using S = typename M::Scalar;
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(S) * static_cast<std::size_t>(a.size())) == 0;
}

// One primitive under test: input shapes, an input range, and the op.
struct PrimitiveCase {
  const char* name;
  std::vector<std::pair<int, int>> shapes;
  std::function<ad::Var<double>(const std::vector<ad::Var<double>>&)> op;
  double lo = -1.5;
  double hi = 1.5;
};

inline std::vector<PrimitiveCase> primitive_cases() {
  using namespace rpg::ad;
  return {
      {"matmul", {{3, 4}, {4, 2}}, [](auto& v) { return matmul(v[0], v[1]); }},
      {"add", {{3, 2}, {3, 2}}, [](auto& v) { return v[0] + v[1]; }},
      {"add scalar", {{1, 1}, {3, 2}}, [](auto& v) { return v[0] + v[1]; }},
      {"sub", {{3, 2}, {3, 2}}, [](auto& v) { return v[0] - v[1]; }},
      {"sub scalar", {{3, 2}, {1, 1}}, [](auto& v) { return v[0] - v[1]; }},
      {"mul", {{3, 2}, {3, 2}}, [](auto& v) { return v[0] * v[1]; }},
      {"mul scalar", {{1, 1}, {2, 4}}, [](auto& v) { return v[0] * v[1]; }},
      {"div", {{3, 2}, {3, 2}}, [](auto& v) { return v[0] / v[1]; }, 0.5, 2.0},
      {"div scalar", {{3, 2}, {1, 1}}, [](auto& v) { return v[0] / v[1]; }, 0.5, 2.0},
      {"scale", {{2, 3}}, [](auto& v) { return scale(v[0], -2.5); }},
      {"tanh", {{4, 3}}, [](auto& v) { return tanh(v[0]); }},
      {"sigmoid", {{4, 3}}, [](auto& v) { return sigmoid(v[0]); }},
      {"leaky_relu", {{4, 3}}, [](auto& v) { return leaky_relu(v[0]); }},
      {"exp", {{3, 3}}, [](auto& v) { return exp(v[0]); }},
      {"square", {{3, 3}}, [](auto& v) { return square(v[0]); }},
      {"col_norm", {{3, 5}}, [](auto& v) { return col_norm(v[0]); }},
      {"concat rows", {{2, 3}, {4, 3}}, [](auto& v) { return concat(v[0], v[1], Axis::Rows); }},
      {"concat cols", {{3, 2}, {3, 1}}, [](auto& v) { return concat(v[0], v[1], Axis::Cols); }},
      {"max_reduce rows", {{4, 5}}, [](auto& v) { return max_reduce(v[0], Axis::Rows); }},
      {"max_reduce cols", {{4, 5}}, [](auto& v) { return max_reduce(v[0], Axis::Cols); }},
      {"sum", {{3, 4}}, [](auto& v) { return sum(v[0]); }},
      {"mean", {{3, 4}}, [](auto& v) { return mean(v[0]); }},
      {"gather_cols", {{3, 4}}, [](auto& v) { return gather_cols(v[0], {2, 0, 2, 3, 3}); }},
      {"gather_rows", {{4, 3}}, [](auto& v) { return gather_rows(v[0], {1, 1, 3}); }},
      {"reshape", {{4, 3}}, [](auto& v) { return reshape(v[0], 2, 6); }},
      {"clamp_min", {{4, 3}}, [](auto& v) { return clamp_min(v[0], 0.3); }},
      {"repeat_col", {{3, 1}}, [](auto& v) { return repeat_col(v[0], 4); }},
  };
}

/// Worst relative error of one primitive over `seeds` random inputs, each
/// contracted with random weights to a scalar.
inline double primitive_gradient_error(const PrimitiveCase& c, int seeds) {
  double worst = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) * 7919 + 11);
    std::vector<Mat> inputs;
    for (auto [r, k] : c.shapes) inputs.push_back(random_matrix(r, k, rng, c.lo, c.hi));
    if (std::string(c.name) == "clamp_min") {
      // Keep inputs away from the kink.
      for (auto& m : inputs) m = m.unaryExpr([](double v) { return std::abs(v - 0.3) < 0.05 ? v + 0.1 : v; });
    }
    ad::Tape<double> tape;
    std::vector<ad::Var<double>> vars;
    for (const auto& m : inputs) vars.push_back(tape.leaf(m));
    const auto out = c.op(vars);
    const Mat weights = random_matrix(out.rows(), out.cols(), rng);
    const auto grads = tape.backward(ad::sum(out * tape.constant(weights)));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Mat numeric = numeric_gradient(
          [&](const Mat& probe) {
            auto in = inputs;
            in[i] = probe;
            ad::Tape<double> t;
            std::vector<ad::Var<double>> v;
            for (const auto& m : in) v.push_back(t.leaf(m));
            return c.op(v).value().cwiseProduct(weights).sum();
          },
          inputs[i]);
      worst = std::max(worst, relative_error(grads[vars[i]], numeric));
    }
  }
  return worst;
}

/// Reverse-mode gradient of every parameter tensor against central
/// differences of `value`, which must rebuild the graph from the parameters.
inline double parameter_gradient_error(const Parameters<double>& params, const Parameters<double>& analytic,
                                       const std::function<double(const Parameters<double>&)>& value) {
  Parameters<double> probe = params;
  std::vector<MatrixX<double>*> slots;
  probe.visit([&](const std::string&, MatrixX<double>& m) { slots.push_back(&m); });
  std::vector<const MatrixX<double>*> grads;
  analytic.visit([&](const std::string&, const MatrixX<double>& m) { grads.push_back(&m); });
  std::vector<double> a, n;
  const double h = 1e-5;
  for (std::size_t t = 0; t < slots.size(); ++t) {
    MatrixX<double>& m = *slots[t];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + h;
      const double up = value(probe);
      m.data()[i] = orig - h;
      const double down = value(probe);
      m.data()[i] = orig;
      n.push_back((up - down) / (2 * h));
      a.push_back(grads[t]->data()[i]);
    }
  }
  const auto size = static_cast<Eigen::Index>(a.size());
  return relative_error(Eigen::Map<Eigen::VectorXd>(a.data(), size), Eigen::Map<Eigen::VectorXd>(n.data(), size));
}

/// extract_substructure: gradients with respect to Ms, Mh, s and h.
inline double extract_gradient_error(int seeds) {
  const auto c = tiny_config({2, 2}, 8);
  double worst = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 r(static_cast<std::uint64_t>(seed));
    const auto p = init_parameters<double>(c, static_cast<std::uint64_t>(seed));
    const Mat s0 = random_matrix(3, 4, r);
    const Mat h0 = random_matrix(8, 4, r);
    const Mat w = random_matrix(8, 4, r);
    auto value = [&](const Parameters<double>& q, const Mat& s, const Mat& h) {
      ad::Tape<double> t;
      const auto v = bind_parameters(t, q, false);
      return extract_substructure_graph(v, t.constant(s), t.constant(h)).value().cwiseProduct(w).sum();
    };
    ad::Tape<double> tape;
    const auto vars = bind_parameters(tape, p, true);
    const auto s = tape.leaf(s0);
    const auto h = tape.leaf(h0);
    const auto g = tape.backward(ad::sum(extract_substructure_graph(vars, s, h) * tape.constant(w)));
    const auto pg = collect_gradients(g, vars);
    worst = std::max(worst, parameter_gradient_error(p, pg, [&](const Parameters<double>& q) {
                       return value(q, s0, h0);
                     }));
    worst = std::max(worst, relative_error(g[s], numeric_gradient([&](const Mat& x) { return value(p, x, h0); }, s0)));
    worst = std::max(worst, relative_error(g[h], numeric_gradient([&](const Mat& x) { return value(p, s0, x); }, h0)));
  }
  return worst;
}

/// One expansion stage: gradients of a weighted sum of child points and
/// scales with respect to every parameter and the parent points, structures
/// and scales.
inline double expand_gradient_error(int seeds) {
  double worst = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 r(static_cast<std::uint64_t>(seed) + 500);
    const int k = 2 + seed % 3;
    const auto c = tiny_config({k, 2}, 8);
    const auto p = init_parameters<double>(c, static_cast<std::uint64_t>(seed));
    const Eigen::Index n = 3;
    const Mat s0 = random_matrix(3, n, r);
    const Mat h0 = random_matrix(8, n, r);
    const Mat a0 = random_matrix(1, n, r, 0.2, 1.0);
    const Mat wp = random_matrix(3, n * k, r);
    const Mat wa = random_matrix(1, n * k, r);
    auto value = [&](const Parameters<double>& q, const Mat& s, const Mat& h, const Mat& a) {
      ad::Tape<double> t;
      const auto v = bind_parameters(t, q, false);
      StageVars<double> in;
      in.points = t.constant(s);
      in.structure = t.constant(h);
      in.scales = t.constant(a);
      const auto out = expand_stage_graph(v, in, 0, c);
      return out.points.value().cwiseProduct(wp).sum() + out.scales.value().cwiseProduct(wa).sum();
    };
    ad::Tape<double> tape;
    const auto vars = bind_parameters(tape, p, true);
    StageVars<double> in;
    in.points = tape.leaf(s0);
    in.structure = tape.leaf(h0);
    in.scales = tape.leaf(a0);
    const auto out = expand_stage_graph(vars, in, 0, c);
    const auto loss = ad::sum(out.points * tape.constant(wp)) + ad::sum(out.scales * tape.constant(wa));
    const auto g = tape.backward(loss);
    const auto pg = collect_gradients(g, vars);
    worst = std::max(worst, parameter_gradient_error(p, pg, [&](const Parameters<double>& q) {
                       return value(q, s0, h0, a0);
                     }));
    worst = std::max(worst, relative_error(g[in.points], numeric_gradient([&](const Mat& x) {
                                             return value(p, x, h0, a0);
                                           }, s0)));
    worst = std::max(worst, relative_error(g[in.structure], numeric_gradient([&](const Mat& x) {
                                             return value(p, s0, x, a0);
                                           }, h0)));
    worst = std::max(worst, relative_error(g[in.scales], numeric_gradient([&](const Mat& x) {
                                             return value(p, s0, h0, x);
                                           }, a0)));
  }
  return worst;
}

/// Full batch loss on U=8, k=[2,2]; odd seeds run in VAE mode with fixed
/// reparameterization noise.
inline double total_loss_gradient_error(int seeds) {
  double worst = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 100);
    const bool vae = seed % 2 == 1;
    const auto c = tiny_config({2, 2}, 8, vae);
    const auto params = init_parameters<double>(c, static_cast<std::uint64_t>(seed));
    const std::vector<Points3<double>> batch{random_points(6, rng), random_points(5, rng)};
    std::vector<VectorX<double>> noise;
    if (vae) noise = {random_matrix(8, 1, rng), random_matrix(8, 1, rng)};
    TrainConfig t;
    t.lambda = 0.3;  // large enough that the scale regularizer shows in the gradient
    t.beta = 0.2;
    const auto analytic = total_loss_with_gradient(params, batch, c, t, noise);
    worst = std::max(worst, parameter_gradient_error(params, analytic.gradient, [&](const Parameters<double>& q) {
                       return total_loss(q, batch, c, t, noise).total;
                     }));
  }
  return worst;
}

inline GeneratorConfig random_config(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> depth(1, 4), branch(1, 5), width(2, 12), hidden(1, 3);
  GeneratorConfig c;
  c.k_schedule.clear();
  const int d = depth(rng);
  for (int i = 0; i < d; ++i) c.k_schedule.push_back(branch(rng));
  c.latent_width = width(rng);
  c.embed_width = width(rng);
  c.mlp_hidden.assign(static_cast<std::size_t>(hidden(rng)), width(rng));
  c.encoder_widths = {width(rng), width(rng)};
  c.vae_mode = (rng() & 1) != 0;
  return c;
}

struct StructureReport {
  int configs = 0;
  int cardinality = 0;
  int parent = 0;
  int sibling = 0;
  int alpha = 0;
  int containment = 0;
  int permutation = 0;

  int failures() const { return cardinality + parent + sibling + alpha + containment + permutation; }
};

/// Generates from random configs and counts configs violating each invariant.
inline StructureReport check_structure(int configs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  StructureReport r;
  for (int trial = 0; trial < configs; ++trial, ++r.configs) {
    const GeneratorConfig c = random_config(rng);
    const auto params = init_parameters<double>(c, rng());
    const auto trace = generate<double>(random_matrix(c.latent_width, 1, rng, -2, 2), params, c);
    const auto& root = trace.stages[0];
    bool card = root.points.isZero(0) && root.size() == 1, par = true, sib = true;
    bool alpha = root.scales(0, 0) == 1.0, contain = true;
    for (int d = 0; d < c.stages(); ++d) {
      const auto& in = trace.stages[static_cast<std::size_t>(d)];
      const auto& out = trace.stages[static_cast<std::size_t>(d + 1)];
      const int k = c.k_schedule[static_cast<std::size_t>(d)];
      card = card && out.size() == k * in.size() && out.structure.cols() == out.size() &&
             out.scales.cols() == out.size() && static_cast<Eigen::Index>(out.parent.size()) == out.size();
      for (Eigen::Index j = 0; j < out.size(); ++j) {
        const Eigen::Index p = out.parent[static_cast<std::size_t>(j)];
        par = par && p == j / k;
        sib = sib && bit_equal(MatrixX<double>(out.structure.col(j)), MatrixX<double>(out.structure.col(p * k)));
        alpha = alpha && out.scales(0, j) > 0 && out.scales(0, j) <= in.scales(0, p);
        // Relative slack of a few ulps for the rounding of s + o * (alpha / o_max).
        contain = contain && (out.points.col(j) - in.points.col(p)).norm() <= out.scales(0, j) * (1 + 1e-12);
      }
    }
    const Points3<double> cloud = random_points(40, rng);
    std::vector<Eigen::Index> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Points3<double> shuffled(3, 40);
    for (Eigen::Index i = 0; i < 40; ++i) shuffled.col(i) = cloud.col(perm[static_cast<std::size_t>(i)]);
    const bool perm_ok = bit_equal(encode<double>(cloud, params, c).mean, encode<double>(shuffled, params, c).mean);
    r.cardinality += !card;
    r.parent += !par;
    r.sibling += !sib;
    r.alpha += !alpha;
    r.containment += !contain;
    r.permutation += !perm_ok;
  }
  return r;
}

}  // namespace rpg::test
