#include "rpg/model.hpp"

#include "checks.hpp"

#include <doctest.h>

#include <map>
#include <numeric>
#include <set>

using namespace rpg;
using Mat = Eigen::MatrixXd;
using test::bit_equal;
using test::random_config;

namespace {

template <typename S>
bool same_parameters(const Parameters<S>& a, const Parameters<S>& b) {
  std::vector<const MatrixX<S>*> x, y;
  a.visit([&](const std::string&, const MatrixX<S>& m) { x.push_back(&m); });
  b.visit([&](const std::string&, const MatrixX<S>& m) { y.push_back(&m); });
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!bit_equal(*x[i], *y[i])) return false;
  return true;
}

VectorX<double> random_latent(int width, std::mt19937_64& rng) {
  return test::random_matrix(width, 1, rng, -2, 2);
}

}  // namespace

TEST_CASE("config presets and validation") {
  const auto a = GeneratorConfig::rpg2048();
  CHECK(a.k_schedule == std::vector<int>{8, 4, 4, 4, 4});
  CHECK(a.leaf_count() == 2048);
  CHECK(a.latent_width == 512);
  CHECK(a.embed_width == 64);
  const std::vector<std::int64_t> sizes{1, 8, 32, 128, 512, 2048};
  for (int d = 0; d <= a.stages(); ++d) CHECK(a.points_at(d) == sizes[static_cast<std::size_t>(d)]);
  CHECK(GeneratorConfig::rpg3125().leaf_count() == 3125);

  GeneratorConfig bad = a;
  bad.k_schedule = {4, 0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = a;
  bad.k_schedule.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = a;
  bad.latent_width = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("parameter initialization and counts") {
  const auto c = test::tiny_config({3, 2}, 6, true);
  CHECK(same_parameters(init_parameters<double>(c, 42), init_parameters<double>(c, 42)));
  CHECK_FALSE(same_parameters(init_parameters<double>(c, 42), init_parameters<double>(c, 43)));

  const auto count = count_parameters(GeneratorConfig::rpg2048());
  const auto params = init_parameters<float>(GeneratorConfig::rpg2048(), 0);
  CHECK(params.structure_proj.rows() == 512);
  CHECK(params.structure_proj.cols() == 512);
  CHECK(params.structure_proj.size() == 262144);
  CHECK(params.point_proj.rows() == 512);
  CHECK(params.point_proj.cols() == 3);
  CHECK(params.embeddings.size() == 5);
  CHECK(params.embeddings[0].rows() == 64);
  CHECK(params.embeddings[0].cols() == 8);
  CHECK(count_parameters(params).total() == count.total());
  CHECK(count_parameters(params).encoder == count.encoder);
  MESSAGE("default generator parameters: " << count.generator << ", encoder: " << count.encoder);
  // Same order of magnitude as the published 1.8M total.
  CHECK(count.total() > 100000);
  CHECK(count.total() < 10000000);

  std::mt19937_64 rng(5);
  for (int i = 0; i < 30; ++i) {
    const auto rc = random_config(rng);
    CHECK(count_parameters(init_parameters<double>(rc, 1)).total() == count_parameters(rc).total());
  }
}

TEST_CASE("encoder invariances") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto c = test::tiny_config({2, 2}, 8, trial % 2 == 0);
    c.encoder_widths = {16, 32};
    const auto params = init_parameters<float>(c, static_cast<std::uint64_t>(trial));
    const Points3<float> cloud = test::random_points<float>(97, rng);
    const auto z = encode<float>(cloud, params, c);

    std::vector<Eigen::Index> perm(97);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Points3<float> shuffled(3, 97);
    for (Eigen::Index i = 0; i < 97; ++i) shuffled.col(i) = cloud.col(perm[static_cast<std::size_t>(i)]);
    const auto zs = encode<float>(shuffled, params, c);
    CHECK(bit_equal(z.mean, zs.mean));

    Points3<float> doubled(3, 194);
    doubled << cloud, cloud;
    CHECK(bit_equal(z.mean, encode<float>(doubled, params, c).mean));
    if (c.vae_mode) {
      CHECK(z.log_variance.size() == c.latent_width);
      CHECK(bit_equal(z.log_variance, zs.log_variance));
    }
  }
  CHECK_THROWS(encode<float>(Points3<float>(3, 0), init_parameters<float>(test::tiny_config(), 0),
                             test::tiny_config()));
}

TEST_CASE("distinct clouds give distinct codes") {
  const auto c = test::tiny_config();
  int distinct = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const auto params = init_parameters<double>(c, seed);
    const auto a = encode<double>(test::random_points(32, rng), params, c).mean;
    const auto b = encode<double>(test::random_points(32, rng), params, c).mean;
    if (a != b) ++distinct;
  }
  CHECK(distinct == 100);
}

TEST_CASE("extract_substructure") {
  const auto c = test::tiny_config({2, 2}, 8);
  const auto params = init_parameters<double>(c, 3);
  const VectorX<double> zero = VectorX<double>::Zero(8);
  CHECK(extract_substructure<double>(Eigen::Vector3d::Zero(), zero, params).isZero(0));

  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector3d s = test::random_matrix(3, 1, rng, -5, 5);
    const VectorX<double> h = test::random_matrix(8, 1, rng, -50, 50);
    CHECK(extract_substructure<double>(s, h, params).cwiseAbs().maxCoeff() < 1.0);
  }

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 r(seed);
    const auto p = init_parameters<double>(c, seed);
    const Mat s0 = test::random_matrix(3, 1, r);
    const Mat h0 = test::random_matrix(8, 1, r);
    const Mat w = test::random_matrix(8, 1, r);
    auto value = [&](const Mat& ms, const Mat& mh, const Mat& s, const Mat& h) {
      Parameters<double> q = p;
      q.point_proj = ms;
      q.structure_proj = mh;
      return extract_substructure<double>(Eigen::Vector3d(s), VectorX<double>(h), q).dot(VectorX<double>(w));
    };
    ad::Tape<double> tape;
    const auto vars = bind_parameters(tape, p, true);
    const auto s = tape.leaf(s0);
    const auto h = tape.leaf(h0);
    const auto out = extract_substructure_graph(vars, s, h);
    const auto g = tape.backward(ad::sum(out * tape.constant(w)));
    using test::numeric_gradient;
    using test::relative_error;
    CHECK(relative_error(g[vars.point_proj],
                         numeric_gradient([&](const Mat& x) { return value(x, p.structure_proj, s0, h0); },
                                          p.point_proj)) < 1e-4);
    CHECK(relative_error(g[vars.structure_proj],
                         numeric_gradient([&](const Mat& x) { return value(p.point_proj, x, s0, h0); },
                                          p.structure_proj)) < 1e-4);
    CHECK(relative_error(g[s], numeric_gradient([&](const Mat& x) {
                           return value(p.point_proj, p.structure_proj, x, h0);
                         }, s0)) < 1e-4);
    CHECK(relative_error(g[h], numeric_gradient([&](const Mat& x) {
                           return value(p.point_proj, p.structure_proj, s0, x);
                         }, h0)) < 1e-4);
  }
}

TEST_CASE("expand_point") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + trial % 6;
    const auto c = test::tiny_config({k, 2}, 8);
    const auto params = init_parameters<double>(c, static_cast<std::uint64_t>(trial));
    const Eigen::Vector3d s = test::random_matrix(3, 1, rng);
    const VectorX<double> h = random_latent(8, rng);
    const double alpha = 0.1 + 0.9 * static_cast<double>(trial) / 50.0;
    const auto children = expand_point<double>(s, h, alpha, 0, params, c);
    REQUIRE(children.size() == static_cast<std::size_t>(k));
    double farthest = 0;
    std::size_t arg = 0;
    for (std::size_t m = 0; m < children.size(); ++m) {
      const auto& ch = children[m];
      CHECK(bit_equal(ch.structure, children[0].structure));
      CHECK(ch.scale > 0);
      CHECK(ch.scale <= alpha);
      const double dist = (ch.point - s).norm();
      CHECK(dist <= ch.scale * (1 + 1e-12));
      if (dist / ch.scale > farthest) {
        farthest = dist / ch.scale;
        arg = m;
      }
    }
    // The sibling with the largest offset sits on the boundary of its ball.
    CHECK(farthest == doctest::Approx(1.0).epsilon(1e-12));
    if (k == 1) CHECK(arg == 0);
  }
  const auto c = test::tiny_config();
  const auto params = init_parameters<double>(c, 0);
  CHECK_THROWS_AS(expand_point<double>(Eigen::Vector3d::Zero(), VectorX<double>::Zero(8), 0.0, 0, params, c),
                  std::invalid_argument);
  CHECK_THROWS_AS(expand_point<double>(Eigen::Vector3d::Zero(), VectorX<double>::Zero(8), -1.0, 0, params, c),
                  std::invalid_argument);
}

TEST_CASE("expansion stage gradients match central differences") {
  const double worst = test::expand_gradient_error(20);
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-4);
}

TEST_CASE("generate on the published schedules") {
  for (const auto& c : {GeneratorConfig::rpg2048(), GeneratorConfig::rpg3125()}) {
    const auto params = init_parameters<float>(c, 0);
    std::mt19937_64 rng(1);
    const auto trace = generate<float>(random_latent(c.latent_width, rng).cast<float>(), params, c);
    REQUIRE(trace.stages.size() == static_cast<std::size_t>(c.stages() + 1));
    for (int d = 0; d <= c.stages(); ++d) CHECK(trace.stages[static_cast<std::size_t>(d)].size() == c.points_at(d));
    CHECK(trace.output().cols() == c.leaf_count());
    const auto labels = segment(trace, c.stages(), 1);
    CHECK(std::set<int>(labels.begin(), labels.end()).size() == static_cast<std::size_t>(c.k_schedule[0]));
  }
}

TEST_CASE("structural invariants over 120 random configs") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 120; ++trial) {
    const GeneratorConfig c = random_config(rng);
    CAPTURE(trial);
    const auto params = init_parameters<double>(c, rng());
    const auto trace = generate<double>(random_latent(c.latent_width, rng), params, c);
    const auto& root = trace.stages[0];
    CHECK(root.points.isZero(0));
    CHECK(root.scales(0, 0) == 1.0);
    bool ok_card = true, ok_sibling = true, ok_alpha = true, ok_contain = true, ok_parent = true;
    for (int d = 0; d < c.stages(); ++d) {
      const auto& in = trace.stages[static_cast<std::size_t>(d)];
      const auto& out = trace.stages[static_cast<std::size_t>(d + 1)];
      const int k = c.k_schedule[static_cast<std::size_t>(d)];
      ok_card = ok_card && out.size() == k * in.size() &&
                out.structure.cols() == out.size() && out.scales.cols() == out.size() &&
                static_cast<Eigen::Index>(out.parent.size()) == out.size();
      for (Eigen::Index j = 0; j < out.size(); ++j) {
        const Eigen::Index p = out.parent[static_cast<std::size_t>(j)];
        ok_parent = ok_parent && p == j / k;
        ok_sibling = ok_sibling && bit_equal(MatrixX<double>(out.structure.col(j)),
                                             MatrixX<double>(out.structure.col(p * k)));
        ok_alpha = ok_alpha && out.scales(0, j) > 0 && out.scales(0, j) <= in.scales(0, p);
        ok_contain = ok_contain &&
                     (out.points.col(j) - in.points.col(p)).norm() <= out.scales(0, j) * (1 + 1e-12);
      }
    }
    CHECK(ok_card);
    CHECK(ok_parent);
    CHECK(ok_sibling);
    CHECK(ok_alpha);
    CHECK(ok_contain);

    // Encoder permutation invariance on the same config.
    const Points3<double> cloud = test::random_points(40, rng);
    std::vector<Eigen::Index> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Points3<double> shuffled(3, 40);
    for (Eigen::Index i = 0; i < 40; ++i) shuffled.col(i) = cloud.col(perm[static_cast<std::size_t>(i)]);
    CHECK(bit_equal(encode<double>(cloud, params, c).mean, encode<double>(shuffled, params, c).mean));
  }
}

TEST_CASE("a leaf's path re-evaluated alone reproduces the trace") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = test::tiny_config({3, 2, 4}, 10);
    const auto params = init_parameters<float>(c, static_cast<std::uint64_t>(trial));
    const VectorX<float> z = random_latent(10, rng).cast<float>();
    const auto trace = generate<float>(z, params, c);
    const Eigen::Index leaf = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(c.leaf_count()));
    // Slot of the leaf's ancestor at every stage.
    std::vector<Eigen::Index> path(static_cast<std::size_t>(c.stages() + 1));
    path.back() = leaf;
    for (int d = c.stages(); d > 0; --d)
      path[static_cast<std::size_t>(d - 1)] = trace.stages[static_cast<std::size_t>(d)].parent[static_cast<std::size_t>(path[static_cast<std::size_t>(d)])];

    Eigen::Vector3f s = Eigen::Vector3f::Zero();
    VectorX<float> h = z;
    float alpha = 1.0f;
    bool same = true;
    for (int d = 0; d < c.stages(); ++d) {
      const int k = c.k_schedule[static_cast<std::size_t>(d)];
      const auto children = expand_point<float>(s, h, alpha, d, params, c);
      const Eigen::Index slot = path[static_cast<std::size_t>(d + 1)] % k;
      const auto& child = children[static_cast<std::size_t>(slot)];
      const auto& st = trace.stages[static_cast<std::size_t>(d + 1)];
      const Eigen::Index j = path[static_cast<std::size_t>(d + 1)];
      same = same && bit_equal(MatrixX<float>(child.point), MatrixX<float>(st.points.col(j))) &&
             bit_equal(MatrixX<float>(child.structure), MatrixX<float>(st.structure.col(j))) &&
             child.scale == st.scales(0, j);
      s = child.point;
      h = child.structure;
      alpha = child.scale;
    }
    CHECK(same);
  }
}

TEST_CASE("segment") {
  const auto c = test::tiny_config({2, 2});
  const auto params = init_parameters<double>(c, 0);
  const auto trace = generate<double>(VectorX<double>::Ones(8), params, c);
  CHECK(segment(trace, 2, 1) == std::vector<int>{0, 0, 1, 1});
  CHECK(segment(trace, 2, 0) == std::vector<int>{0, 0, 0, 0});
  CHECK(segment(trace, 1, 0) == std::vector<int>{0, 0});
  CHECK_THROWS_AS(segment(trace, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(segment(trace, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(segment(trace, 2, -1), std::invalid_argument);

  const auto c5 = test::tiny_config({5, 3, 2});
  const auto t5 = generate<double>(VectorX<double>::Ones(8), init_parameters<double>(c5, 1), c5);
  const auto labels = segment(t5, 3, 1);
  std::map<int, int> members;
  for (int l : labels) ++members[l];
  CHECK(members.size() == 5);
  for (const auto& [label, n] : members) CHECK(n == 6);
}
