#include "rpg/metrics.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace rpg;

namespace {

CloudSet random_set(std::size_t n, std::mt19937_64& rng, SetRole role, double offset = 0) {
  CloudSet s;
  s.role = role;
  std::uniform_int_distribution<int> size(8, 40);
  for (std::size_t i = 0; i < n; ++i) {
    Points3<double> p = test::random_points(size(rng), rng);
    p.array() += offset;
    s.clouds.push_back(p);
  }
  return s;
}

}  // namespace

TEST_CASE("reductions on hand-built distance matrices") {
  Eigen::MatrixXd d(2, 2);
  d << 0.1, 0.3,
       0.5, 0.3;
  CHECK(mmd_from_distances(d) == doctest::Approx(0.2).epsilon(1e-15));
  // Column 1 ties between both references; the lower index wins.
  CHECK(coverage_from_distances(d) == 0.5);

  Eigen::MatrixXd all(3, 2);
  all << 1, 9,
         9, 1,
         5, 5;
  CHECK(coverage_from_distances(all) == doctest::Approx(2.0 / 3.0));

  Eigen::MatrixXd rr(2, 2), gg(2, 2), rg(2, 2);
  rr << 0, 1,
        1, 0;
  gg << 0, 1,
        1, 0;
  rg << 10, 10,
        10, 10;
  CHECK(one_nna_from_distances(rr, rg, gg) == 1.0);
  rg << 0.5, 10,
        10, 0.5;
  CHECK(one_nna_from_distances(rr, rg, gg) == 0.0);
}

TEST_CASE("purity examples") {
  CHECK(purity({0, 0, 1, 1}, {0, 1, 1, 1}) == 0.75);
  CHECK(purity({0, 1, 2, 3}, {0, 0, 1, 1}) == 1.0);
  CHECK(purity({0, 0, 0, 0}, {0, 0, 1, 1}) == 0.5);
  CHECK_THROWS_AS(purity({0, 1}, {0}), std::invalid_argument);
  CHECK_THROWS(purity({}, {}));
}

TEST_CASE("set metrics equal the brute-force oracles") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> count(1, 8);
    const CloudSet ref = random_set(count(rng), rng, SetRole::Reference);
    const CloudSet gen = random_set(count(rng), rng, SetRole::Generated, seed % 3 == 0 ? 0.3 : 0.0);
    CHECK(mmd(ref, gen) == doctest::Approx(test::brute_mmd(ref.clouds, gen.clouds)).epsilon(1e-12));
    CHECK(coverage(ref, gen) == test::brute_coverage(ref.clouds, gen.clouds));
    CHECK(one_nna(ref, gen) == test::brute_one_nna(ref.clouds, gen.clouds));
    CHECK(mmd(ref, gen, 3) == mmd(ref, gen));
    CHECK(one_nna(ref, gen, 2) == one_nna(ref, gen));
  }
}

TEST_CASE("pairwise matrices") {
  std::mt19937_64 rng(11);
  const CloudSet a = random_set(5, rng, SetRole::Reference);
  const CloudSet b = random_set(3, rng, SetRole::Generated);
  const auto ab = pairwise_chamfer(a, b);
  REQUIRE(ab.rows() == 5);
  REQUIRE(ab.cols() == 3);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 3; ++j)
      CHECK(ab(i, j) == test::brute_chamfer(a.clouds[static_cast<std::size_t>(i)],
                                             b.clouds[static_cast<std::size_t>(j)]));
  const auto aa = self_chamfer(a);
  CHECK(aa.diagonal().isZero(0));
  CHECK(aa == aa.transpose());
}

TEST_CASE("identical sets") {
  std::mt19937_64 rng(12);
  const CloudSet ref = random_set(6, rng, SetRole::Reference);
  CloudSet gen = ref;
  gen.role = SetRole::Generated;
  CHECK(mmd(ref, gen) == 0.0);
  CHECK(coverage(ref, gen) == 1.0);
}

TEST_CASE("transfer_labels") {
  std::mt19937_64 rng(13);
  const auto source = test::random_points(50, rng);
  std::vector<int> labels(50);
  for (int i = 0; i < 50; ++i) labels[static_cast<std::size_t>(i)] = i % 4;
  const auto target = test::random_points(30, rng);
  const auto brute = test::brute_nearest(target, source);
  const auto moved = transfer_labels(target, source, labels);
  REQUIRE(moved.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) CHECK(moved[i] == labels[static_cast<std::size_t>(brute[i].index)]);
  CHECK(transfer_labels(source, source, labels) == labels);
  CHECK_THROWS_AS(transfer_labels(target, source, {1, 2}), std::invalid_argument);
}

TEST_CASE("reconstruction report") {
  std::mt19937_64 rng(14);
  std::vector<PointCloud> data(3);
  for (auto& c : data) c.points = test::random_points(20, rng);
  const auto same = reconstruction_cd(data, [](const Points3<double>& p) { return p; });
  CHECK(same.mean == 0.0);
  CHECK(same.per_shape.size() == 3);
  const Eigen::Vector3d shift(0.1, 0, 0);
  const auto moved =
      reconstruction_cd(data, [&](const Points3<double>& p) -> Points3<double> { return p.colwise() + shift; });
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(moved.per_shape[i] == doctest::Approx(test::brute_chamfer(data[i].points, data[i].points.colwise() + shift)));
}

TEST_CASE("format_metric") {
  MetricRecord r{"mmd", 12.5, true, 10, 20};
  CHECK(format_metric(r) == "metric=mmd value=12.5 scaled_1e4=true n_reference=10 n_generated=20");
  r = {"cov", 0.5, false, 3, 4};
  CHECK(format_metric(r) == "metric=cov value=0.5 scaled_1e4=false n_reference=3 n_generated=4");
}
