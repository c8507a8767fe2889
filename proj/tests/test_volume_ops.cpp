#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "anevrix/errors.hpp"
#include "anevrix/volume_ops.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace anevrix;
using testutil::unit_volume;

TEST_CASE("median_spacing") {
  const Vec3 one{0.4, 0.4, 0.6};
  CHECK(median_spacing(std::vector<Vec3>{one}) == one);
  const auto m = median_spacing(std::vector<Vec3>{{0.4, 0.4, 0.6}, {0.5, 0.5, 0.5}, {0.3, 0.6, 0.7}});
  CHECK(m[0] == doctest::Approx(0.4));
  CHECK(m[1] == doctest::Approx(0.5));
  CHECK(m[2] == doctest::Approx(0.6));
  CHECK(median_spacing(std::vector<Vec3>{{0.4, 1, 1}, {0.6, 1, 1}})[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(median_spacing(std::vector<Vec3>{}), ValidationError);

  std::vector<Volume3D> vols;
  vols.emplace_back(Index3{2, 2, 2}, Vec3{0.7, 0.8, 0.9}, Affine4x4::scaling({0.7, 0.8, 0.9}));
  CHECK(median_spacing(std::span<const Volume3D>(vols)) == Vec3{0.7, 0.8, 0.9});
}

TEST_CASE("resample at the current spacing is the identity") {
  Rng rng(1);
  Volume3D v({5, 6, 7}, {0.5, 0.6, 0.7}, Affine4x4::scaling({0.5, 0.6, 0.7}, {3, 4, 5}));
  for (auto& x : v.voxels()) x = static_cast<float>(rng.uniform(0, 100));
  for (auto mode : {Interpolation::trilinear, Interpolation::nearest}) {
    const auto r = resample(v, v.spacing(), mode);
    CHECK(r.shape() == v.shape());
    CHECK(std::equal(r.voxels().begin(), r.voxels().end(), v.voxels().begin()));
    CHECK(r.affine() == v.affine());
  }
}

TEST_CASE("2x downsample of a constant volume stays constant") {
  const auto v = unit_volume({8, 8, 8}, 3.5f);
  const auto r = resample(v, {2, 2, 2}, Interpolation::trilinear);
  CHECK(r.shape() == Index3{4, 4, 4});
  for (float x : r.voxels()) CHECK(x == doctest::Approx(3.5f));
}

TEST_CASE("linear interpolation midpoint under origin alignment") {
  Volume3D v({2, 1, 1}, {1, 1, 1}, Affine4x4::identity());
  v(0, 0, 0) = 0.0f;
  v(1, 0, 0) = 2.0f;
  const auto r = resample(v, {0.5, 1, 1}, Interpolation::trilinear, GridAlignment::origin);
  REQUIRE(r.shape() == Index3{4, 1, 1});
  CHECK(r(0, 0, 0) == doctest::Approx(0.0));
  CHECK(r(1, 0, 0) == doctest::Approx(1.0));
  CHECK(r(2, 0, 0) == doctest::Approx(2.0));
  // world position of output voxel 1 is the input midpoint
  CHECK(r.world(1, 0, 0)[0] == doctest::Approx(0.5));
}

TEST_CASE("resample preserves the world bounding-box center within one target voxel") {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Index3 shape{static_cast<int>(rng.uniform_int(1, 12)), static_cast<int>(rng.uniform_int(1, 12)),
                       static_cast<int>(rng.uniform_int(1, 12))};
    const Vec3 sp{rng.uniform(0.3, 2), rng.uniform(0.3, 2), rng.uniform(0.3, 2)};
    const Vec3 target{rng.uniform(0.3, 2), rng.uniform(0.3, 2), rng.uniform(0.3, 2)};
    Volume3D v(shape, sp, Affine4x4::scaling(sp, {rng.uniform(-50, 50), rng.uniform(-50, 50), 0}), 1.0f);
    const auto r = resample(v, target, Interpolation::trilinear);
    const auto c_in = v.world(Vec3{0.5 * (shape[0] - 1), 0.5 * (shape[1] - 1), 0.5 * (shape[2] - 1)});
    const auto& so = r.shape();
    const auto c_out = r.world(Vec3{0.5 * (so[0] - 1), 0.5 * (so[1] - 1), 0.5 * (so[2] - 1)});
    for (int a = 0; a < 3; ++a) {
      CHECK(so[a] == std::max(1, static_cast<int>(std::lround(shape[a] * sp[a] / target[a]))));
      CHECK(std::abs(c_in[a] - c_out[a]) <= target[a]);
    }
  }
}

TEST_CASE("nearest resampling keeps mask labels and zero-fills outside") {
  Rng rng(4);
  const auto m = testutil::random_mask({6, 6, 6}, 0.3, rng);
  const auto r = resample(m, {0.7, 0.7, 0.7}, Interpolation::nearest);
  for (float x : r.voxels()) CHECK((x == 0.0f || x == 1.0f));
  CHECK_THROWS_AS(resample(m, {0, 1, 1}, Interpolation::nearest), ValidationError);
  CHECK_THROWS_AS(resample(m, {1, -1, 1}, Interpolation::nearest), ValidationError);
}

TEST_CASE("zscore") {
  CHECK(zscore(std::vector<float>{4, 4, 4}) == std::vector<float>{0, 0, 0});
  CHECK(zscore(std::vector<float>{0, 2, 0, 2}) == std::vector<float>{-1, 1, -1, 1});
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    std::vector<float> v(500);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-10, 300));
    const auto z = zscore(v);
    double mean = 0, sq = 0;
    for (float x : z) mean += x;
    mean /= z.size();
    for (float x : z) sq += (x - mean) * (x - mean);
    CHECK(std::abs(mean) < 1e-4);
    CHECK(std::abs(std::sqrt(sq / z.size()) - 1.0) < 1e-4);

    const double a = rng.uniform(0.1, 10), b = rng.uniform(-100, 100);
    std::vector<float> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = static_cast<float>(a * v[i] + b);
    const auto zw = zscore(w);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(zw[i] - z[i]) < 1e-4);
  }
  Grid3 g = Grid3::cube(2, 1.0f);
  g(0, 0, 0) = 3.0f;
  const auto zg = zscore(g);
  CHECK(zg.shape == g.shape);
  CHECK(zg(0, 0, 0) > 0.0f);
}

TEST_CASE("apply_affine") {
  CHECK(apply_affine(Affine4x4::identity(), {1, 2, 3}) == Vec3{1, 2, 3});
  CHECK(apply_affine(Affine4x4::scaling({1, 1, 1}, {5, 0, 0}), {0, 0, 0}) == Vec3{5, 0, 0});
  CHECK(apply_affine(Affine4x4::scaling({2, 2, 2}, {1, 1, 1}), {1, 0, 0}) == Vec3{3, 1, 1});
  Eigen::Matrix4d bad = Eigen::Matrix4d::Identity();
  bad(3, 0) = 1;
  CHECK_THROWS_AS(Affine4x4{bad}, ValidationError);
  Eigen::Matrix4d singular = Eigen::Matrix4d::Identity();
  singular(2, 2) = 0;
  CHECK_THROWS_AS(Affine4x4{singular}, ValidationError);
}

TEST_CASE("connected components basic cases") {
  auto m = unit_volume({3, 3, 3});
  CHECK(connected_components(m).empty());
  m(0, 0, 0) = 1;
  m(1, 1, 1) = 1;
  CHECK(connected_components(m, Connectivity::twenty_six).size() == 1);
  CHECK(connected_components(m, Connectivity::eighteen).size() == 2);
  CHECK(connected_components(m, Connectivity::six).size() == 2);
  auto e = unit_volume({3, 3, 3});
  e(0, 0, 0) = 1;
  e(1, 1, 0) = 1;
  CHECK(connected_components(e, Connectivity::eighteen).size() == 1);
  CHECK(connected_components(e, Connectivity::six).size() == 2);
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

TEST_CASE("connected components match a union-find oracle on random 8^3 masks") {
  Rng rng(8);
  for (int trial = 0; trial < 60; ++trial) {
    const auto m = testutil::random_mask({8, 8, 8}, rng.uniform(0.1, 0.5), rng);
    for (auto conn : {Connectivity::six, Connectivity::eighteen, Connectivity::twenty_six}) {
      const int limit = conn == Connectivity::six ? 1 : conn == Connectivity::eighteen ? 2 : 3;
      UnionFind uf(512);
      for (int z = 0; z < 8; ++z)
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            if (m(x, y, z) < 0.5f) continue;
            for (int dz = -1; dz <= 1; ++dz)
              for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                  const int taxi = std::abs(dx) + std::abs(dy) + std::abs(dz);
                  if (taxi == 0 || taxi > limit) continue;
                  const int X = x + dx, Y = y + dy, Z = z + dz;
                  if (!m.contains(X, Y, Z) || m(X, Y, Z) < 0.5f) continue;
                  uf.unite(static_cast<int>(m.linear_index(x, y, z)), static_cast<int>(m.linear_index(X, Y, Z)));
                }
          }
      std::set<int> roots;
      for (std::size_t i = 0; i < 512; ++i) {
        if (m.voxels()[i] > 0.5f) roots.insert(uf.find(static_cast<int>(i)));
      }
      const auto comps = connected_components(m, conn);
      REQUIRE(comps.size() == roots.size());
      std::size_t covered = 0;
      std::size_t prev_min = 0;
      for (std::size_t c = 0; c < comps.size(); ++c) {
        const auto& vox = comps[c].voxels;
        REQUIRE_FALSE(vox.empty());
        covered += vox.size();
        const int root = uf.find(static_cast<int>(m.linear_index(vox[0][0], vox[0][1], vox[0][2])));
        std::size_t min_li = SIZE_MAX;
        for (const auto& v : vox) {
          const auto li = m.linear_index(v[0], v[1], v[2]);
          CHECK(uf.find(static_cast<int>(li)) == root);
          min_li = std::min(min_li, li);
        }
        if (c > 0) CHECK(min_li > prev_min);
        prev_min = min_li;
      }
      std::size_t fg = 0;
      for (float x : m.voxels()) fg += x > 0.5f;
      CHECK(covered == fg);
    }
  }
}

TEST_CASE("center_of_mass") {
  const auto v = unit_volume({4, 4, 4});
  Component single{{{2, 2, 2}}, Connectivity::twenty_six};
  CHECK(center_of_mass(single, v) == Vec3{2, 2, 2});
  Component two{{{0, 0, 0}, {2, 0, 0}}, Connectivity::twenty_six};
  CHECK(center_of_mass(two, v) == Vec3{1, 0, 0});
  auto w = unit_volume({4, 4, 4});
  w(0, 0, 0) = 1;
  w(3, 0, 0) = 3;
  Component weighted{{{0, 0, 0}, {3, 0, 0}}, Connectivity::twenty_six};
  const auto c = center_of_mass(weighted, v, w.voxels());
  CHECK(c[0] == doctest::Approx(2.25));
  auto zero = unit_volume({4, 4, 4});
  CHECK_THROWS_AS(center_of_mass(weighted, v, zero.voxels()), ValidationError);
  Volume3D shifted({4, 4, 4}, {2, 2, 2}, Affine4x4::scaling({2, 2, 2}, {10, 0, 0}));
  CHECK(center_of_mass(single, shifted) == Vec3{14, 4, 4});
}

TEST_CASE("rasterize_sphere") {
  const auto tmpl = unit_volume({7, 7, 7});
  auto count = [](const Volume3D& m) {
    long n = 0;
    for (float x : m.voxels()) n += x > 0.5f;
    return n;
  };
  const auto r0 = rasterize_sphere({3, 3, 3}, 0.0, tmpl);
  CHECK(count(r0) == 1);
  CHECK(r0(3, 3, 3) == 1.0f);
  CHECK(count(rasterize_sphere({3, 3, 3}, 1.0, tmpl)) == 7);
  CHECK(count(rasterize_sphere({100, 100, 100}, 2.0, tmpl)) == 0);
  CHECK_THROWS_AS(rasterize_sphere({3, 3, 3}, -1.0, tmpl), ValidationError);

  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const Vec3 c{rng.uniform(-1, 8), rng.uniform(-1, 8), rng.uniform(-1, 8)};
    const double r1 = rng.uniform(0, 4), r2 = r1 + rng.uniform(0, 2);
    const auto a = rasterize_sphere(c, r1, tmpl);
    const auto b = rasterize_sphere(c, r2, tmpl);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a.voxels()[i] > 0.5f) CHECK(b.voxels()[i] > 0.5f);
    }
    // brute-force membership
    for (int z = 0; z < 7; ++z)
      for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) {
          const bool inside = distance(tmpl.world(x, y, z), c) <= r1;
          if (inside != (a(x, y, z) > 0.5f)) {
            // only values on the inclusive boundary may differ by round-off
            CHECK(std::abs(distance(tmpl.world(x, y, z), c) - r1) < 1e-9);
          }
        }
  }
}

TEST_CASE("percentile matches numpy linear interpolation") {
  // numpy.percentile([1,2,3,4], 90) == 3.7
  CHECK(percentile({1, 2, 3, 4}, 90) == doctest::Approx(3.7));
  CHECK(percentile({5}, 50) == doctest::Approx(5));
  CHECK(nonzero_percentile(std::vector<float>{0, 0, 1, 2, 3, 4}, 90) == doctest::Approx(3.7));
  CHECK(nonzero_percentile(std::vector<float>{0, 0}, 90) == 0.0);
}
