#include <algorithm>
#include <cmath>
#include <set>

#include "anevrix/errors.hpp"
#include "anevrix/landmarks.hpp"
#include "anevrix/patch_sampler.hpp"
#include "anevrix/synth.hpp"
#include "anevrix/volume_ops.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace anevrix;
using testutil::unit_volume;

namespace {

// Every voxel center (including zero-padded positions) inside the sphere lies in the patch.
bool contains_sphere(const Volume3D& v, const PatchSpec& s, const AneurysmAnnotation& a) {
  const Vec3 c = v.continuous_index(a.center);
  const Vec3 h = index_half_extent(v, a.radius);
  for (int z = static_cast<int>(std::floor(c[2] - h[2])) - 1; z <= static_cast<int>(std::ceil(c[2] + h[2])) + 1; ++z)
    for (int y = static_cast<int>(std::floor(c[1] - h[1])) - 1; y <= static_cast<int>(std::ceil(c[1] + h[1])) + 1; ++y)
      for (int x = static_cast<int>(std::floor(c[0] - h[0])) - 1; x <= static_cast<int>(std::ceil(c[0] + h[0])) + 1;
           ++x) {
        if (distance(v.world(x, y, z), a.center) > a.radius) continue;
        if (x < s.origin[0] || y < s.origin[1] || z < s.origin[2] || x >= s.origin[0] + s.side ||
            y >= s.origin[1] + s.side || z >= s.origin[2] + s.side)
          return false;
      }
  return true;
}

long brute_bright(const Volume3D& v, const PatchSpec& s, double thr) {
  long n = 0;
  for (float x : extract_patch(v, s).values) n += x > thr;
  return n;
}

Grid3 random_cube(int side, Rng& rng) {
  Grid3 g = Grid3::cube(side);
  for (auto& v : g.values) v = static_cast<float>(rng.uniform(0, 10));
  return g;
}

}  // namespace

TEST_CASE("extract_patch zero-pads outside the grid") {
  auto v = unit_volume({4, 4, 4}, 2.0f);
  PatchSpec s;
  s.side = 8;
  s.origin = {-2, -2, -2};
  const auto p = extract_patch(v, s);
  CHECK(p.shape == Index3{8, 8, 8});
  CHECK(p(0, 0, 0) == 0.0f);
  CHECK(p(2, 2, 2) == 2.0f);
  CHECK(p(5, 5, 5) == 2.0f);
  CHECK(p(6, 5, 5) == 0.0f);
  s.origin = {4, 0, 0};
  CHECK_THROWS_AS(extract_patch(v, s), ValidationError);
  s.origin = {0, 0, 0};
  s.side = 4;
  CHECK_THROWS_AS(extract_patch(v, s), ValidationError);
}

TEST_CASE("sample_positive returns n specs that each contain the sphere") {
  const double sp = 0.5;
  Volume3D v({80, 80, 60}, {sp, sp, sp}, Affine4x4::scaling({sp, sp, sp}, {-20, -20, -15}));
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    AneurysmAnnotation a;
    a.lesion_id = "L" + std::to_string(t);
    a.center = v.world(Vec3{rng.uniform(0, 79), rng.uniform(0, 79), rng.uniform(0, 59)});
    a.radius = rng.uniform(0.5, 6);
    const auto specs = sample_positive(v, a, 8, rng, 32);
    REQUIRE(specs.size() == 8);
    for (const auto& s : specs) {
      CHECK(s.side == 32);
      CHECK(contains_sphere(v, s, a));
      CHECK_NOTHROW(validate(s, v));
    }
  }
}

TEST_CASE("sample_positive offsets vary and centering is forced for oversized spheres") {
  auto v = unit_volume({17, 17, 17});
  AneurysmAnnotation a;
  a.center = {8, 8, 8};
  a.radius = 1.5;
  Rng rng(5);
  const auto specs = sample_positive(v, a, 100, rng, 8);
  std::set<Index3> origins;
  for (const auto& s : specs) {
    origins.insert(s.origin);
    CHECK(contains_sphere(v, s, a));
  }
  CHECK(origins.size() > 1);

  a.radius = 4.0;  // 9-voxel extent does not fit an 8-voxel patch
  const auto forced = sample_positive(v, a, 10, rng, 8);
  for (const auto& s : forced) {
    CHECK(s == forced[0]);
    const auto c = s.center_index();
    for (int ax = 0; ax < 3; ++ax) CHECK(std::abs(c[ax] - 8.0) <= 0.5);
  }

  a.center = {100, 8, 8};
  CHECK_THROWS_AS(sample_positive(v, a, 1, rng, 8), ValidationError);
}

TEST_CASE("sampling is reproducible for a fixed seed") {
  SynthConfig cfg;
  cfg.shape = {64, 48, 48};
  Rng srng(1);
  const auto subj = make_synthetic_subject(cfg, "sub-001", srng, 2);
  SamplingConfig sc;
  sc.side = 16;
  const auto lms = positions(subj.landmarks);
  Rng r1(77), r2(77);
  const auto a = sample_negative(subj.image, lms, subj.annotations, sc, r1);
  const auto b = sample_negative(subj.image, lms, subj.annotations, sc, r2);
  CHECK(a.all() == b.all());
  Rng p1(8), p2(8);
  CHECK(sample_positive(subj.image, subj.annotations[0], 8, p1, 16) ==
        sample_positive(subj.image, subj.annotations[0], 8, p2, 16));
}

TEST_CASE("sample_negative defaults give 20/20/10 lesion-free patches on a tube phantom") {
  SynthConfig cfg;
  cfg.shape = {96, 64, 64};
  cfg.background_sd = 0.0f;
  Rng srng(2);
  const auto subj = make_synthetic_subject(cfg, "sub-001", srng, 2);
  SamplingConfig sc;
  // Landmarks sit 15 mm apart, so a 16 mm patch around one clears lesions at its neighbours.
  sc.side = 16;
  Rng rng(11);
  const auto lms = positions(subj.landmarks);
  const auto neg = sample_negative(subj.image, lms, subj.annotations, sc, rng);
  CHECK(neg.landmark.size() == 20);
  CHECK(neg.vessel.size() == 20);
  CHECK(neg.random.size() == 10);
  CHECK(neg.all().size() == 50);
  CHECK(neg.shortfall() == 0);

  const auto nz = nonzero_percentile(subj.image.voxels(), 90.0);
  const BrightVoxelCounter counter(subj.image, sc.vessel);
  CHECK(counter.threshold() == doctest::Approx(nz));
  for (const auto& s : neg.vessel) CHECK(brute_bright(subj.image, s, nz) >= 50);
  for (const auto& s : neg.all()) {
    for (const auto& a : subj.annotations) CHECK_FALSE(intersects_sphere(subj.image, s, a));
  }
}

TEST_CASE("control subject places negatives without lesion rejection") {
  auto v = unit_volume({40, 40, 40}, 1.0f);
  for (int x = 0; x < 40; ++x) v(x, 20, 20) = v(x, 21, 20) = 10.0f;
  SamplingConfig sc;
  sc.side = 16;
  sc.vessel.min_bright_voxels = 10;
  const std::vector<Vec3> lms{{20, 20, 20}, {500, 0, 0}};
  Rng rng(4);
  const auto neg = sample_negative(v, lms, {}, sc, rng);
  CHECK(neg.landmark.size() == 20);
  // the out-of-grid landmark is skipped, the other is cycled
  for (const auto& s : neg.landmark) CHECK(s == neg.landmark[0]);
  CHECK(neg.vessel.size() == 20);
  CHECK(neg.random.size() == 10);
}

TEST_CASE("landmark negatives are skipped when every landmark patch touches a lesion") {
  auto v = unit_volume({40, 40, 40}, 1.0f);
  AneurysmAnnotation a;
  a.center = {20, 20, 20};
  a.radius = 3;
  SamplingConfig sc;
  sc.side = 16;
  sc.n_neg_vessel = 0;
  const std::vector<Vec3> lms{{22, 20, 20}};
  Rng rng(4);
  const auto neg = sample_negative(v, lms, std::vector<AneurysmAnnotation>{a}, sc, rng);
  CHECK(neg.landmark.empty());
  CHECK(neg.landmark_shortfall == 20);
  for (const auto& s : neg.random) CHECK_FALSE(intersects_sphere(v, s, a));
}

TEST_CASE("summed-volume counts equal brute force") {
  Rng rng(12);
  Volume3D v({20, 17, 13}, {1, 1, 1}, Affine4x4::identity());
  for (auto& x : v.voxels()) x = rng.uniform() < 0.3 ? 0.0f : static_cast<float>(rng.uniform(1, 100));
  const VesselCriterion crit{75.0, 5};
  const BrightVoxelCounter counter(v, crit);
  for (int t = 0; t < 300; ++t) {
    PatchSpec s;
    s.side = static_cast<int>(rng.uniform_int(8, 16));
    for (int a = 0; a < 3; ++a) s.origin[a] = static_cast<int>(rng.uniform_int(1 - s.side, v.shape()[a] - 1));
    CHECK(counter.count(s) == brute_bright(v, s, counter.threshold()));
  }
  CHECK_THROWS_AS((VesselCriterion{100.0, 5}.validate()), ValidationError);
  CHECK_THROWS_AS((VesselCriterion{0.0, 5}.validate()), ValidationError);
}

TEST_CASE("geometric augmentations form the expected groups") {
  Rng rng(6);
  const auto p = random_cube(5, rng);
  for (int axis = 0; axis < 3; ++axis) {
    AugmentationOp r{AugmentationKind::rot90, std::nullopt, axis};
    Grid3 q = p;
    for (int i = 0; i < 4; ++i) q = augment(q, r, rng);
    CHECK(q == p);
    CHECK(augment(p, r, rng) != p);
    CHECK(apply_transform(apply_transform(p, GeometricTransform::rot90, axis), GeometricTransform::rot90, axis) ==
          apply_transform(p, GeometricTransform::rot180, axis));
  }
  for (auto k : {AugmentationKind::flip_h, AugmentationKind::flip_v}) {
    AugmentationOp f{k};
    CHECK(augment(augment(p, f, rng), f, rng) == p);
  }
  for (auto t : kAllGeometricTransforms) {
    CHECK(apply_transform(apply_transform(p, t), inverse(t)) == p);
    auto sorted_in = p.values;
    auto sorted_out = apply_transform(p, t).values;
    std::sort(sorted_in.begin(), sorted_in.end());
    std::sort(sorted_out.begin(), sorted_out.end());
    CHECK(sorted_in == sorted_out);
  }
}

TEST_CASE("axial rotation keeps slices and flips mirror x and y") {
  Grid3 g = Grid3::cube(3);
  g(2, 0, 1) = 1.0f;
  const auto r = apply_transform(g, GeometricTransform::rot90);
  float slice_sum[3] = {0, 0, 0};
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) slice_sum[z] += r(x, y, z);
  CHECK(slice_sum[1] == 1.0f);
  CHECK(r(2, 0, 1) == 0.0f);
  CHECK(apply_transform(g, GeometricTransform::flip_h)(0, 0, 1) == 1.0f);
  CHECK(apply_transform(g, GeometricTransform::flip_v)(2, 2, 1) == 1.0f);
}

TEST_CASE("intensity augmentations") {
  Rng rng(7);
  const auto p = random_cube(6, rng);
  for (int t = 0; t < 20; ++t) {
    const auto c = augment(p, {AugmentationKind::contrast}, rng);
    const double f = c.values[0] / p.values[0];
    CHECK(f >= 0.8 - 1e-6);
    CHECK(f <= 1.2 + 1e-6);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(c.values[i] == doctest::Approx(p.values[i] * f).epsilon(1e-5));

    const auto g = augment(p, {AugmentationKind::gamma}, rng);
    CHECK(*std::min_element(g.values.begin(), g.values.end()) ==
          doctest::Approx(*std::min_element(p.values.begin(), p.values.end())));
    CHECK(*std::max_element(g.values.begin(), g.values.end()) ==
          doctest::Approx(*std::max_element(p.values.begin(), p.values.end())));
    CHECK(g.shape == p.shape);
  }
  // gamma 1 is the identity up to float rounding
  const auto g1 = augment(p, {AugmentationKind::gamma, 1.0}, rng);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(g1.values[i] == doctest::Approx(p.values[i]));

  Rng big(8);
  Grid3 large = Grid3::cube(40);
  for (auto& v : large.values) v = static_cast<float>(big.normal() * 10.0);
  const auto n = augment(large, {AugmentationKind::gauss_noise}, big);
  double sq = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) sq += (n.values[i] - large.values[i]) * (n.values[i] - large.values[i]);
  const double noise_sd = std::sqrt(sq / n.size());
  CHECK(noise_sd == doctest::Approx(0.05 * 10.0).epsilon(0.05));

  CHECK_THROWS_AS(augment(p, {AugmentationKind::contrast, 1.5}, rng), ValidationError);
  CHECK_THROWS_AS(augment(p, {AugmentationKind::gamma, 0.5}, rng), ValidationError);
  CHECK_THROWS_AS(augment(Grid3({2, 3, 4}), {AugmentationKind::flip_h}, rng), ValidationError);
}
