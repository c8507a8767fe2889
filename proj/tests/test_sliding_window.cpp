#include <cmath>

#include "anevrix/errors.hpp"
#include "anevrix/landmarks.hpp"
#include "anevrix/predictor.hpp"
#include "anevrix/sliding_window.hpp"
#include "anevrix/synth.hpp"
#include "anevrix/volume_ops.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace anevrix;
using testutil::unit_volume;

namespace {

class ConstantPredictor final : public PatchPredictor {
 public:
  explicit ConstantPredictor(float c) : c_(c) {}
  Grid3 predict(const Grid3& patch, const PatchContext&) const override { return Grid3(patch.shape, c_); }
  std::string name() const override { return "constant"; }

 private:
  float c_;
};

// Position-dependent, input-dependent output so that transform inversion matters.
class SkewPredictor final : public PatchPredictor {
 public:
  Grid3 predict(const Grid3& patch, const PatchContext&) const override {
    Grid3 out(patch.shape);
    for (int z = 0; z < patch.shape[2]; ++z)
      for (int y = 0; y < patch.shape[1]; ++y)
        for (int x = 0; x < patch.shape[0]; ++x) {
          const double v = 0.3 * patch(x, y, z) + 0.05 * x - 0.02 * y + 0.07 * z;
          out(x, y, z) = static_cast<float>(1.0 / (1.0 + std::exp(-v)));
        }
    return out;
  }
  std::string name() const override { return "skew"; }
};

// 1 for the spec whose x origin equals `hot_x`, 0 for every other spec.
class OriginPredictor final : public PatchPredictor {
 public:
  explicit OriginPredictor(int hot_x) : hot_x_(hot_x) {}
  Grid3 predict(const Grid3& patch, const PatchContext& ctx) const override {
    return Grid3(patch.shape, ctx.spec.origin[0] == hot_x_ ? 1.0f : 0.0f);
  }
  std::string name() const override { return "origin"; }

 private:
  int hot_x_;
};

class OutOfRangePredictor final : public PatchPredictor {
 public:
  Grid3 predict(const Grid3& patch, const PatchContext&) const override { return Grid3(patch.shape, 1.5f); }
  std::string name() const override { return "bad"; }
};

Grid3 random_cube(int side, Rng& rng) {
  Grid3 g = Grid3::cube(side);
  for (auto& v : g.values) v = static_cast<float>(rng.uniform(-3, 3));
  return g;
}

RetentionConfig plain_config() {
  RetentionConfig c;
  c.anatomical = false;
  c.tta_enabled = false;
  return c;
}

}  // namespace

TEST_CASE("enumerate_patches examples and coverage") {
  CHECK(enumerate_patches(unit_volume({64, 64, 64}), 64, 32).size() == 1);
  const auto specs = enumerate_patches(unit_volume({128, 128, 128}), 64, 32);
  CHECK(specs.size() == 27);
  CHECK(specs.back().origin == Index3{64, 64, 64});
  const auto clamp = enumerate_patches(unit_volume({100, 64, 20}), 64, 32);
  CHECK(clamp.size() == 3);
  CHECK(clamp[1].origin == Index3{32, 0, 0});
  CHECK(clamp[2].origin == Index3{36, 0, 0});

  Rng rng(1);
  for (int t = 0; t < 40; ++t) {
    const Index3 shape{static_cast<int>(rng.uniform_int(4, 50)), static_cast<int>(rng.uniform_int(4, 50)),
                       static_cast<int>(rng.uniform_int(4, 50))};
    const int side = static_cast<int>(rng.uniform_int(8, 24));
    const int stride = static_cast<int>(rng.uniform_int(1, side));
    const auto v = unit_volume(shape);
    std::vector<int> covered(v.size(), 0);
    for (const auto& s : enumerate_patches(v, side, stride)) {
      CHECK_NOTHROW(validate(s, v));
      for (int z = std::max(0, s.origin[2]); z < std::min(shape[2], s.origin[2] + side); ++z)
        for (int y = std::max(0, s.origin[1]); y < std::min(shape[1], s.origin[1] + side); ++y)
          for (int x = std::max(0, s.origin[0]); x < std::min(shape[0], s.origin[0] + side); ++x)
            covered[v.linear_index(x, y, z)] = 1;
    }
    CHECK(std::count(covered.begin(), covered.end(), 0) == 0);
  }
  CHECK_THROWS_AS(enumerate_patches(unit_volume({64, 64, 64}), 64, 0), ValidationError);
  CHECK_THROWS_AS(enumerate_patches(unit_volume({64, 64, 64}), 64, 65), ValidationError);
}

TEST_CASE("retain_anatomical examples") {
  auto v = unit_volume({32, 32, 32}, 1.0f);
  for (int x = 0; x < 32; ++x)
    for (int d = 0; d < 4; ++d) v(x, 15 + d % 2, 15 + d / 2) = 50.0f;
  RetentionConfig cfg;
  cfg.vessel.min_bright_voxels = 10;
  const auto specs = enumerate_patches(v, 16, 8);
  const std::vector<Vec3> at_center{v.world(specs[13].center_index())};
  const auto kept = retain_anatomical(specs, at_center, v, cfg);
  CHECK(std::find(kept.begin(), kept.end(), specs[13]) != kept.end());
  for (const auto& s : kept) CHECK(distance(v.world(s.center_index()), at_center[0]) <= 15.0);

  const std::vector<Vec3> far{{500, 500, 500}};
  CHECK(retain_anatomical(specs, far, v, cfg).empty());
  CHECK_THROWS_AS(retain_anatomical(specs, std::vector<Vec3>{}, v, cfg), ValidationError);

  // dark patch at a landmark is dropped by the intensity rule
  auto dark = unit_volume({32, 32, 32}, 1.0f);
  CHECK(retain_anatomical(specs, at_center, dark, cfg).empty());
}

TEST_CASE("retention on a tube phantom is a filter and idempotent") {
  SynthConfig cfg;
  cfg.shape = {96, 64, 64};
  Rng rng(3);
  const auto subj = make_synthetic_subject(cfg, "sub-001", rng);
  const auto lms = positions(subj.landmarks);
  RetentionConfig rc;
  const auto all = enumerate_patches(subj.image, 32, 16);
  const auto kept = retain_anatomical(all, lms, subj.image, rc);
  CHECK_FALSE(kept.empty());
  CHECK(kept.size() < all.size());
  std::size_t cursor = 0;
  for (const auto& s : kept) {
    while (cursor < all.size() && !(all[cursor] == s)) ++cursor;
    CHECK(cursor < all.size());
    double best = 1e300;
    for (const auto& l : lms) best = std::min(best, distance(subj.image.world(s.center_index()), l));
    CHECK(best <= 15.0);
  }
  CHECK(retain_anatomical(kept, lms, subj.image, rc) == kept);
}

TEST_CASE("tta_predict") {
  Rng rng(4);
  const auto p = random_cube(6, rng);
  const ConstantPredictor c(0.3f);
  for (float v : tta_predict(p, c).values) CHECK(v == doctest::Approx(0.3f));

  const SkewPredictor skew;
  const auto got = tta_predict(p, skew);
  Grid3 ref(p.shape);
  for (auto t : kAllGeometricTransforms) {
    const auto back = apply_transform(skew.predict(apply_transform(p, t), {}), inverse(t));
    for (std::size_t i = 0; i < ref.size(); ++i) ref.values[i] += back.values[i] / 6.0f;
  }
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(got.values[i] - ref.values[i]) < 1e-6);

  // a fully symmetric input with a symmetric predictor is unchanged by TTA
  const HeuristicPredictor heur(50.0);
  Grid3 sym = Grid3::cube(6);
  for (int z = 0; z < 6; ++z)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        const double dx = x - 2.5, dy = y - 2.5, dz = z - 2.5;
        sym(x, y, z) = static_cast<float>(dx * dx + dy * dy + dz * dz);
      }
  const auto plain = heur.predict(sym, {});
  const auto averaged = tta_predict(sym, heur);
  for (std::size_t i = 0; i < plain.size(); ++i) CHECK(averaged.values[i] == doctest::Approx(plain.values[i]));
}

TEST_CASE("predict_volume aggregation") {
  auto v = unit_volume({16, 8, 8});
  Rng rng(5);
  for (auto& x : v.voxels()) x = static_cast<float>(rng.uniform(0, 10));

  PatchSpec whole;
  whole.side = 16;
  const auto one = predict_volume(v, SkewPredictor{}, std::vector<PatchSpec>{whole}, plain_config());
  const auto expected = SkewPredictor{}.predict(zscore(extract_patch(v, whole)), {});
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 16; ++x) CHECK(one(x, y, z) == doctest::Approx(expected(x, y, z)));

  const auto specs = enumerate_patches(v, 8, 4);
  const auto c = predict_volume(v, ConstantPredictor(0.7f), specs, plain_config());
  for (float x : c.voxels()) CHECK(x == doctest::Approx(0.7f));

  PatchSpec a, b;
  a.side = b.side = 8;
  b.origin = {4, 0, 0};
  const auto half = predict_volume(v, OriginPredictor(4), std::vector<PatchSpec>{a, b}, plain_config());
  CHECK(half(1, 3, 3) == 0.0f);
  CHECK(half(5, 3, 3) == doctest::Approx(0.5));
  CHECK(half(10, 3, 3) == 1.0f);
  CHECK(half(14, 3, 3) == 0.0f);  // uncovered

  CHECK_THROWS_AS(predict_volume(v, OutOfRangePredictor{}, specs, plain_config()), ValidationError);
}

TEST_CASE("predict_volume is identical for any worker count") {
  auto v = unit_volume({24, 24, 16});
  Rng rng(6);
  for (auto& x : v.voxels()) x = static_cast<float>(rng.uniform(0, 10));
  const auto specs = enumerate_patches(v, 8, 3);
  RetentionConfig cfg = plain_config();
  cfg.tta_enabled = true;
  const auto ref = predict_volume(v, SkewPredictor{}, specs, cfg, 1);
  for (int jobs : {2, 3, 8}) {
    const auto got = predict_volume(v, SkewPredictor{}, specs, cfg, jobs);
    CHECK(std::equal(got.voxels().begin(), got.voxels().end(), ref.voxels().begin()));
  }
}

TEST_CASE("extract_candidates and top_k") {
  CHECK(extract_candidates(unit_volume({4, 4, 4}), 0.5).empty());
  auto p = unit_volume({6, 4, 4});
  p(0, 0, 0) = 0.6f;
  p(1, 0, 0) = 0.8f;
  auto c = extract_candidates(p, 0.5);
  REQUIRE(c.size() == 1);
  CHECK(c[0].score == doctest::Approx(0.8));
  CHECK(c[0].center[0] == doctest::Approx(4.0 / 7.0));
  CHECK(c[0].center[1] == 0.0);
  CHECK(c[0].voxel_count == 2);

  p(4, 3, 3) = 0.9f;
  c = extract_candidates(p, 0.5);
  REQUIRE(c.size() == 2);
  CHECK(c[0].component_id < c[1].component_id);
  CHECK(c[1].score == doctest::Approx(0.9));
  CHECK(extract_candidates(p, 0.85).size() == 1);

  std::vector<CandidateDetection> seven;
  for (int i = 0; i < 7; ++i) seven.push_back({{0, 0, 0}, 0.1 * (i + 1), 1, i + 1});
  const auto top = top_k(seven, 5);
  REQUIRE(top.size() == 5);
  CHECK(top[0].component_id == 7);
  CHECK(top[4].component_id == 3);
  CHECK(top_k(std::vector<CandidateDetection>(seven.begin(), seven.begin() + 3), 5).size() == 3);

  std::vector<CandidateDetection> tie{{{0, 0, 0}, 0.9, 3, 1}, {{0, 0, 0}, 0.9, 10, 2}, {{0, 0, 0}, 0.9, 10, 3}};
  const auto t = top_k(tie, 2);
  CHECK(t[0].component_id == 2);
  CHECK(t[1].component_id == 3);
  CHECK_THROWS_AS(top_k(tie, 0), ValidationError);
}

TEST_CASE("oracle detection on a phantom finds every lesion and nothing else") {
  SynthConfig cfg;
  cfg.shape = {96, 64, 64};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    const auto subj = make_synthetic_subject(cfg, "sub-001", rng);
    const OraclePredictor oracle(subj.mask);
    RetentionConfig rc;
    rc.stride = 16;
    const auto res = detect(subj.image, positions(subj.landmarks), oracle, rc, 32);
    CHECK(res.candidates.size() == subj.annotations.size());
    for (const auto& a : subj.annotations) {
      int hits = 0;
      for (const auto& c : res.candidates) hits += distance(c.center, a.center) <= a.max_diameter;
      CHECK(hits == 1);
    }
    for (float x : res.probability.voxels()) CHECK((x >= 0.0f && x <= 1.0f));
  }
}

TEST_CASE("candidate CSV round trip") {
  const std::vector<CandidateDetection> dets{{{1.5, -2, 3.25}, 0.75, 12, 4}, {{0, 0, 0}, 0.5, 1, 9}};
  const auto rows = label_candidates("sub-001", "ses-01", dets);
  CHECK(rows[0].candidate_id == 1);
  CHECK(rows[1].candidate_id == 2);
  const auto text = format_candidates(rows);
  CHECK(text.rfind("subject,session,candidate_id,x_mm,y_mm,z_mm,score,voxel_count\n", 0) == 0);
  const auto back = parse_candidates(text);
  REQUIRE(back.size() == 2);
  CHECK(back[0].subject == "sub-001");
  CHECK(back[0].detection.center == dets[0].center);
  CHECK(back[0].detection.score == 0.75);
  CHECK(back[1].detection.voxel_count == 1);
  CHECK_THROWS_AS(parse_candidates("subject,session,candidate_id,x_mm,y_mm,z_mm,score,voxel_count\ns,,1,0,0,0,1.5,1\n"),
                  ValidationError);
}
