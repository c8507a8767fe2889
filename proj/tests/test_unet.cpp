#include <cmath>
#include <fstream>

#include "anevrix/errors.hpp"
#include "anevrix/predictor.hpp"
#include "anevrix/tensor_bundle.hpp"
#include "anevrix/unet.hpp"
#include "anevrix/volume_ops.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace anevrix;

namespace {

FeatureMap random_map(int c, Index3 s, Rng& rng) {
  FeatureMap m(c, s);
  for (auto& v : m.data) v = static_cast<float>(rng.uniform(-1, 1));
  return m;
}

std::vector<float> random_values(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

// Explicitly padded direct convolution, independent of the library indexing.
FeatureMap reference_conv(const FeatureMap& in, const std::vector<float>& w, const std::vector<float>& b, int cout,
                          int k) {
  const int p = k / 2, X = in.shape[0], Y = in.shape[1], Z = in.shape[2];
  const int PX = X + 2 * p, PY = Y + 2 * p, PZ = Z + 2 * p;
  std::vector<double> padded(static_cast<std::size_t>(in.channels) * PX * PY * PZ, 0.0);
  auto pidx = [&](int c, int x, int y, int z) { return ((static_cast<std::size_t>(c) * PZ + z) * PY + y) * PX + x; };
  for (int c = 0; c < in.channels; ++c)
    for (int z = 0; z < Z; ++z)
      for (int y = 0; y < Y; ++y)
        for (int x = 0; x < X; ++x)
          padded[pidx(c, x + p, y + p, z + p)] = in.data[((static_cast<std::size_t>(c) * Z + z) * Y + y) * X + x];
  FeatureMap out(cout, in.shape);
  for (int o = 0; o < cout; ++o)
    for (int z = 0; z < Z; ++z)
      for (int y = 0; y < Y; ++y)
        for (int x = 0; x < X; ++x) {
          double acc = b[o];
          for (int c = 0; c < in.channels; ++c)
            for (int dz = 0; dz < k; ++dz)
              for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                  acc += w[(((static_cast<std::size_t>(o) * in.channels + c) * k + dz) * k + dy) * k + dx] *
                         padded[pidx(c, x + dx, y + dy, z + dz)];
          out.data[((static_cast<std::size_t>(o) * Z + z) * Y + y) * X + x] = static_cast<float>(acc);
        }
  return out;
}

// Closed-form parameter count of the encoder/bottleneck/decoder family.
std::int64_t closed_form_count(const UNetConfig& c) {
  auto conv = [](std::int64_t in, std::int64_t out) { return out * in * 27 + out; };
  auto block = [&](std::int64_t in, std::int64_t out) { return conv(in, out) + 2 * out + conv(out, out) + 2 * out; };
  std::int64_t total = 0;
  std::int64_t prev = c.in_channels;
  for (int f : c.filters) {
    total += block(prev, f);
    prev = f;
  }
  const std::int64_t b = c.bottleneck_width();
  total += block(c.filters.back(), b);
  std::int64_t up = b;
  for (int l = c.depth - 1; l >= 0; --l) {
    total += block(c.filters[l] + up, c.filters[l]);
    up = c.filters[l];
  }
  return total + c.filters[0] + 1;
}

}  // namespace

TEST_CASE("conv3d hand-counted taps on an all-ones cube") {
  FeatureMap in(1, {3, 3, 3}, 1.0f);
  const std::vector<float> w(27, 1.0f), b{0.0f};
  const auto out = conv3d(in, w, b, 1);
  const auto g = out.channel(0);
  CHECK(g(1, 1, 1) == 27.0f);
  CHECK(g(0, 1, 1) == 18.0f);
  CHECK(g(0, 0, 1) == 12.0f);
  CHECK(g(0, 0, 0) == 8.0f);
}

TEST_CASE("conv3d delta kernel and bias-only kernel") {
  Rng rng(1);
  const auto in = random_map(2, {4, 5, 6}, rng);
  std::vector<float> delta(2 * 2 * 27, 0.0f);
  delta[(0 * 2 + 0) * 27 + 13] = 1.0f;
  delta[(1 * 2 + 1) * 27 + 13] = 1.0f;
  const auto out = conv3d(in, delta, std::vector<float>{0, 0}, 2);
  CHECK(out.data == in.data);

  const auto c = conv3d(in, std::vector<float>(3 * 2 * 27, 0.0f), std::vector<float>{0.5f, -2.0f, 7.0f}, 3);
  for (int ch = 0; ch < 3; ++ch)
    for (float v : c.plane(ch)) CHECK(v == std::vector<float>{0.5f, -2.0f, 7.0f}[ch]);

  CHECK_THROWS_AS(conv3d(in, std::vector<float>(10), std::vector<float>{0, 0}, 2), ValidationError);
  CHECK_THROWS_AS(conv3d(in, delta, std::vector<float>{0}, 2), ValidationError);
}

TEST_CASE("conv3d matches a padded reference convolution") {
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    const int cin = static_cast<int>(rng.uniform_int(1, 3)), cout = static_cast<int>(rng.uniform_int(1, 3));
    const int k = t % 3 == 0 ? 1 : (t % 3 == 1 ? 3 : 5);
    const auto in = random_map(cin, {static_cast<int>(rng.uniform_int(2, 7)), static_cast<int>(rng.uniform_int(2, 7)),
                                     static_cast<int>(rng.uniform_int(2, 7))},
                               rng);
    const auto w = random_values(static_cast<std::size_t>(cout) * cin * k * k * k, rng);
    const auto b = random_values(cout, rng);
    const auto got = conv3d(in, w, b, cout, k);
    const auto ref = reference_conv(in, w, b, cout, k);
    REQUIRE(got.data.size() == ref.data.size());
    for (std::size_t i = 0; i < ref.data.size(); ++i) CHECK(got.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-5));
  }
}

TEST_CASE("maxpool2 and upsample2") {
  FeatureMap block(1, {2, 2, 2});
  for (int i = 0; i < 8; ++i) block.data[i] = static_cast<float>(i + 1);
  const auto pooled = maxpool2(block);
  CHECK(pooled.shape == Index3{1, 1, 1});
  CHECK(pooled.data[0] == 8.0f);

  FeatureMap one(1, {1, 1, 1}, 4.5f);
  const auto up = upsample2(one);
  CHECK(up.shape == Index3{2, 2, 2});
  for (float v : up.data) CHECK(v == 4.5f);
  const auto tri = upsample2(one, Upsampling::trilinear);
  for (float v : tri.data) CHECK(v == 4.5f);

  FeatureMap constant(3, {4, 6, 2}, 1.25f);
  CHECK(upsample2(maxpool2(constant)).data == constant.data);
  CHECK(upsample2(maxpool2(constant), Upsampling::trilinear).data == constant.data);
  CHECK_THROWS_AS(maxpool2(FeatureMap(1, {3, 2, 2})), ValidationError);

  // trilinear upsampling of a linear ramp stays monotone and inside its range
  FeatureMap ramp(1, {4, 1, 1});
  for (int i = 0; i < 4; ++i) ramp.data[i] = static_cast<float>(i);
  const auto r = upsample2(ramp, Upsampling::trilinear);
  REQUIRE(r.shape == Index3{8, 2, 2});
  for (int i = 1; i < 8; ++i) CHECK(r.data[i] >= r.data[i - 1]);
  CHECK(r.data[0] == 0.0f);
  CHECK(r.data[7] == 3.0f);
  // half-pixel centers: output 1 sits a quarter voxel right of input 0
  CHECK(r.data[1] == doctest::Approx(0.25));
}

TEST_CASE("batchnorm_inference") {
  FeatureMap x(1, {2, 1, 1});
  x.data = {3.0f, -1.0f};
  auto y = x;
  batchnorm_inference(y, std::vector<float>{1}, std::vector<float>{0}, std::vector<float>{0}, std::vector<float>{1});
  CHECK(y.data[0] == doctest::Approx(3.0).epsilon(1e-5));
  CHECK(y.data[1] == doctest::Approx(-1.0).epsilon(1e-5));

  FeatureMap s(1, {1, 1, 1}, 3.0f);
  batchnorm_inference(s, std::vector<float>{2}, std::vector<float>{1}, std::vector<float>{1}, std::vector<float>{4},
                      0.0);
  CHECK(s.data[0] == doctest::Approx(3.0));

  FeatureMap c(2, {2, 2, 2}, 5.0f);
  batchnorm_inference(c, std::vector<float>{3, 3}, std::vector<float>{0.25f, -1}, std::vector<float>{5, 5},
                      std::vector<float>{1, 2});
  for (float v : c.plane(0)) CHECK(v == doctest::Approx(0.25));
  for (float v : c.plane(1)) CHECK(v == doctest::Approx(-1.0));

  CHECK_THROWS_AS(batchnorm_inference(c, std::vector<float>{1}, std::vector<float>{0, 0}, std::vector<float>{0, 0},
                                      std::vector<float>{1, 1}),
                  ValidationError);
}

TEST_CASE("unet_forward contract") {
  UNetConfig cfg;
  cfg.filters = {2, 3, 4};
  Rng rng(3);
  const auto w = random_weights(cfg, rng);
  Grid3 patch = Grid3::cube(16);
  for (auto& v : patch.values) v = static_cast<float>(rng.normal());
  const auto out = unet_forward(patch, cfg, w);
  CHECK(out.shape == patch.shape);
  for (float v : out.values) {
    CHECK(std::isfinite(v));
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  CHECK(unet_forward(patch, cfg, w) == out);

  const auto z = unet_forward(patch, cfg, zero_weights(cfg));
  for (float v : z.values) CHECK(v == 0.5f);

  CHECK_THROWS_AS(unet_forward(Grid3::cube(12), cfg, w), ValidationError);
  UNetConfig other = cfg;
  other.filters = {2, 3, 5};
  CHECK_THROWS_AS(unet_forward(patch, other, w), ValidationError);
}

TEST_CASE("unet_forward of the default config on a 64^3 patch") {
  UNetConfig cfg;
  Rng rng(4);
  const auto w = random_weights(cfg, rng);
  Grid3 patch = Grid3::cube(64);
  for (auto& v : patch.values) v = static_cast<float>(rng.uniform(0, 500));
  const auto z = zscore(patch);
  const auto out_z = unet_forward(z, cfg, w);
  CHECK(out_z.shape == Index3{64, 64, 64});
  for (float v : out_z.values) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  // no hidden normalization: raw and z-scored inputs disagree
  CHECK(unet_forward(patch, cfg, w) != out_z);
}

TEST_CASE("trilinear upsampling config runs") {
  UNetConfig cfg;
  cfg.filters = {2, 2};
  cfg.depth = 2;
  cfg.upsampling = Upsampling::trilinear;
  Rng rng(5);
  const auto w = random_weights(cfg, rng);
  Grid3 patch = Grid3::cube(8, 1.0f);
  for (float v : unet_forward(patch, cfg, w).values) CHECK((v > 0.0f && v < 1.0f));
}

TEST_CASE("count_parameters") {
  // single conv 1->2 with BN(2)
  CHECK(2 * 1 * 27 + 2 + 2 * 2 == 60);
  UNetConfig cfg;
  CHECK(count_parameters(cfg) == 365889);
  CHECK(count_parameters(cfg) == closed_form_count(cfg));

  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    UNetConfig c;
    c.depth = static_cast<int>(rng.uniform_int(1, 4));
    c.filters.clear();
    for (int l = 0; l < c.depth; ++l) c.filters.push_back(static_cast<int>(rng.uniform_int(1, 24)));
    c.bottleneck_filters = rng.below(2) ? 0 : static_cast<int>(rng.uniform_int(1, 40));
    CHECK(count_parameters(c) == closed_form_count(c));

    // brute force over the instantiated bundle, excluding running statistics
    const auto w = zero_weights(c);
    std::int64_t trainable = 0;
    for (const auto& e : w.manifest()) {
      if (e.name.ends_with("running_mean") || e.name.ends_with("running_var")) continue;
      trainable += static_cast<std::int64_t>(e.element_count());
    }
    CHECK(count_parameters(c) == trainable);

    // doubling every width scales each conv kernel fed by a doubled width by 4
    UNetConfig d = c;
    for (auto& f : d.filters) f *= 2;
    if (d.bottleneck_filters) d.bottleneck_filters *= 2;
    const auto wd = zero_weights(d);
    for (const auto& e : w.manifest()) {
      if (!e.name.ends_with("/kernel") || e.name == "enc0/conv0/kernel") continue;
      const auto factor = e.name == "head/kernel" ? 2u : 4u;
      CHECK(wd.entry(e.name).element_count() == factor * e.element_count());
    }
  }
}

TEST_CASE("combo_loss") {
  std::vector<float> t(1000), p(1000);
  for (std::size_t i = 0; i < t.size(); ++i) p[i] = t[i] = i % 3 == 0 ? 1.0f : 0.0f;
  CHECK(std::abs(combo_loss(p, t) - (-0.5)) < 1e-3);

  const std::size_t n = 1000000;
  std::vector<float> half(n, 0.5f), ones(n, 1.0f);
  CHECK(combo_loss(half, ones) == doctest::Approx(0.25 * std::log(2.0) - 1.0 / 3.0).epsilon(1e-5));
  CHECK(combo_loss(half, ones) == doctest::Approx(-0.1600).epsilon(1e-3));

  ComboLossParams ce_only;
  ce_only.alpha = 1.0;
  CHECK(combo_loss(half, ones, ce_only) == doctest::Approx(0.5 * std::log(2.0)));

  CHECK_THROWS_AS(combo_loss(std::vector<float>{0.5f}, std::vector<float>{1, 0}), ValidationError);
  CHECK_THROWS_AS(combo_loss(Grid3::cube(2), Grid3::cube(3)), ValidationError);
}

TEST_CASE("oracle and heuristic predictors") {
  auto truth = testutil::unit_volume({16, 16, 16});
  paint_sphere(truth, {4, 4, 4}, 2.0);
  const OraclePredictor oracle(truth);
  PatchContext ctx;
  ctx.spec.side = 8;
  ctx.spec.origin = {8, 8, 8};
  for (float v : oracle.predict(Grid3::cube(8), ctx).values) CHECK(v == 0.0f);
  ctx.spec.origin = {0, 0, 0};
  const auto hit = oracle.predict(Grid3::cube(8), ctx);
  CHECK(hit(4, 4, 4) == 1.0f);
  CHECK(hit(0, 0, 0) == 0.0f);
  // the oracle reports the transformed truth
  ctx.transform = GeometricTransform::flip_h;
  CHECK(oracle.predict(Grid3::cube(8), ctx) == apply_transform(hit, GeometricTransform::flip_h));

  const HeuristicPredictor heur(90.0);
  for (float v : heur.predict(Grid3::cube(8, 3.0f), {}).values) CHECK(v == 0.0f);
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    Grid3 g = Grid3::cube(8);
    for (auto& v : g.values) v = static_cast<float>(rng.uniform(-50, 50));
    const auto out = heur.predict(g, {});
    CHECK(out.shape == g.shape);
    int nonzero = 0;
    for (float v : out.values) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      nonzero += v > 0.0f;
    }
    CHECK(nonzero == doctest::Approx(0.1 * 512).epsilon(0.1));
  }
  CHECK_THROWS_AS(HeuristicPredictor(101.0), ValidationError);

  UNetConfig cfg;
  cfg.filters = {2, 2, 2};
  CHECK_THROWS_AS(UNetPredictor(cfg, TensorBundle{}), ValidationError);
  const UNetPredictor unet(cfg, zero_weights(cfg));
  for (float v : unet.predict(Grid3::cube(8, 1.0f), {}).values) CHECK(v == 0.5f);
}

TEST_CASE("tensor bundle round trip") {
  testutil::TempDir dir("bundle");
  UNetConfig cfg;
  cfg.filters = {2, 3};
  cfg.depth = 2;
  Rng rng(10);
  const auto w = random_weights(cfg, rng);
  w.save(dir.path() / "weights");
  CHECK(std::filesystem::exists(dir.path() / "weights.manifest"));
  CHECK(std::filesystem::exists(dir.path() / "weights.bin"));
  const auto back = TensorBundle::load(dir.path() / "weights");
  CHECK(back == w);
  CHECK(std::filesystem::file_size(dir.path() / "weights.bin") == 4 * w.total_elements());
  const auto text = w.manifest_text();
  CHECK(text.rfind("anevrix-tensors 1\n", 0) == 0);

  TensorBundle b;
  b.add("a", {2}, {1.0f, 2.0f});
  b.add("b", {1, 1}, {-3.5f});
  CHECK(b.manifest_text() == "anevrix-tensors 1\na 1 2 0\nb 2 1 1 8\n");
  const auto blob = b.blob();
  REQUIRE(blob.size() == 12);
  // little-endian 1.0f = 00 00 80 3f
  CHECK(blob[0] == 0x00);
  CHECK(blob[2] == 0x80);
  CHECK(blob[3] == 0x3f);
  CHECK(TensorBundle::parse(b.manifest_text(), blob) == b);
  CHECK_THROWS_AS(b.add("a", {1}, {0.0f}), ValidationError);
  CHECK_THROWS_AS(b.add("c", {2}, {0.0f}), ValidationError);
}

TEST_CASE("tensor bundle corruption is rejected") {
  TensorBundle b;
  b.add("a", {2}, {1.0f, 2.0f});
  b.add("b", {2}, {3.0f, 4.0f});
  const auto blob = b.blob();
  auto short_blob = blob;
  short_blob.pop_back();
  CHECK_THROWS_AS(TensorBundle::parse(b.manifest_text(), short_blob), ValidationError);
  CHECK_THROWS_AS(TensorBundle::parse("anevrix-tensors 2\na 1 2 0\nb 1 2 8\n", blob), ValidationError);
  CHECK_THROWS_AS(TensorBundle::parse("anevrix-tensors 1\na 1 2 0\nb 1 2 4\n", blob), ValidationError);
  CHECK_THROWS_AS(TensorBundle::parse("anevrix-tensors 1\na 1 2 0\nb 1 2 6\n", blob), ValidationError);
  CHECK_THROWS_AS(TensorBundle::parse("anevrix-tensors 1\na 1 2 0\na 1 2 8\n", blob), ValidationError);
  CHECK_THROWS_AS(TensorBundle::parse("anevrix-tensors 1\na 1 x 0\nb 1 2 8\n", blob), ValidationError);
  CHECK_THROWS_AS(TensorBundle::parse("anevrix-tensors 1\na 1 2 0\n", blob), ValidationError);
  // tensors may be listed out of offset order
  CHECK(TensorBundle::parse("anevrix-tensors 1\nb 1 2 8\na 1 2 0\n", blob).tensor("b")[1] == 4.0f);
  CHECK_THROWS_AS(TensorBundle::load("/nonexistent/weights"), IoError);
}
