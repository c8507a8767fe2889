#include "anevrix/unet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "anevrix/errors.hpp"

namespace anevrix {

void UNetConfig::validate() const {
  if (depth < 1) throw ValidationError("unet: depth must be >= 1");
  if (static_cast<int>(filters.size()) != depth) {
    throw ValidationError("unet: filters has " + std::to_string(filters.size()) + " entries for depth " +
                          std::to_string(depth));
  }
  for (int f : filters) {
    if (f < 1) throw ValidationError("unet: filter counts must be >= 1");
  }
  if (bottleneck_filters < 0) throw ValidationError("unet: bottleneck_filters must be >= 0");
  if (in_channels < 1) throw ValidationError("unet: in_channels must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ValidationError("unet: kernel must be odd");
  if (pad != kernel / 2) throw ValidationError("unet: pad must be kernel/2 for same-size convolution");
  if (stride != 1) throw ValidationError("unet: only stride 1 is supported");
  if (!(bn_eps > 0.0)) throw ValidationError("unet: bn_eps must be positive");
}

FeatureMap::FeatureMap(int c, const Index3& s, float fill) : channels(c), shape(s) {
  if (c < 0 || s[0] < 0 || s[1] < 0 || s[2] < 0) throw ValidationError("feature map: negative extent");
  data.assign(static_cast<std::size_t>(c) * voxels(), fill);
}

FeatureMap FeatureMap::from_grid(const Grid3& g) {
  FeatureMap out;
  out.channels = 1;
  out.shape = g.shape;
  out.data = g.values;
  return out;
}

Grid3 FeatureMap::channel(int c) const {
  if (c < 0 || c >= channels) throw ValidationError("feature map: channel out of range");
  Grid3 g;
  g.shape = shape;
  const auto p = plane(c);
  g.values.assign(p.begin(), p.end());
  return g;
}

FeatureMap conv3d(const FeatureMap& input, std::span<const float> kernels, std::span<const float> bias,
                  int out_channels, int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ValidationError("conv3d: kernel size must be odd");
  const std::size_t k3 = static_cast<std::size_t>(kernel_size) * kernel_size * kernel_size;
  if (out_channels < 1) throw ValidationError("conv3d: out_channels must be >= 1");
  if (kernels.size() != static_cast<std::size_t>(out_channels) * input.channels * k3) {
    throw ValidationError("conv3d: kernel holds " + std::to_string(kernels.size()) + " values, expected " +
                          std::to_string(static_cast<std::size_t>(out_channels) * input.channels * k3));
  }
  if (bias.size() != static_cast<std::size_t>(out_channels)) {
    throw ValidationError("conv3d: bias length " + std::to_string(bias.size()) + " != out_channels " +
                          std::to_string(out_channels));
  }

  const int X = input.shape[0], Y = input.shape[1], Z = input.shape[2];
  const int p = kernel_size / 2;
  FeatureMap out(out_channels, input.shape);
  for (int co = 0; co < out_channels; ++co) {
    auto dst = out.plane(co);
    std::fill(dst.begin(), dst.end(), bias[co]);
    for (int ci = 0; ci < input.channels; ++ci) {
      const auto src = input.plane(ci);
      const float* w = kernels.data() + (static_cast<std::size_t>(co) * input.channels + ci) * k3;
      for (int kz = 0; kz < kernel_size; ++kz) {
        const int dz = kz - p;
        for (int ky = 0; ky < kernel_size; ++ky) {
          const int dy = ky - p;
          for (int kx = 0; kx < kernel_size; ++kx, ++w) {
            const int dx = kx - p;
            const float wv = *w;
            if (wv == 0.0f) continue;
            const int x0 = std::max(0, -dx), x1 = std::min(X, X - dx);
            for (int z = std::max(0, -dz); z < std::min(Z, Z - dz); ++z) {
              for (int y = std::max(0, -dy); y < std::min(Y, Y - dy); ++y) {
                float* d = dst.data() + (static_cast<std::size_t>(z) * Y + y) * X;
                const float* s = src.data() + (static_cast<std::size_t>(z + dz) * Y + (y + dy)) * X + dx;
                for (int x = x0; x < x1; ++x) d[x] += wv * s[x];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

FeatureMap maxpool2(const FeatureMap& input) {
  for (int a = 0; a < 3; ++a) {
    if (input.shape[a] % 2 != 0) {
      throw ValidationError("maxpool2: odd extent " + std::to_string(input.shape[a]) + " on axis " +
                            std::to_string(a));
    }
  }
  const Index3 half{input.shape[0] / 2, input.shape[1] / 2, input.shape[2] / 2};
  FeatureMap out(input.channels, half);
  const int X = input.shape[0], Y = input.shape[1];
  for (int c = 0; c < input.channels; ++c) {
    const auto src = input.plane(c);
    auto dst = out.plane(c);
    std::size_t o = 0;
    for (int z = 0; z < half[2]; ++z) {
      for (int y = 0; y < half[1]; ++y) {
        for (int x = 0; x < half[0]; ++x, ++o) {
          float m = -std::numeric_limits<float>::infinity();
          for (int k = 0; k < 8; ++k) {
            const int xi = 2 * x + (k & 1), yi = 2 * y + ((k >> 1) & 1), zi = 2 * z + (k >> 2);
            m = std::max(m, src[(static_cast<std::size_t>(zi) * Y + yi) * X + xi]);
          }
          dst[o] = m;
        }
      }
    }
  }
  return out;
}

namespace {

// Half-pixel-centre linear weights for doubling one axis.
struct Tap {
  int lo, hi;
  float w_hi;
};

std::vector<Tap> upsample_taps(int n) {
  std::vector<Tap> taps(static_cast<std::size_t>(2 * n));
  for (int o = 0; o < 2 * n; ++o) {
    const double src = std::clamp((o + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(n - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, n - 1);
    taps[o] = {lo, hi, static_cast<float>(src - lo)};
  }
  return taps;
}

}  // namespace

FeatureMap upsample2(const FeatureMap& input, Upsampling mode) {
  const Index3 dbl{2 * input.shape[0], 2 * input.shape[1], 2 * input.shape[2]};
  FeatureMap out(input.channels, dbl);
  const int X = input.shape[0], Y = input.shape[1];
  if (mode == Upsampling::nearest) {
    for (int c = 0; c < input.channels; ++c) {
      const auto src = input.plane(c);
      auto dst = out.plane(c);
      std::size_t o = 0;
      for (int z = 0; z < dbl[2]; ++z) {
        for (int y = 0; y < dbl[1]; ++y) {
          const float* row = src.data() + (static_cast<std::size_t>(z / 2) * Y + y / 2) * X;
          for (int x = 0; x < dbl[0]; ++x, ++o) dst[o] = row[x / 2];
        }
      }
    }
    return out;
  }

  const auto tx = upsample_taps(input.shape[0]);
  const auto ty = upsample_taps(input.shape[1]);
  const auto tz = upsample_taps(input.shape[2]);
  for (int c = 0; c < input.channels; ++c) {
    const auto src = input.plane(c);
    auto dst = out.plane(c);
    auto at = [&](int x, int y, int z) { return src[(static_cast<std::size_t>(z) * Y + y) * X + x]; };
    std::size_t o = 0;
    for (int z = 0; z < dbl[2]; ++z) {
      for (int y = 0; y < dbl[1]; ++y) {
        for (int x = 0; x < dbl[0]; ++x, ++o) {
          const Tap& a = tx[x];
          const Tap& b = ty[y];
          const Tap& g = tz[z];
          auto lerp_x = [&](int yy, int zz) { return at(a.lo, yy, zz) * (1 - a.w_hi) + at(a.hi, yy, zz) * a.w_hi; };
          const float v0 = lerp_x(b.lo, g.lo) * (1 - b.w_hi) + lerp_x(b.hi, g.lo) * b.w_hi;
          const float v1 = lerp_x(b.lo, g.hi) * (1 - b.w_hi) + lerp_x(b.hi, g.hi) * b.w_hi;
          dst[o] = v0 * (1 - g.w_hi) + v1 * g.w_hi;
        }
      }
    }
  }
  return out;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  if (a.shape != b.shape) throw ValidationError("concat: spatial shapes differ");
  FeatureMap out;
  out.channels = a.channels + b.channels;
  out.shape = a.shape;
  out.data.reserve(a.data.size() + b.data.size());
  out.data.insert(out.data.end(), a.data.begin(), a.data.end());
  out.data.insert(out.data.end(), b.data.begin(), b.data.end());
  return out;
}

void batchnorm_inference(FeatureMap& x, std::span<const float> gamma, std::span<const float> beta,
                         std::span<const float> running_mean, std::span<const float> running_var, double eps) {
  const auto c = static_cast<std::size_t>(x.channels);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c) {
    throw ValidationError("batchnorm: parameter lengths must equal channel count " + std::to_string(c));
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double scale = gamma[ch] / std::sqrt(static_cast<double>(running_var[ch]) + eps);
    const double shift = beta[ch] - running_mean[ch] * scale;
    for (float& v : x.plane(static_cast<int>(ch))) v = static_cast<float>(v * scale + shift);
  }
}

void relu_inplace(FeatureMap& x) {
  for (float& v : x.data) v = std::max(v, 0.0f);
}

namespace {

void push_block(std::vector<TensorSpec>& out, const std::string& prefix, int cin, int cout, int k) {
  for (int i = 0; i < 2; ++i) {
    const int in = i == 0 ? cin : cout;
    const std::string conv = prefix + "/conv" + std::to_string(i);
    const std::string bn = prefix + "/bn" + std::to_string(i);
    out.push_back({conv + "/kernel", {cout, in, k, k, k}, true});
    out.push_back({conv + "/bias", {cout}, true});
    out.push_back({bn + "/gamma", {cout}, true});
    out.push_back({bn + "/beta", {cout}, true});
    out.push_back({bn + "/running_mean", {cout}, false});
    out.push_back({bn + "/running_var", {cout}, false});
  }
}

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

std::vector<TensorSpec> unet_tensor_specs(const UNetConfig& config) {
  config.validate();
  std::vector<TensorSpec> out;
  const int k = config.kernel;
  for (int l = 0; l < config.depth; ++l) {
    push_block(out, "enc" + std::to_string(l), l == 0 ? config.in_channels : config.filters[l - 1], config.filters[l], k);
  }
  push_block(out, "bottleneck", config.filters.back(), config.bottleneck_width(), k);
  for (int l = config.depth - 1; l >= 0; --l) {
    const int up = l == config.depth - 1 ? config.bottleneck_width() : config.filters[l + 1];
    push_block(out, "dec" + std::to_string(l), config.filters[l] + up, config.filters[l], k);
  }
  out.push_back({"head/kernel", {1, config.filters[0], 1, 1, 1}, true});
  out.push_back({"head/bias", {1}, true});
  return out;
}

std::int64_t count_parameters(const UNetConfig& config) {
  std::int64_t total = 0;
  for (const auto& t : unet_tensor_specs(config)) {
    if (t.trainable) total += static_cast<std::int64_t>(element_count(t.shape));
  }
  return total;
}

TensorBundle zero_weights(const UNetConfig& config) {
  TensorBundle b;
  for (auto& t : unet_tensor_specs(config)) {
    const auto n = element_count(t.shape);
    b.add(t.name, t.shape, std::vector<float>(n, 0.0f));
  }
  return b;
}

TensorBundle random_weights(const UNetConfig& config, Rng& rng) {
  TensorBundle b;
  for (auto& t : unet_tensor_specs(config)) {
    const auto n = element_count(t.shape);
    std::vector<float> v(n);
    const auto leaf = t.name.substr(t.name.rfind('/') + 1);
    if (leaf == "kernel") {
      const std::size_t fan_in = n / static_cast<std::size_t>(t.shape[0]);
      const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto& x : v) x = static_cast<float>(sd * rng.normal());
    } else if (leaf == "gamma" || leaf == "running_var") {
      for (auto& x : v) x = static_cast<float>(rng.uniform(0.5, 1.5));
    } else {
      for (auto& x : v) x = static_cast<float>(rng.uniform(-0.1, 0.1));
    }
    b.add(t.name, t.shape, std::move(v));
  }
  return b;
}

void check_weights(const UNetConfig& config, const TensorBundle& weights) {
  for (const auto& t : unet_tensor_specs(config)) {
    if (!weights.contains(t.name)) throw ValidationError("unet weights: missing tensor '" + t.name + "'");
    if (weights.entry(t.name).shape != t.shape) {
      throw ValidationError("unet weights: tensor '" + t.name + "' has the wrong shape for this config");
    }
  }
}

namespace {

FeatureMap block(FeatureMap x, const std::string& prefix, int cout, const UNetConfig& config,
                 const TensorBundle& w) {
  for (int i = 0; i < 2; ++i) {
    const std::string conv = prefix + "/conv" + std::to_string(i);
    const std::string bn = prefix + "/bn" + std::to_string(i);
    x = conv3d(x, w.tensor(conv + "/kernel"), w.tensor(conv + "/bias"), cout, config.kernel);
    batchnorm_inference(x, w.tensor(bn + "/gamma"), w.tensor(bn + "/beta"), w.tensor(bn + "/running_mean"),
                        w.tensor(bn + "/running_var"), config.bn_eps);
    relu_inplace(x);
  }
  return x;
}

float sigmoid_open(float logit) {
  constexpr float lo = std::numeric_limits<float>::min();
  constexpr float hi = 1.0f - std::numeric_limits<float>::epsilon() / 2;
  const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(logit)));
  return std::clamp(static_cast<float>(s), lo, hi);
}

}  // namespace

Grid3 unet_forward(const Grid3& patch, const UNetConfig& config, const TensorBundle& weights) {
  config.validate();
  if (config.in_channels != 1) throw ValidationError("unet: single-channel patches need in_channels = 1");
  const int unit = 1 << config.depth;
  for (int a = 0; a < 3; ++a) {
    if (patch.shape[a] < unit || patch.shape[a] % unit != 0) {
      throw ValidationError("unet: patch extent " + std::to_string(patch.shape[a]) + " is not a multiple of 2^depth = " +
                            std::to_string(unit));
    }
  }
  check_weights(config, weights);

  FeatureMap x = FeatureMap::from_grid(patch);
  std::vector<FeatureMap> skips;
  for (int l = 0; l < config.depth; ++l) {
    x = block(std::move(x), "enc" + std::to_string(l), config.filters[l], config, weights);
    skips.push_back(x);
    x = maxpool2(x);
  }
  x = block(std::move(x), "bottleneck", config.bottleneck_width(), config, weights);
  for (int l = config.depth - 1; l >= 0; --l) {
    x = concat_channels(skips[l], upsample2(x, config.upsampling));
    x = block(std::move(x), "dec" + std::to_string(l), config.filters[l], config, weights);
  }
  x = conv3d(x, weights.tensor("head/kernel"), weights.tensor("head/bias"), 1, 1);

  Grid3 out;
  out.shape = patch.shape;
  out.values.resize(x.data.size());
  std::transform(x.data.begin(), x.data.end(), out.values.begin(), sigmoid_open);
  return out;
}

double combo_loss(std::span<const float> pred, std::span<const float> target, const ComboLossParams& params) {
  if (pred.size() != target.size()) throw ValidationError("combo_loss: prediction and target sizes differ");
  if (pred.empty()) throw ValidationError("combo_loss: empty input");
  if (!(params.clip > 0.0 && params.clip < 0.5)) throw ValidationError("combo_loss: clip must lie in (0, 0.5)");
  double ce = 0.0, tp = 0.0, sum_t = 0.0, sum_p = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(static_cast<double>(pred[i]), params.clip, 1.0 - params.clip);
    const double t = target[i];
    ce += params.beta * t * std::log(p) + (1.0 - params.beta) * (1.0 - t) * std::log(1.0 - p);
    tp += t * p;
    sum_t += t;
    sum_p += p;
  }
  const double mce = -ce / static_cast<double>(pred.size());
  const double dsc = (2.0 * tp + params.smooth) / (sum_t + sum_p + params.smooth);
  return params.alpha * mce - (1.0 - params.alpha) * dsc;
}

double combo_loss(const Grid3& pred, const Grid3& target, const ComboLossParams& params) {
  if (pred.shape != target.shape) throw ValidationError("combo_loss: prediction and target shapes differ");
  return combo_loss(std::span<const float>(pred.values), std::span<const float>(target.values), params);
}

}  // namespace anevrix
