#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "anevrix/random.hpp"
#include "anevrix/tensor_bundle.hpp"
#include "anevrix/volume.hpp"

namespace anevrix {

enum class Upsampling { nearest, trilinear };

struct UNetConfig {
  int depth = 3;
  std::vector<int> filters{8, 16, 32};
  // Bottleneck width; 0 means twice the deepest encoder width.
  int bottleneck_filters = 0;
  int in_channels = 1;
  int kernel = 3;
  int pad = 1;
  int stride = 1;
  Upsampling upsampling = Upsampling::nearest;
  double bn_eps = 1e-5;

  int bottleneck_width() const { return bottleneck_filters > 0 ? bottleneck_filters : 2 * filters.back(); }
  void validate() const;
};

// C channels of an x-fastest grid, channel-major.
struct FeatureMap {
  int channels = 0;
  Index3 shape{0, 0, 0};
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int c, const Index3& s, float fill = 0.0f);
  static FeatureMap from_grid(const Grid3& g);
  Grid3 channel(int c) const;

  std::size_t voxels() const {
    return static_cast<std::size_t>(shape[0]) * static_cast<std::size_t>(shape[1]) *
           static_cast<std::size_t>(shape[2]);
  }
  std::span<float> plane(int c) { return std::span<float>(data).subspan(c * voxels(), voxels()); }
  std::span<const float> plane(int c) const { return std::span<const float>(data).subspan(c * voxels(), voxels()); }
};

// Same-size cross-correlation with zero padding k/2. Kernel layout is
// [C_out][C_in][kz][ky][kx], kx fastest; k must be odd.
FeatureMap conv3d(const FeatureMap& input, std::span<const float> kernels, std::span<const float> bias,
                  int out_channels, int kernel_size = 3);
FeatureMap maxpool2(const FeatureMap& input);
FeatureMap upsample2(const FeatureMap& input, Upsampling mode = Upsampling::nearest);
FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);
void batchnorm_inference(FeatureMap& x, std::span<const float> gamma, std::span<const float> beta,
                         std::span<const float> running_mean, std::span<const float> running_var, double eps = 1e-5);
void relu_inplace(FeatureMap& x);

struct TensorSpec {
  std::string name;
  std::vector<int> shape;
  bool trainable = true;
};

// Every tensor a bundle must provide for `config`, in forward order.
std::vector<TensorSpec> unet_tensor_specs(const UNetConfig& config);

// Trainable parameters: conv kernels and biases, BN gamma and beta.
std::int64_t count_parameters(const UNetConfig& config);

TensorBundle zero_weights(const UNetConfig& config);
// Scaled-normal kernels, positive running variances; for tests and smoke runs.
TensorBundle random_weights(const UNetConfig& config, Rng& rng);

void check_weights(const UNetConfig& config, const TensorBundle& weights);

// Probability grid of the input shape, every value in (0,1). The input is not normalized.
Grid3 unet_forward(const Grid3& patch, const UNetConfig& config, const TensorBundle& weights);

struct ComboLossParams {
  double alpha = 0.5;
  double beta = 0.5;
  double smooth = 1.0;
  double clip = 1e-7;
};

// alpha * weighted cross-entropy - (1 - alpha) * soft Dice.
double combo_loss(std::span<const float> pred, std::span<const float> target, const ComboLossParams& params = {});
double combo_loss(const Grid3& pred, const Grid3& target, const ComboLossParams& params = {});

}  // namespace anevrix
