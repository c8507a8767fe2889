#include "anevrix/predictor.hpp"

#include <algorithm>
#include <cmath>

#include "anevrix/errors.hpp"
#include "anevrix/volume_ops.hpp"

namespace anevrix {

UNetPredictor::UNetPredictor(UNetConfig config, TensorBundle weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  config_.validate();
  check_weights(config_, weights_);
}

Grid3 UNetPredictor::predict(const Grid3& patch, const PatchContext&) const {
  return unet_forward(patch, config_, weights_);
}

OraclePredictor::OraclePredictor(Volume3D ground_truth) : truth_(std::move(ground_truth)) {}

Grid3 OraclePredictor::predict(const Grid3& patch, const PatchContext& context) const {
  Grid3 truth = extract_patch(truth_, context.spec);
  if (truth.shape != patch.shape) throw ValidationError("oracle: patch shape does not match its spec");
  for (float& v : truth.values) v = is_foreground(v) ? 1.0f : 0.0f;
  return apply_transform(truth, context.transform);
}

HeuristicPredictor::HeuristicPredictor(double percentile) : percentile_(percentile) {
  if (!(percentile >= 0.0 && percentile <= 100.0)) throw ValidationError("heuristic: percentile must lie in [0, 100]");
}

Grid3 HeuristicPredictor::predict(const Grid3& patch, const PatchContext&) const {
  Grid3 out(patch.shape, 0.0f);
  if (patch.values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(patch.values.begin(), patch.values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return out;
  const double thr = percentile(patch.values, percentile_);
  for (std::size_t i = 0; i < patch.values.size(); ++i) {
    const double v = patch.values[i];
    if (v > thr) out.values[i] = static_cast<float>(std::clamp((v - lo) / (hi - lo), 0.0, 1.0));
  }
  return out;
}

}  // namespace anevrix
