#pragma once

#include <memory>
#include <string>

#include "anevrix/patch_sampler.hpp"
#include "anevrix/tensor_bundle.hpp"
#include "anevrix/unet.hpp"
#include "anevrix/volume.hpp"

namespace anevrix {

// Where a patch came from and which lattice transform was applied to it
// before prediction. Only ground-truth predictors look at this.
struct PatchContext {
  PatchSpec spec;
  GeometricTransform transform = GeometricTransform::identity;
};

// predict() returns a grid of the input shape with finite values in [0,1].
// Implementations are deterministic and safe to call concurrently.
class PatchPredictor {
 public:
  virtual ~PatchPredictor() = default;
  virtual Grid3 predict(const Grid3& patch, const PatchContext& context) const = 0;
  virtual std::string name() const = 0;
};

class UNetPredictor final : public PatchPredictor {
 public:
  UNetPredictor(UNetConfig config, TensorBundle weights);
  Grid3 predict(const Grid3& patch, const PatchContext& context) const override;
  std::string name() const override { return "unet"; }

 private:
  UNetConfig config_;
  TensorBundle weights_;
};

// 1 on lesion voxels of the ground-truth mask, 0 elsewhere.
class OraclePredictor final : public PatchPredictor {
 public:
  explicit OraclePredictor(Volume3D ground_truth);
  Grid3 predict(const Grid3& patch, const PatchContext& context) const override;
  std::string name() const override { return "oracle"; }

 private:
  Volume3D truth_;
};

// Min-max normalized intensity on voxels strictly above the patch percentile.
class HeuristicPredictor final : public PatchPredictor {
 public:
  explicit HeuristicPredictor(double percentile);
  Grid3 predict(const Grid3& patch, const PatchContext& context) const override;
  std::string name() const override { return "heuristic"; }

 private:
  double percentile_;
};

}  // namespace anevrix
