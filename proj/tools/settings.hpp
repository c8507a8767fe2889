#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "anevrix/bids_layout.hpp"
#include "anevrix/evaluation.hpp"
#include "anevrix/patch_sampler.hpp"
#include "anevrix/phases.hpp"
#include "anevrix/sliding_window.hpp"
#include "anevrix/synth.hpp"
#include "anevrix/unet.hpp"

namespace anevrix::cli {

using Json = nlohmann::ordered_json;

// Everything a run can be configured with. The config file mirrors this
// struct (see README); command-line flags override individual fields.
struct Settings {
  std::string root;
  std::string annotations;
  std::string candidates;
  std::string landmarks_dir;  // default: <root>/derivatives/landmarks
  std::uint64_t seed = 42;

  IndexOptions index;

  int k = 5;
  std::string import_folds;

  std::optional<double> margin_mm;
  bool write_masks = false;

  SamplingConfig sampling;
  std::string export_format = "none";  // none | nifti | tensors

  std::string predictor = "oracle";
  RetentionConfig retention;
  bool resample = false;
  bool save_probability = false;
  UNetConfig unet;

  MatchOptions match;
  double eval_threshold = 0.5;
  double confidence = 0.95;
  std::optional<double> fp_max;
  std::string curve;

  std::vector<StratifyAxis> axes{StratifyAxis::risk, StratifyAxis::location, StratifyAxis::size,
                                 StratifyAxis::fine_size};

  SynthConfig synth;
  int patients = 10;
  int controls = 0;
};

// Applies a config document on top of `settings`. Unknown keys and wrong
// value types throw ValidationError naming the key path.
void apply_config(Settings& settings, const Json& config, const std::string& source);
Settings load_settings(const std::filesystem::path& path);

// Every field, in schema order. Paths are written as given.
Json to_json(const Settings& settings);

std::string_view to_string(MatchStrategy s);
std::string_view to_string(MatchBound b);
MatchStrategy parse_strategy(std::string_view text);
MatchBound parse_bound(std::string_view text);
Upsampling parse_upsampling(std::string_view text);
std::vector<StratifyAxis> parse_axes(std::string_view text);

}  // namespace anevrix::cli
