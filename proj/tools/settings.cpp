#include "settings.hpp"

#include <set>

#include "anevrix/errors.hpp"
#include "anevrix/table.hpp"

namespace anevrix::cli {

namespace {

// One JSON object of the config file. Remembers which keys were read so
// that leftovers can be reported as unknown.
class Section {
 public:
  Section(const Json* node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_->is_object()) throw ValidationError(where("") + ": expected an object");
  }

  Section sub(const char* key) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return Section(nullptr, path_ + key + ".");
    return Section(&(*node_)[key], path_ + key + ".");
  }

  template <typename T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    const Json& v = (*node_)[key];
    if (!matches<T>(v)) throw ValidationError(where(key) + ": expected " + type_name<T>());
    dst = v.get<T>();
  }

  void get(const char* key, std::optional<double>& dst) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    const Json& v = (*node_)[key];
    if (v.is_null()) {
      dst.reset();
      return;
    }
    if (!v.is_number()) throw ValidationError(where(key) + ": expected a number or null");
    dst = v.get<double>();
  }

  void get(const char* key, std::vector<int>& dst) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    const Json& v = (*node_)[key];
    if (!v.is_array()) throw ValidationError(where(key) + ": expected an array of integers");
    std::vector<int> out;
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw ValidationError(where(key) + ": expected an array of integers");
      out.push_back(e.get<int>());
    }
    dst = std::move(out);
  }

  template <typename F>
  void get_text(const char* key, F&& parse) {
    std::string text;
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    get(key, text);
    try {
      parse(text);
    } catch (const ValidationError& e) {
      throw ValidationError(where(key) + ": " + e.what());
    }
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, value] : node_->items()) {
      if (!seen_.count(key)) throw ValidationError(where(key.c_str()) + ": unknown key");
    }
  }

  std::string where(const char* key) const { return "config " + path_ + key; }

 private:
  template <typename T>
  static bool matches(const Json& v) {
    if constexpr (std::is_same_v<T, bool>) return v.is_boolean();
    else if constexpr (std::is_same_v<T, std::string>) return v.is_string();
    else if constexpr (std::is_same_v<T, std::uint64_t>) return v.is_number_unsigned();
    else if constexpr (std::is_integral_v<T>) return v.is_number_integer();
    else return v.is_number();
  }
  template <typename T>
  static std::string type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_same_v<T, std::string>) return "a string";
    else if constexpr (std::is_same_v<T, std::uint64_t>) return "a non-negative integer";
    else if constexpr (std::is_integral_v<T>) return "an integer";
    else return "a number";
  }

  const Json* node_;
  std::string path_;
  std::set<std::string> seen_;
};

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

std::string_view to_string(MatchStrategy s) { return s == MatchStrategy::greedy ? "greedy" : "optimal"; }
std::string_view to_string(MatchBound b) { return b == MatchBound::radius ? "radius" : "max_diameter"; }

MatchStrategy parse_strategy(std::string_view text) {
  if (text == "optimal") return MatchStrategy::optimal;
  if (text == "greedy") return MatchStrategy::greedy;
  throw ValidationError("unknown matching strategy '" + std::string(text) + "' (optimal|greedy)");
}

MatchBound parse_bound(std::string_view text) {
  if (text == "max_diameter") return MatchBound::max_diameter;
  if (text == "radius") return MatchBound::radius;
  throw ValidationError("unknown match bound '" + std::string(text) + "' (max_diameter|radius)");
}

Upsampling parse_upsampling(std::string_view text) {
  if (text == "nearest") return Upsampling::nearest;
  if (text == "trilinear") return Upsampling::trilinear;
  throw ValidationError("unknown upsampling '" + std::string(text) + "' (nearest|trilinear)");
}

std::vector<StratifyAxis> parse_axes(std::string_view text) {
  std::vector<StratifyAxis> out;
  for (const auto& part : split(text, ',')) {
    const auto t = trim(part);
    if (!t.empty()) out.push_back(parse_axis(t));
  }
  if (out.empty()) throw ValidationError("no stratification axes given");
  return out;
}

void apply_config(Settings& s, const Json& config, const std::string& source) {
  Section top(&config, "");
  try {
    top.get("root", s.root);
    top.get("annotations", s.annotations);
    top.get("candidates", s.candidates);
    top.get("landmarks_dir", s.landmarks_dir);
    top.get("seed", s.seed);

    auto index = top.sub("index");
    index.get("angio_glob", s.index.angio_glob);
    index.get("labels_dir", s.index.labels_dir);
    index.get("label_glob", s.index.label_glob);
    index.finish();

    auto split = top.sub("split");
    split.get("k", s.k);
    split.get("import", s.import_folds);
    split.finish();

    auto weaken = top.sub("weaken");
    weaken.get("margin_mm", s.margin_mm);
    weaken.get("write_masks", s.write_masks);
    weaken.finish();

    auto vessel = top.sub("vessel");
    vessel.get("percentile", s.sampling.vessel.intensity_percentile);
    vessel.get("min_bright_voxels", s.sampling.vessel.min_bright_voxels);
    vessel.finish();
    s.retention.vessel = s.sampling.vessel;

    auto sampling = top.sub("sampling");
    sampling.get("side", s.sampling.side);
    sampling.get("n_pos_per_aneurysm", s.sampling.n_pos_per_aneurysm);
    sampling.get("n_neg_landmark", s.sampling.n_neg_landmark);
    sampling.get("n_neg_vessel", s.sampling.n_neg_vessel);
    sampling.get("n_neg_random", s.sampling.n_neg_random);
    sampling.get("max_trials", s.sampling.max_trials);
    sampling.get("export", s.export_format);
    sampling.finish();

    auto inference = top.sub("inference");
    inference.get("predictor", s.predictor);
    inference.get("stride", s.retention.stride);
    inference.get("max_landmark_distance", s.retention.max_landmark_distance);
    inference.get("tta", s.retention.tta_enabled);
    inference.get("threshold", s.retention.threshold);
    inference.get("max_candidates", s.retention.max_candidates);
    inference.get("anatomical", s.retention.anatomical);
    inference.get("resample", s.resample);
    inference.get("save_probability", s.save_probability);
    inference.finish();

    auto unet = top.sub("unet");
    unet.get("depth", s.unet.depth);
    unet.get("filters", s.unet.filters);
    unet.get("bottleneck_filters", s.unet.bottleneck_filters);
    unet.get("kernel", s.unet.kernel);
    unet.get_text("upsampling", [&](const std::string& t) { s.unet.upsampling = parse_upsampling(t); });
    unet.get("bn_eps", s.unet.bn_eps);
    unet.finish();
    s.unet.pad = s.unet.kernel / 2;

    auto evaluation = top.sub("evaluation");
    evaluation.get_text("strategy", [&](const std::string& t) { s.match.strategy = parse_strategy(t); });
    evaluation.get_text("bound", [&](const std::string& t) { s.match.bound = parse_bound(t); });
    evaluation.get("threshold", s.eval_threshold);
    evaluation.get("confidence", s.confidence);
    evaluation.get("fp_max", s.fp_max);
    evaluation.get("curve", s.curve);
    evaluation.finish();

    auto phases = top.sub("phases");
    phases.get_text("axes", [&](const std::string& t) { s.axes = parse_axes(t); });
    phases.finish();

    auto synth = top.sub("synth");
    synth.get("patients", s.patients);
    synth.get("controls", s.controls);
    std::vector<int> shape(s.synth.shape.begin(), s.synth.shape.end());
    synth.get("shape", shape);
    if (shape.size() != 3) throw ValidationError(synth.where("shape") + ": expected three extents");
    s.synth.shape = {shape[0], shape[1], shape[2]};
    synth.get("spacing", s.synth.spacing);
    synth.get("min_lesions", s.synth.min_lesions);
    synth.get("max_lesions", s.synth.max_lesions);
    synth.get("min_diameter", s.synth.min_diameter);
    synth.get("max_diameter", s.synth.max_diameter);
    synth.get("lesion_x_min", s.synth.lesion_x_min);
    synth.get("lesion_x_max", s.synth.lesion_x_max);
    synth.get("background_sd", s.synth.background_sd);
    synth.finish();

    top.finish();
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
}

Settings load_settings(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  Json config;
  try {
    config = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
  Settings s;
  apply_config(s, config, path.string());
  return s;
}

Json to_json(const Settings& s) {
  std::string axes_text;
  for (auto a : s.axes) axes_text += (axes_text.empty() ? "" : ",") + std::string(to_string(a));
  return Json{
      {"root", s.root},
      {"annotations", s.annotations},
      {"candidates", s.candidates},
      {"landmarks_dir", s.landmarks_dir},
      {"seed", s.seed},
      {"index", {{"angio_glob", s.index.angio_glob}, {"labels_dir", s.index.labels_dir},
                 {"label_glob", s.index.label_glob}}},
      {"split", {{"k", s.k}, {"import", s.import_folds}}},
      {"weaken", {{"margin_mm", optional_number(s.margin_mm)}, {"write_masks", s.write_masks}}},
      {"vessel", {{"percentile", s.sampling.vessel.intensity_percentile},
                  {"min_bright_voxels", s.sampling.vessel.min_bright_voxels}}},
      {"sampling", {{"side", s.sampling.side},
                    {"n_pos_per_aneurysm", s.sampling.n_pos_per_aneurysm},
                    {"n_neg_landmark", s.sampling.n_neg_landmark},
                    {"n_neg_vessel", s.sampling.n_neg_vessel},
                    {"n_neg_random", s.sampling.n_neg_random},
                    {"max_trials", s.sampling.max_trials},
                    {"export", s.export_format}}},
      {"inference", {{"predictor", s.predictor},
                     {"stride", s.retention.stride},
                     {"max_landmark_distance", s.retention.max_landmark_distance},
                     {"tta", s.retention.tta_enabled},
                     {"threshold", s.retention.threshold},
                     {"max_candidates", s.retention.max_candidates},
                     {"anatomical", s.retention.anatomical},
                     {"resample", s.resample},
                     {"save_probability", s.save_probability}}},
      {"unet", {{"depth", s.unet.depth},
                {"filters", s.unet.filters},
                {"bottleneck_filters", s.unet.bottleneck_filters},
                {"kernel", s.unet.kernel},
                {"upsampling", s.unet.upsampling == Upsampling::trilinear ? "trilinear" : "nearest"},
                {"bn_eps", s.unet.bn_eps}}},
      {"evaluation", {{"strategy", std::string(to_string(s.match.strategy))},
                      {"bound", std::string(to_string(s.match.bound))},
                      {"threshold", s.eval_threshold},
                      {"confidence", s.confidence},
                      {"fp_max", optional_number(s.fp_max)},
                      {"curve", s.curve}}},
      {"phases", {{"axes", axes_text}}},
      {"synth", {{"patients", s.patients},
                 {"controls", s.controls},
                 {"shape", {s.synth.shape[0], s.synth.shape[1], s.synth.shape[2]}},
                 {"spacing", s.synth.spacing},
                 {"min_lesions", s.synth.min_lesions},
                 {"max_lesions", s.synth.max_lesions},
                 {"min_diameter", s.synth.min_diameter},
                 {"max_diameter", s.synth.max_diameter},
                 {"lesion_x_min", s.synth.lesion_x_min},
                 {"lesion_x_max", s.synth.lesion_x_max},
                 {"background_sd", s.synth.background_sd}}},
  };
}

}  // namespace anevrix::cli
