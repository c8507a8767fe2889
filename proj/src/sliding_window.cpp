#include "anevrix/sliding_window.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "anevrix/errors.hpp"
#include "anevrix/table.hpp"
#include "anevrix/volume_ops.hpp"

namespace anevrix {

void RetentionConfig::validate(int side) const {
  if (!(max_landmark_distance >= 0.0)) throw ValidationError("retention: max_landmark_distance must be >= 0");
  if (stride < 1 || stride > side) {
    throw ValidationError("retention: stride must lie in [1, side=" + std::to_string(side) + "]");
  }
  vessel.validate();
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("retention: threshold must lie in (0,1)");
  if (max_candidates < 1) throw ValidationError("retention: max_candidates must be >= 1");
}

namespace {

std::vector<int> axis_origins(int n, int side, int stride) {
  if (n <= side) return {0};
  std::vector<int> out;
  for (int o = 0; o < n - side; o += stride) out.push_back(o);
  out.push_back(n - side);
  return out;
}

}  // namespace

std::vector<PatchSpec> enumerate_patches(const Volume3D& volume, int side, int stride) {
  if (side < 1) throw ValidationError("enumerate_patches: side must be >= 1");
  if (stride < 1 || stride > side) throw ValidationError("enumerate_patches: stride must lie in [1, side]");
  const auto& s = volume.shape();
  const auto ox = axis_origins(s[0], side, stride);
  const auto oy = axis_origins(s[1], side, stride);
  const auto oz = axis_origins(s[2], side, stride);
  std::vector<PatchSpec> out;
  out.reserve(ox.size() * oy.size() * oz.size());
  for (int z : oz) {
    for (int y : oy) {
      for (int x : ox) out.push_back({{x, y, z}, side, {}, {}});
    }
  }
  return out;
}

std::vector<PatchSpec> retain_anatomical(std::span<const PatchSpec> specs, std::span<const Vec3> landmarks,
                                         const Volume3D& volume, const RetentionConfig& config) {
  if (landmarks.empty()) throw ValidationError("retain_anatomical: landmark list is empty");
  if (specs.empty()) return {};
  const BrightVoxelCounter bright(volume, config.vessel);
  std::vector<PatchSpec> out;
  for (const auto& spec : specs) {
    const Vec3 c = volume.world(spec.center_index());
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& l : landmarks) nearest = std::min(nearest, distance(c, l));
    if (nearest <= config.max_landmark_distance && bright.passes(spec)) out.push_back(spec);
  }
  return out;
}

Grid3 tta_predict(const Grid3& patch, const PatchPredictor& predictor, PatchContext context) {
  if (!patch.is_cubic()) throw ValidationError("tta_predict: patch must be cubic");
  std::vector<double> sum(patch.size(), 0.0);
  for (auto t : kAllGeometricTransforms) {
    context.transform = t;
    const Grid3 pred = predictor.predict(apply_transform(patch, t), context);
    if (pred.shape != patch.shape) throw ValidationError("tta_predict: predictor changed the patch shape");
    const Grid3 back = apply_transform(pred, inverse(t));
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += back.values[i];
  }
  Grid3 out(patch.shape);
  const double n = std::size(kAllGeometricTransforms);
  for (std::size_t i = 0; i < sum.size(); ++i) out.values[i] = static_cast<float>(sum[i] / n);
  return out;
}

namespace {

Grid3 predict_one(const Volume3D& volume, const PatchPredictor& predictor, const PatchSpec& spec, bool tta) {
  const Grid3 patch = zscore(extract_patch(volume, spec));
  PatchContext ctx{spec, GeometricTransform::identity};
  Grid3 pred = tta ? tta_predict(patch, predictor, ctx) : predictor.predict(patch, ctx);
  if (pred.shape != patch.shape) throw ValidationError("predict_volume: predictor changed the patch shape");
  for (float v : pred.values) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError("predict_volume: predictor " + predictor.name() +
                                                         " returned a value outside [0,1]");
  }
  return pred;
}

}  // namespace

Volume3D predict_volume(const Volume3D& volume, const PatchPredictor& predictor, std::span<const PatchSpec> specs,
                        const RetentionConfig& config, int jobs) {
  for (const auto& s : specs) validate(s, volume);
  jobs = std::max(1, jobs);
  std::vector<double> sum(volume.size(), 0.0);
  std::vector<std::uint32_t> count(volume.size(), 0);
  const auto& shape = volume.shape();

  auto accumulate = [&](const PatchSpec& spec, const Grid3& pred) {
    for (int z = 0; z < spec.side; ++z) {
      const int vz = spec.origin[2] + z;
      if (vz < 0 || vz >= shape[2]) continue;
      for (int y = 0; y < spec.side; ++y) {
        const int vy = spec.origin[1] + y;
        if (vy < 0 || vy >= shape[1]) continue;
        for (int x = 0; x < spec.side; ++x) {
          const int vx = spec.origin[0] + x;
          if (vx < 0 || vx >= shape[0]) continue;
          const std::size_t li = volume.linear_index(vx, vy, vz);
          sum[li] += pred(x, y, z);
          ++count[li];
        }
      }
    }
  };

  const std::size_t batch = static_cast<std::size_t>(jobs) * 2;
  std::vector<Grid3> preds;
  for (std::size_t start = 0; start < specs.size(); start += batch) {
    const std::size_t n = std::min(batch, specs.size() - start);
    preds.assign(n, Grid3{});
    if (jobs == 1 || n == 1) {
      for (std::size_t i = 0; i < n; ++i) preds[i] = predict_one(volume, predictor, specs[start + i], config.tta_enabled);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::exception_ptr> errors(n);
      std::vector<std::thread> workers;
      const int used = static_cast<int>(std::min<std::size_t>(jobs, n));
      for (int w = 0; w < used; ++w) {
        workers.emplace_back([&] {
          for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
              preds[i] = predict_one(volume, predictor, specs[start + i], config.tta_enabled);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          }
        });
      }
      for (auto& t : workers) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    for (std::size_t i = 0; i < n; ++i) accumulate(specs[start + i], preds[i]);
  }

  Volume3D out = Volume3D::like(volume, 0.0f);
  auto vox = out.voxels();
  for (std::size_t i = 0; i < vox.size(); ++i) {
    if (count[i] > 0) vox[i] = static_cast<float>(std::clamp(sum[i] / count[i], 0.0, 1.0));
  }
  return out;
}

std::vector<CandidateDetection> extract_candidates(const Volume3D& probability, double threshold) {
  Volume3D mask = Volume3D::like(probability, 0.0f);
  const auto p = probability.voxels();
  auto m = mask.voxels();
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = p[i] >= threshold ? 1.0f : 0.0f;
  const auto components = connected_components(mask, Connectivity::twenty_six);
  std::vector<CandidateDetection> out;
  out.reserve(components.size());
  for (std::size_t id = 0; id < components.size(); ++id) {
    const auto& comp = components[id];
    double best = 0.0;
    for (const auto& v : comp.voxels) best = std::max(best, static_cast<double>(probability(v[0], v[1], v[2])));
    CandidateDetection c;
    c.center = center_of_mass(comp, probability, p);
    c.score = std::clamp(best, 0.0, 1.0);
    c.voxel_count = static_cast<int>(comp.voxels.size());
    c.component_id = static_cast<int>(id);
    out.push_back(c);
  }
  return out;
}

std::vector<CandidateDetection> top_k(std::vector<CandidateDetection> candidates, int k) {
  if (k < 1) throw ValidationError("top_k: k must be >= 1");
  std::stable_sort(candidates.begin(), candidates.end(), [](const CandidateDetection& a, const CandidateDetection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.voxel_count != b.voxel_count) return a.voxel_count > b.voxel_count;
    return a.component_id < b.component_id;
  });
  if (candidates.size() > static_cast<std::size_t>(k)) candidates.resize(static_cast<std::size_t>(k));
  return candidates;
}

DetectionResult detect(const Volume3D& volume, std::span<const Vec3> landmarks, const PatchPredictor& predictor,
                       const RetentionConfig& config, int side, int jobs) {
  config.validate(side);
  DetectionResult r;
  r.enumerated = enumerate_patches(volume, side, config.stride);
  r.retained = config.anatomical ? retain_anatomical(r.enumerated, landmarks, volume, config) : r.enumerated;
  r.probability = predict_volume(volume, predictor, r.retained, config, jobs);
  r.candidates = top_k(extract_candidates(r.probability, config.threshold), config.max_candidates);
  return r;
}

std::vector<SubjectCandidate> label_candidates(std::string_view subject, std::string_view session,
                                               std::span<const CandidateDetection> candidates) {
  std::vector<SubjectCandidate> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.push_back({std::string(subject), std::string(session), static_cast<int>(i + 1), candidates[i]});
  }
  return out;
}

std::string format_candidates(std::span<const SubjectCandidate> rows) {
  Table t({"subject", "session", "candidate_id", "x_mm", "y_mm", "z_mm", "score", "voxel_count"});
  for (const auto& r : rows) {
    const auto& d = r.detection;
    t.add_row({r.subject, r.session, std::to_string(r.candidate_id), format_double(d.center[0]),
               format_double(d.center[1]), format_double(d.center[2]), format_double(d.score),
               std::to_string(d.voxel_count)});
  }
  return t.str();
}

std::vector<SubjectCandidate> parse_candidates(std::string_view text, std::string_view source) {
  const Table t = Table::parse(text, ',', source);
  const auto c_sub = t.require_column("subject");
  const auto c_ses = t.require_column("session");
  const auto c_id = t.require_column("candidate_id");
  const auto c_x = t.require_column("x_mm");
  const auto c_y = t.require_column("y_mm");
  const auto c_z = t.require_column("z_mm");
  const auto c_score = t.require_column("score");
  const auto c_n = t.require_column("voxel_count");
  std::vector<SubjectCandidate> out;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    const auto& row = t.rows()[r];
    const std::string where = t.source() + ":" + std::to_string(t.line_of(r));
    if (row.size() != t.header().size()) throw ValidationError(where + ": wrong field count");
    try {
      SubjectCandidate c;
      c.subject = row[c_sub];
      c.session = row[c_ses];
      c.candidate_id = parse_int(row[c_id], "candidate_id");
      c.detection.center = {parse_double(row[c_x], "x_mm"), parse_double(row[c_y], "y_mm"),
                            parse_double(row[c_z], "z_mm")};
      c.detection.score = parse_double(row[c_score], "score");
      c.detection.voxel_count = parse_int(row[c_n], "voxel_count");
      c.detection.component_id = c.candidate_id;
      if (!(c.detection.score >= 0.0 && c.detection.score <= 1.0)) {
        throw ValidationError("score must lie in [0,1]");
      }
      if (c.detection.voxel_count < 1) throw ValidationError("voxel_count must be >= 1");
      out.push_back(std::move(c));
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return out;
}

std::vector<SubjectCandidate> read_candidates(const std::filesystem::path& path) {
  return parse_candidates(read_text_file(path), path.string());
}

}  // namespace anevrix
