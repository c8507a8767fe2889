// anevrix: command-line front end for the detection pipeline.
//
//   anevrix [--config FILE] [--out DIR] [--seed N] [--jobs N] <command> [flags]
//
// Every command writes its outputs under --out together with
// <command>.manifest.json. Exit codes: 0 success, 1 invalid input, 2 I/O error.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "anevrix/bids_layout.hpp"
#include "anevrix/errors.hpp"
#include "anevrix/evaluation.hpp"
#include "anevrix/landmarks.hpp"
#include "anevrix/nifti_io.hpp"
#include "anevrix/patch_sampler.hpp"
#include "anevrix/phases.hpp"
#include "anevrix/predictor.hpp"
#include "anevrix/random.hpp"
#include "anevrix/sliding_window.hpp"
#include "anevrix/synth.hpp"
#include "anevrix/table.hpp"
#include "anevrix/tensor_bundle.hpp"
#include "anevrix/volume_ops.hpp"
#include "anevrix/weak_labels.hpp"
#include "froc_svg.hpp"
#include "settings.hpp"

#ifndef ANEVRIX_VERSION
#define ANEVRIX_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace anevrix;
using namespace anevrix::cli;

namespace {

// ---------------------------------------------------------------------------
// Run bookkeeping

class Run {
 public:
  Run(std::string command, fs::path out, const Settings& settings, int jobs)
      : command_(std::move(command)), out_(std::move(out)), settings_(settings), jobs_(jobs) {}

  const Settings& settings() const { return settings_; }
  int jobs() const { return jobs_; }

  // Inputs and outputs may be registered from worker threads.
  fs::path input(const fs::path& p) {
    if (!fs::exists(p)) throw IoError(p.string() + ": no such file or directory");
    std::lock_guard lock(mutex_);
    inputs_.insert(p.string());
    return p;
  }
  fs::path output(const fs::path& relative) {
    std::lock_guard lock(mutex_);
    outputs_.insert(relative.generic_string());
    return out_ / relative;
  }
  const fs::path& out_dir() const { return out_; }

  void write(const fs::path& relative, std::string_view text) { write_text_file(output(relative), text); }

  void finish() {
    const Json config = to_json(settings_);
    Json manifest{{"command", command_},
                  {"version", ANEVRIX_VERSION},
                  {"seed", settings_.seed},
                  {"jobs", jobs_},
                  {"config_hash", hex(fnv1a64(config.dump()))},
                  {"config", config}};
    Json inputs = Json::array();
    for (const auto& p : inputs_) {
      std::error_code ec;
      const bool file = fs::is_regular_file(p, ec);
      inputs.push_back({{"path", p}, {"bytes", file ? Json(fs::file_size(p, ec)) : Json(nullptr)}});
    }
    manifest["inputs"] = inputs;
    manifest["outputs"] = outputs_;
    manifest["created_utc"] = timestamp();
    write_text_file(out_ / (command_ + ".manifest.json"), manifest.dump(2) + "\n");
  }

 private:
  static std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
  }
  static std::string timestamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::string command_;
  fs::path out_;
  Settings settings_;
  int jobs_;
  std::set<std::string> inputs_;
  std::set<std::string> outputs_;
  std::mutex mutex_;
};

// Runs fn(0..n-1) on up to `jobs` threads. The first failure (lowest index)
// is rethrown after all workers finish.
template <typename F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto workers = std::min<std::size_t>(std::max(jobs, 1), n);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Dataset units: one angiography volume (subject, session).

struct Unit {
  std::string subject;
  std::string session;
  fs::path angio;
  std::optional<fs::path> label;
  std::optional<int> age;

  std::string key() const { return session.empty() ? subject : subject + "_" + session; }
};

std::string unit_key(const std::string& subject, const std::string& session) {
  return session.empty() ? subject : subject + "_" + session;
}

fs::path require_path(const std::string& value, const char* what) {
  if (value.empty()) throw ValidationError(std::string("missing required setting: ") + what);
  return value;
}

IndexResult index_root(Run& run) {
  const fs::path root = run.input(require_path(run.settings().root, "root"));
  auto result = index_dataset(root, run.settings().index);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  return result;
}

std::vector<Unit> units_of(const IndexResult& index) {
  std::vector<Unit> out;
  for (const auto& s : index.subjects) {
    for (const auto& session : s.session_ids) {
      Unit u{s.subject_id, session, s.angio_paths.at(session), std::nullopt, s.age_years};
      if (auto it = s.label_paths.find(session); it != s.label_paths.end()) u.label = it->second;
      out.push_back(std::move(u));
    }
  }
  return out;
}

fs::path landmarks_dir(const Settings& s) {
  return s.landmarks_dir.empty() ? fs::path(s.root) / "derivatives" / "landmarks" : fs::path(s.landmarks_dir);
}

// <dir>/<subject>_<session>_landmarks.csv, else <dir>/<subject>_landmarks.csv.
std::vector<Vec3> unit_landmarks(Run& run, const Unit& u) {
  const fs::path dir = landmarks_dir(run.settings());
  fs::path p = dir / (u.key() + "_landmarks.csv");
  if (!u.session.empty() && !fs::exists(p)) p = dir / (u.subject + "_landmarks.csv");
  if (!fs::exists(p)) throw IoError(p.string() + ": landmarks for " + u.key() + " not found");
  return positions(read_landmarks(run.input(p)));
}

std::vector<AneurysmAnnotation> annotations_for(std::span<const AneurysmAnnotation> all, const Unit& u) {
  std::vector<AneurysmAnnotation> out;
  for (const auto& a : all) {
    if (a.subject == u.subject && (a.session.empty() || a.session == u.session)) out.push_back(a);
  }
  return out;
}

fs::path annotations_file(const Settings& s) {
  if (!s.annotations.empty()) return s.annotations;
  if (!s.root.empty()) return annotations_path(s.root);
  throw ValidationError("missing required setting: annotations");
}

Affine4x4 translated(const Affine4x4& affine, const Index3& origin) {
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  for (int a = 0; a < 3; ++a) t(a, 3) = origin[a];
  return affine * Affine4x4(t);
}

Volume3D patch_volume(const Volume3D& source, const PatchSpec& spec, const Grid3& values) {
  return Volume3D(values.shape, source.spacing(), translated(source.affine(), spec.origin), values.values);
}

std::string padded(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(std::max<int>(0, width - static_cast<int>(s.size())), '0') + s;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_index(Run& run) {
  const auto index = index_root(run);
  run.write("subjects.csv", format_subjects(index.subjects));
}

void cmd_split(Run& run) {
  const auto& s = run.settings();
  FoldAssignment folds;
  if (!s.import_folds.empty()) {
    const fs::path path = run.input(s.import_folds);
    folds = read_folds(path);
    if (!s.root.empty()) {
      const auto index = index_root(run);
      std::set<std::string> indexed;
      for (const auto& r : index.subjects) indexed.insert(r.subject_id);
      for (const auto& id : indexed) {
        if (!folds.fold_of_subject.count(id)) throw ValidationError(path.string() + ": subject " + id + " has no fold");
      }
      for (const auto& [id, f] : folds.fold_of_subject) {
        if (!indexed.count(id)) throw ValidationError(path.string() + ": subject " + id + " is not in the dataset");
      }
    }
  } else {
    const auto index = index_root(run);
    folds = grouped_kfold(index.subjects, s.k, s.seed);
  }
  run.write("folds.csv", format_folds(folds));
}

void cmd_weaken(Run& run) {
  const auto& s = run.settings();
  const auto units = units_of(index_root(run));
  std::vector<std::vector<AneurysmAnnotation>> per_unit(units.size());
  for (const auto& u : units) {
    if (u.label) run.input(*u.label);
  }
  parallel_for(units.size(), run.jobs(), [&](std::size_t i) {
    const auto& u = units[i];
    if (!u.label) return;
    const Volume3D mask = read_nifti(*u.label).volume;
    auto anns = weaken_components(mask, s.margin_mm);
    for (std::size_t j = 0; j < anns.size(); ++j) {
      anns[j].subject = u.subject;
      anns[j].session = u.session;
      anns[j].lesion_id = u.key() + "_L" + std::to_string(j + 1);
    }
    if (s.write_masks) {
      fs::path rel = fs::path("weak_masks") / u.subject;
      if (!u.session.empty()) rel /= u.session;
      rel = rel / "anat" / (u.key() + "_desc-weak_mask.nii.gz");
      save_nifti(run.output(rel), sphere_labels(anns, mask), NiftiDatatype::uint8);
    }
    per_unit[i] = std::move(anns);
  });
  std::vector<AneurysmAnnotation> all;
  for (auto& v : per_unit) all.insert(all.end(), v.begin(), v.end());
  run.write("annotations.csv", format_annotations(all));
}

void cmd_sample(Run& run) {
  const auto& s = run.settings();
  s.sampling.validate();
  if (s.export_format != "none" && s.export_format != "nifti" && s.export_format != "tensors") {
    throw ValidationError("sampling.export must be none, nifti or tensors (got '" + s.export_format + "')");
  }
  const auto units = units_of(index_root(run));
  const auto all_annotations = read_annotations(run.input(annotations_file(s)));

  struct Result {
    std::vector<LabeledPatch> patches;
    NegativeSamples negatives;
    int lesions = 0;
    int positives = 0;
  };
  std::vector<Result> results(units.size());
  std::vector<std::vector<Vec3>> landmarks(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) {
    run.input(units[i].angio);
    landmarks[i] = unit_landmarks(run, units[i]);
  }

  parallel_for(units.size(), run.jobs(), [&](std::size_t i) {
    const auto& u = units[i];
    const Volume3D image = read_nifti(u.angio).volume;
    const auto anns = annotations_for(all_annotations, u);
    Rng rng = Rng::for_stream(s.seed, u.key());
    Result& r = results[i];
    r.lesions = static_cast<int>(anns.size());
    auto add = [&](const char* kind, PatchSpec spec) {
      spec.subject = u.subject;
      spec.session = u.session;
      r.patches.push_back({kind, std::move(spec)});
    };
    for (const auto& a : anns) {
      for (auto& spec : sample_positive(image, a, s.sampling.n_pos_per_aneurysm, rng, s.sampling.side)) {
        add("positive", spec);
        ++r.positives;
      }
    }
    r.negatives = sample_negative(image, landmarks[i], anns, s.sampling, rng);
    for (const auto& spec : r.negatives.landmark) add("negative_landmark", spec);
    for (const auto& spec : r.negatives.vessel) add("negative_vessel", spec);
    for (const auto& spec : r.negatives.random) add("negative_random", spec);

    if (s.export_format == "none") return;
    const Volume3D label = sphere_labels(anns, image);
    TensorBundle bundle;
    for (std::size_t p = 0; p < r.patches.size(); ++p) {
      const auto& lp = r.patches[p];
      const Grid3 img = extract_patch(image, lp.spec);
      const Grid3 lab = extract_patch(label, lp.spec);
      const std::string stem = padded(p, 4) + "_" + lp.kind;
      if (s.export_format == "nifti") {
        const fs::path dir = fs::path("patches") / u.key();
        save_nifti(run.output(dir / (stem + "_angio.nii.gz")), patch_volume(image, lp.spec, img));
        save_nifti(run.output(dir / (stem + "_label.nii.gz")), patch_volume(image, lp.spec, lab),
                   NiftiDatatype::uint8);
      } else {
        // Grid values are x-fastest, so the row-major tensor shape is (z, y, x).
        const std::vector<int> shape{img.shape[2], img.shape[1], img.shape[0]};
        bundle.add(stem + "/angio", shape, img.values);
        bundle.add(stem + "/label", shape, lab.values);
      }
    }
    if (s.export_format == "tensors") {
      const fs::path prefix = fs::path("patches") / u.key();
      run.output(prefix.string() + ".manifest");
      run.output(prefix.string() + ".bin");
      bundle.save(run.out_dir() / prefix);
    }
  });

  std::vector<LabeledPatch> all;
  Table summary({"subject", "session", "lesions", "positives", "negative_landmark", "negative_vessel",
                 "negative_random", "shortfall"});
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& r = results[i];
    all.insert(all.end(), r.patches.begin(), r.patches.end());
    summary.add_row({units[i].subject, units[i].session, std::to_string(r.lesions), std::to_string(r.positives),
                     std::to_string(r.negatives.landmark.size()), std::to_string(r.negatives.vessel.size()),
                     std::to_string(r.negatives.random.size()), std::to_string(r.negatives.shortfall())});
    if (r.negatives.shortfall() > 0) {
      std::cerr << "warning: " << units[i].key() << ": " << r.negatives.shortfall()
                << " negative patches could not be placed\n";
    }
  }
  run.write("patches.csv", format_patch_specs(all));
  run.write("sample_summary.csv", summary.str());
}

// "oracle", "heuristic:<percentile>" or "unet:<weights prefix>".
struct PredictorChoice {
  std::string kind;
  double percentile = 0.0;
  std::shared_ptr<const PatchPredictor> shared;  // heuristic and unet
};

PredictorChoice parse_predictor(Run& run) {
  const auto& s = run.settings();
  const std::string& text = s.predictor;
  PredictorChoice c;
  const auto colon = text.find(':');
  c.kind = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (c.kind == "oracle" && arg.empty()) return c;
  if (c.kind == "heuristic") {
    c.percentile = arg.empty() ? 99.0 : parse_double(arg, "heuristic percentile");
    c.shared = std::make_shared<HeuristicPredictor>(c.percentile);
    return c;
  }
  if (c.kind == "unet" && !arg.empty()) {
    run.input(arg + ".manifest");
    run.input(arg + ".bin");
    c.shared = std::make_shared<UNetPredictor>(s.unet, TensorBundle::load(arg));
    return c;
  }
  throw ValidationError("inference.predictor: expected oracle, heuristic:<percentile> or unet:<weights prefix>, got '" +
                        text + "'");
}

void cmd_infer(Run& run) {
  const auto& s = run.settings();
  s.retention.validate(s.sampling.side);
  const auto choice = parse_predictor(run);
  const auto units = units_of(index_root(run));
  std::vector<std::vector<Vec3>> landmarks(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) {
    run.input(units[i].angio);
    landmarks[i] = unit_landmarks(run, units[i]);
    if (choice.kind == "oracle") {
      if (!units[i].label) throw ValidationError("oracle predictor: " + units[i].key() + " has no label mask");
      run.input(*units[i].label);
    }
  }

  std::optional<Vec3> target_spacing;
  if (s.resample) {
    std::vector<Vec3> spacings;
    for (const auto& u : units) spacings.push_back(read_nifti(u.angio).volume.spacing());
    if (!spacings.empty()) target_spacing = median_spacing(spacings);
  }

  struct Result {
    std::vector<SubjectCandidate> candidates;
    std::size_t enumerated = 0, retained = 0;
  };
  std::vector<Result> results(units.size());
  parallel_for(units.size(), run.jobs(), [&](std::size_t i) {
    const auto& u = units[i];
    Volume3D image = read_nifti(u.angio).volume;
    if (target_spacing) image = resample(image, *target_spacing, Interpolation::trilinear);
    std::shared_ptr<const PatchPredictor> predictor = choice.shared;
    if (choice.kind == "oracle") {
      Volume3D truth = read_nifti(*u.label).volume;
      if (target_spacing) truth = resample(truth, *target_spacing, Interpolation::nearest);
      predictor = std::make_shared<OraclePredictor>(std::move(truth));
    }
    const auto det = detect(image, landmarks[i], *predictor, s.retention, s.sampling.side, 1);
    results[i].candidates = label_candidates(u.subject, u.session, det.candidates);
    results[i].enumerated = det.enumerated.size();
    results[i].retained = det.retained.size();
    if (s.save_probability) {
      save_nifti(run.output(fs::path("probability") / (u.key() + "_prob.nii.gz")), det.probability);
    }
  });

  std::vector<SubjectCandidate> all;
  Table retention({"subject", "session", "enumerated", "retained", "discarded_fraction"});
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& r = results[i];
    all.insert(all.end(), r.candidates.begin(), r.candidates.end());
    const double discarded = r.enumerated ? 1.0 - double(r.retained) / double(r.enumerated) : 0.0;
    retention.add_row({units[i].subject, units[i].session, std::to_string(r.enumerated), std::to_string(r.retained),
                       format_double(discarded)});
  }
  run.write("candidates.csv", format_candidates(all));
  run.write("retention.csv", retention.str());
}

// Candidates and annotations grouped per unit, in unit-key order. With a
// dataset root, indexed units without candidates or lesions are included as
// well (controls contribute false positives only).
struct Evaluation {
  std::vector<std::string> keys;
  std::vector<std::string> subjects;
  std::vector<std::vector<CandidateDetection>> candidates;
  std::vector<std::vector<AneurysmAnnotation>> annotations;
  std::map<std::string, int> ages;
};

Evaluation load_evaluation(Run& run) {
  const auto& s = run.settings();
  const auto cands = read_candidates(run.input(require_path(s.candidates, "candidates")));
  const auto anns = read_annotations(run.input(annotations_file(s)));
  std::map<std::string, std::string> subject_of;
  std::map<std::string, std::vector<CandidateDetection>> cand_of;
  std::map<std::string, std::vector<AneurysmAnnotation>> ann_of;
  for (const auto& c : cands) {
    const auto k = unit_key(c.subject, c.session);
    subject_of[k] = c.subject;
    cand_of[k].push_back(c.detection);
  }
  for (const auto& a : anns) {
    const auto k = unit_key(a.subject, a.session);
    subject_of[k] = a.subject;
    ann_of[k].push_back(a);
  }
  Evaluation ev;
  if (!s.root.empty()) {
    const auto index = index_root(run);
    for (const auto& r : index.subjects) {
      if (r.age_years) ev.ages[r.subject_id] = *r.age_years;
    }
    for (const auto& u : units_of(index)) subject_of.emplace(u.key(), u.subject);
  }
  for (const auto& [k, subject] : subject_of) {
    ev.keys.push_back(k);
    ev.subjects.push_back(subject);
    ev.candidates.push_back(cand_of[k]);
    ev.annotations.push_back(ann_of[k]);
  }
  return ev;
}

std::vector<DetectionOutcome> match_all(const Evaluation& ev, const MatchOptions& options, double threshold) {
  std::vector<DetectionOutcome> out;
  for (std::size_t i = 0; i < ev.keys.size(); ++i) {
    std::vector<CandidateDetection> kept;
    for (const auto& c : ev.candidates[i]) {
      if (c.score >= threshold) kept.push_back(c);
    }
    out.push_back(match_detections(kept, ev.annotations[i], options, ev.keys[i]));
  }
  return out;
}

FrocCurve froc_of(const Evaluation& ev, const MatchOptions& options) {
  std::vector<SubjectEvaluation> subjects;
  for (std::size_t i = 0; i < ev.keys.size(); ++i) {
    subjects.push_back({ev.keys[i], ev.candidates[i], ev.annotations[i]});
  }
  return froc(subjects, std::nullopt, options);
}

void cmd_evaluate(Run& run) {
  const auto& s = run.settings();
  const auto ev = load_evaluation(run);
  const auto outcomes = match_all(ev, s.match, s.eval_threshold);
  int tp = 0, fp = 0, fn = 0;
  for (const auto& o : outcomes) {
    tp += o.tp();
    fp += o.fp();
    fn += o.fn();
  }
  Json summary{{"units", outcomes.size()},
               {"lesions", tp + fn},
               {"threshold", s.eval_threshold},
               {"strategy", std::string(to_string(s.match.strategy))},
               {"bound", std::string(to_string(s.match.bound))},
               {"tp", tp},
               {"fp", fp},
               {"fn", fn}};
  if (tp + fn > 0) {
    const auto ci = wilson_ci(tp, tp + fn, s.confidence);
    summary["sensitivity"] = sensitivity(outcomes);
    summary["wilson"] = {{"confidence", ci.confidence}, {"lower", ci.lower}, {"upper", ci.upper}};
  } else {
    summary["sensitivity"] = nullptr;
  }
  summary["fp_rate"] = outcomes.empty() ? Json(nullptr) : Json(fp_rate(outcomes));

  run.write("outcomes.csv", format_outcomes(outcomes, ev.annotations));
  run.write("froc.csv", format_froc(froc_of(ev, s.match)));
  run.write("summary.json", summary.dump(2) + "\n");
}

void cmd_froc(Run& run) {
  const auto& s = run.settings();
  FrocCurve curve;
  if (!s.curve.empty()) {
    const fs::path p = run.input(s.curve);
    curve = parse_froc(read_text_file(p), p.string());
  } else {
    curve = froc_of(load_evaluation(run), s.match);
  }
  double fp_max = 0.0;
  for (const auto& p : curve.points) fp_max = std::max(fp_max, p.avg_fp);
  if (s.fp_max) {
    if (!(*s.fp_max > 0.0)) throw ValidationError("evaluation.fp_max must be positive");
    fp_max = *s.fp_max;
  }
  Json summary{{"points", curve.points.size()}, {"fp_max", fp_max}};
  summary["auc"] = fp_max > 0.0 ? Json(auc_froc(curve, fp_max)) : Json(nullptr);

  run.write("froc.csv", format_froc(curve));
  run.write("froc.svg", froc_svg(curve, fp_max, "FROC"));
  run.write("froc_summary.json", summary.dump(2) + "\n");
}

void cmd_phases(Run& run) {
  const auto& s = run.settings();
  const auto ev = load_evaluation(run);
  const auto outcomes = match_all(ev, s.match, s.eval_threshold);
  const auto lesions = evaluated_lesions(outcomes, ev.annotations, ev.ages);

  Table scores({"subject", "session", "lesion_id", "age", "location", "shape", "max_diameter_mm", "detected",
                "score", "risk_group", "review"});
  for (const auto& l : lesions) {
    const auto& a = l.annotation;
    std::string score, group, review;
    if (l.age && a.location && a.max_diameter > 0.0) {
      const PhasesInput in{*l.age, *a.location, a.max_diameter, a.shape, a.extracranial_carotid};
      group = std::string(to_string(classify(in)));
      if (eligible(in)) {
        const int sc = phases_partial_score(in);
        score = std::to_string(sc);
        review = needs_review(sc) ? "1" : "0";
      }
    }
    scores.add_row({a.subject, a.session, a.lesion_id, l.age ? std::to_string(*l.age) : "",
                    a.location ? std::string(to_string(*a.location)) : "", std::string(to_string(a.shape)),
                    format_double(a.max_diameter), l.detected ? "1" : "0", score, group, review});
  }
  std::vector<Stratification> tables;
  for (auto axis : s.axes) tables.push_back(stratify(lesions, axis));

  run.write("phases.csv", scores.str());
  run.write("strata.csv", format_stratifications(tables));
}

void cmd_synth(Run& run) {
  const auto& s = run.settings();
  const auto cohort = make_synthetic_cohort(s.synth, s.patients, s.controls, s.seed);
  for (const auto& subj : cohort) {
    run.output(fs::path(subj.subject) / "anat" / (subj.subject + "_angio.nii.gz"));
  }
  run.output("participants.tsv");
  write_synthetic_dataset(run.out_dir(), cohort);
}

// ---------------------------------------------------------------------------
// Flag plumbing: flags land in optionals and are applied over the config file.

class Overrides {
 public:
  template <typename T, typename F>
  CLI::Option* add(CLI::App* app, const std::string& flags, const std::string& help, F set) {
    auto slot = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flags, *slot, help);
    apply_.push_back([slot, opt, set](Settings& s) {
      if (opt->count() > 0) set(s, *slot);
    });
    return opt;
  }

  template <typename F>
  CLI::Option* flag(CLI::App* app, const std::string& flags, const std::string& help, F set) {
    CLI::Option* opt = app->add_flag(flags, help);
    apply_.push_back([opt, set](Settings& s) {
      if (opt->count() > 0) set(s);
    });
    return opt;
  }

  void apply(Settings& s) const {
    for (const auto& f : apply_) f(s);
  }

 private:
  std::vector<std::function<void(Settings&)>> apply_;
};

void add_common_inputs(Overrides& o, CLI::App* cmd, bool annotations, bool candidates, bool landmarks) {
  o.add<std::string>(cmd, "--root", "dataset root (BIDS layout)", [](Settings& s, const std::string& v) { s.root = v; });
  if (annotations) {
    o.add<std::string>(cmd, "--annotations", "annotation CSV",
                       [](Settings& s, const std::string& v) { s.annotations = v; });
  }
  if (candidates) {
    o.add<std::string>(cmd, "--candidates", "candidate CSV", [](Settings& s, const std::string& v) { s.candidates = v; });
  }
  if (landmarks) {
    o.add<std::string>(cmd, "--landmarks-dir", "directory of <subject>_landmarks.csv files",
                       [](Settings& s, const std::string& v) { s.landmarks_dir = v; });
  }
}

void add_matching(Overrides& o, CLI::App* cmd) {
  o.add<std::string>(cmd, "--strategy", "optimal|greedy",
                     [](Settings& s, const std::string& v) { s.match.strategy = parse_strategy(v); });
  o.add<std::string>(cmd, "--bound", "max_diameter|radius",
                     [](Settings& s, const std::string& v) { s.match.bound = parse_bound(v); });
}

int run_main(int argc, char** argv) {
  CLI::App app{"Anatomically informed aneurysm detection pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", ANEVRIX_VERSION);

  std::string config_path;
  std::string out_dir = ".";
  int jobs = 1;
  app.add_option("--config", config_path, "JSON config file; flags override it");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--jobs", jobs, "worker threads (subject-level)")->envname("ANEVRIX_JOBS")->capture_default_str();

  Overrides o;
  o.add<std::uint64_t>(&app, "--seed", "random seed", [](Settings& s, std::uint64_t v) { s.seed = v; });

  auto* index = app.add_subcommand("index", "index a BIDS dataset into subjects.csv");
  add_common_inputs(o, index, false, false, false);
  o.add<std::string>(index, "--angio-glob", "angiography file pattern",
                     [](Settings& s, const std::string& v) { s.index.angio_glob = v; });
  o.add<std::string>(index, "--labels-dir", "derivatives folder holding masks",
                     [](Settings& s, const std::string& v) { s.index.labels_dir = v; });
  o.add<std::string>(index, "--label-glob", "mask file pattern",
                     [](Settings& s, const std::string& v) { s.index.label_glob = v; });

  auto* split = app.add_subcommand("split", "subject-grouped k-fold assignment into folds.csv");
  add_common_inputs(o, split, false, false, false);
  o.add<int>(split, "--k", "number of folds", [](Settings& s, int v) { s.k = v; });
  o.add<std::string>(split, "--import", "validate and re-emit an existing fold CSV",
                     [](Settings& s, const std::string& v) { s.import_folds = v; });

  auto* weaken = app.add_subcommand("weaken", "voxel masks to spherical weak labels (annotations.csv)");
  add_common_inputs(o, weaken, false, false, false);
  o.add<double>(weaken, "--margin", "sphere margin in mm (default: one voxel diagonal)",
                [](Settings& s, double v) { s.margin_mm = v; });
  o.flag(weaken, "--write-masks", "also write the sphere masks as NIfTI", [](Settings& s) { s.write_masks = true; });

  auto* sample = app.add_subcommand("sample", "training patch specs (patches.csv)");
  add_common_inputs(o, sample, true, false, true);
  o.add<int>(sample, "--side", "patch side in voxels", [](Settings& s, int v) { s.sampling.side = v; });
  o.add<int>(sample, "--n-pos", "positives per lesion", [](Settings& s, int v) { s.sampling.n_pos_per_aneurysm = v; });
  o.add<int>(sample, "--n-neg-landmark", "landmark negatives", [](Settings& s, int v) { s.sampling.n_neg_landmark = v; });
  o.add<int>(sample, "--n-neg-vessel", "vessel negatives", [](Settings& s, int v) { s.sampling.n_neg_vessel = v; });
  o.add<int>(sample, "--n-neg-random", "random negatives", [](Settings& s, int v) { s.sampling.n_neg_random = v; });
  o.add<std::string>(sample, "--export", "none|nifti|tensors",
                     [](Settings& s, const std::string& v) { s.export_format = v; });

  auto* infer = app.add_subcommand("infer", "sliding-window detection (candidates.csv)");
  add_common_inputs(o, infer, false, false, true);
  o.add<std::string>(infer, "--predictor", "oracle | heuristic:<percentile> | unet:<weights prefix>",
                     [](Settings& s, const std::string& v) { s.predictor = v; });
  o.add<int>(infer, "--side", "patch side in voxels", [](Settings& s, int v) { s.sampling.side = v; });
  o.add<int>(infer, "--stride", "sliding-window stride", [](Settings& s, int v) { s.retention.stride = v; });
  o.add<double>(infer, "--max-landmark-distance", "mm", [](Settings& s, double v) {
    s.retention.max_landmark_distance = v;
  });
  o.add<double>(infer, "--threshold", "probability threshold", [](Settings& s, double v) { s.retention.threshold = v; });
  o.add<int>(infer, "--top-k", "candidates kept per volume", [](Settings& s, int v) { s.retention.max_candidates = v; });
  o.flag(infer, "--no-tta", "disable test-time augmentation", [](Settings& s) { s.retention.tta_enabled = false; });
  o.flag(infer, "--no-anatomical", "predict every enumerated patch", [](Settings& s) { s.retention.anatomical = false; });
  o.flag(infer, "--resample", "resample to the dataset median spacing first", [](Settings& s) { s.resample = true; });
  o.flag(infer, "--save-probability", "write probability maps", [](Settings& s) { s.save_probability = true; });

  auto* evaluate = app.add_subcommand("evaluate", "match candidates to lesions (outcomes.csv, summary.json, froc.csv)");
  add_common_inputs(o, evaluate, true, true, false);
  add_matching(o, evaluate);
  o.add<double>(evaluate, "--threshold", "candidate score threshold", [](Settings& s, double v) { s.eval_threshold = v; });

  auto* froc_cmd = app.add_subcommand("froc", "FROC curve (froc.csv, froc.svg, froc_summary.json)");
  add_common_inputs(o, froc_cmd, true, true, false);
  add_matching(o, froc_cmd);
  o.add<std::string>(froc_cmd, "--curve", "render an existing froc.csv instead",
                     [](Settings& s, const std::string& v) { s.curve = v; });
  o.add<double>(froc_cmd, "--fp-max", "upper FP bound for the normalized AUC", [](Settings& s, double v) {
    s.fp_max = v;
  });

  auto* phases = app.add_subcommand("phases", "partial PHASES scores and stratified sensitivity");
  add_common_inputs(o, phases, true, true, false);
  add_matching(o, phases);
  o.add<double>(phases, "--threshold", "candidate score threshold", [](Settings& s, double v) { s.eval_threshold = v; });
  o.add<std::string>(phases, "--axes", "comma list of risk,location,size,fine_size",
                     [](Settings& s, const std::string& v) { s.axes = parse_axes(v); });

  auto* synth = app.add_subcommand("synth", "write a synthetic tube-and-lesion dataset");
  o.add<int>(synth, "--patients", "subjects with lesions", [](Settings& s, int v) { s.patients = v; });
  o.add<int>(synth, "--controls", "subjects without lesions", [](Settings& s, int v) { s.controls = v; });
  o.add<std::vector<int>>(synth, "--shape", "grid extents x y z", [](Settings& s, const std::vector<int>& v) {
     if (v.size() != 3) throw ValidationError("--shape needs three extents");
     s.synth.shape = {v[0], v[1], v[2]};
   })->expected(3);
  o.add<double>(synth, "--lesion-x-max", "lesions only next to landmarks below this x fraction",
                [](Settings& s, double v) { s.synth.lesion_x_max = v; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  if (jobs < 1) throw ValidationError("--jobs must be >= 1");

  Settings settings = config_path.empty() ? Settings{} : load_settings(config_path);
  o.apply(settings);

  const std::string command = app.get_subcommands().front()->get_name();
  Run run(command, out_dir, settings, jobs);
  if (!config_path.empty()) run.input(config_path);

  static const std::map<std::string, std::function<void(Run&)>> commands{
      {"index", cmd_index},   {"split", cmd_split}, {"weaken", cmd_weaken},
      {"sample", cmd_sample}, {"infer", cmd_infer}, {"evaluate", cmd_evaluate},
      {"froc", cmd_froc},     {"phases", cmd_phases}, {"synth", cmd_synth}};
  commands.at(command)(run);
  run.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_main(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
