#include "anevrix/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "anevrix/errors.hpp"
#include "anevrix/nifti_io.hpp"
#include "anevrix/table.hpp"
#include "anevrix/volume_ops.hpp"

namespace anevrix {

void SynthConfig::validate() const {
  for (int n : shape) {
    if (n < 16) throw ValidationError("synth: every extent must be >= 16");
  }
  if (!(spacing > 0.0)) throw ValidationError("synth: spacing must be positive");
  if (min_lesions < 0 || max_lesions < min_lesions) throw ValidationError("synth: bad lesion count range");
  if (!(min_diameter > 0.0) || max_diameter < min_diameter) throw ValidationError("synth: bad diameter range");
  if (!(tube_radius > 0.0)) throw ValidationError("synth: tube_radius must be positive");
  if (!(landmark_spacing > 0.0) || landmark_start < 0.0) throw ValidationError("synth: bad landmark placement");
  if (!(lesion_x_min >= 0.0 && lesion_x_min <= lesion_x_max && lesion_x_max <= 1.0)) {
    throw ValidationError("synth: lesion x range must lie within [0,1]");
  }
}

namespace {

constexpr const char* kSites[] = {"ICA_L", "ICA_R", "MCA_L", "MCA_R", "ACA", "Acom", "Pcom_L", "Pcom_R", "BA", "PCA"};

std::string padded(int v) {
  std::ostringstream os;
  os.width(3);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

SynthSubject make_synthetic_subject(const SynthConfig& config, const std::string& subject, Rng& rng, int lesions) {
  config.validate();
  const double s = config.spacing;
  const auto& n = config.shape;
  Vec3 origin{};
  for (int a = 0; a < 3; ++a) origin[a] = -0.5 * (n[a] - 1) * s;
  const Affine4x4 affine = Affine4x4::scaling({s, s, s}, origin);

  SynthSubject out;
  out.subject = subject;
  out.age_years = rng.uniform_int(35, 85);
  out.sex = rng.below(2) == 0 ? Sex::F : Sex::M;
  out.image = Volume3D(n, {s, s, s}, affine, 0.0f);
  out.mask = Volume3D::like(out.image, 0.0f);

  // Tube axis at the grid center in y and z; landmarks on the axis.
  const double yc = 0.5 * (n[1] - 1), zc = 0.5 * (n[2] - 1);
  const double x_len = (n[0] - 1) * s;
  std::vector<double> landmark_x;  // index space
  for (double x = config.landmark_start; x <= x_len - config.landmark_start + 1e-9; x += config.landmark_spacing) {
    landmark_x.push_back(x / s);
  }
  for (std::size_t i = 0; i < landmark_x.size(); ++i) {
    out.landmarks.push_back({"L" + padded(static_cast<int>(i + 1)), kSites[i % std::size(kSites)],
                             out.image.world(Vec3{landmark_x[i], yc, zc})});
  }

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < landmark_x.size(); ++i) {
    const double f = landmark_x[i] / (n[0] - 1);
    if (f >= config.lesion_x_min && f <= config.lesion_x_max) eligible.push_back(i);
  }
  int count = lesions >= 0 ? lesions : rng.uniform_int(config.min_lesions, config.max_lesions);
  if (count > static_cast<int>(eligible.size())) {
    throw ValidationError("synth: " + std::to_string(count) + " lesions requested but only " +
                          std::to_string(eligible.size()) + " landmarks are eligible");
  }
  // Partial Fisher-Yates over eligible landmarks, then ascending order.
  for (int i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  std::vector<std::size_t> chosen(eligible.begin(), eligible.begin() + count);
  std::sort(chosen.begin(), chosen.end());

  struct Sphere {
    Vec3 center;  // index space
    double r;     // mm
  };
  std::vector<Sphere> spheres;
  for (std::size_t li : chosen) {
    const double r = 0.5 * rng.uniform(config.min_diameter, config.max_diameter);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double offset = (config.tube_radius + 0.5 * r) / s;
    const double jitter = rng.uniform(-2.0, 2.0) / s;
    spheres.push_back({{landmark_x[li] + jitter, yc + offset * std::cos(theta), zc + offset * std::sin(theta)}, r});
  }

  int lesion_no = 0;
  for (const auto& sp : spheres) {
    const Vec3 c = out.image.world(sp.center);
    paint_sphere(out.mask, c, sp.r);
    AneurysmAnnotation a;
    a.lesion_id = subject + "_L" + std::to_string(++lesion_no);
    a.subject = subject;
    a.center = c;
    a.radius = sp.r + voxel_diagonal(out.image);
    a.max_diameter = 2.0 * sp.r;
    a.shape = LesionShape::saccular;
    a.location = static_cast<LesionLocation>(rng.below(3));
    out.annotations.push_back(a);
  }

  const double semi[3] = {0.45 * n[0], 0.45 * n[1], 0.45 * n[2]};
  const double centre[3] = {0.5 * (n[0] - 1), yc, zc};
  const double tube_r = config.tube_radius / s;
  const double tube_x0 = 8.0, tube_x1 = n[0] - 9.0;
  auto img = out.image.voxels();
  const auto msk = out.mask.voxels();
  for (int k = 0; k < n[2]; ++k) {
    for (int j = 0; j < n[1]; ++j) {
      for (int i = 0; i < n[0]; ++i) {
        const double u = (i - centre[0]) / semi[0], v = (j - centre[1]) / semi[1], w = (k - centre[2]) / semi[2];
        if (u * u + v * v + w * w > 1.0) continue;
        const std::size_t li = out.image.linear_index(i, j, k);
        const double noise = config.background_sd * rng.normal();
        float base = config.background_mean;
        const double dy = j - yc, dz = k - zc;
        if (i >= tube_x0 && i <= tube_x1 && dy * dy + dz * dz <= tube_r * tube_r) base = config.tube_intensity;
        if (is_foreground(msk[li])) base = config.lesion_intensity;
        img[li] = static_cast<float>(std::max(1.0, base + noise));
      }
    }
  }
  return out;
}

std::vector<SynthSubject> make_synthetic_cohort(const SynthConfig& config, int patients, int controls,
                                                std::uint64_t seed) {
  if (patients < 0 || controls < 0) throw ValidationError("synth: subject counts must be >= 0");
  std::vector<SynthSubject> out;
  for (int i = 0; i < patients + controls; ++i) {
    const std::string id = "sub-" + padded(i + 1);
    Rng rng = Rng::for_stream(seed, id);
    out.push_back(make_synthetic_subject(config, id, rng, i < patients ? -1 : 0));
  }
  return out;
}

std::filesystem::path landmarks_path(const std::filesystem::path& root, const std::string& subject) {
  return root / "derivatives" / "landmarks" / (subject + "_landmarks.csv");
}

std::filesystem::path annotations_path(const std::filesystem::path& root) {
  return root / "derivatives" / "weak_labels" / "annotations.csv";
}

void write_synthetic_dataset(const std::filesystem::path& root, std::span<const SynthSubject> subjects) {
  Table participants({"participant_id", "age", "sex"});
  std::vector<AneurysmAnnotation> all;
  for (const auto& s : subjects) {
    participants.add_row({s.subject, std::to_string(s.age_years), s.sex == Sex::M ? "M" : "F"});
    save_nifti(root / s.subject / "anat" / (s.subject + "_angio.nii.gz"), s.image, NiftiDatatype::float32);
    save_nifti(root / "derivatives" / "manual_masks" / s.subject / "anat" / (s.subject + "_desc-aneurysm_mask.nii.gz"),
               s.mask, NiftiDatatype::uint8);
    write_text_file(landmarks_path(root, s.subject), format_landmarks(s.landmarks));
    all.insert(all.end(), s.annotations.begin(), s.annotations.end());
  }
  participants.write(root / "participants.tsv", '\t');
  write_annotations(annotations_path(root), all);
}

}  // namespace anevrix
