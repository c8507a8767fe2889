#include "anevrix/bids_layout.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <set>

#include "anevrix/errors.hpp"
#include "anevrix/random.hpp"
#include "anevrix/table.hpp"

namespace anevrix {

namespace fs = std::filesystem;

namespace {

bool glob_match(const std::string& pattern, const std::string& name) {
  return fnmatch(pattern.c_str(), name.c_str(), 0) == 0;
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool want_dirs, std::string_view prefix) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  fs::directory_iterator it(dir, ec);
  if (ec) throw IoError("cannot read directory " + dir.string() + ": " + ec.message());
  for (const auto& entry : it) {
    const std::string name = entry.path().filename().string();
    if (!name.starts_with(prefix)) continue;
    if (entry.is_directory() != want_dirs) continue;
    out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<fs::path> first_match(const fs::path& dir, const std::string& pattern) {
  for (const auto& f : sorted_entries(dir, false, "")) {
    if (glob_match(pattern, f.filename().string())) return f;
  }
  return std::nullopt;
}

void read_participants(const fs::path& tsv, std::map<std::string, SubjectRecord*>& by_id,
                       std::vector<std::string>& warnings) {
  const Table t = Table::read(tsv, '\t');
  const auto c_id = t.column("participant_id");
  if (!c_id) {
    warnings.push_back(tsv.string() + ": no participant_id column; demographics ignored");
    return;
  }
  const auto c_age = t.column("age");
  const auto c_sex = t.column("sex");
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    const auto& row = t.rows()[r];
    const std::string where = tsv.string() + ":" + std::to_string(t.line_of(r));
    if (row.size() != t.header().size()) {
      warnings.push_back(where + ": expected " + std::to_string(t.header().size()) + " fields, row skipped");
      continue;
    }
    auto it = by_id.find(row[*c_id]);
    if (it == by_id.end()) continue;
    std::optional<int> age;
    std::optional<Sex> sex;
    try {
      if (c_age && !row[*c_age].empty() && row[*c_age] != "n/a") {
        const double a = parse_double(row[*c_age], "age");
        if (a < 0) throw ValidationError("age: negative");
        age = static_cast<int>(a);
      }
      if (c_sex && !row[*c_sex].empty() && row[*c_sex] != "n/a") {
        const std::string& s = row[*c_sex];
        if (s == "M" || s == "m" || s == "male") {
          sex = Sex::M;
        } else if (s == "F" || s == "f" || s == "female") {
          sex = Sex::F;
        } else {
          throw ValidationError("sex: unrecognized value '" + s + "'");
        }
      }
    } catch (const ValidationError& e) {
      warnings.push_back(where + ": " + e.what() + ", row skipped");
      continue;
    }
    it->second->age_years = age;
    it->second->sex = sex;
  }
}

}  // namespace

IndexResult index_dataset(const fs::path& root, const IndexOptions& options) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("dataset root is not a readable directory: " + root.string());

  IndexResult result;
  const fs::path labels_root = root / "derivatives" / options.labels_dir;

  for (const auto& sub_dir : sorted_entries(root, true, "sub-")) {
    SubjectRecord rec;
    rec.subject_id = sub_dir.filename().string();

    auto scan_anat = [&](const fs::path& anat_dir, const std::string& session, const fs::path& rel) {
      const auto angio = first_match(anat_dir, options.angio_glob);
      if (!angio) return;
      rec.session_ids.push_back(session);
      rec.angio_paths[session] = *angio;
      if (auto label = first_match(labels_root / rel / "anat", options.label_glob)) {
        rec.label_paths[session] = *label;
      }
    };

    const auto sessions = sorted_entries(sub_dir, true, "ses-");
    if (sessions.empty()) {
      scan_anat(sub_dir / "anat", "", fs::path(rec.subject_id));
    } else {
      for (const auto& ses_dir : sessions) {
        const std::string ses = ses_dir.filename().string();
        scan_anat(ses_dir / "anat", ses, fs::path(rec.subject_id) / ses);
      }
    }
    if (!rec.session_ids.empty()) result.subjects.push_back(std::move(rec));
  }

  const fs::path participants = root / "participants.tsv";
  if (fs::exists(participants, ec)) {
    std::map<std::string, SubjectRecord*> by_id;
    for (auto& s : result.subjects) by_id[s.subject_id] = &s;
    read_participants(participants, by_id, result.warnings);
  }
  return result;
}

std::vector<std::string> FoldAssignment::subjects_in_fold(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : fold_of_subject) {
    if (f == fold) out.push_back(id);
  }
  return out;
}

FoldAssignment grouped_kfold(std::vector<std::string> ids, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("grouped_kfold: k must be >= 2");
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < static_cast<std::size_t>(k)) {
    throw ValidationError("grouped_kfold: " + std::to_string(ids.size()) + " subjects for " + std::to_string(k) +
                          " folds");
  }
  Rng rng(seed);
  for (std::size_t i = ids.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(ids[i], ids[j]);
  }
  FoldAssignment out;
  out.k = k;
  for (std::size_t i = 0; i < ids.size(); ++i) out.fold_of_subject[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return out;
}

FoldAssignment grouped_kfold(std::span<const SubjectRecord> subjects, int k, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(subjects.size());
  for (const auto& s : subjects) ids.push_back(s.subject_id);
  return grouped_kfold(std::move(ids), k, seed);
}

std::string format_folds(const FoldAssignment& folds) {
  Table t({"subject_id", "fold"});
  for (const auto& [id, f] : folds.fold_of_subject) t.add_row({id, std::to_string(f)});
  return t.str();
}

FoldAssignment parse_folds(std::string_view text, std::string_view source) {
  const Table t = Table::parse(text, ',', source);
  const auto c_id = t.require_column("subject_id");
  const auto c_fold = t.require_column("fold");
  FoldAssignment out;
  int max_fold = -1;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    const auto& row = t.rows()[r];
    const std::string where = t.source() + ":" + std::to_string(t.line_of(r));
    if (row.size() != t.header().size()) throw ValidationError(where + ": wrong field count");
    const auto fold = parse_int(row[c_fold], where + ": fold");
    if (fold < 0) throw ValidationError(where + ": negative fold");
    if (row[c_id].empty()) throw ValidationError(where + ": empty subject_id");
    if (!out.fold_of_subject.emplace(row[c_id], static_cast<int>(fold)).second) {
      throw ValidationError(where + ": subject " + row[c_id] + " assigned twice");
    }
    max_fold = std::max(max_fold, static_cast<int>(fold));
  }
  out.k = max_fold + 1;
  return out;
}

FoldAssignment read_folds(const fs::path& path) { return parse_folds(read_text_file(path), path.string()); }

std::string format_subjects(std::span<const SubjectRecord> subjects) {
  Table t({"subject_id", "session_id", "angio_path", "label_path", "age", "sex"});
  for (const auto& s : subjects) {
    for (const auto& ses : s.session_ids) {
      const auto label = s.label_paths.find(ses);
      t.add_row({s.subject_id, ses, s.angio_paths.at(ses).generic_string(),
                 label == s.label_paths.end() ? std::string() : label->second.generic_string(),
                 s.age_years ? std::to_string(*s.age_years) : std::string(),
                 s.sex ? std::string(*s.sex == Sex::M ? "M" : "F") : std::string()});
    }
  }
  return t.str();
}

}  // namespace anevrix
