#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace anevrix {

enum class Sex { M, F };

struct SubjectRecord {
  std::string subject_id;                // e.g. "sub-001"
  std::vector<std::string> session_ids;  // "" when the dataset has no session level
  std::map<std::string, std::filesystem::path> angio_paths;
  std::map<std::string, std::filesystem::path> label_paths;
  std::optional<int> age_years;
  std::optional<Sex> sex;

  bool operator==(const SubjectRecord&) const = default;
};

struct IndexOptions {
  // fnmatch(3) pattern for angiography files inside anat/.
  std::string angio_glob = "*_angio.nii*";
  // Mask files under derivatives/<labels_dir>/sub-*/[ses-*/]anat/.
  std::string labels_dir = "manual_masks";
  std::string label_glob = "*.nii*";
};

struct IndexResult {
  std::vector<SubjectRecord> subjects;
  // Skipped participants.tsv rows and other non-fatal findings.
  std::vector<std::string> warnings;
};

// Walks root/sub-*/[ses-*/]anat/ for angiography files. Output is sorted by
// subject id and session id regardless of directory iteration order.
IndexResult index_dataset(const std::filesystem::path& root, const IndexOptions& options = {});

struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> fold_of_subject;

  std::vector<std::string> subjects_in_fold(int fold) const;
  bool operator==(const FoldAssignment&) const = default;
};

// Sorts subject ids, applies a Fisher-Yates shuffle driven by
// std::mt19937_64(seed) with rejection-sampled bounded draws, then deals
// subjects round-robin into k folds. Every session of a subject shares its fold.
FoldAssignment grouped_kfold(std::span<const SubjectRecord> subjects, int k, std::uint64_t seed);
FoldAssignment grouped_kfold(std::vector<std::string> subject_ids, int k, std::uint64_t seed);

// CSV with header subject_id,fold.
std::string format_folds(const FoldAssignment& folds);
FoldAssignment parse_folds(std::string_view text, std::string_view source = "<memory>");
FoldAssignment read_folds(const std::filesystem::path& path);

// CSV with header subject_id,session_id,angio_path,label_path,age,sex.
std::string format_subjects(std::span<const SubjectRecord> subjects);

}  // namespace anevrix
