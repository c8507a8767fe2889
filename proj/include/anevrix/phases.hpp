#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anevrix/evaluation.hpp"
#include "anevrix/weak_labels.hpp"

namespace anevrix {

struct PhasesInput {
  int age_years = 0;
  LesionLocation location = LesionLocation::ICA;
  double size_mm = 0.0;
  LesionShape shape = LesionShape::saccular;
  bool extracranial_carotid = false;
};

enum class RiskGroup { low_risk, medium_risk, excluded };
std::string_view to_string(RiskGroup g);

// Fusiform and extracranial carotid lesions fall outside the score.
bool eligible(const PhasesInput& input);

// Age, location and size points only (population, hypertension and earlier
// hemorrhage are not scored). Size bins are left-closed.
int phases_partial_score(const PhasesInput& input);

// <= 4 low, otherwise medium.
RiskGroup risk_group(int score);
RiskGroup classify(const PhasesInput& input);

// Scores next to the low/medium cut go to manual review.
inline bool needs_review(int score) { return score == 4 || score == 5; }

enum class StratifyAxis { risk, location, size, fine_size };
std::string_view to_string(StratifyAxis a);
StratifyAxis parse_axis(std::string_view text);

// Group label on an axis, or nullopt when the lesion does not belong to the
// axis (ineligible for risk, >= 7 mm for fine_size). Throws when the axis
// attribute is missing.
std::optional<std::string> stratum_of(const AneurysmAnnotation& annotation, std::optional<int> age,
                                      StratifyAxis axis);
std::vector<std::string> axis_groups(StratifyAxis axis);

struct EvaluatedLesion {
  AneurysmAnnotation annotation;
  bool detected = false;
  std::optional<int> age;
};

// Pairs every annotation with its detection flag and its subject's age.
std::vector<EvaluatedLesion> evaluated_lesions(std::span<const DetectionOutcome> outcomes,
                                               std::span<const std::vector<AneurysmAnnotation>> annotations,
                                               const std::map<std::string, int>& age_of_subject = {});

struct StratumRow {
  std::string group;
  int tp = 0;
  int total = 0;
  std::optional<double> sensitivity;  // empty for groups without lesions
};

struct Stratification {
  StratifyAxis axis = StratifyAxis::risk;
  std::vector<StratumRow> rows;
  std::optional<ChiSquaredResult> test;
  std::string test_skipped;  // reason when `test` is empty
};

// Groups are emitted in fixed axis order, empty ones included. The chi-square
// test runs on the detected/missed x non-empty-group table and is skipped
// when it has dof 0 or a zero margin.
Stratification stratify(std::span<const EvaluatedLesion> lesions, StratifyAxis axis);

// axis,group,tp,total,sensitivity; each axis ends with a footer row whose
// group is "chi_squared" and whose tp,total,sensitivity fields hold chi2,dof,p.
std::string format_stratifications(std::span<const Stratification> tables);

}  // namespace anevrix
