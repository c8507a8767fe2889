#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anevrix/sliding_window.hpp"
#include "anevrix/weak_labels.hpp"

namespace anevrix {

// optimal: maximum number of matches, then minimum total distance.
// greedy: pairs taken in ascending distance order.
enum class MatchStrategy { optimal, greedy };
// Distance bound of an annotation: its max diameter or its sphere radius.
enum class MatchBound { max_diameter, radius };

struct MatchOptions {
  MatchStrategy strategy = MatchStrategy::optimal;
  MatchBound bound = MatchBound::max_diameter;
};

struct MatchedPair {
  int candidate = 0;
  int annotation = 0;
  double distance = 0.0;
};

struct DetectionOutcome {
  std::string subject;
  std::vector<MatchedPair> matches;    // ascending candidate index
  std::vector<int> false_positives;    // unmatched candidate indices
  std::vector<int> false_negatives;    // unmatched annotation indices

  int tp() const { return static_cast<int>(matches.size()); }
  int fp() const { return static_cast<int>(false_positives.size()); }
  int fn() const { return static_cast<int>(false_negatives.size()); }
};

double match_bound(const AneurysmAnnotation& a, MatchBound bound);

// Results do not depend on the order of `candidates`.
DetectionOutcome match_detections(std::span<const CandidateDetection> candidates,
                                  std::span<const AneurysmAnnotation> annotations, const MatchOptions& options = {},
                                  std::string subject = {});

double sensitivity(std::span<const DetectionOutcome> outcomes);
// False positives per evaluated subject, controls included.
double fp_rate(std::span<const DetectionOutcome> outcomes);

struct SubjectEvaluation {
  std::string subject;
  std::vector<CandidateDetection> candidates;
  std::vector<AneurysmAnnotation> annotations;
};

struct FrocPoint {
  double threshold = 0.0;
  double avg_fp = 0.0;
  double sensitivity = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

struct FrocCurve {
  std::vector<FrocPoint> points;  // threshold descending
};

// 1.0 followed by the distinct candidate scores, descending.
std::vector<double> default_thresholds(std::span<const SubjectEvaluation> subjects);

FrocCurve froc(std::span<const SubjectEvaluation> subjects, std::optional<std::vector<double>> thresholds = std::nullopt,
               const MatchOptions& options = {});

// Normalized trapezoidal area under sensitivity over avg_fp in [0, fp_max],
// starting from (0,0) and holding the last sensitivity out to fp_max.
double auc_froc(const FrocCurve& curve, double fp_max);

struct WilsonInterval {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double confidence = 0.95;
};

WilsonInterval wilson_ci(int successes, int n, double confidence = 0.95);

enum class WilcoxonMethod { normal, exact };

struct WilcoxonResult {
  double w = 0.0;
  double p = 1.0;
  int n = 0;  // nonzero differences
  double z = 0.0;  // normal method only
};

// Two-sided signed-rank test on x - y. Zero differences are dropped, ties get
// mid-ranks, W = min(W+, W-). The normal method uses the tie-corrected
// variance without continuity correction; the exact method counts all 2^n
// sign assignments of the observed ranks.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y,
                                    WilcoxonMethod method = WilcoxonMethod::normal);

// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);
double chi_squared_sf(double chi2, int dof);

struct ChiSquaredResult {
  double chi2 = 0.0;
  int dof = 0;
  double p = 1.0;
};

ChiSquaredResult chi_squared(const std::vector<std::vector<double>>& table);

// subject,kind,candidate_index,lesion_id,distance_mm with kind in {TP, FP, FN}
std::string format_outcomes(std::span<const DetectionOutcome> outcomes,
                            std::span<const std::vector<AneurysmAnnotation>> annotations);
// threshold,avg_fp,sensitivity
std::string format_froc(const FrocCurve& curve);
FrocCurve parse_froc(std::string_view text, std::string_view source = "<memory>");

}  // namespace anevrix
