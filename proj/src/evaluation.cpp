#include "anevrix/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <boost/math/distributions/normal.hpp>

#include "anevrix/errors.hpp"
#include "anevrix/table.hpp"

namespace anevrix {

double match_bound(const AneurysmAnnotation& a, MatchBound bound) {
  return bound == MatchBound::max_diameter ? a.max_diameter : a.radius;
}

namespace {

// Candidate order that ignores input position, so outcomes are input-order invariant.
std::vector<int> canonical_order(std::span<const CandidateDetection> c) {
  std::vector<int> idx(c.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    const auto& x = c[a];
    const auto& y = c[b];
    if (x.center != y.center) return x.center < y.center;
    if (x.score != y.score) return x.score > y.score;
    return x.voxel_count > y.voxel_count;
  });
  return idx;
}

// Minimum-cost perfect assignment on a square matrix; returns the column of each row.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) col_of_row[p[j] - 1] = j - 1;
  }
  return col_of_row;
}

}  // namespace

DetectionOutcome match_detections(std::span<const CandidateDetection> candidates,
                                  std::span<const AneurysmAnnotation> annotations, const MatchOptions& options,
                                  std::string subject) {
  DetectionOutcome out;
  out.subject = std::move(subject);
  const int nc = static_cast<int>(candidates.size());
  const int na = static_cast<int>(annotations.size());
  const auto order = canonical_order(candidates);

  std::vector<std::vector<double>> dist(nc, std::vector<double>(na));
  std::vector<std::vector<char>> ok(nc, std::vector<char>(na));
  double total = 0.0;
  for (int r = 0; r < nc; ++r) {
    for (int a = 0; a < na; ++a) {
      dist[r][a] = distance(candidates[order[r]].center, annotations[a].center);
      ok[r][a] = dist[r][a] <= match_bound(annotations[a], options.bound);
      if (ok[r][a]) total += dist[r][a];
    }
  }

  std::vector<int> ann_of(nc, -1);  // by canonical rank
  if (options.strategy == MatchStrategy::greedy) {
    struct Pair {
      double d;
      int a, r;
    };
    std::vector<Pair> pairs;
    for (int r = 0; r < nc; ++r) {
      for (int a = 0; a < na; ++a) {
        if (ok[r][a]) pairs.push_back({dist[r][a], a, r});
      }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
      if (x.d != y.d) return x.d < y.d;
      if (x.a != y.a) return x.a < y.a;
      return x.r < y.r;
    });
    std::vector<char> taken(na, 0);
    for (const auto& p : pairs) {
      if (ann_of[p.r] >= 0 || taken[p.a]) continue;
      ann_of[p.r] = p.a;
      taken[p.a] = 1;
    }
  } else if (nc > 0 && na > 0) {
    // Each feasible match is worth more than any achievable distance saving.
    const double bonus = total + 1.0;
    const int n = std::max(nc, na);
    std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
    for (int r = 0; r < nc; ++r) {
      for (int a = 0; a < na; ++a) {
        if (ok[r][a]) cost[r][a] = dist[r][a] - bonus;
      }
    }
    const auto col = hungarian(cost);
    for (int r = 0; r < nc; ++r) {
      if (col[r] < na && ok[r][col[r]]) ann_of[r] = col[r];
    }
  }

  std::vector<char> ann_matched(na, 0);
  for (int r = 0; r < nc; ++r) {
    if (ann_of[r] >= 0) {
      out.matches.push_back({order[r], ann_of[r], dist[r][ann_of[r]]});
      ann_matched[ann_of[r]] = 1;
    } else {
      out.false_positives.push_back(order[r]);
    }
  }
  std::sort(out.matches.begin(), out.matches.end(),
            [](const MatchedPair& a, const MatchedPair& b) { return a.candidate < b.candidate; });
  std::sort(out.false_positives.begin(), out.false_positives.end());
  for (int a = 0; a < na; ++a) {
    if (!ann_matched[a]) out.false_negatives.push_back(a);
  }
  return out;
}

double sensitivity(std::span<const DetectionOutcome> outcomes) {
  long tp = 0, total = 0;
  for (const auto& o : outcomes) {
    tp += o.tp();
    total += o.tp() + o.fn();
  }
  if (total == 0) throw ValidationError("sensitivity: no annotations across outcomes");
  return static_cast<double>(tp) / static_cast<double>(total);
}

double fp_rate(std::span<const DetectionOutcome> outcomes) {
  if (outcomes.empty()) throw ValidationError("fp_rate: no outcomes");
  long fp = 0;
  for (const auto& o : outcomes) fp += o.fp();
  return static_cast<double>(fp) / static_cast<double>(outcomes.size());
}

std::vector<double> default_thresholds(std::span<const SubjectEvaluation> subjects) {
  std::set<double, std::greater<>> scores{1.0};
  for (const auto& s : subjects) {
    for (const auto& c : s.candidates) scores.insert(c.score);
  }
  return {scores.begin(), scores.end()};
}

FrocCurve froc(std::span<const SubjectEvaluation> subjects, std::optional<std::vector<double>> thresholds,
               const MatchOptions& options) {
  if (subjects.empty()) throw ValidationError("froc: no subjects");
  const auto th = thresholds ? std::move(*thresholds) : default_thresholds(subjects);
  for (std::size_t i = 1; i < th.size(); ++i) {
    if (!(th[i] <= th[i - 1])) throw ValidationError("froc: thresholds must be sorted in descending order");
  }
  for (const auto& s : subjects) {
    for (const auto& c : s.candidates) {
      if (!(c.score >= 0.0 && c.score <= 1.0)) {
        throw ValidationError("froc: candidate score outside [0,1] for subject " + s.subject);
      }
    }
  }
  long annotations = 0;
  for (const auto& s : subjects) annotations += static_cast<long>(s.annotations.size());

  FrocCurve curve;
  std::vector<CandidateDetection> kept;
  for (double theta : th) {
    FrocPoint pt;
    pt.threshold = theta;
    for (const auto& s : subjects) {
      kept.clear();
      for (const auto& c : s.candidates) {
        if (c.score >= theta) kept.push_back(c);
      }
      const auto o = match_detections(kept, s.annotations, options, s.subject);
      pt.tp += o.tp();
      pt.fp += o.fp();
      pt.fn += o.fn();
    }
    pt.avg_fp = static_cast<double>(pt.fp) / static_cast<double>(subjects.size());
    pt.sensitivity = annotations > 0 ? static_cast<double>(pt.tp) / static_cast<double>(annotations) : 0.0;
    curve.points.push_back(pt);
  }
  return curve;
}

double auc_froc(const FrocCurve& curve, double fp_max) {
  if (!(fp_max > 0.0)) throw ValidationError("auc_froc: fp_max must be positive");
  double x0 = 0.0, y0 = 0.0, area = 0.0;
  for (const auto& p : curve.points) {
    const double x1 = p.avg_fp, y1 = p.sensitivity;
    if (x1 < x0) throw ValidationError("auc_froc: avg_fp must be non-decreasing along the curve");
    if (x1 >= fp_max) {
      const double y_at = x1 > x0 ? y0 + (y1 - y0) * (fp_max - x0) / (x1 - x0) : y1;
      area += 0.5 * (y0 + y_at) * (fp_max - x0);
      return area / fp_max;
    }
    area += 0.5 * (y0 + y1) * (x1 - x0);
    x0 = x1;
    y0 = y1;
  }
  area += y0 * (fp_max - x0);
  return area / fp_max;
}

WilsonInterval wilson_ci(int successes, int n, double confidence) {
  if (n < 1) throw ValidationError("wilson_ci: n must be >= 1");
  if (successes < 0 || successes > n) throw ValidationError("wilson_ci: successes must lie in [0, n]");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ValidationError("wilson_ci: confidence must lie in (0,1)");
  const double z = boost::math::quantile(boost::math::normal(), 1.0 - (1.0 - confidence) / 2.0);
  const double nn = n;
  const double p = successes / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  WilsonInterval w;
  w.point = p;
  w.confidence = confidence;
  w.lower = successes == 0 ? 0.0 : std::clamp(center - half, 0.0, p);
  w.upper = successes == n ? 1.0 : std::clamp(center + half, p, 1.0);
  return w;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y, WilcoxonMethod method) {
  if (x.size() != y.size()) throw ValidationError("wilcoxon: samples have different lengths");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    if (!std::isfinite(diff)) throw ValidationError("wilcoxon: non-finite difference");
    if (diff != 0.0) d.push_back(diff);
  }
  if (d.empty()) throw ValidationError("wilcoxon: all differences are zero");
  const int n = static_cast<int>(d.size());
  if (n < 5) throw ValidationError("wilcoxon: fewer than 5 nonzero differences");

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<double> rank(n);
  double tie_term = 0.0;
  for (int i = 0; i < n;) {
    int j = i;
    while (j + 1 < n && std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]])) ++j;
    const double mid = 0.5 * (i + j) + 1.0;
    for (int k = i; k <= j; ++k) rank[idx[k]] = mid;
    const double t = j - i + 1;
    tie_term += t * t * t - t;
    i = j + 1;
  }
  double w_pos = 0.0, w_neg = 0.0;
  for (int i = 0; i < n; ++i) (d[i] > 0 ? w_pos : w_neg) += rank[i];

  WilcoxonResult r;
  r.n = n;
  r.w = std::min(w_pos, w_neg);
  if (method == WilcoxonMethod::normal) {
    const double nn = n;
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    if (!(var > 0.0)) throw ValidationError("wilcoxon: zero variance");
    r.z = (r.w - mean) / std::sqrt(var);
    r.p = std::min(1.0, std::erfc(std::abs(r.z) / std::sqrt(2.0)));
    return r;
  }

  // Mid-ranks are multiples of 1/2, so doubled ranks are integers.
  std::vector<int> twice(n);
  int total = 0;
  for (int i = 0; i < n; ++i) {
    twice[i] = static_cast<int>(std::lround(2.0 * rank[i]));
    total += twice[i];
  }
  std::vector<double> ways(total + 1, 0.0);
  ways[0] = 1.0;
  for (int t : twice) {
    for (int s = total; s >= t; --s) ways[s] += ways[s - t];
  }
  const int w2 = static_cast<int>(std::lround(2.0 * r.w));
  double hits = 0.0;
  for (int s = 0; s <= total; ++s) {
    if (std::min(s, total - s) <= w2) hits += ways[s];
  }
  r.p = std::min(1.0, hits / std::ldexp(1.0, n));
  return r;
}

namespace {

double gamma_p_series(double a, double x) {
  double term = 1.0 / a, sum = term;
  for (int n = 1; n < 10000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_q(double a, double x) {
  if (!(a > 0.0)) throw ValidationError("gamma_q: a must be positive");
  if (!(x >= 0.0)) throw ValidationError("gamma_q: x must be >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return std::clamp(1.0 - gamma_p_series(a, x), 0.0, 1.0);
  return std::clamp(gamma_q_fraction(a, x), 0.0, 1.0);
}

double chi_squared_sf(double chi2, int dof) {
  if (dof < 1) throw ValidationError("chi_squared_sf: dof must be >= 1");
  if (!(chi2 >= 0.0)) throw ValidationError("chi_squared_sf: statistic must be >= 0");
  return gamma_q(0.5 * dof, 0.5 * chi2);
}

ChiSquaredResult chi_squared(const std::vector<std::vector<double>>& table) {
  const std::size_t rows = table.size();
  if (rows < 2) throw ValidationError("chi_squared: need at least 2 rows");
  const std::size_t cols = table[0].size();
  if (cols < 2) throw ValidationError("chi_squared: need at least 2 columns");
  std::vector<double> rt(rows, 0.0), ct(cols, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (table[r].size() != cols) throw ValidationError("chi_squared: ragged table");
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = table[r][c];
      if (!(v >= 0.0)) throw ValidationError("chi_squared: counts must be non-negative");
      rt[r] += v;
      ct[c] += v;
      total += v;
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (rt[r] == 0.0) throw ValidationError("chi_squared: row " + std::to_string(r) + " has zero total");
  }
  for (std::size_t c = 0; c < cols; ++c) {
    if (ct[c] == 0.0) throw ValidationError("chi_squared: column " + std::to_string(c) + " has zero total");
  }
  ChiSquaredResult res;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = rt[r] * ct[c] / total;
      const double diff = table[r][c] - e;
      res.chi2 += diff * diff / e;
    }
  }
  res.dof = static_cast<int>((rows - 1) * (cols - 1));
  res.p = chi_squared_sf(res.chi2, res.dof);
  return res;
}

std::string format_outcomes(std::span<const DetectionOutcome> outcomes,
                            std::span<const std::vector<AneurysmAnnotation>> annotations) {
  if (annotations.size() != outcomes.size()) {
    throw ValidationError("format_outcomes: one annotation list per outcome is required");
  }
  Table t({"subject", "kind", "candidate_index", "lesion_id", "distance_mm"});
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    const auto& anns = annotations[i];
    for (const auto& m : o.matches) {
      t.add_row({o.subject, "TP", std::to_string(m.candidate), anns.at(m.annotation).lesion_id,
                 format_double(m.distance)});
    }
    for (int c : o.false_positives) t.add_row({o.subject, "FP", std::to_string(c), "", ""});
    for (int a : o.false_negatives) t.add_row({o.subject, "FN", "", anns.at(a).lesion_id, ""});
  }
  return t.str();
}

std::string format_froc(const FrocCurve& curve) {
  Table t({"threshold", "avg_fp", "sensitivity"});
  for (const auto& p : curve.points) {
    t.add_row({format_double(p.threshold), format_double(p.avg_fp), format_double(p.sensitivity)});
  }
  return t.str();
}

FrocCurve parse_froc(std::string_view text, std::string_view source) {
  const Table t = Table::parse(text, ',', source);
  const auto c_th = t.require_column("threshold");
  const auto c_fp = t.require_column("avg_fp");
  const auto c_s = t.require_column("sensitivity");
  FrocCurve curve;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    const auto& row = t.rows()[r];
    const std::string where = t.source() + ":" + std::to_string(t.line_of(r));
    if (row.size() != t.header().size()) throw ValidationError(where + ": wrong field count");
    try {
      FrocPoint p;
      p.threshold = parse_double(row[c_th], "threshold");
      p.avg_fp = parse_double(row[c_fp], "avg_fp");
      p.sensitivity = parse_double(row[c_s], "sensitivity");
      curve.points.push_back(p);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return curve;
}

}  // namespace anevrix
