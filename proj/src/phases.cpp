#include "anevrix/phases.hpp"

#include "anevrix/errors.hpp"
#include "anevrix/table.hpp"

namespace anevrix {

std::string_view to_string(RiskGroup g) {
  switch (g) {
    case RiskGroup::low_risk: return "low_risk";
    case RiskGroup::medium_risk: return "medium_risk";
    case RiskGroup::excluded: return "excluded";
  }
  return "?";
}

bool eligible(const PhasesInput& input) {
  return input.shape != LesionShape::fusiform && !input.extracranial_carotid;
}

int phases_partial_score(const PhasesInput& input) {
  if (!eligible(input)) throw ValidationError("phases: fusiform or extracranial carotid lesions are not scored");
  if (input.age_years < 0) throw ValidationError("phases: age must be >= 0");
  if (!(input.size_mm > 0.0)) throw ValidationError("phases: size must be positive");
  int points = input.age_years >= 70 ? 1 : 0;
  switch (input.location) {
    case LesionLocation::ICA: break;
    case LesionLocation::MCA: points += 2; break;
    case LesionLocation::ACA_Pcom_Posterior: points += 4; break;
  }
  const double s = input.size_mm;
  points += s < 7.0 ? 0 : s < 10.0 ? 3 : s < 20.0 ? 6 : 10;
  return points;
}

RiskGroup risk_group(int score) {
  if (score < 0) throw ValidationError("risk_group: score must be >= 0");
  return score <= 4 ? RiskGroup::low_risk : RiskGroup::medium_risk;
}

RiskGroup classify(const PhasesInput& input) {
  return eligible(input) ? risk_group(phases_partial_score(input)) : RiskGroup::excluded;
}

std::string_view to_string(StratifyAxis a) {
  switch (a) {
    case StratifyAxis::risk: return "risk";
    case StratifyAxis::location: return "location";
    case StratifyAxis::size: return "size";
    case StratifyAxis::fine_size: return "fine_size";
  }
  return "?";
}

StratifyAxis parse_axis(std::string_view text) {
  for (auto a : {StratifyAxis::risk, StratifyAxis::location, StratifyAxis::size, StratifyAxis::fine_size}) {
    if (text == to_string(a)) return a;
  }
  throw ValidationError("unknown stratification axis '" + std::string(text) + "'");
}

std::vector<std::string> axis_groups(StratifyAxis axis) {
  switch (axis) {
    case StratifyAxis::risk: return {"low_risk", "medium_risk"};
    case StratifyAxis::location: return {"ICA", "MCA", "ACA/Pcom/Posterior"};
    case StratifyAxis::size: return {"<7", "7-9.9", "10-19.9", ">=20"};
    case StratifyAxis::fine_size: return {"<=3", "3-5", "5-7"};
  }
  return {};
}

namespace {

void require_size(const AneurysmAnnotation& a) {
  if (!(a.max_diameter > 0.0)) {
    throw ValidationError("lesion " + a.lesion_id + " of " + a.subject + " has no max_diameter");
  }
}

void require_location(const AneurysmAnnotation& a) {
  if (!a.location) throw ValidationError("lesion " + a.lesion_id + " of " + a.subject + " has no location");
}

}  // namespace

std::optional<std::string> stratum_of(const AneurysmAnnotation& a, std::optional<int> age, StratifyAxis axis) {
  const auto groups = axis_groups(axis);
  switch (axis) {
    case StratifyAxis::location:
      require_location(a);
      return std::string(groups[static_cast<int>(*a.location)]);
    case StratifyAxis::size: {
      require_size(a);
      const double s = a.max_diameter;
      return groups[s < 7.0 ? 0 : s < 10.0 ? 1 : s < 20.0 ? 2 : 3];
    }
    case StratifyAxis::fine_size: {
      require_size(a);
      const double s = a.max_diameter;
      if (s >= 7.0) return std::nullopt;
      return groups[s <= 3.0 ? 0 : s <= 5.0 ? 1 : 2];
    }
    case StratifyAxis::risk: {
      PhasesInput in;
      in.shape = a.shape;
      in.extracranial_carotid = a.extracranial_carotid;
      if (!eligible(in)) return std::nullopt;
      require_location(a);
      require_size(a);
      if (!age) throw ValidationError("lesion " + a.lesion_id + ": subject " + a.subject + " has no age");
      in.age_years = *age;
      in.location = *a.location;
      in.size_mm = a.max_diameter;
      return std::string(to_string(classify(in)));
    }
  }
  return std::nullopt;
}

std::vector<EvaluatedLesion> evaluated_lesions(std::span<const DetectionOutcome> outcomes,
                                               std::span<const std::vector<AneurysmAnnotation>> annotations,
                                               const std::map<std::string, int>& age_of_subject) {
  if (outcomes.size() != annotations.size()) {
    throw ValidationError("evaluated_lesions: one annotation list per outcome is required");
  }
  std::vector<EvaluatedLesion> out;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    std::vector<char> hit(annotations[i].size(), 0);
    for (const auto& m : outcomes[i].matches) hit.at(m.annotation) = 1;
    for (std::size_t a = 0; a < annotations[i].size(); ++a) {
      EvaluatedLesion l;
      l.annotation = annotations[i][a];
      l.detected = hit[a] != 0;
      const auto& subject = l.annotation.subject.empty() ? outcomes[i].subject : l.annotation.subject;
      const auto it = age_of_subject.find(subject);
      if (it != age_of_subject.end()) l.age = it->second;
      out.push_back(std::move(l));
    }
  }
  return out;
}

Stratification stratify(std::span<const EvaluatedLesion> lesions, StratifyAxis axis) {
  Stratification s;
  s.axis = axis;
  for (auto& g : axis_groups(axis)) s.rows.push_back({g, 0, 0, std::nullopt});
  for (const auto& l : lesions) {
    const auto g = stratum_of(l.annotation, l.age, axis);
    if (!g) continue;
    for (auto& row : s.rows) {
      if (row.group == *g) {
        ++row.total;
        if (l.detected) ++row.tp;
      }
    }
  }
  std::vector<double> tp, fn;
  for (auto& row : s.rows) {
    if (row.total == 0) continue;
    row.sensitivity = static_cast<double>(row.tp) / row.total;
    tp.push_back(row.tp);
    fn.push_back(row.total - row.tp);
  }
  if (tp.size() < 2) {
    s.test_skipped = "dof 0";
  } else {
    double sum_tp = 0.0, sum_fn = 0.0;
    for (std::size_t i = 0; i < tp.size(); ++i) {
      sum_tp += tp[i];
      sum_fn += fn[i];
    }
    if (sum_tp == 0.0 || sum_fn == 0.0) {
      s.test_skipped = "zero margin";
    } else {
      s.test = chi_squared({tp, fn});
    }
  }
  return s;
}

std::string format_stratifications(std::span<const Stratification> tables) {
  Table t({"axis", "group", "tp", "total", "sensitivity"});
  for (const auto& s : tables) {
    const std::string axis(to_string(s.axis));
    for (const auto& r : s.rows) {
      t.add_row({axis, r.group, std::to_string(r.tp), std::to_string(r.total),
                 r.sensitivity ? format_double(*r.sensitivity) : ""});
    }
    if (s.test) {
      t.add_row({axis, "chi_squared", format_double(s.test->chi2), std::to_string(s.test->dof),
                 format_double(s.test->p)});
    } else {
      t.add_row({axis, "chi_squared", "", "", ""});
    }
  }
  return t.str();
}

}  // namespace anevrix
