#pragma once

#include <string>

#include "anevrix/evaluation.hpp"

namespace anevrix::cli {

// Step-free line chart of sensitivity against average false positives per
// subject, from (0,0) through the curve points out to `fp_max`.
std::string froc_svg(const FrocCurve& curve, double fp_max, const std::string& title);

}  // namespace anevrix::cli
