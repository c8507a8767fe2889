#include "froc_svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace anevrix::cli {

namespace {

constexpr double kWidth = 480, kHeight = 360;
constexpr double kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string froc_svg(const FrocCurve& curve, double fp_max, const std::string& title) {
  if (!(fp_max > 0.0)) fp_max = 1.0;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double fp) { return kLeft + pw * std::min(fp, fp_max) / fp_max; };
  auto py = [&](double sens) { return kTop + ph * (1.0 - sens); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";

  for (int i = 0; i <= 5; ++i) {
    const double s = i / 5.0, y = py(s);
    os << "<line x1=\"" << kLeft << "\" y1=\"" << num(y) << "\" x2=\"" << kLeft + pw << "\" y2=\"" << num(y)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << num(s) << "</text>\n";
    const double fp = fp_max * i / 5.0, x = px(fp);
    os << "<line x1=\"" << num(x) << "\" y1=\"" << kTop << "\" x2=\"" << num(x) << "\" y2=\"" << kTop + ph
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << num(x) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">" << num(fp)
       << "</text>\n";
  }
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12
     << "\" text-anchor=\"middle\">average false positives per subject</text>\n";
  os << "<text transform=\"translate(16," << kTop + ph / 2
     << ") rotate(-90)\" text-anchor=\"middle\">sensitivity</text>\n";

  // Points come threshold-descending, so avg_fp is non-decreasing.
  std::ostringstream pts;
  pts << num(px(0.0)) << ',' << num(py(0.0));
  double last = 0.0;
  for (const auto& p : curve.points) {
    if (p.avg_fp > fp_max) break;
    pts << ' ' << num(px(p.avg_fp)) << ',' << num(py(p.sensitivity));
    last = p.sensitivity;
  }
  pts << ' ' << num(px(fp_max)) << ',' << num(py(last));
  os << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"" << pts.str() << "\"/>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace anevrix::cli
