#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>
#include <string>

#include "patchlab/harness.hpp"

namespace patchlab {
namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 60, kRight = 160, kTop = 20, kBottom = 50;

constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                              "#9467bd", "#8c564b", "#e377c2", "#17becf"};

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

std::string render_accuracy_svg(const std::vector<SweepSummary>& summaries) {
  double x_max = 1.0;
  for (const auto& s : summaries) {
    for (const auto& l : s.levels) x_max = std::max(x_max, l.level);
  }
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const auto px = [&](double x) { return kLeft + plot_w * x / x_max; };
  const auto py = [&](double y) { return kTop + plot_h * (1.0 - y); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\""
     << num(kHeight) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(plot_w)
     << "\" height=\"" << num(plot_h) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = i / 5.0;
    os << "<line x1=\"" << num(kLeft - 4) << "\" y1=\"" << num(py(y)) << "\" x2=\""
       << num(kLeft) << "\" y2=\"" << num(py(y)) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(py(y) + 4)
       << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
    const double x = x_max * i / 5.0;
    os << "<line x1=\"" << num(px(x)) << "\" y1=\"" << num(kTop + plot_h) << "\" x2=\""
       << num(px(x)) << "\" y2=\"" << num(kTop + plot_h + 4) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(px(x)) << "\" y=\"" << num(kTop + plot_h + 16)
       << "\" text-anchor=\"middle\">" << num(x) << "</text>\n";
  }
  os << "<text x=\"" << num(kLeft + plot_w / 2) << "\" y=\"" << num(kHeight - 10)
     << "\" text-anchor=\"middle\">information loss</text>\n";
  os << "<text x=\"14\" y=\"" << num(kTop + plot_h / 2) << "\" text-anchor=\"middle\" "
     << "transform=\"rotate(-90 14 " << num(kTop + plot_h / 2) << ")\">top-1 accuracy</text>\n";

  for (std::size_t si = 0; si < summaries.size(); ++si) {
    const auto& s = summaries[si];
    const char* colour = kPalette[si % kPalette.size()];
    std::vector<LevelSummary> pts = s.levels;
    std::stable_sort(pts.begin(), pts.end(),
                     [](const LevelSummary& a, const LevelSummary& b) { return a.level < b.level; });
    if (pts.size() >= 2) {
      os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < pts.size(); ++i) {
        os << (i ? " " : "") << num(px(pts[i].level)) << ',' << num(py(pts[i].top1_acc));
      }
      os << "\"/>\n";
    }
    for (const auto& p : pts) {
      os << "<circle cx=\"" << num(px(p.level)) << "\" cy=\"" << num(py(p.top1_acc))
         << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
    }
    const double ly = kTop + 14 + 18.0 * static_cast<double>(si);
    const double lx = kWidth - kRight + 12;
    os << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(lx + 20)
       << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(lx + 26) << "\" y=\"" << num(ly) << "\">" << escape(s.label)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace patchlab
