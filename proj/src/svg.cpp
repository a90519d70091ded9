#include "mote/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace mote::svg {

namespace {

std::string rgb(int r, int g, int b) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

/// value in [-1, 1] -> blue-white-red
std::string diverging(Real v) {
  v = std::clamp(v, -1.0, 1.0);
  if (v >= 0) {
    const int g = static_cast<int>(std::lround(255 * (1.0 - v)));
    return rgb(255, g, g);
  }
  const int g = static_cast<int>(std::lround(255 * (1.0 + v)));
  return rgb(g, g, 255);
}

std::string fmt(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

const char* class_color(BehaviorClass c) {
  switch (c) {
    case BehaviorClass::Refused: return "#d62728";
    case BehaviorClass::Aligned: return "#1f77b4";
    case BehaviorClass::Reasoned: return "#2ca02c";
    case BehaviorClass::LangA: return "#9467bd";
    case BehaviorClass::LangB: return "#ff7f0e";
    case BehaviorClass::Unknown: return "#7f7f7f";
  }
  return "#7f7f7f";
}

std::string heatmap(const MatX& values, const std::vector<ExpertAddr>& marked,
                    const std::string& title) {
  const int rows = static_cast<int>(values.rows());
  const int cols = static_cast<int>(values.cols());
  const int cell = 14;
  const int left = 60, top = 40, bottom = 30;
  const int width = left + cols * cell + 20;
  const int height = top + rows * cell + bottom;

  Real scale = std::max(std::abs(values.maxCoeff()),
                        std::abs(values.minCoeff()));
  if (scale == 0) scale = 1.0;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" font-family=\"sans-serif\">\n";
  os << "<text x=\"" << left << "\" y=\"20\" font-size=\"13\">" << title
     << "</text>\n";
  for (int l = 0; l < rows; ++l) {
    for (int e = 0; e < cols; ++e) {
      os << "<rect x=\"" << left + e * cell << "\" y=\"" << top + l * cell
         << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
         << diverging(values(l, e) / scale) << "\" stroke=\"#cccccc\" "
         << "stroke-width=\"0.5\"><title>(" << l << ", " << e
         << ") = " << fmt(values(l, e)) << "</title></rect>\n";
    }
    os << "<text x=\"" << left - 8 << "\" y=\""
       << top + l * cell + cell - 3
       << "\" font-size=\"10\" text-anchor=\"end\">layer " << l
       << "</text>\n";
  }
  for (int e = 0; e < cols; e += 4)
    os << "<text x=\"" << left + e * cell + cell / 2 << "\" y=\""
       << top + rows * cell + 14
       << "\" font-size=\"9\" text-anchor=\"middle\">" << e << "</text>\n";
  for (const auto& a : marked) {
    if (a.layer_id < 0 || a.layer_id >= rows || a.expert_id < 0 ||
        a.expert_id >= cols)
      continue;
    os << "<circle cx=\"" << left + a.expert_id * cell + cell / 2.0
       << "\" cy=\"" << top + a.layer_id * cell + cell / 2.0 << "\" r=\""
       << cell / 2.0 + 1
       << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.6\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string scatter(const std::vector<ScatterPoint>& points,
                    const std::string& title) {
  const int size = 480;
  const int margin = 50;
  const int legend_w = 130;
  const int width = size + 2 * margin + legend_w;
  const int height = size + 2 * margin;

  Real xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (!points.empty()) {
    xmin = xmax = points[0].x;
    ymin = ymax = points[0].y;
    for (const auto& p : points) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto sx = [&](Real x) {
    return margin + (x - xmin) / (xmax - xmin) * size;
  };
  auto sy = [&](Real y) {
    return margin + size - (y - ymin) / (ymax - ymin) * size;
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" font-family=\"sans-serif\">\n";
  os << "<text x=\"" << margin << "\" y=\"24\" font-size=\"13\">" << title
     << "</text>\n";
  os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size
     << "\" height=\"" << size
     << "\" fill=\"none\" stroke=\"#888888\"/>\n";

  std::set<int> seen;
  for (const auto& p : points) {
    seen.insert(static_cast<int>(p.cls));
    os << "<circle class=\"pt\" cx=\"" << fmt(sx(p.x)) << "\" cy=\""
       << fmt(sy(p.y)) << "\" r=\"3\" fill=\"" << class_color(p.cls)
       << "\" fill-opacity=\"0.75\"/>\n";
  }
  int row = 0;
  for (int c : seen) {
    const int lx = margin + size + 20;
    const int ly = margin + 10 + row * 22;
    os << "<rect x=\"" << lx << "\" y=\"" << ly - 9
       << "\" width=\"12\" height=\"12\" fill=\""
       << class_color(static_cast<BehaviorClass>(c)) << "\"/>\n";
    os << "<text class=\"legend-entry\" x=\"" << lx + 18 << "\" y=\"" << ly + 2
       << "\" font-size=\"11\">" << to_string(static_cast<BehaviorClass>(c))
       << "</text>\n";
    ++row;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace mote::svg
