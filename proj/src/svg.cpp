#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "svem/runner.hpp"

namespace svem {

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

void write_svg_chart(
    const std::string& path, const std::string& title,
    const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open output file: " + path);

  const double w = 720, h = 420, ml = 70, mr = 160, mt = 40, mb = 40;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& [name, pts] : series) {
    for (const auto& [x, y] : pts) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!(xmin <= xmax)) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  const auto sy = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << ml << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">" << title
     << "</text>\n"
     << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
     << h - mb << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
     << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << ml - 6 << "\" y=\"" << h - mb << "\" text-anchor=\"end\" "
     << "font-family=\"sans-serif\" font-size=\"11\">" << num(ymin) << "</text>\n"
     << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 10 << "\" text-anchor=\"end\" "
     << "font-family=\"sans-serif\" font-size=\"11\">" << num(ymax) << "</text>\n"
     << "<text x=\"" << ml << "\" y=\"" << h - mb + 16 << "\" font-family=\"sans-serif\" "
     << "font-size=\"11\">" << num(xmin) << "</text>\n"
     << "<text x=\"" << w - mr << "\" y=\"" << h - mb + 16 << "\" text-anchor=\"end\" "
     << "font-family=\"sans-serif\" font-size=\"11\">" << num(xmax) << "</text>\n";

  int ci = 0;
  for (const auto& [name, pts] : series) {
    const char* color = kPalette[ci % 10];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) os << num(sx(x)) << ',' << num(sy(y)) << ' ';
    os << "\"/>\n";
    const double ly = mt + 16.0 * ci;
    os << "<line x1=\"" << w - mr + 10 << "\" y1=\"" << ly << "\" x2=\"" << w - mr + 34
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << w - mr + 40 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << name << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
}

}  // namespace svem
