#include "condvc/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "condvc/errors.hpp"
#include "condvc/image_io.hpp"

namespace condvc {

namespace {

struct Rgb {
  uint8_t r, g, b;
};

constexpr std::array<Rgb, 8> kPalette{{{31, 119, 180},
                                        {214, 39, 40},
                                        {44, 160, 44},
                                        {255, 127, 14},
                                        {148, 103, 189},
                                        {140, 86, 75},
                                        {227, 119, 194},
                                        {23, 190, 207}}};

struct Axis {
  double lo, hi;
  std::vector<double> ticks;
};

double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  return (f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0) * mag;
}

Axis make_axis(double lo, double hi) {
  if (hi - lo < 1e-12) {
    const double pad = std::max(std::abs(lo) * 0.05, 1e-3);
    lo -= pad;
    hi += pad;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double step = nice_step(hi - lo);
  Axis axis{lo, hi, {}};
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) {
    axis.ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  }
  return axis;
}

std::string tick_label(double v, double step) {
  const int decimals = std::max(0, static_cast<int>(-std::floor(std::log10(step) + 1e-9)));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

struct Layout {
  int width, height;
  int left = 70, right, top = 40, bottom;
  Axis x, y;

  double px(double v) const { return left + (v - x.lo) / (x.hi - x.lo) * (right - left); }
  double py(double v) const { return bottom - (v - y.lo) / (y.hi - y.lo) * (bottom - top); }
};

Layout make_layout(const std::vector<RDCurve>& curves, const PlotOptions& options) {
  if (curves.empty()) fail(ErrorCategory::kUsage, "plot_rd needs at least one curve");
  if (options.width < 200 || options.height < 150) fail(ErrorCategory::kUsage, "plot size too small");
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& c : curves) {
    if (c.points.empty()) fail(ErrorCategory::kUsage, "curve '" + c.label + "' has no points");
    for (const auto& p : c.points) {
      if (!std::isfinite(p.bpp) || !std::isfinite(p.psnr)) {
        fail(ErrorCategory::kData, "curve '" + c.label + "' has a non-finite point");
      }
      xlo = std::min(xlo, p.bpp);
      xhi = std::max(xhi, p.bpp);
      ylo = std::min(ylo, p.psnr);
      yhi = std::max(yhi, p.psnr);
    }
  }
  Layout l;
  l.width = options.width;
  l.height = options.height;
  l.right = options.width - 190;
  l.bottom = options.height - 55;
  l.x = make_axis(xlo, xhi);
  l.y = make_axis(ylo, yhi);
  return l;
}

std::string escape_xml(const std::string& s) {
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

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string colour(const Rgb& c) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

}  // namespace

std::string render_rd_svg(const std::vector<RDCurve>& curves, const PlotOptions& options) {
  const auto l = make_layout(curves, options);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << l.width << "\" height=\"" << l.height
    << "\" viewBox=\"0 0 " << l.width << ' ' << l.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << (l.left + l.right) / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
    << escape_xml(options.title) << "</text>\n";
  s << "<g class=\"grid\" stroke=\"#dddddd\">\n";
  const double xstep = l.x.ticks.size() > 1 ? l.x.ticks[1] - l.x.ticks[0] : 1.0;
  const double ystep = l.y.ticks.size() > 1 ? l.y.ticks[1] - l.y.ticks[0] : 1.0;
  for (double t : l.x.ticks) {
    s << "<line x1=\"" << fmt(l.px(t)) << "\" y1=\"" << l.top << "\" x2=\"" << fmt(l.px(t)) << "\" y2=\"" << l.bottom
      << "\"/>\n";
  }
  for (double t : l.y.ticks) {
    s << "<line x1=\"" << l.left << "\" y1=\"" << fmt(l.py(t)) << "\" x2=\"" << l.right << "\" y2=\"" << fmt(l.py(t))
      << "\"/>\n";
  }
  s << "</g>\n";
  s << "<rect class=\"frame\" x=\"" << l.left << "\" y=\"" << l.top << "\" width=\"" << l.right - l.left
    << "\" height=\"" << l.bottom - l.top << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : l.x.ticks) {
    s << "<text x=\"" << fmt(l.px(t)) << "\" y=\"" << l.bottom + 18 << "\" text-anchor=\"middle\">"
      << tick_label(t, xstep) << "</text>\n";
  }
  for (double t : l.y.ticks) {
    s << "<text x=\"" << l.left - 8 << "\" y=\"" << fmt(l.py(t) + 4) << "\" text-anchor=\"end\">"
      << tick_label(t, ystep) << "</text>\n";
  }
  s << "<text x=\"" << (l.left + l.right) / 2 << "\" y=\"" << l.height - 15 << "\" text-anchor=\"middle\">bpp</text>\n";
  s << "<text transform=\"translate(18 " << (l.top + l.bottom) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">PSNR (dB)</text>\n";

  for (size_t i = 0; i < curves.size(); ++i) {
    const auto c = colour(kPalette[i % kPalette.size()]);
    s << "<g class=\"curve\" stroke=\"" << c << "\" fill=\"" << c << "\">\n<polyline fill=\"none\" stroke-width=\"2\" points=\"";
    for (size_t k = 0; k < curves[i].points.size(); ++k) {
      const auto& p = curves[i].points[k];
      s << (k ? " " : "") << fmt(l.px(p.bpp)) << ',' << fmt(l.py(p.psnr));
    }
    s << "\"/>\n";
    for (const auto& p : curves[i].points) {
      s << "<circle cx=\"" << fmt(l.px(p.bpp)) << "\" cy=\"" << fmt(l.py(p.psnr)) << "\" r=\"4\"/>\n";
    }
    s << "</g>\n";
  }
  for (size_t i = 0; i < curves.size(); ++i) {
    const auto c = colour(kPalette[i % kPalette.size()]);
    const int y = l.top + 10 + static_cast<int>(i) * 22;
    s << "<g class=\"legend-entry\">"
      << "<line x1=\"" << l.right + 15 << "\" y1=\"" << y << "\" x2=\"" << l.right + 45 << "\" y2=\"" << y
      << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>"
      << "<circle cx=\"" << l.right + 30 << "\" cy=\"" << y << "\" r=\"4\" fill=\"" << c << "\"/>"
      << "<text x=\"" << l.right + 52 << "\" y=\"" << y + 4 << "\">" << escape_xml(curves[i].label) << "</text></g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<uint8_t> render_rd_raster(const std::vector<RDCurve>& curves, const PlotOptions& options) {
  const auto l = make_layout(curves, options);
  // Channels are stored in R, G, B order throughout.
  cv::Mat img(l.height, l.width, CV_8UC3, cv::Scalar(255, 255, 255));
  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  auto text = [&](const std::string& t, int x, int y, double scale, int align) {
    int base = 0;
    const auto size = cv::getTextSize(t, font, scale, 1, &base);
    const int x0 = align == 0 ? x : align == 1 ? x - size.width / 2 : x - size.width;
    cv::putText(img, t, {x0, y}, font, scale, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  };
  auto pt = [&](double bx, double by) { return cv::Point(static_cast<int>(std::lround(l.px(bx))), static_cast<int>(std::lround(l.py(by)))); };

  const double xstep = l.x.ticks.size() > 1 ? l.x.ticks[1] - l.x.ticks[0] : 1.0;
  const double ystep = l.y.ticks.size() > 1 ? l.y.ticks[1] - l.y.ticks[0] : 1.0;
  for (double t : l.x.ticks) {
    const int x = static_cast<int>(std::lround(l.px(t)));
    cv::line(img, {x, l.top}, {x, l.bottom}, cv::Scalar(221, 221, 221), 1);
    text(tick_label(t, xstep), x, l.bottom + 18, 0.4, 1);
  }
  for (double t : l.y.ticks) {
    const int y = static_cast<int>(std::lround(l.py(t)));
    cv::line(img, {l.left, y}, {l.right, y}, cv::Scalar(221, 221, 221), 1);
    text(tick_label(t, ystep), l.left - 8, y + 4, 0.4, 2);
  }
  cv::rectangle(img, {l.left, l.top}, {l.right, l.bottom}, cv::Scalar(0, 0, 0), 1);
  text(options.title, (l.left + l.right) / 2, 24, 0.55, 1);
  text("bpp", (l.left + l.right) / 2, l.height - 15, 0.45, 1);
  {
    const std::string label = "PSNR (dB)";
    int base = 0;
    const auto size = cv::getTextSize(label, font, 0.45, 1, &base);
    cv::Mat strip(size.height + base + 4, size.width + 4, CV_8UC3, cv::Scalar(255, 255, 255));
    cv::putText(strip, label, {2, size.height + 2}, font, 0.45, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    cv::Mat rotated;
    cv::rotate(strip, rotated, cv::ROTATE_90_COUNTERCLOCKWISE);
    const int y0 = std::max(0, (l.top + l.bottom) / 2 - rotated.rows / 2);
    rotated.copyTo(img(cv::Rect(6, y0, rotated.cols, std::min(rotated.rows, l.height - y0))));
  }

  for (size_t i = 0; i < curves.size(); ++i) {
    const auto& c = kPalette[i % kPalette.size()];
    const cv::Scalar col(c.r, c.g, c.b);
    const auto& pts = curves[i].points;
    for (size_t k = 1; k < pts.size(); ++k) {
      cv::line(img, pt(pts[k - 1].bpp, pts[k - 1].psnr), pt(pts[k].bpp, pts[k].psnr), col, 2, cv::LINE_AA);
    }
    for (const auto& p : pts) cv::circle(img, pt(p.bpp, p.psnr), 4, col, cv::FILLED, cv::LINE_AA);
    const int y = l.top + 10 + static_cast<int>(i) * 22;
    cv::line(img, {l.right + 15, y}, {l.right + 45, y}, col, 2, cv::LINE_AA);
    cv::circle(img, {l.right + 30, y}, 4, col, cv::FILLED, cv::LINE_AA);
    text(curves[i].label, l.right + 52, y + 4, 0.42, 0);
  }
  return {img.data, img.data + img.total() * img.elemSize()};
}

void plot_rd(const std::vector<RDCurve>& curves, const std::filesystem::path& out_path, const PlotOptions& options) {
  auto ext = out_path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".svg") {
    const auto svg = render_rd_svg(curves, options);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) fail(ErrorCategory::kIo, "cannot write '" + out_path.string() + "'");
    out << svg;
  } else if (ext == ".png") {
    write_png_rgb8(out_path, options.width, options.height, render_rd_raster(curves, options));
  } else {
    fail(ErrorCategory::kUsage, "plot output must end in .svg or .png, got '" + out_path.string() + "'");
  }
}

}  // namespace condvc
