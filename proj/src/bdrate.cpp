#include "condvc/bdrate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <vector>

#include <Eigen/Dense>

#include "condvc/errors.hpp"

namespace condvc {

std::string_view to_string(BdVariant variant) { return variant == BdVariant::kCubic ? "cubic" : "pchip"; }

BdVariant parse_bd_variant(std::string_view name) {
  if (name == "cubic") return BdVariant::kCubic;
  if (name == "pchip") return BdVariant::kPchip;
  fail(ErrorCategory::kUsage, "BD-rate variant must be 'cubic' or 'pchip', got '" + std::string(name) + "'");
}

namespace {

struct Samples {
  std::vector<double> psnr;
  std::vector<double> log_rate;
};

Samples prepare(const RDCurve& curve, const char* role) {
  if (curve.points.size() < 4) {
    fail(ErrorCategory::kBdRate, std::string(role) + " curve '" + curve.label + "' has " +
                                     std::to_string(curve.points.size()) + " points; BD-rate needs at least 4");
  }
  Samples s;
  for (const auto& p : curve.points) {
    if (!(p.bpp > 0.0) || !std::isfinite(p.bpp) || !std::isfinite(p.psnr)) {
      fail(ErrorCategory::kBdRate, std::string(role) + " curve '" + curve.label + "' has an invalid point");
    }
    s.psnr.push_back(p.psnr);
    s.log_rate.push_back(std::log10(p.bpp));
  }
  return s;
}

// Integral over [lo, hi] of the least-squares cubic through (psnr, log_rate).
// The abscissa is centred and scaled before fitting to keep the system well conditioned.
double cubic_integral(const Samples& s, double lo, double hi) {
  const auto n = static_cast<Eigen::Index>(s.psnr.size());
  double mean = 0.0;
  for (double p : s.psnr) mean += p;
  mean /= static_cast<double>(n);
  double scale = 0.0;
  for (double p : s.psnr) scale = std::max(scale, std::abs(p - mean));
  if (scale == 0.0) fail(ErrorCategory::kBdRate, "all PSNR values of a curve are identical");

  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = (s.psnr[i] - mean) / scale;
    a(i, 0) = 1.0;
    a(i, 1) = u;
    a(i, 2) = u * u;
    a(i, 3) = u * u * u;
    b(i) = s.log_rate[i];
  }
  const Eigen::VectorXd c = a.colPivHouseholderQr().solve(b);
  auto antiderivative = [&](double u) {
    return c(0) * u + c(1) * u * u / 2.0 + c(2) * u * u * u / 3.0 + c(3) * u * u * u * u / 4.0;
  };
  const double ulo = (lo - mean) / scale, uhi = (hi - mean) / scale;
  return (antiderivative(uhi) - antiderivative(ulo)) * scale;
}

// Monotone piecewise cubic Hermite interpolant (Fritsch-Carlson interior
// slopes, three-point end slopes) integrated exactly over [lo, hi].
double pchip_integral(Samples s, double lo, double hi) {
  std::vector<size_t> order(s.psnr.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return s.psnr[a] < s.psnr[b]; });
  std::vector<double> x, y;
  for (size_t i : order) {
    x.push_back(s.psnr[i]);
    y.push_back(s.log_rate[i]);
  }
  const size_t n = x.size();
  for (size_t i = 1; i < n; ++i) {
    if (!(x[i] > x[i - 1])) fail(ErrorCategory::kBdRate, "PCHIP BD-rate needs distinct PSNR values");
  }
  std::vector<double> h(n - 1), delta(n - 1), d(n, 0.0);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    delta[i] = (y[i + 1] - y[i]) / h[i];
  }
  for (size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] > 0.0) {
      const double w1 = 2.0 * h[i] + h[i - 1], w2 = h[i] + 2.0 * h[i - 1];
      d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  auto end_slope = [](double h0, double h1, double m0, double m1) {
    double slope = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if (slope * m0 <= 0.0) {
      slope = 0.0;
    } else if (m0 * m1 < 0.0 && std::abs(slope) > std::abs(3.0 * m0)) {
      slope = 3.0 * m0;
    }
    return slope;
  };
  d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);

  auto eval = [&](size_t i, double t) {  // t in [0, 1] on interval i
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y[i] + (t3 - 2 * t2 + t) * h[i] * d[i] + (-2 * t3 + 3 * t2) * y[i + 1] +
           (t3 - t2) * h[i] * d[i + 1];
  };
  double total = 0.0;
  for (size_t i = 0; i + 1 < n; ++i) {
    const double a = std::max(lo, x[i]), b = std::min(hi, x[i + 1]);
    if (!(b > a)) continue;
    // Simpson's rule is exact for cubics.
    const double ta = (a - x[i]) / h[i], tb = (b - x[i]) / h[i];
    total += (b - a) / 6.0 * (eval(i, ta) + 4.0 * eval(i, 0.5 * (ta + tb)) + eval(i, tb));
  }
  return total;
}

std::string range_text(const Samples& s) {
  const auto [lo, hi] = std::minmax_element(s.psnr.begin(), s.psnr.end());
  char buf[96];
  std::snprintf(buf, sizeof(buf), "[%.4f, %.4f] dB", *lo, *hi);
  return buf;
}

}  // namespace

double bd_rate(const RDCurve& anchor, const RDCurve& test, BdVariant variant) {
  const auto a = prepare(anchor, "anchor");
  const auto t = prepare(test, "test");
  const double lo = std::max(*std::min_element(a.psnr.begin(), a.psnr.end()),
                             *std::min_element(t.psnr.begin(), t.psnr.end()));
  const double hi = std::min(*std::max_element(a.psnr.begin(), a.psnr.end()),
                             *std::max_element(t.psnr.begin(), t.psnr.end()));
  if (!(hi > lo)) {
    fail(ErrorCategory::kBdRate, "PSNR ranges do not overlap: anchor '" + anchor.label + "' " + range_text(a) +
                                     ", test '" + test.label + "' " + range_text(t));
  }
  const double ia = variant == BdVariant::kCubic ? cubic_integral(a, lo, hi) : pchip_integral(a, lo, hi);
  const double it = variant == BdVariant::kCubic ? cubic_integral(t, lo, hi) : pchip_integral(t, lo, hi);
  const double mean_diff = (it - ia) / (hi - lo);
  return (std::pow(10.0, mean_diff) - 1.0) * 100.0;
}

}  // namespace condvc
