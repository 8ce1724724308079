#pragma once

// Independent Bjontegaard reference: normal-equation cubic fit in long
// double and composite Simpson integration of the fitted curves.

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

namespace oracle {

using Curve = std::vector<std::pair<double, double>>;  // (bpp, psnr)

inline std::array<long double, 4> fit_cubic(const Curve& c, long double shift) {
  long double m[4][5] = {};
  for (const auto& [bpp, q] : c) {
    const long double x = q - shift, y = std::log10(static_cast<long double>(bpp));
    long double pw[7] = {1};
    for (int k = 1; k < 7; ++k) pw[k] = pw[k - 1] * x;
    for (int r = 0; r < 4; ++r) {
      for (int col = 0; col < 4; ++col) m[r][col] += pw[r + col];
      m[r][4] += pw[r] * y;
    }
  }
  for (int p = 0; p < 4; ++p) {
    int best = p;
    for (int r = p + 1; r < 4; ++r) {
      if (std::fabs(m[r][p]) > std::fabs(m[best][p])) best = r;
    }
    for (int col = 0; col < 5; ++col) std::swap(m[p][col], m[best][col]);
    for (int r = 0; r < 4; ++r) {
      if (r == p) continue;
      const long double f = m[r][p] / m[p][p];
      for (int col = p; col < 5; ++col) m[r][col] -= f * m[p][col];
    }
  }
  return {m[0][4] / m[0][0], m[1][4] / m[1][1], m[2][4] / m[2][2], m[3][4] / m[3][3]};
}

inline long double simpson(const std::array<long double, 4>& c, long double shift, long double lo,
                           long double hi, int intervals = 20000) {
  auto f = [&](long double q) {
    const long double x = q - shift;
    return c[0] + x * (c[1] + x * (c[2] + x * c[3]));
  };
  const long double h = (hi - lo) / intervals;
  long double sum = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) sum += (i % 2 ? 4.0L : 2.0L) * f(lo + i * h);
  return sum * h / 3.0L;
}

inline double bd_rate(const Curve& anchor, const Curve& test) {
  auto range = [](const Curve& c) {
    auto [lo, hi] = std::minmax_element(c.begin(), c.end(),
                                        [](const auto& a, const auto& b) { return a.second < b.second; });
    return std::pair<double, double>{lo->second, hi->second};
  };
  const auto [alo, ahi] = range(anchor);
  const auto [tlo, thi] = range(test);
  const long double lo = std::max(alo, tlo), hi = std::min(ahi, thi);
  const long double shift = (lo + hi) / 2;
  const auto ca = fit_cubic(anchor, shift), ct = fit_cubic(test, shift);
  const long double diff = (simpson(ct, shift, lo, hi) - simpson(ca, shift, lo, hi)) / (hi - lo);
  return static_cast<double>((std::pow(10.0L, diff) - 1.0L) * 100.0L);
}

}  // namespace oracle
