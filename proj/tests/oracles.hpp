#pragma once

// Test-only reference computations. Nothing here calls into the library's
// numeric code paths; values are produced from closed forms in long double or
// by finite differences.

#include <cmath>
#include <functional>

#include <torch/torch.h>

namespace oracle {

inline long double softplus(long double x) { return std::log1p(std::exp(x)); }

inline long double reparameterized_scale(long double raw) {
  return std::exp(softplus(raw + 2.3L) - 2.3L);
}

inline long double laplace_cdf(long double x, long double b) {
  return x < 0 ? 0.5L * std::exp(x / b) : 1.0L - 0.5L * std::exp(-x / b);
}

inline long double gaussian_cdf(long double x, long double sigma) {
  return 0.5L * std::erfc(-x / (sigma * std::sqrt(2.0L)));
}

inline long double laplace_bin(long double v, long double loc, long double b) {
  return laplace_cdf(v - loc + 0.5L, b) - laplace_cdf(v - loc - 0.5L, b);
}

inline long double gaussian_bin(long double v, long double loc, long double sigma) {
  return gaussian_cdf(v - loc + 0.5L, sigma) - gaussian_cdf(v - loc - 0.5L, sigma);
}

inline long double logistic(long double x) { return 1.0L / (1.0L + std::exp(-x)); }

// Central difference of a scalar function of one tensor entry. `param` must
// be a leaf whose data can be modified in place.
inline double central_difference(const std::function<double()>& f, torch::Tensor param,
                                 int64_t flat_index, double eps) {
  torch::NoGradGuard no_grad;
  auto flat = param.view({-1});
  const double original = flat[flat_index].item<double>();
  flat[flat_index] = original + eps;
  const double up = f();
  flat[flat_index] = original - eps;
  const double down = f();
  flat[flat_index] = original;
  return (up - down) / (2.0 * eps);
}

inline double relative_error(double a, double b) {
  const double denom = std::max(std::abs(a), std::abs(b));
  return denom == 0.0 ? 0.0 : std::abs(a - b) / denom;
}

}  // namespace oracle
