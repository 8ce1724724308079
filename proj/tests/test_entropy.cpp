#include "testing.hpp"

#include <cmath>

#include <torch/torch.h>

#include "condvc/entropy.hpp"
#include "condvc/errors.hpp"
#include "oracles.hpp"

using namespace condvc;

namespace {

double scalar(const torch::Tensor& x) { return x.item<double>(); }

torch::Tensor d(double v) { return torch::tensor({v}, torch::kFloat64); }

}  // namespace

TEST_CASE("reparameterize_scale: closed-form values") {
  for (double raw : {-20.0, -2.3, 0.0, 1.0, 5.0}) {
    const double expected = static_cast<double>(oracle::reparameterized_scale(raw));
    CHECK(scalar(reparameterize_scale(d(raw))) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(std::abs(scalar(reparameterize_scale(d(-20))) - 0.1002588) < 1e-6);
  CHECK(std::abs(scalar(reparameterize_scale(d(0))) - 1.1002588) < 1e-6);
  CHECK(std::abs(scalar(reparameterize_scale(d(5))) - 148.51) < 0.05);
}

TEST_CASE("reparameterize_scale: lower bound, monotonicity, finiteness") {
  auto raw = torch::linspace(-100, 100, 200001, torch::kFloat64);
  auto s = reparameterize_scale(raw);
  CHECK(torch::isfinite(s).all().item<bool>());
  CHECK((s > 0.1).all().item<bool>());
  CHECK((s.slice(0, 1) >= s.slice(0, 0, -1)).all().item<bool>());
  // Below about -35 the increments fall under double resolution; above that
  // the increase is strict.
  auto upper = reparameterize_scale(torch::linspace(-30, 100, 100001, torch::kFloat64));
  CHECK((upper.slice(0, 1) > upper.slice(0, 0, -1)).all().item<bool>());
}

TEST_CASE("reparameterize_scale: derivative is positive and matches finite differences") {
  for (double raw : {-10.0, -2.3, 0.0, 2.3, 10.0}) {
    auto x = d(raw).requires_grad_(true);
    reparameterize_scale(x).sum().backward();
    const double analytic = scalar(x.grad());
    const double h = 1e-6;
    const double fd = static_cast<double>(
        (oracle::reparameterized_scale(raw + h) - oracle::reparameterized_scale(raw - h)) / (2 * h));
    CHECK(analytic > 0.0);
    CHECK(oracle::relative_error(analytic, fd) < 1e-5);
  }
}

TEST_CASE("bin_probability: closed forms") {
  CHECK(scalar(bin_probability(d(0), d(0), d(1), EntropyFamily::kLaplace)) ==
        doctest::Approx(0.393469340287).epsilon(1e-9));
  CHECK(scalar(bin_probability(d(0), d(0), d(1), EntropyFamily::kGaussian)) ==
        doctest::Approx(0.382924922548).epsilon(1e-9));
  const double narrow = scalar(bin_probability(d(3), d(3), d(0.1003), EntropyFamily::kLaplace));
  CHECK(narrow >= 0.99);
  CHECK(narrow == doctest::Approx(0.993160528835).epsilon(1e-9));
}

TEST_CASE("bin_probability agrees with the CDF-difference oracle across the domain") {
  torch::manual_seed(1);
  auto v = torch::randn({400}, torch::kFloat64) * 6;
  auto loc = torch::randn({400}, torch::kFloat64) * 3;
  auto scale = torch::rand({400}, torch::kFloat64) * 5 + 0.1003;
  for (auto family : {EntropyFamily::kLaplace, EntropyFamily::kGaussian}) {
    auto p = bin_probability(v, loc, scale, family);
    for (int64_t i = 0; i < 400; ++i) {
      const long double vi = v[i].item<double>(), li = loc[i].item<double>(), si = scale[i].item<double>();
      long double expected = family == EntropyFamily::kLaplace ? oracle::laplace_bin(vi, li, si)
                                                               : oracle::gaussian_bin(vi, li, si);
      expected = std::max(expected, 1e-9L);
      REQUIRE(p[i].item<double>() == doctest::Approx(static_cast<double>(expected)).epsilon(1e-9));
    }
  }
}

TEST_CASE("bin_probability: normalization over integer bins") {
  auto bins = torch::arange(-50, 51, torch::kFloat64);
  auto zero = torch::zeros_like(bins);
  for (double s : {0.1003, 1.0, 10.0}) {
    auto scale = torch::full_like(bins, s);
    const double g = scalar(bin_probability(bins, zero, scale, EntropyFamily::kGaussian).sum());
    CHECK(std::abs(g - 1.0) < 1e-6);
    // Laplace tails beyond +-50.5 carry exp(-50.5 / b); negligible except at b = 10.
    // The 1e-9 likelihood floor adds at most 101e-9.
    const double l = scalar(bin_probability(bins, zero, scale, EntropyFamily::kLaplace).sum());
    CHECK(std::abs(l - (1.0 - std::exp(-50.5 / s))) < 1e-6);
  }
}

TEST_CASE("bin_probability rejects non-positive scales") {
  CHECK_THROWS_AS(bin_probability(d(0), d(0), d(0), EntropyFamily::kLaplace), Error);
  CHECK_THROWS_AS(bin_probability(d(0), d(0), d(-1), EntropyFamily::kGaussian), Error);
}

TEST_CASE("bin_probability is floored far in the tails") {
  auto p = bin_probability(d(1000), d(0), d(0.1003), EntropyFamily::kLaplace);
  CHECK(scalar(p) == doctest::Approx(kLikelihoodFloor));
}

TEST_CASE("rate_bits: value, nonnegativity, additivity") {
  // raw scale such that the reparameterized scale is exactly 1: softplus(r + 2.3) = 2.3.
  const double raw_for_unit = std::log(std::expm1(2.3)) - 2.3;
  EntropyParams unit{d(0), d(raw_for_unit), EntropyFamily::kLaplace};
  CHECK(scalar(rate_bits(d(0), unit)) == doctest::Approx(1.34567687).epsilon(1e-6));
  CHECK(std::abs(scalar(rate_bits(d(0), unit)) - 1.3459) < 1e-3);

  torch::manual_seed(2);
  auto latent = torch::randn({2, 3, 4, 4}, torch::kFloat64) * 4;
  EntropyParams params{torch::randn_like(latent), torch::randn_like(latent) * 3,
                       EntropyFamily::kGaussian};
  auto bits = element_bits(latent, params);
  CHECK((bits >= 0).all().item<bool>());
  CHECK(scalar(rate_bits(latent, params)) == doctest::Approx(scalar(bits.sum())).epsilon(1e-12));
  CHECK(torch::allclose(per_sample(bits).sum(), bits.sum()));

  auto pair = torch::tensor({0.0, 2.0}, torch::kFloat64);
  EntropyParams two{torch::zeros({2}, torch::kFloat64), torch::zeros({2}, torch::kFloat64),
                    EntropyFamily::kLaplace};
  const double joint = scalar(rate_bits(pair, two));
  const double first = scalar(rate_bits(d(0), {d(0), d(0), EntropyFamily::kLaplace}));
  const double second = scalar(rate_bits(d(2), {d(0), d(0), EntropyFamily::kLaplace}));
  CHECK(joint == doctest::Approx(first + second).epsilon(1e-12));
}

TEST_CASE("rate_bits gradients match central finite differences") {
  torch::manual_seed(4);
  for (auto family : {EntropyFamily::kLaplace, EntropyFamily::kGaussian}) {
    auto latent = (torch::randn({24}, torch::kFloat64) * 3).requires_grad_(true);
    auto loc = torch::randn({24}, torch::kFloat64).requires_grad_(true);
    auto raw = torch::randn({24}, torch::kFloat64).requires_grad_(true);
    rate_bits(latent, {loc, raw, family}).backward();
    auto f = [&] { return scalar(rate_bits(latent, {loc, raw, family})); };
    for (auto* tensor : {&latent, &loc, &raw}) {
      for (int64_t i = 0; i < 24; ++i) {
        const double fd = oracle::central_difference(f, *tensor, i, 1e-6);
        const double an = tensor->grad()[i].item<double>();
        REQUIRE(std::abs(an - fd) <= 1e-4 * std::max({std::abs(an), std::abs(fd), 1e-3}));
      }
    }
  }
}

TEST_CASE("factorized density reduces to a standard logistic") {
  FactorizedDensity density(1, std::vector<int64_t>{});
  {
    torch::NoGradGuard no_grad;
    density->matrices()[0].fill_(std::log(std::expm1(1.0)));  // softplus -> 1
    density->biases()[0].zero_();
  }
  auto bits = factorized_rate(torch::zeros({1, 1, 1, 1}), density);
  const double expected = static_cast<double>(-std::log2(oracle::logistic(0.5L) - oracle::logistic(-0.5L)));
  CHECK(scalar(bits) == doctest::Approx(expected).epsilon(1e-6));
  CHECK(std::abs(scalar(bits) - 2.0296) < 1e-3);
}

TEST_CASE("factorized density: monotone cumulative bounded in [0, 1]") {
  torch::manual_seed(8);
  FactorizedDensity density(5);
  {
    torch::NoGradGuard no_grad;
    for (auto& p : density->parameters()) p.add_(torch::randn_like(p));
  }
  auto grid = torch::linspace(-60, 60, 1000).expand({5, 1000}).contiguous();
  auto cdf = density->cumulative(grid);
  CHECK((cdf >= 0).all().item<bool>());
  CHECK((cdf <= 1).all().item<bool>());
  CHECK((cdf.slice(1, 1) >= cdf.slice(1, 0, -1)).all().item<bool>());

  auto latent = torch::round(torch::randn({2, 5, 3, 3}) * 5);
  CHECK((factorized_element_bits(latent, density) >= 0).all().item<bool>());
}
