#include "cagemap/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>

#include "cagemap/errors.hpp"

namespace cagemap {

double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ArgumentError("normal_quantile: p must lie in (0, 1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double sample_normal(Rng& rng, double mean, double sd) {
  if (sd < 0.0 || !std::isfinite(sd)) throw ArgumentError("sample_normal: sd must be finite and >= 0");
  if (sd == 0.0) return mean;
  return mean + sd * normal_quantile(rng.uniform());
}

TruncatedNormal::TruncatedNormal(double mean, double sd, double lower, double upper)
    : mean_(mean), sd_(sd), lower_(lower), upper_(upper) {
  if (!std::isfinite(mean) || !std::isfinite(sd) || !std::isfinite(lower) || !std::isfinite(upper) ||
      sd < 0.0 || lower > upper) {
    std::ostringstream os;
    os << "truncated normal: invalid parameters (mean " << mean << ", sd " << sd << ", bounds [" << lower
       << ", " << upper << "])";
    throw ArgumentError(os.str());
  }
  degenerate_ = sd == 0.0 || lower == upper;
  if (degenerate_) return;
  double a = (lower - mean) / sd;
  double b = (upper - mean) / sd;
  if (a > 0.0) {
    mirrored_ = true;
    std::swap(a, b);
    a = -a;
    b = -b;
  }
  alpha_ = a;
  beta_ = b;
  cdf_alpha_ = normal_cdf(alpha_);
  cdf_beta_ = normal_cdf(beta_);
}

double TruncatedNormal::sample(Rng& rng) const {
  if (degenerate_) return std::clamp(mean_, lower_, upper_);
  const double u = rng.uniform();
  const double mass = cdf_beta_ - cdf_alpha_;
  double z;
  const double p = cdf_alpha_ + u * mass;
  if (mass > 0.0 && p > 0.0 && p < 1.0) {
    z = normal_quantile(p);
  } else {
    // Both bounds deep in the lower tail: the density is close to
    // exp(beta * (z - beta)), an exponential tilted towards beta.
    const double rate = std::max(-beta_, 1e-300);
    const double span = (beta_ - alpha_) * rate;
    const double e = -std::log1p(-u * -std::expm1(-span));
    z = beta_ - e / rate;
  }
  z = std::clamp(z, alpha_, beta_);
  const double x = mean_ + sd_ * (mirrored_ ? -z : z);
  return std::clamp(x, lower_, upper_);
}

double TruncatedNormal::cdf(double x) const noexcept {
  if (x < lower_) return 0.0;
  if (x >= upper_) return 1.0;
  if (degenerate_) return x < std::clamp(mean_, lower_, upper_) ? 0.0 : 1.0;
  const double z = (x - mean_) / sd_;
  const double mass = cdf_beta_ - cdf_alpha_;
  if (!(mass > 0.0)) return 0.5;
  if (mirrored_) {
    const double w = std::clamp(-z, alpha_, beta_);
    return std::clamp((cdf_beta_ - normal_cdf(w)) / mass, 0.0, 1.0);
  }
  const double w = std::clamp(z, alpha_, beta_);
  return std::clamp((normal_cdf(w) - cdf_alpha_) / mass, 0.0, 1.0);
}

double TruncatedNormal::pdf(double x) const noexcept {
  if (degenerate_ || x < lower_ || x > upper_) return 0.0;
  const double z = (x - mean_) / sd_;
  const double mass = cdf_beta_ - cdf_alpha_;
  return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * sd_ * mass);
}

std::uint64_t sample_binomial(Rng& rng, std::uint64_t n, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("sample_binomial: p must lie in [0, 1]");
  if (n == 0 || p == 0.0) return 0;
  if (p == 1.0) return n;
  const double mean = static_cast<double>(n) * p;
  if (mean > 200.0) {
    std::binomial_distribution<std::uint64_t> dist(n, p);
    return dist(rng);
  }
  const double u = rng.uniform();
  double pmf = std::exp(static_cast<double>(n) * std::log1p(-p));
  double cdf = pmf;
  const double odds = p / (1.0 - p);
  std::uint64_t k = 0;
  while (u > cdf && k < n) {
    pmf *= static_cast<double>(n - k) / static_cast<double>(k + 1) * odds;
    ++k;
    cdf += pmf;
    if (pmf == 0.0 && static_cast<double>(k) > mean) break;
  }
  return k;
}

}  // namespace cagemap
