#pragma once

#include <cstdint>

#include "cagemap/rng.hpp"

namespace cagemap {

double normal_cdf(double z) noexcept;
/// Inverse of the standard normal CDF for p in (0, 1).
double normal_quantile(double p);

/// Normal(mean, sd) by inversion; sd == 0 yields the mean.
double sample_normal(Rng& rng, double mean, double sd);

/// Normal(mean, sd) restricted to [lower, upper], sampled by inverting the CDF
/// on the truncated interval. A zero-width interval or sd == 0 collapses to a
/// point mass (the mean clamped into the interval).
class TruncatedNormal {
 public:
  TruncatedNormal(double mean, double sd, double lower, double upper);

  double mean() const noexcept { return mean_; }
  double sd() const noexcept { return sd_; }
  double lower() const noexcept { return lower_; }
  double upper() const noexcept { return upper_; }
  bool degenerate() const noexcept { return degenerate_; }

  double sample(Rng& rng) const;
  double cdf(double x) const noexcept;
  /// Density with respect to Lebesgue measure; 0 for degenerate distributions.
  double pdf(double x) const noexcept;

 private:
  double mean_;
  double sd_;
  double lower_;
  double upper_;
  bool degenerate_ = false;
  bool mirrored_ = false;
  // Standardized bounds after optional mirroring so that the interval's upper
  // end sits at or below zero whenever it lies entirely in a tail.
  double alpha_ = 0.0;
  double beta_ = 0.0;
  double cdf_alpha_ = 0.0;
  double cdf_beta_ = 0.0;
};

/// Binomial(n, p) by sequential inversion. Cost is O(1 + n p).
std::uint64_t sample_binomial(Rng& rng, std::uint64_t n, double p);

}  // namespace cagemap
