#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "randconv/image.hpp"
#include "randconv/rng.hpp"

namespace randconv {

// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Survival function P(X > x) and CDF of chi-squared with m degrees of freedom.
double chi2_sf(double x, int m);
double chi2_cdf(double x, int m);

// The alpha-upper quantile: x with P(X > x) = alpha, X ~ chi2(m).
// Found by geometric bracket expansion from x = m followed by bisection to a
// relative bracket width of 1e-12. For alpha > 1/2 the root is located on the
// lower tail CDF instead, which keeps full precision near x = 0.
double chi2_upper_quantile(double alpha, int m);
// x with P(X < x) = p.
double chi2_lower_quantile(double p, int m);

struct BoundParams {
  int m = 3;
  int n_points = 1000;
  double sigma = 1.0;
  double epsilon = 0.1;

  // 2*epsilon / (N (N - 1)).
  double tail() const;
  void validate() const;
};

struct Bounds {
  double delta1 = 0.0;  // upper bound on the distance ratio
  double delta2 = 0.0;  // lower bound
};

Bounds distance_ratio_bounds(const BoundParams& params);

// Flattened k x k x C patches in (dy, dx, channel) order, the same order a
// FilterBank uses for its taps.
struct PatchSet {
  std::size_t dim = 0;
  std::vector<double> values;  // count() rows of dim values
  std::vector<std::pair<std::size_t, std::size_t>> centers;  // (y, x)

  std::size_t count() const { return centers.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

// n distinct interior centers, sampled uniformly without replacement.
PatchSet extract_patches(const ImageTensor& img, std::size_t n, int patch_k, Rng& rng);

// Type-7 (linear interpolation) empirical quantile. Reorders values.
double quantile(std::vector<double>& values, double q);

struct RatioStats {
  std::vector<double> per_image_q10;
  std::vector<double> per_image_q90;
  double delta_10 = 0.0;
  double delta_90 = 0.0;
  double theoretical_delta1 = 0.0;
  double theoretical_delta2 = 0.0;
  std::size_t pairs_skipped = 0;
};

inline constexpr double kDegeneratePairDistance = 1e-9;

// Distance-ratio simulation over random linear projections of image patches.
// Each image gets its own projection U (m x d, entries N(0, sigma^2)) drawn
// from a stream keyed by the root stream and the image content, so the
// aggregate does not depend on list order. `projection` (row-major m x d)
// replaces the sampled U for every image when provided.
RatioStats simulate_ratio_bounds(std::span<const ImageTensor> images, const BoundParams& params,
                                 int patch_k, const Rng& rng,
                                 const std::optional<std::vector<double>>& projection = {});

std::string ratio_csv_header();
std::string ratio_csv_row(const RatioStats& stats, const BoundParams& params,
                          std::size_t images);

}  // namespace randconv
