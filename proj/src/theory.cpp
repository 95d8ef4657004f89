#include "randconv/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "randconv/csv.hpp"
#include "randconv/errors.hpp"
#include "randconv/parallel.hpp"

namespace randconv {

namespace {

constexpr double kGammaEps = 1e-16;
constexpr int kGammaMaxIter = 100000;

// Series for P(a, x), convergent for all x but fast for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  for (int n = 0; n < kGammaMaxIter; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kGammaEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x) (modified Lentz), used for x >= a + 1.
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kGammaEps;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kGammaMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kGammaEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

void check_gamma_args(double a, double x) {
  if (!(a > 0.0)) throw std::invalid_argument("incomplete gamma: a must be positive");
  if (!(x >= 0.0)) throw std::invalid_argument("incomplete gamma: x must be nonnegative");
}

// Root of a decreasing function g on (0, inf) where g(lo) > 0 > g(hi).
template <typename F>
double bisect_decreasing(F g, double x0) {
  double lo = x0, hi = x0;
  while (g(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw std::runtime_error("quantile bracket expansion diverged");
  }
  while (g(lo) < 0.0) {
    hi = lo;
    lo *= 0.5;
    if (lo == 0.0) return 0.0;
  }
  while (hi - lo > 1e-12 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

void check_probability(double p, const char* what) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument(std::string(what) + " must lie in (0, 1)");
}

void check_dof(int m) {
  if (m < 1) throw std::invalid_argument("degrees of freedom must be positive");
}

}  // namespace

double gamma_p(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_fraction(a, x);
}

double gamma_q(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_fraction(a, x);
}

double chi2_sf(double x, int m) { return gamma_q(0.5 * m, 0.5 * x); }
double chi2_cdf(double x, int m) { return gamma_p(0.5 * m, 0.5 * x); }

double chi2_upper_quantile(double alpha, int m) {
  check_probability(alpha, "alpha");
  check_dof(m);
  if (alpha > 0.5) return chi2_lower_quantile(1.0 - alpha, m);
  return bisect_decreasing([&](double x) { return chi2_sf(x, m) - alpha; },
                           static_cast<double>(m));
}

double chi2_lower_quantile(double p, int m) {
  check_probability(p, "p");
  check_dof(m);
  if (p > 0.5) return chi2_upper_quantile(1.0 - p, m);
  return bisect_decreasing([&](double x) { return p - chi2_cdf(x, m); },
                           static_cast<double>(m));
}

double BoundParams::tail() const {
  const double n = n_points;
  return 2.0 * epsilon / (n * (n - 1.0));
}

void BoundParams::validate() const {
  if (m < 1) throw std::invalid_argument("m must be a positive integer");
  if (n_points < 2) throw std::invalid_argument("number of points must be at least 2");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  const double t = tail();
  // Beyond 0.5 the two quantiles cross and the band is empty.
  if (!(t > 0.0 && t <= 0.5)) throw std::invalid_argument("tail probability 2*epsilon/(N(N-1)) must lie in (0, 0.5]");
}

Bounds distance_ratio_bounds(const BoundParams& params) {
  params.validate();
  const double t = params.tail();
  Bounds b;
  b.delta1 = params.sigma * std::sqrt(chi2_upper_quantile(t, params.m));
  // Upper (1 - t) quantile == lower t quantile; solved on the CDF directly.
  b.delta2 = params.sigma * std::sqrt(chi2_lower_quantile(t, params.m));
  return b;
}

PatchSet extract_patches(const ImageTensor& img, std::size_t n, int patch_k, Rng& rng) {
  if (patch_k < 1 || patch_k % 2 == 0)
    throw std::invalid_argument("patch size must be odd and positive");
  const std::size_t pad = static_cast<std::size_t>(patch_k - 1) / 2;
  if (img.height() < static_cast<std::size_t>(patch_k) ||
      img.width() < static_cast<std::size_t>(patch_k))
    throw DataError("image smaller than the patch size");
  const std::size_t rows = img.height() - 2 * pad;
  const std::size_t cols = img.width() - 2 * pad;
  const std::size_t valid = rows * cols;
  if (n > valid)
    throw DataError("requested " + std::to_string(n) + " patches but the image has only " +
                    std::to_string(valid) + " valid centers");

  // Partial Fisher-Yates over center indices.
  std::vector<std::size_t> order(valid);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < n; ++i) std::swap(order[i], order[i + rng.index(valid - i)]);

  PatchSet out;
  const std::size_t c = img.channels();
  out.dim = static_cast<std::size_t>(patch_k) * patch_k * c;
  out.values.reserve(n * out.dim);
  out.centers.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cy = order[i] / cols + pad;
    const std::size_t cx = order[i] % cols + pad;
    out.centers.emplace_back(cy, cx);
    for (std::size_t y = cy - pad; y <= cy + pad; ++y)
      for (std::size_t x = cx - pad; x <= cx + pad; ++x)
        for (float v : img.pixel(y, x)) out.values.push_back(v);
  }
  return out;
}

double quantile(std::vector<double>& values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level outside [0, 1]");
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double a = values[lo];
  if (frac == 0.0 || lo + 1 >= values.size()) return a;
  const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return a + frac * (b - a);
}

namespace {

struct ImageRatios {
  double q10 = 0.0;
  double q90 = 0.0;
  std::size_t skipped = 0;
};

std::uint64_t content_hash(const ImageTensor& img) {
  std::uint64_t h = mix64(img.height() * 0x100000001B3ULL ^ img.width() ^ (img.channels() << 48));
  for (float v : img.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = mix64(h ^ bits);
  }
  return h;
}

ImageRatios image_ratios(const ImageTensor& img, const BoundParams& params, int patch_k, Rng rng,
                         const std::optional<std::vector<double>>& projection) {
  const PatchSet patches =
      extract_patches(img, static_cast<std::size_t>(params.n_points), patch_k, rng);
  const std::size_t d = patches.dim;
  const std::size_t m = static_cast<std::size_t>(params.m);
  std::vector<double> u;
  if (projection) {
    if (projection->size() != m * d)
      throw std::invalid_argument("injected projection must be m x d");
    u = *projection;
  } else {
    u.resize(m * d);
    for (auto& v : u) v = rng.normal(0.0, params.sigma);
  }
  const std::size_t n = patches.count();
  std::vector<double> projected(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = patches.row(i);
    for (std::size_t r = 0; r < m; ++r) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) s += u[r * d + t] * z[t];
      projected[i * m + r] = s;
    }
  }
  ImageRatios out;
  std::vector<double> ratios;
  ratios.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto zi = patches.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto zj = patches.row(j);
      double den = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = zi[t] - zj[t];
        den += diff * diff;
      }
      den = std::sqrt(den);
      if (den < kDegeneratePairDistance) {
        ++out.skipped;
        continue;
      }
      double num = 0.0;
      for (std::size_t r = 0; r < m; ++r) {
        const double diff = projected[i * m + r] - projected[j * m + r];
        num += diff * diff;
      }
      ratios.push_back(std::sqrt(num) / den);
    }
  }
  if (ratios.empty()) throw DataError("all patch pairs are degenerate (identical patches)");
  out.q10 = quantile(ratios, 0.1);
  out.q90 = quantile(ratios, 0.9);
  return out;
}

}  // namespace

RatioStats simulate_ratio_bounds(std::span<const ImageTensor> images, const BoundParams& params,
                                 int patch_k, const Rng& rng,
                                 const std::optional<std::vector<double>>& projection) {
  params.validate();
  if (images.empty()) throw std::invalid_argument("simulate_ratio_bounds: no images");
  std::vector<ImageRatios> per_image(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    per_image[i] = image_ratios(images[i], params, patch_k,
                                rng.split(content_hash(images[i])), projection);
  });
  RatioStats stats;
  for (const auto& r : per_image) {
    stats.per_image_q10.push_back(r.q10);
    stats.per_image_q90.push_back(r.q90);
    stats.pairs_skipped += r.skipped;
  }
  std::vector<double> q10 = stats.per_image_q10;
  std::vector<double> q90 = stats.per_image_q90;
  stats.delta_10 = quantile(q10, params.epsilon);
  stats.delta_90 = quantile(q90, 1.0 - params.epsilon);
  const Bounds b = distance_ratio_bounds(params);
  stats.theoretical_delta1 = b.delta1;
  stats.theoretical_delta2 = b.delta2;
  return stats;
}

std::string ratio_csv_header() {
  return "m,N,sigma,epsilon,delta1,delta2,delta_10,delta_90,images,pairs_skipped";
}

std::string ratio_csv_row(const RatioStats& stats, const BoundParams& params, std::size_t images) {
  return csv_join({std::to_string(params.m), std::to_string(params.n_points),
                   format_number(params.sigma), format_number(params.epsilon),
                   format_number(stats.theoretical_delta1), format_number(stats.theoretical_delta2),
                   format_number(stats.delta_10), format_number(stats.delta_90),
                   std::to_string(images), std::to_string(stats.pairs_skipped)});
}

}  // namespace randconv
