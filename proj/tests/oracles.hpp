#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "randconv/consistency.hpp"
#include "randconv/image.hpp"
#include "randconv/model.hpp"
#include "randconv/randconv.hpp"

namespace oracle {

using namespace randconv;

// Straightforward six-loop reference with zero padding, accumulated in double.
inline ImageTensor naive_conv(const ImageTensor& img, const FilterBank& f) {
  const long h = static_cast<long>(img.height()), w = static_cast<long>(img.width());
  const long pad = (f.k - 1) / 2;
  ImageTensor out(img.height(), img.width(), static_cast<std::size_t>(f.c_out));
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (int co = 0; co < f.c_out; ++co) {
        double s = 0.0;
        for (int ky = 0; ky < f.k; ++ky)
          for (int kx = 0; kx < f.k; ++kx)
            for (int ci = 0; ci < f.c_in; ++ci) {
              const long iy = y + ky - pad, ix = x + kx - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              s += static_cast<double>(img.at(iy, ix, ci)) * f.weight(ky, kx, ci, co);
            }
        out.at(y, x, co) = static_cast<float>(s);
      }
  return out;
}

inline double max_abs(std::span<const float> v) {
  double m = 0.0;
  for (float x : v) m = std::max(m, static_cast<double>(std::fabs(x)));
  return m;
}

// max |a - b| / max |b|
inline double relative_error(const ImageTensor& a, const ImageTensor& b) {
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    diff = std::max(diff, static_cast<double>(std::fabs(a.data()[i] - b.data()[i])));
  const double scale = max_abs(b.data());
  return scale > 0 ? diff / scale : diff;
}

// P(X > x) for X ~ chi2(3) by composite Simpson quadrature of the density on
// [0, x] (substituting t = s^2 to remove the sqrt singularity at zero).
inline double chi2_3_sf_quadrature(double x) {
  const double norm = std::pow(2.0, 1.5) * std::tgamma(1.5);
  const double upper = std::sqrt(x);
  const int n = 20000;
  const double h = upper / n;
  auto integrand = [&](double s) { return 2.0 * s * s * std::exp(-s * s / 2.0) / norm; };
  double sum = integrand(0.0) + integrand(upper);
  for (int i = 1; i < n; ++i) sum += integrand(i * h) * (i % 2 ? 4.0 : 2.0);
  return 1.0 - sum * h / 3.0;
}

inline double standard_normal_quantile(double p) {
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline PredictionDistribution random_distribution(std::mt19937_64& gen, std::size_t n) {
  std::gamma_distribution<double> g(0.7, 1.0);
  PredictionDistribution p;
  p.probs.resize(n);
  double sum = 0.0;
  for (auto& v : p.probs) sum += (v = g(gen) + 1e-9);
  for (auto& v : p.probs) v /= sum;
  return p;
}

inline double objective(const TinyModel& m, const std::vector<ImageTensor>& views, int label, double lambda) {
  return example_objective(m, views, label, lambda, nullptr).loss.total;
}

// Max relative error between analytic and central-difference gradients over
// every parameter.
inline double gradient_check(TinyModel model, const std::vector<std::vector<ImageTensor>>& batch,
                      const std::vector<int>& labels, double lambda) {
  ModelParams grads = model.zeros_like();
  for (std::size_t b = 0; b < batch.size(); ++b) example_objective(model, batch[b], labels[b], lambda, &grads);
  const double step = 1e-4;
  double worst = 0.0;
  std::vector<double> analytic;
  grads.for_each([&](int, std::size_t, double& g) { analytic.push_back(g); });
  std::size_t idx = 0;
  model.for_each([&](int, std::size_t, double& w) {
    const double saved = w;
    double plus = 0.0, minus = 0.0;
    w = saved + step;
    for (std::size_t b = 0; b < batch.size(); ++b) plus += objective(model, batch[b], labels[b], lambda);
    w = saved - step;
    for (std::size_t b = 0; b < batch.size(); ++b) minus += objective(model, batch[b], labels[b], lambda);
    w = saved;
    const double numeric = (plus - minus) / (2 * step);
    const double a = analytic[idx++];
    const double err = std::fabs(a - numeric) / std::max(1e-6, std::fabs(a) + std::fabs(numeric));
    worst = std::max(worst, err);
  });
  return worst;
}

}  // namespace oracle
