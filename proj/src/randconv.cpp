#include "randconv/randconv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "randconv/parallel.hpp"

namespace randconv {

namespace {
constexpr std::uint64_t kSharedBatchTag = 0xB47C'0000'0000'0001ULL;

void check_filter_size(int k) {
  if (k < 1 || k % 2 == 0)
    throw std::invalid_argument("filter size must be odd and positive, got " + std::to_string(k));
}
}  // namespace

void RandConvConfig::validate() const {
  if (pool.empty()) throw std::invalid_argument("filter-size pool is empty");
  for (int k : pool) check_filter_size(k);
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0, 1]");
  if (samples_per_image < 1) throw std::invalid_argument("samples_per_image must be >= 1");
  if (forced_alpha && !(*forced_alpha >= 0.0 && *forced_alpha <= 1.0))
    throw std::invalid_argument("forced alpha must lie in [0, 1]");
}

FilterBank sample_filter(Rng& rng, int k, int c_in, int c_out) {
  check_filter_size(k);
  if (c_in < 1 || c_out < 1) throw std::invalid_argument("channel counts must be positive");
  FilterBank f;
  f.k = k;
  f.c_in = c_in;
  f.c_out = c_out;
  f.sigma = 1.0 / std::sqrt(static_cast<double>(c_in) * k * k);
  f.weights.resize(static_cast<std::size_t>(k) * k * c_in * c_out);
  for (auto& w : f.weights) w = static_cast<float>(rng.normal(0.0, f.sigma));
  return f;
}

ImageTensor conv2d_same(const ImageTensor& img, const FilterBank& filt) {
  if (static_cast<int>(img.channels()) != filt.c_in)
    throw std::invalid_argument("conv2d_same: image has " + std::to_string(img.channels()) +
                                " channels, filter expects " + std::to_string(filt.c_in));
  const long h = static_cast<long>(img.height());
  const long w = static_cast<long>(img.width());
  const int k = filt.k;
  const int pad = (k - 1) / 2;
  const int c_in = filt.c_in;
  const int c_out = filt.c_out;
  const auto src = img.data();
  std::vector<double> acc(static_cast<std::size_t>(h * w) * c_out, 0.0);

  // Tap-outer loop: each tap is a shifted, clipped rectangle of the input, so
  // the inner loops are contiguous walks over channel-fastest pixels.
  for (int ky = 0; ky < k; ++ky) {
    const long dy = ky - pad;
    const long y0 = std::max(0L, -dy), y1 = std::min(h, h - dy);
    for (int kx = 0; kx < k; ++kx) {
      const long dx = kx - pad;
      const long x0 = std::max(0L, -dx), x1 = std::min(w, w - dx);
      const float* tap = filt.weights.data() + (static_cast<std::size_t>(ky) * k + kx) * c_in * c_out;
      for (long y = y0; y < y1; ++y) {
        const float* in = src.data() + ((y + dy) * w + x0 + dx) * c_in;
        double* out = acc.data() + (y * w + x0) * c_out;
        for (long x = x0; x < x1; ++x, in += c_in, out += c_out) {
          for (int ci = 0; ci < c_in; ++ci) {
            const double v = in[ci];
            const float* wrow = tap + ci * c_out;
            for (int co = 0; co < c_out; ++co) out[co] += v * wrow[co];
          }
        }
      }
    }
  }
  std::vector<float> data(acc.size());
  std::transform(acc.begin(), acc.end(), data.begin(), [](double v) { return static_cast<float>(v); });
  return ImageTensor(img.height(), img.width(), static_cast<std::size_t>(c_out), std::move(data));
}

ImageTensor mix_images(const ImageTensor& img, const ImageTensor& conv, double alpha) {
  if (!img.same_shape(conv)) throw std::invalid_argument("mix_images: shape mismatch");
  ImageTensor out = conv;
  const auto a = img.data();
  auto o = out.data();
  const float fa = static_cast<float>(alpha);
  const float fb = static_cast<float>(1.0 - alpha);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fa * a[i] + fb * o[i];
  return out;
}

AugmentSample randconv_augment(const ImageTensor& img, const RandConvConfig& cfg, Rng& rng) {
  AugmentSample sample;
  sample.stream = rng.key();
  const double p0 = rng.uniform();
  if (p0 < cfg.p && !cfg.mix) {
    sample.image = img;
    sample.was_original = true;
    return sample;
  }
  const int k = cfg.pool[rng.index(cfg.pool.size())];
  const int channels = static_cast<int>(img.channels());
  FilterBank filt = sample_filter(rng, k, channels, channels);
  ImageTensor conv = conv2d_same(img, filt);
  if (cfg.mix) {
    const double drawn = rng.uniform();
    const double alpha = cfg.forced_alpha.value_or(drawn);
    sample.image = mix_images(img, conv, alpha);
    sample.alpha = alpha;
  } else {
    sample.image = std::move(conv);
  }
  sample.k_used = k;
  sample.filter = std::move(filt);
  return sample;
}

std::uint64_t augment_stream_key(const RandConvConfig& cfg, std::uint64_t seed,
                                 std::size_t image_index, std::size_t sample_index) {
  if (cfg.share_filter_per_batch) return derive_stream(seed, {kSharedBatchTag, sample_index});
  return derive_stream(seed, {image_index, sample_index});
}

std::vector<std::vector<AugmentSample>> augment_batch(const LabeledDataset& ds,
                                                      const RandConvConfig& cfg,
                                                      std::uint64_t seed) {
  cfg.validate();
  if (ds.empty()) throw std::invalid_argument("augment_batch: empty dataset");
  std::vector<std::vector<AugmentSample>> out(ds.size());
  parallel_for(ds.size(), [&](std::size_t i) {
    auto& samples = out[i];
    samples.reserve(cfg.samples_per_image);
    for (int j = 0; j < cfg.samples_per_image; ++j) {
      Rng rng(augment_stream_key(cfg, seed, i, static_cast<std::size_t>(j)));
      samples.push_back(randconv_augment(ds.images[i], cfg, rng));
    }
  });
  return out;
}

}  // namespace randconv
