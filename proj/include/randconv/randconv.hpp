#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "randconv/image.hpp"
#include "randconv/rng.hpp"

namespace randconv {

// Weights of one random convolution layer, laid out [ky][kx][c_in][c_out].
// There is no bias term.
struct FilterBank {
  int k = 1;
  int c_in = 3;
  int c_out = 3;
  double sigma = 0.0;
  std::vector<float> weights;

  float weight(int ky, int kx, int ci, int co) const {
    return weights[((static_cast<std::size_t>(ky) * k + kx) * c_in + ci) * c_out + co];
  }
  float& weight(int ky, int kx, int ci, int co) {
    return weights[((static_cast<std::size_t>(ky) * k + kx) * c_in + ci) * c_out + co];
  }
};

struct RandConvConfig {
  std::vector<int> pool{1, 3, 5, 7};
  double p = 0.5;    // fraction of original images (image mode only)
  bool mix = false;  // blend alpha*I + (1-alpha)*(I*Theta)
  std::uint64_t seed = 0;
  int samples_per_image = 1;
  // Share one filter draw across a whole batch for each sample index.
  bool share_filter_per_batch = false;
  // Test hook: fixes the mixing weight instead of sampling U(0,1).
  std::optional<double> forced_alpha;

  // Throws std::invalid_argument on an empty pool, even/non-positive sizes,
  // p outside [0,1] or samples_per_image < 1.
  void validate() const;
};

struct AugmentSample {
  ImageTensor image;
  std::optional<double> alpha;
  std::optional<int> k_used;
  bool was_original = false;
  std::optional<FilterBank> filter;  // the Theta that produced the sample
  std::uint64_t stream = 0;          // key of the random stream consumed
};

// Weights ~ N(0, sigma^2) with sigma = 1/sqrt(c_in * k * k).
FilterBank sample_filter(Rng& rng, int k, int c_in, int c_out);

// Same-size cross-correlation with zero padding of (k-1)/2 on every side.
ImageTensor conv2d_same(const ImageTensor& img, const FilterBank& filt);

// alpha*I + (1-alpha)*conv, evaluated elementwise in single precision.
ImageTensor mix_images(const ImageTensor& img, const ImageTensor& conv, double alpha);

AugmentSample randconv_augment(const ImageTensor& img, const RandConvConfig& cfg, Rng& rng);

// samples_per_image samples per image; sample j of image i draws from the
// stream derive_stream(seed, {i, j}).
std::vector<std::vector<AugmentSample>> augment_batch(const LabeledDataset& ds,
                                                      const RandConvConfig& cfg,
                                                      std::uint64_t seed);

std::uint64_t augment_stream_key(const RandConvConfig& cfg, std::uint64_t seed,
                                 std::size_t image_index, std::size_t sample_index);

}  // namespace randconv
