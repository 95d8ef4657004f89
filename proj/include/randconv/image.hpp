#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace randconv {

// Dense H x W x C image, row-major with the channel index fastest.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels, float fill = 0.0f);
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
              std::vector<float> data);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * width_ + x) * channels_ + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * width_ + x) * channels_ + c];
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  // Channel values of one pixel.
  std::span<const float> pixel(std::size_t y, std::size_t x) const {
    return {data_.data() + (y * width_ + x) * channels_, channels_};
  }

  bool same_shape(const ImageTensor& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  bool all_finite() const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<float> data_;
};

inline constexpr double kStdFloor = 1e-6;

enum class WhiteningMode {
  PerChannel,
  Scalar,  // one mean/std pooled over all channels, replicated per channel
};

struct WhiteningStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t channels() const { return mean.size(); }
};

struct LabeledDataset {
  std::vector<ImageTensor> images;
  std::vector<int> labels;
  int num_classes = 0;
  std::string domain_tag;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  // Throws std::invalid_argument when labels and images disagree.
  void validate() const;
};

// Pixel values in [0, 1]; grayscale (with or without alpha) is replicated to
// three channels and alpha is dropped.
ImageTensor load_image(const std::filesystem::path& path);

// rescale: per-image min-max to [0, 255] (constant images become 128).
// Otherwise values are clamped to [0, 1]. 1- and 3-channel tensors only.
void save_image(const ImageTensor& img, const std::filesystem::path& path, bool rescale);

WhiteningStats compute_whitening(const LabeledDataset& ds,
                                 WhiteningMode mode = WhiteningMode::PerChannel);
WhiteningStats compute_whitening(std::span<const ImageTensor> images,
                                 WhiteningMode mode = WhiteningMode::PerChannel);
ImageTensor whiten(const ImageTensor& img, const WhiteningStats& stats);
ImageTensor unwhiten(const ImageTensor& img, const WhiteningStats& stats);
LabeledDataset whiten(const LabeledDataset& ds, const WhiteningStats& stats);

// Directory layout: <root>/<domain_tag>/<class_index>/<name>.png
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& root);
LabeledDataset load_dataset(const std::filesystem::path& root, const std::string& domain_tag);

// Sorted list of *.png files in a directory (or the file itself).
std::vector<std::filesystem::path> list_images(const std::filesystem::path& input);

}  // namespace randconv
