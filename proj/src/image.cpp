#include "randconv/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "randconv/errors.hpp"

namespace randconv {

namespace fs = std::filesystem;

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels, float fill)
    : height_(height), width_(width), channels_(channels),
      data_(height * width * channels, fill) {
  if (height == 0 || width == 0 || channels == 0)
    throw std::invalid_argument("ImageTensor: zero dimension");
}

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
                         std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height == 0 || width == 0 || channels == 0)
    throw std::invalid_argument("ImageTensor: zero dimension");
  if (data_.size() != height * width * channels)
    throw std::invalid_argument("ImageTensor: data length does not match dimensions");
}

bool ImageTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void LabeledDataset::validate() const {
  if (images.size() != labels.size())
    throw std::invalid_argument("LabeledDataset: images and labels differ in length");
  for (int label : labels)
    if (label < 0 || label >= num_classes)
      throw std::invalid_argument("LabeledDataset: label out of range");
}

ImageTensor load_image(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw DataError("cannot read image " + path.string() + ": " + image.message);
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw DataError("unsupported bit depth (16-bit) in " + path.string());
  }
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw DataError("zero-dimension image " + path.string());
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot decode image " + path.string() + ": " + msg);
  }
  std::vector<float> data(buffer.size());
  std::transform(buffer.begin(), buffer.end(), data.begin(),
                 [](png_byte b) { return static_cast<float>(b) / 255.0f; });
  return ImageTensor(image.height, image.width, 3, std::move(data));
}

void save_image(const ImageTensor& img, const fs::path& path, bool rescale) {
  if (img.channels() != 1 && img.channels() != 3)
    throw std::invalid_argument("save_image: only 1- or 3-channel images can be written");
  const auto data = img.data();
  std::vector<png_byte> bytes(data.size());
  if (rescale) {
    const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
    const double min = *lo;
    const double range = static_cast<double>(*hi) - min;
    for (std::size_t i = 0; i < data.size(); ++i) {
      bytes[i] = range > 0.0
                     ? static_cast<png_byte>(std::lround((data[i] - min) / range * 255.0))
                     : png_byte{128};
    }
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double v = std::clamp(static_cast<double>(data[i]), 0.0, 1.0);
      bytes[i] = static_cast<png_byte>(std::lround(v * 255.0));
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw DataError("cannot write image " + path.string() + ": " + image.message);
}

WhiteningStats compute_whitening(const LabeledDataset& ds, WhiteningMode mode) {
  return compute_whitening(std::span<const ImageTensor>(ds.images), mode);
}

WhiteningStats compute_whitening(std::span<const ImageTensor> images, WhiteningMode mode) {
  if (images.empty()) throw std::invalid_argument("compute_whitening: empty dataset");
  const std::size_t channels = images.front().channels();
  const std::size_t groups = mode == WhiteningMode::Scalar ? 1 : channels;
  // Welford accumulation per channel group.
  std::vector<double> mean(groups, 0.0), m2(groups, 0.0);
  std::vector<std::size_t> count(groups, 0);
  for (const auto& img : images) {
    if (img.channels() != channels)
      throw std::invalid_argument("compute_whitening: inconsistent channel counts");
    const auto data = img.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t g = groups == 1 ? 0 : i % channels;
      const double v = data[i];
      ++count[g];
      const double delta = v - mean[g];
      mean[g] += delta / static_cast<double>(count[g]);
      m2[g] += delta * (v - mean[g]);
    }
  }
  WhiteningStats stats;
  stats.mean.resize(channels);
  stats.stddev.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const std::size_t g = groups == 1 ? 0 : c;
    stats.mean[c] = mean[g];
    stats.stddev[c] = std::max(kStdFloor, std::sqrt(m2[g] / static_cast<double>(count[g])));
  }
  return stats;
}

ImageTensor whiten(const ImageTensor& img, const WhiteningStats& stats) {
  if (stats.channels() != img.channels())
    throw std::invalid_argument("whiten: channel count mismatch");
  ImageTensor out = img;
  auto data = out.data();
  const std::size_t channels = img.channels();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t c = i % channels;
    data[i] = static_cast<float>((data[i] - stats.mean[c]) / stats.stddev[c]);
  }
  return out;
}

ImageTensor unwhiten(const ImageTensor& img, const WhiteningStats& stats) {
  if (stats.channels() != img.channels())
    throw std::invalid_argument("unwhiten: channel count mismatch");
  ImageTensor out = img;
  auto data = out.data();
  const std::size_t channels = img.channels();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t c = i % channels;
    data[i] = static_cast<float>(data[i] * stats.stddev[c] + stats.mean[c]);
  }
  return out;
}

LabeledDataset whiten(const LabeledDataset& ds, const WhiteningStats& stats) {
  LabeledDataset out;
  out.labels = ds.labels;
  out.num_classes = ds.num_classes;
  out.domain_tag = ds.domain_tag;
  out.images.reserve(ds.size());
  for (const auto& img : ds.images) out.images.push_back(whiten(img, stats));
  return out;
}

void save_dataset(const LabeledDataset& ds, const fs::path& root) {
  ds.validate();
  std::vector<int> per_class(ds.num_classes, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int label = ds.labels[i];
    const fs::path dir = root / ds.domain_tag / std::to_string(label);
    fs::create_directories(dir);
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.png", per_class[label]++);
    save_image(ds.images[i], dir / name, false);
  }
}

LabeledDataset load_dataset(const fs::path& root, const std::string& domain_tag) {
  const fs::path domain_dir = root / domain_tag;
  if (!fs::is_directory(domain_dir))
    throw DataError("dataset domain directory not found: " + domain_dir.string());
  std::vector<int> classes;
  for (const auto& entry : fs::directory_iterator(domain_dir)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.empty() || !std::all_of(name.begin(), name.end(), ::isdigit))
      throw DataError("unexpected entry in dataset directory: " + entry.path().string());
    classes.push_back(std::stoi(name));
  }
  std::sort(classes.begin(), classes.end());
  LabeledDataset ds;
  ds.domain_tag = domain_tag;
  ds.num_classes = classes.empty() ? 0 : classes.back() + 1;
  for (int label : classes) {
    for (const auto& file : list_images(domain_dir / std::to_string(label))) {
      ds.images.push_back(load_image(file));
      ds.labels.push_back(label);
    }
  }
  if (ds.empty()) throw DataError("no images found under " + domain_dir.string());
  return ds;
}

std::vector<fs::path> list_images(const fs::path& input) {
  if (fs::is_regular_file(input)) return {input};
  if (!fs::is_directory(input)) throw DataError("input not found: " + input.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace randconv
