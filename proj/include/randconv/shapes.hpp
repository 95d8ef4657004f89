#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "randconv/image.hpp"

namespace randconv {

enum class ShapeKind { Square = 0, Disk = 1, Triangle = 2, Cross = 3 };

std::string to_string(ShapeKind kind);

// Texture recipes. Flat draws a bright foreground on a dark background;
// inverted swaps those roles; stripes and noise texture both regions.
inline const std::vector<std::string> kShapeDomains{"flat", "inverted", "stripes", "noise"};

struct ShapeDatasetSpec {
  int image_size = 32;
  std::vector<ShapeKind> classes{ShapeKind::Square, ShapeKind::Disk, ShapeKind::Triangle,
                                 ShapeKind::Cross};
  int per_class = 100;
  std::string domain = "flat";
  std::uint64_t seed = 0;

  void validate() const;
};

struct ShapeDataset {
  LabeledDataset data;
  // Binary silhouettes (1 = shape), image_size^2 bytes each.
  std::vector<std::vector<std::uint8_t>> masks;
};

// Classes are interleaved (0, 1, 2, 3, 0, 1, ...). Geometry depends only on
// (seed, image index), never on the domain, so the same spec in two domains
// yields the same silhouettes with different rendering.
ShapeDataset generate_shape_dataset(const ShapeDatasetSpec& spec);
LabeledDataset generate_dataset(const ShapeDatasetSpec& spec);

}  // namespace randconv
