#include "randconv/shapes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "randconv/rng.hpp"

namespace randconv {

namespace {

constexpr double kMinArea = 0.30;
constexpr double kMaxArea = 0.70;
constexpr std::uint64_t kColorTag = 0xC010'0000'0000'0001ULL;
constexpr std::uint64_t kTextureTag = 0x7E57'0000'0000'0001ULL;

using Color = std::array<float, 3>;

struct Point {
  double x, y;
};

double edge(Point a, Point b, Point p) { return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x); }

std::vector<std::uint8_t> rasterize(ShapeKind kind, int size, Rng& rng) {
  const double s = size;
  const double area = rng.uniform() * 0.16 + 0.32;  // target fraction of the image
  const double margin = 1.0;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size, 0);
  auto place = [&](double extent) { return margin + rng.uniform() * (s - 2 * margin - extent); };

  switch (kind) {
    case ShapeKind::Square: {
      const double side = std::sqrt(area) * s;
      const double x0 = place(side), y0 = place(side);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double px = x + 0.5, py = y + 0.5;
          mask[y * size + x] = px >= x0 && px < x0 + side && py >= y0 && py < y0 + side;
        }
      break;
    }
    case ShapeKind::Disk: {
      const double r = std::sqrt(area / std::numbers::pi) * s;
      const double cx = place(2 * r) + r, cy = place(2 * r) + r;
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          mask[y * size + x] = dx * dx + dy * dy <= r * r;
        }
      break;
    }
    case ShapeKind::Triangle: {
      // Upright isosceles triangle with base == height.
      const double b = std::sqrt(2.0 * area) * s;
      const double x0 = place(b), y0 = place(b);
      const Point apex{x0 + b / 2, y0}, left{x0, y0 + b}, right{x0 + b, y0 + b};
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const Point p{x + 0.5, y + 0.5};
          const double e0 = edge(apex, left, p), e1 = edge(left, right, p), e2 = edge(right, apex, p);
          mask[y * size + x] = (e0 <= 0 && e1 <= 0 && e2 <= 0) || (e0 >= 0 && e1 >= 0 && e2 >= 0);
        }
      break;
    }
    case ShapeKind::Cross: {
      // Plus sign with arm thickness one third of its extent: area 5/9 L^2.
      const double len = std::sqrt(9.0 * area / 5.0) * s;
      const double arm = len / 3.0;
      const double x0 = place(len), y0 = place(len);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double px = x + 0.5 - x0, py = y + 0.5 - y0;
          const bool in_box = px >= 0 && px < len && py >= 0 && py < len;
          const bool in_h = py >= arm && py < 2 * arm;
          const bool in_v = px >= arm && px < 2 * arm;
          mask[y * size + x] = in_box && (in_h || in_v);
        }
      break;
    }
  }
  return mask;
}

Color random_color(Rng& rng, float lo, float hi) {
  Color c;
  for (auto& v : c) v = static_cast<float>(lo + (hi - lo) * rng.uniform());
  return c;
}

ImageTensor render(const std::vector<std::uint8_t>& mask, int size, const std::string& domain,
                   Rng color_rng, Rng texture_rng) {
  Color fg = random_color(color_rng, 0.55f, 1.0f);
  Color bg = random_color(color_rng, 0.0f, 0.45f);
  if (domain == "inverted") std::swap(fg, bg);

  ImageTensor img(static_cast<std::size_t>(size), static_cast<std::size_t>(size), 3);
  if (domain == "stripes") {
    // Each region alternates between its base color and a random second color
    // with a 2-pixel period along a random orientation.
    const Color fg_alt = random_color(texture_rng, 0.0f, 1.0f);
    const Color bg_alt = random_color(texture_rng, 0.0f, 1.0f);
    const double theta = texture_rng.uniform() * std::numbers::pi;
    const double ux = std::cos(theta), uy = std::sin(theta);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const bool on_shape = mask[y * size + x] != 0;
        const double phase = std::fmod(std::fabs(x * ux + y * uy), 2.0);
        const bool alt = phase >= 1.0;
        const Color& c = on_shape ? (alt ? fg_alt : fg) : (alt ? bg_alt : bg);
        for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c[ch];
      }
    return img;
  }
  const bool noisy = domain == "noise";
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const Color& c = mask[y * size + x] ? fg : bg;
      for (int ch = 0; ch < 3; ++ch) {
        float v = c[ch];
        if (noisy) v = std::clamp(v + static_cast<float>(0.6 * texture_rng.uniform() - 0.3), 0.0f, 1.0f);
        img.at(y, x, ch) = v;
      }
    }
  return img;
}

}  // namespace

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Square: return "square";
    case ShapeKind::Disk: return "disk";
    case ShapeKind::Triangle: return "triangle";
    case ShapeKind::Cross: return "cross";
  }
  return "unknown";
}

void ShapeDatasetSpec::validate() const {
  if (image_size < 8) throw std::invalid_argument("image_size must be at least 8");
  if (classes.empty()) throw std::invalid_argument("at least one shape class is required");
  if (per_class < 1) throw std::invalid_argument("per_class must be positive");
  if (std::find(kShapeDomains.begin(), kShapeDomains.end(), domain) == kShapeDomains.end())
    throw std::invalid_argument("unknown domain '" + domain + "'");
}

ShapeDataset generate_shape_dataset(const ShapeDatasetSpec& spec) {
  spec.validate();
  ShapeDataset out;
  out.data.num_classes = static_cast<int>(spec.classes.size());
  out.data.domain_tag = spec.domain;
  const std::size_t total = static_cast<std::size_t>(spec.per_class) * spec.classes.size();
  const double pixels = static_cast<double>(spec.image_size) * spec.image_size;
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t label = i % spec.classes.size();
    Rng geometry(derive_stream(spec.seed, {i}));
    std::vector<std::uint8_t> mask;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw std::runtime_error("cannot place shape within the area limits");
      mask = rasterize(spec.classes[label], spec.image_size, geometry);
      const double fill = std::count(mask.begin(), mask.end(), 1) / pixels;
      if (fill >= kMinArea && fill <= kMaxArea) break;
    }
    out.data.images.push_back(render(mask, spec.image_size, spec.domain,
                                     Rng(derive_stream(spec.seed, {kColorTag, i})),
                                     Rng(derive_stream(spec.seed, {kTextureTag, i}))));
    out.data.labels.push_back(static_cast<int>(label));
    out.masks.push_back(std::move(mask));
  }
  return out;
}

LabeledDataset generate_dataset(const ShapeDatasetSpec& spec) {
  return generate_shape_dataset(spec).data;
}

}  // namespace randconv
