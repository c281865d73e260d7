#pragma once

// Raster value types shared by every pipeline stage: luminance images,
// RGB images, binary masks and real-valued pixel coordinates.
//
// Coordinate convention (inherited by all modules): integer coordinates
// address pixel centers, x grows rightward along columns, y grows downward
// along rows. Luminance is stored as a real value in [0,1]; 8-bit files are
// converted on load.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfield {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct PixelCoord {
  double x = 0.0;
  double y = 0.0;
};

inline bool operator==(const PixelCoord& a, const PixelCoord& b) {
  return a.x == b.x && a.y == b.y;
}

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // row-major, one luminance value per pixel

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0)
      : width(w), height(h), data(check_dims(w, h), fill) {}

  double& at(int x, int y) { return data[std::size_t(y) * width + x]; }
  double at(int x, int y) const { return data[std::size_t(y) * width + x]; }
  bool contains(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  std::size_t pixel_count() const { return data.size(); }

  static std::size_t check_dims(int w, int h) {
    if (w <= 0 || h <= 0) throw Error("image dimensions must be positive");
    return std::size_t(w) * std::size_t(h);
  }
};

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> data;  // row-major (r,g,b) triples in [0,1]

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {})
      : width(w), height(h), data(GrayImage::check_dims(w, h), fill) {}

  Rgb& at(int x, int y) { return data[std::size_t(y) * width + x]; }
  const Rgb& at(int x, int y) const { return data[std::size_t(y) * width + x]; }
  bool contains(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major, 0 or 1

  BinaryMask() = default;
  BinaryMask(int w, int h, bool fill = false)
      : width(w), height(h), data(GrayImage::check_dims(w, h), fill ? 1 : 0) {}

  std::uint8_t& at(int x, int y) { return data[std::size_t(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[std::size_t(y) * width + x]; }
  bool contains(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  // Samples with coordinates clamped to the image rectangle.
  bool at_clamped(int x, int y) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return at(x, y) != 0;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += v != 0;
    return n;
  }
};

inline GrayImage to_grayscale(const RgbImage& img) {
  GrayImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const Rgb& c = img.data[i];
    out.data[i] = 0.299 * c.r + 0.587 * c.g + 0.114 * c.b;
  }
  return out;
}

// Bilinear interpolation of the four surrounding pixel centers. Returns
// nullopt when p falls outside [0,w-1] x [0,h-1]; the caller substitutes 0
// or skips the sample. Exact pixel values are returned at integer
// coordinates (the interpolation weights collapse).
inline std::optional<double> bilinear_sample(const GrayImage& img, PixelCoord p) {
  if (!(p.x >= 0.0 && p.x <= img.width - 1 && p.y >= 0.0 && p.y <= img.height - 1))
    return std::nullopt;
  int x0 = std::min(int(p.x), img.width - 2);
  int y0 = std::min(int(p.y), img.height - 2);
  if (img.width == 1) x0 = 0;
  if (img.height == 1) y0 = 0;
  const double fx = p.x - x0;
  const double fy = p.y - y0;
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  return img.at(x0, y0) * (1.0 - fx) * (1.0 - fy) +
         img.at(x1, y0) * fx * (1.0 - fy) +
         img.at(x0, y1) * (1.0 - fx) * fy +
         img.at(x1, y1) * fx * fy;
}

inline BinaryMask threshold(const GrayImage& img, double t) {
  BinaryMask mask(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    mask.data[i] = img.data[i] > t ? 1 : 0;
  return mask;
}

// 3x3 morphological dilation; pixels beyond the image border count as false.
inline BinaryMask dilate3x3(const BinaryMask& mask) {
  BinaryMask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      std::uint8_t v = 0;
      for (int dy = -1; dy <= 1 && !v; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= mask.height) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= mask.width) continue;
          if (mask.at(xx, yy)) {
            v = 1;
            break;
          }
        }
      }
      out.at(x, y) = v;
    }
  }
  return out;
}

inline BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height)
    throw Error("mask_and: dimension mismatch");
  BinaryMask out(a.width, a.height);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    out.data[i] = (a.data[i] && b.data[i]) ? 1 : 0;
  return out;
}

// Keeps only the largest connected true region (4-connected by default).
// Returns an all-false mask when the input has no true pixel.
inline BinaryMask largest_component(const BinaryMask& mask, int connectivity = 4) {
  if (connectivity != 4 && connectivity != 8)
    throw Error("largest_component: connectivity must be 4 or 8");
  const int w = mask.width, h = mask.height;
  std::vector<std::int32_t> label(mask.data.size(), -1);
  std::vector<std::size_t> areas;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.data.size(); ++start) {
    if (!mask.data[start] || label[start] >= 0) continue;
    const std::int32_t id = std::int32_t(areas.size());
    std::size_t area = 0;
    stack.push_back(start);
    label[start] = id;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++area;
      const int x = int(p % w), y = int(p / w);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (connectivity == 4 && dx != 0 && dy != 0) continue;
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
          const std::size_t q = std::size_t(yy) * w + xx;
          if (mask.data[q] && label[q] < 0) {
            label[q] = id;
            stack.push_back(q);
          }
        }
      }
    }
    areas.push_back(area);
  }
  BinaryMask out(w, h);
  if (areas.empty()) return out;
  const std::int32_t best =
      std::int32_t(std::max_element(areas.begin(), areas.end()) - areas.begin());
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = label[i] == best ? 1 : 0;
  return out;
}

}  // namespace dfield
