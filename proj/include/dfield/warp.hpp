#pragma once

// Perspective warping by inverse mapping: every output pixel is pulled back
// through the inverse homography and bilinearly sampled, never forward
// splatted. Unsampled pixels are 0 and recorded in a validity mask so
// blending can ignore them.

#include "dfield/core.hpp"
#include "dfield/homography.hpp"
#include "dfield/parallel.hpp"

namespace dfield {

struct WarpedImage {
  GrayImage image;
  BinaryMask validity;
};

inline WarpedImage warp_perspective(const GrayImage& img, const Homography& h,
                                    int out_width, int out_height,
                                    int threads = 1) {
  const Homography inv = h.inverse();  // throws on singular input
  WarpedImage out{GrayImage(out_width, out_height), BinaryMask(out_width, out_height)};
  parallel_for(out_height, threads, [&](std::int64_t y) {
    for (int x = 0; x < out_width; ++x) {
      const auto p = inv.try_apply({double(x), double(y)});
      if (!p) continue;
      const auto v = bilinear_sample(img, *p);
      if (!v) continue;
      out.image.at(x, int(y)) = *v;
      out.validity.at(x, int(y)) = 1;
    }
  });
  return out;
}

struct WarpedRgb {
  RgbImage image;
  BinaryMask validity;
};

inline WarpedRgb warp_perspective_rgb(const RgbImage& img, const Homography& h,
                                      int out_width, int out_height,
                                      int threads = 1) {
  GrayImage chan(img.width, img.height);
  WarpedRgb out{RgbImage(out_width, out_height), BinaryMask(out_width, out_height)};
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < img.data.size(); ++i)
      chan.data[i] = c == 0 ? img.data[i].r : c == 1 ? img.data[i].g : img.data[i].b;
    WarpedImage w = warp_perspective(chan, h, out_width, out_height, threads);
    for (std::size_t i = 0; i < out.image.data.size(); ++i) {
      double& dst = c == 0 ? out.image.data[i].r : c == 1 ? out.image.data[i].g : out.image.data[i].b;
      dst = w.image.data[i];
    }
    if (c == 0) out.validity = std::move(w.validity);
  }
  return out;
}

}  // namespace dfield
