#pragma once

// Multi-view composition into one full-field image: per-view foreshortening
// correction under a pure-rotation camera model, pairwise registration of
// adjacent views, chain composition into the first view's frame, and direct
// average fusion of the overlap.

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dfield/core.hpp"
#include "dfield/features.hpp"
#include "dfield/homography_fit.hpp"
#include "dfield/matching.hpp"
#include "dfield/parallel.hpp"
#include "dfield/warp.hpp"
#include "dfield/zncc.hpp"

namespace dfield {

struct CameraPose {
  Eigen::Vector3d rotation{0, 0, 0};     // axis-angle, radians
  Eigen::Vector3d translation{0, 0, 0};  // mm; absorbed by registration
  double focal_px = 1000.0;
  double cx = 0.0, cy = 0.0;  // principal point, px
};

struct Panorama {
  GrayImage image;
  BinaryMask validity;                  // true exactly where overlap_count >= 1
  std::vector<Homography> transforms;   // per view, into the panorama frame
  std::vector<int> overlap_count;       // per pixel source count
};

struct StitchParams {
  DetectorParams detector;
  double ratio_threshold = 0.75;
  double ransac_threshold_px = 3.0;
  int ransac_iters = 2000;
  // Correlation-guided refinement of each pairwise registration: grid
  // templates matched across the overlap sharpen the feature-based
  // estimate to a few hundredths of a pixel.
  bool refine_correlation = true;
  int refine_grid_step = 40;
  int refine_template_px = 21;
  int refine_radius_px = 4;
  std::uint64_t seed = 1;
  int threads = 1;
};

// Re-projection homography H = K R K^-1 that rotates the imaging plane
// back to the reference (fronto-parallel) orientation.
inline Homography foreshortening_homography(const CameraPose& pose) {
  if (!(pose.focal_px > 0.0)) throw Error("foreshortening: focal length must be positive");
  const double angle = pose.rotation.norm();
  if (angle == 0.0) return Homography::identity();
  Eigen::Matrix3d k;
  k << pose.focal_px, 0, pose.cx, 0, pose.focal_px, pose.cy, 0, 0, 1;
  const Eigen::Matrix3d r = Eigen::AngleAxisd(angle, pose.rotation / angle).toRotationMatrix();
  return Homography((k * r * k.inverse()).eval());
}

inline WarpedImage foreshortening_correct(const GrayImage& img, const CameraPose& pose,
                                          int threads = 1) {
  return warp_perspective(img, foreshortening_homography(pose), img.width, img.height, threads);
}

namespace detail {

// Tightens a pairwise registration by matching small templates from a at
// grid points against b near their predicted positions, then refitting the
// homography on the sub-pixel correspondences.
inline Homography refine_pair_correlation(const GrayImage& a, const GrayImage& b,
                                          const Homography& h_ba, const StitchParams& params) {
  const Homography a_to_b = h_ba.inverse();
  const int tmpl = params.refine_template_px | 1;
  const int margin = tmpl / 2 + params.refine_radius_px + 2;
  std::vector<PointPair> pairs;
  for (int y = margin; y < a.height - margin; y += params.refine_grid_step) {
    for (int x = margin; x < a.width - margin; x += params.refine_grid_step) {
      const PixelCoord pa{double(x), double(y)};
      const auto pb = a_to_b.try_apply(pa);
      if (!pb) continue;
      if (pb->x < margin || pb->x > b.width - 1 - margin || pb->y < margin ||
          pb->y > b.height - 1 - margin)
        continue;
      auto t = extract_template(a, pa, tmpl, tmpl);
      if (!t) continue;
      t->center = *pb;  // search b around the predicted position
      const CorrelationSurface surf = correlate(*t, b, params.refine_radius_px);
      const auto pk = peak(surf);
      if (!pk || pk->r < 0.9) continue;
      const Refinement rf = subpixel_refine(surf, *pk);
      pairs.push_back({{pb->x + pk->du + rf.du, pb->y + pk->dv + rf.dv}, pa});
    }
  }
  if (pairs.size() < 12) return h_ba;
  try {
    return dlt_homography(pairs);
  } catch (const Error&) {
    return h_ba;
  }
}

}  // namespace detail

// Registers b against a (detect, match, consensus filter, optional
// correlation refinement) and returns the map from b's frame into a's frame.
inline Homography register_pair(const GrayImage& a, const GrayImage& b,
                                const StitchParams& params = {}) {
  const auto fa = detect_features(a, params.detector);
  const auto fb = detect_features(b, params.detector);
  if (fa.empty() || fb.empty()) throw Error("register_pair: no features detected");
  std::vector<Keypoint> ka, kb;
  std::vector<Descriptor> da, db;
  for (const auto& [k, d] : fa) {
    ka.push_back(k);
    da.push_back(d);
  }
  for (const auto& [k, d] : fb) {
    kb.push_back(k);
    db.push_back(d);
  }
  const KdTree tree_a(da);
  const auto matches = match_features(tree_a, db, params.ratio_threshold);
  if (matches.size() < 4) throw Error("register_pair: not enough matches");
  // match list indexes (a=descs queried, b=tree): here queries are b's
  // descriptors, so index_a refers to b and index_b refers to a; fit the
  // map b -> a accordingly.
  std::vector<Match> swapped;
  swapped.reserve(matches.size());
  for (const Match& m : matches) swapped.push_back({m.index_b, m.index_a, m.distance, m.ratio});
  Homography h = ransac_homography(swapped, ka, kb, params.ransac_threshold_px,
                                   params.ransac_iters, params.seed)
                     .homography;
  if (params.refine_correlation) h = detail::refine_pair_correlation(a, b, h, params);
  return h;
}

struct ComposedChain {
  std::vector<Homography> to_reference;  // per view, before the canvas offset
  double offset_x = 0.0, offset_y = 0.0; // translation making all corners non-negative
  int canvas_width = 0, canvas_height = 0;
};

// Composes adjacent-pair maps (H[i] maps view i+1 into view i) into view-0
// frame transforms and sizes the canvas from the warped view corners.
inline ComposedChain compose_chain(const std::vector<Homography>& pairwise,
                                   const std::vector<std::pair<int, int>>& view_sizes) {
  if (view_sizes.empty() || pairwise.size() + 1 != view_sizes.size())
    throw Error("compose_chain: need n-1 pairwise maps for n views");
  ComposedChain chain;
  chain.to_reference.push_back(Homography::identity());
  for (const Homography& h : pairwise)
    chain.to_reference.push_back(chain.to_reference.back() * h);

  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < view_sizes.size(); ++i) {
    const auto [w, h] = view_sizes[i];
    const PixelCoord corners[4] = {{0, 0}, {double(w - 1), 0}, {double(w - 1), double(h - 1)},
                                   {0, double(h - 1)}};
    for (const PixelCoord& c : corners) {
      const PixelCoord q = chain.to_reference[i].apply(c);
      if (first) {
        min_x = max_x = q.x;
        min_y = max_y = q.y;
        first = false;
      } else {
        min_x = std::min(min_x, q.x);
        min_y = std::min(min_y, q.y);
        max_x = std::max(max_x, q.x);
        max_y = std::max(max_y, q.y);
      }
    }
  }
  chain.offset_x = min_x < 0.0 ? std::ceil(-min_x) : 0.0;
  chain.offset_y = min_y < 0.0 ? std::ceil(-min_y) : 0.0;
  chain.canvas_width = int(std::lround(max_x + chain.offset_x)) + 1;
  chain.canvas_height = int(std::lround(max_y + chain.offset_y)) + 1;
  return chain;
}

// Arithmetic mean over the sources that actually cover each pixel.
inline Panorama blend_average(const std::vector<WarpedImage>& warped) {
  if (warped.empty()) throw Error("blend_average: no views");
  const int w = warped[0].image.width, h = warped[0].image.height;
  for (const auto& v : warped)
    if (v.image.width != w || v.image.height != h)
      throw Error("blend_average: canvas dimensions differ");
  Panorama pano;
  pano.image = GrayImage(w, h);
  pano.validity = BinaryMask(w, h);
  pano.overlap_count.assign(std::size_t(w) * h, 0);
  for (const auto& v : warped)
    for (std::size_t i = 0; i < v.image.data.size(); ++i)
      if (v.validity.data[i]) {
        pano.image.data[i] += v.image.data[i];
        pano.overlap_count[i] += 1;
      }
  for (std::size_t i = 0; i < pano.image.data.size(); ++i) {
    if (pano.overlap_count[i] > 0) {
      pano.image.data[i] /= pano.overlap_count[i];
      pano.validity.data[i] = 1;
    }
  }
  return pano;
}

// Full stitching pass: optional foreshortening correction, adjacent-pair
// registration, composition into the first (leftmost) view's frame, a
// single warp per view, and direct average fusion.
inline Panorama stitch_all(const std::vector<GrayImage>& views,
                           const std::vector<CameraPose>* poses = nullptr,
                           const StitchParams& params = {}) {
  if (views.empty()) throw Error("stitch_all: no views");
  if (poses && poses->size() != views.size())
    throw Error("stitch_all: pose count does not match view count");

  // Correction homographies; the corrected images feed registration, the
  // originals are warped just once by the composed end-to-end transform.
  std::vector<Homography> correction(views.size(), Homography::identity());
  std::vector<GrayImage> registered_input;
  registered_input.reserve(views.size());
  if (poses) {
    for (std::size_t i = 0; i < views.size(); ++i) {
      correction[i] = foreshortening_homography((*poses)[i]);
      registered_input.push_back(
          warp_perspective(views[i], correction[i], views[i].width, views[i].height,
                           params.threads)
              .image);
    }
  } else {
    registered_input = views;
  }

  std::vector<std::vector<Keypoint>> kps(views.size());
  std::vector<std::vector<Descriptor>> descs(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    for (const auto& [k, d] : detect_features(registered_input[i], params.detector)) {
      kps[i].push_back(k);
      descs[i].push_back(d);
    }
  }

  std::vector<Homography> pairwise;
  for (std::size_t i = 0; i + 1 < views.size(); ++i) {
    if (descs[i].empty() || descs[i + 1].empty())
      throw Error("stitch_all: no features in view pair " + std::to_string(i));
    const KdTree tree_a(descs[i]);
    const auto matches = match_features(tree_a, descs[i + 1], params.ratio_threshold);
    if (matches.size() < 4)
      throw Error("stitch_all: not enough matches for view pair " + std::to_string(i));
    std::vector<Match> swapped;
    swapped.reserve(matches.size());
    for (const Match& m : matches) swapped.push_back({m.index_b, m.index_a, m.distance, m.ratio});
    try {
      Homography h = ransac_homography(swapped, kps[i], kps[i + 1], params.ransac_threshold_px,
                                       params.ransac_iters, derive_seed(params.seed, i))
                         .homography;
      if (params.refine_correlation)
        h = detail::refine_pair_correlation(registered_input[i], registered_input[i + 1], h,
                                            params);
      pairwise.push_back(h);
    } catch (const Error& e) {
      throw Error("stitch_all: registration failed for view pair " + std::to_string(i) + ": " +
                  e.what());
    }
  }

  std::vector<std::pair<int, int>> sizes;
  for (const auto& v : registered_input) sizes.emplace_back(v.width, v.height);
  const ComposedChain chain = compose_chain(pairwise, sizes);
  const Homography offset = Homography::translation(chain.offset_x, chain.offset_y);

  std::vector<WarpedImage> warped;
  warped.reserve(views.size());
  Panorama pano;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const Homography full = offset * chain.to_reference[i] * correction[i];
    pano.transforms.push_back(full);
    warped.push_back(warp_perspective(views[i], full, chain.canvas_width, chain.canvas_height,
                                      params.threads));
  }
  Panorama blended = blend_average(warped);
  pano.image = std::move(blended.image);
  pano.validity = std::move(blended.validity);
  pano.overlap_count = std::move(blended.overlap_count);
  return pano;
}

// Composes an RGB panorama with transforms recovered from the gray pass.
inline RgbImage compose_rgb(const std::vector<RgbImage>& views,
                            const std::vector<Homography>& transforms, int canvas_width,
                            int canvas_height, int threads = 1) {
  if (views.size() != transforms.size()) throw Error("compose_rgb: view/transform count mismatch");
  RgbImage out(canvas_width, canvas_height);
  std::vector<int> count(std::size_t(canvas_width) * canvas_height, 0);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const WarpedRgb w = warp_perspective_rgb(views[i], transforms[i], canvas_width, canvas_height,
                                             threads);
    for (std::size_t k = 0; k < out.data.size(); ++k) {
      if (!w.validity.data[k]) continue;
      out.data[k].r += w.image.data[k].r;
      out.data[k].g += w.image.data[k].g;
      out.data[k].b += w.image.data[k].b;
      count[k] += 1;
    }
  }
  for (std::size_t k = 0; k < out.data.size(); ++k) {
    if (count[k] > 0) {
      out.data[k].r /= count[k];
      out.data[k].g /= count[k];
      out.data[k].b /= count[k];
    }
  }
  return out;
}

// Pose file rows: view, rx, ry, rz, tx, ty, tz, f, cx, cy.
inline std::vector<CameraPose> load_poses_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pose file: " + path);
  std::vector<CameraPose> poses;
  std::string line;
  bool header_skipped = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (!header_skipped && line.find("view") != std::string::npos) {
      header_skipped = true;
      continue;
    }
    CameraPose p;
    int view = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &view,
                    &p.rotation.x(), &p.rotation.y(), &p.rotation.z(), &p.translation.x(),
                    &p.translation.y(), &p.translation.z(), &p.focal_px, &p.cx, &p.cy) != 10)
      throw Error("bad pose row: " + line);
    poses.push_back(p);
  }
  return poses;
}

}  // namespace dfield
