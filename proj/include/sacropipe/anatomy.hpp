#pragma once

// Segmentation-driven SIJ localisation: dilate the sacrum, intersect with the
// pelvis, keep the two largest 8-connected components, box and crop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "sacropipe/errors.hpp"
#include "sacropipe/image.hpp"
#include "sacropipe/manifest.hpp"

namespace sacropipe::anatomy {

inline constexpr std::uint8_t kPelvis = 1;
inline constexpr std::uint8_t kSacrum = 2;

enum class MaskSource { model, ground_truth };

struct SegMask {
  LabelMap labels;
  MaskSource source = MaskSource::ground_truth;
};

inline void check_labels(const LabelMap& m) {
  for (auto v : m.pixels)
    if (v > 2) throw ConfigError("segmentation label outside {0,1,2}: " + std::to_string(int(v)));
}

/// 2% of the image width, the default dilation reach.
inline int default_radius(int image_cols) { return std::max(1, static_cast<int>(std::lround(0.02 * image_cols))); }

/// Binary dilation with the discrete disk {(dy,dx): dy^2 + dx^2 <= r^2}.
inline BinaryMask dilate(const BinaryMask& in, int radius) {
  if (radius < 0) throw ConfigError("dilate: radius must be >= 0");
  if (radius == 0 || in.empty()) return in;
  const int rows = in.rows, cols = in.cols;
  const int r_eff = std::min(radius, std::max(rows, cols));
  // Row prefix sums: any set pixel in [c - w, c + w] of a row is an O(1) query.
  std::vector<int> prefix(static_cast<std::size_t>(rows) * (cols + 1), 0);
  for (int r = 0; r < rows; ++r) {
    int* p = &prefix[static_cast<std::size_t>(r) * (cols + 1)];
    for (int c = 0; c < cols; ++c) p[c + 1] = p[c] + (in(r, c) ? 1 : 0);
  }
  BinaryMask out(rows, cols, 0);
  for (int dy = -r_eff; dy <= r_eff; ++dy) {
    const long rem = static_cast<long>(radius) * radius - static_cast<long>(dy) * dy;
    const int w = static_cast<int>(std::floor(std::sqrt(static_cast<double>(rem))));
    for (int r = 0; r < rows; ++r) {
      const int src = r + dy;
      if (src < 0 || src >= rows) continue;
      const int* p = &prefix[static_cast<std::size_t>(src) * (cols + 1)];
      if (p[cols] == 0) continue;
      for (int c = 0; c < cols; ++c) {
        if (out(r, c)) continue;
        const int lo = std::max(0, c - w), hi = std::min(cols, c + w + 1);
        if (p[hi] - p[lo] > 0) out(r, c) = 1;
      }
    }
  }
  return out;
}

struct Component {
  int id = 0;
  long area = 0;
  double centroid_row = 0;
  double centroid_col = 0;
  Box bbox;
};

/// 8-connected labelling; labels are 1-based in raster order of first pixel.
inline std::vector<Component> connected_components(const BinaryMask& m, Image<int>& labels_out) {
  labels_out = Image<int>(m.rows, m.cols, 0);
  std::vector<Component> comps;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) {
      if (!m(r, c) || labels_out(r, c)) continue;
      Component comp;
      comp.id = static_cast<int>(comps.size()) + 1;
      comp.bbox = {r, c, r + 1, c + 1};
      double sr = 0, sc = 0;
      stack.assign(1, {r, c});
      labels_out(r, c) = comp.id;
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        ++comp.area;
        sr += y;
        sc += x;
        comp.bbox.row0 = std::min(comp.bbox.row0, y);
        comp.bbox.col0 = std::min(comp.bbox.col0, x);
        comp.bbox.row1 = std::max(comp.bbox.row1, y + 1);
        comp.bbox.col1 = std::max(comp.bbox.col1, x + 1);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if ((dy || dx) && ny >= 0 && nx >= 0 && ny < m.rows && nx < m.cols && m(ny, nx) && !labels_out(ny, nx)) {
              labels_out(ny, nx) = comp.id;
              stack.emplace_back(ny, nx);
            }
          }
        }
      }
      comp.centroid_row = sr / static_cast<double>(comp.area);
      comp.centroid_col = sc / static_cast<double>(comp.area);
      comps.push_back(comp);
    }
  }
  return comps;
}

/// The two retained joint regions; `map` holds 1 for left, 2 for right.
struct SijRegions {
  LabelMap map;
  Component left;
  Component right;
  int components_found = 0;
};

inline SijRegions sij_regions(const LabelMap& seg, int radius) {
  check_labels(seg);
  BinaryMask sacrum(seg.rows, seg.cols, 0), pelvis(seg.rows, seg.cols, 0);
  bool any_sacrum = false, any_pelvis = false;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    sacrum.pixels[i] = seg.pixels[i] == kSacrum;
    pelvis.pixels[i] = seg.pixels[i] == kPelvis;
    any_sacrum |= seg.pixels[i] == kSacrum;
    any_pelvis |= seg.pixels[i] == kPelvis;
  }
  if (!any_sacrum || !any_pelvis) throw LocalizationError("segmentation lacks sacrum or pelvis label");

  BinaryMask joint = dilate(sacrum, radius);
  for (std::size_t i = 0; i < joint.size(); ++i) joint.pixels[i] = joint.pixels[i] && pelvis.pixels[i];

  Image<int> cc;
  auto comps = connected_components(joint, cc);
  if (comps.size() < 2)
    throw LocalizationError("expected two SIJ regions after dilation/intersection, found " +
                            std::to_string(comps.size()));
  // Two largest by area; ties go to the leftmost centroid.
  std::stable_sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
    if (a.area != b.area) return a.area > b.area;
    return a.centroid_col < b.centroid_col;
  });
  SijRegions out;
  out.components_found = static_cast<int>(comps.size());
  out.left = comps[0];
  out.right = comps[1];
  if (out.right.centroid_col < out.left.centroid_col) std::swap(out.left, out.right);
  out.map = LabelMap(seg.rows, seg.cols, 0);
  for (std::size_t i = 0; i < cc.size(); ++i) {
    if (cc.pixels[i] == out.left.id) out.map.pixels[i] = 1;
    else if (cc.pixels[i] == out.right.id) out.map.pixels[i] = 2;
  }
  return out;
}

inline SijBoxes sij_bounding_boxes(const SijRegions& regions, double margin_fraction) {
  if (margin_fraction < 0) throw ConfigError("margin_fraction must be >= 0");
  const int rows = regions.map.rows, cols = regions.map.cols;
  SijBoxes b;
  b.left = expand_box(regions.left.bbox, margin_fraction, rows, cols);
  b.right = expand_box(regions.right.bbox, margin_fraction, rows, cols);
  b.margin_applied = margin_fraction;
  return b;
}

/// Rectangle spanning both joints and the sacrum between them.
inline Box sij_crop_box(const SijBoxes& boxes) {
  const Box u = bounding_union(boxes.left, boxes.right);
  if (u.area() == 0) throw LocalizationError("degenerate SIJ crop (zero area)");
  return u;
}

template <class T>
struct CropResult {
  Image<T> image;
  Box box;  // crop rectangle in the source frame
};

template <class T>
CropResult<T> crop_to_sij(const Image<T>& img, const SijBoxes& boxes) {
  const Box u = sij_crop_box(boxes);
  if (u.row0 < 0 || u.col0 < 0 || u.row1 > img.rows || u.col1 > img.cols)
    throw LocalizationError("SIJ boxes exceed image bounds");
  return {crop(img, u), u};
}

struct LocalizeParams {
  int radius = -1;  // < 0: default_radius(cols)
  double margin = 0.1;
};

/// Mask -> regions -> boxes in one call.
inline SijBoxes localize(const LabelMap& seg, const LocalizeParams& p = {}) {
  const int radius = p.radius < 0 ? default_radius(seg.cols) : p.radius;
  return sij_bounding_boxes(sij_regions(seg, radius), p.margin);
}

}  // namespace sacropipe::anatomy
