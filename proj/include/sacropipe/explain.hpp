#pragma once

// Grad-CAM heatmaps and the in-box activation fraction.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "sacropipe/errors.hpp"
#include "sacropipe/image.hpp"
#include "sacropipe/imgproc.hpp"
#include "sacropipe/manifest.hpp"
#include "sacropipe/nn/nets.hpp"

namespace sacropipe::explain {

using nn::Tensor;

enum class Frame { model_input, full_image };

struct HeatMap {
  ImageF values;  // non-negative, max-normalised to 1 unless all zero
  int target_class = 1;
  std::string layer_id;
  Frame frame = Frame::model_input;
};

/// ReLU(sum_k mean(dA_k) * A_k) for sample 0, at feature-map resolution.
inline ImageF cam_from_activations(const Tensor& A, const Tensor& dA) {
  if (!A.same_shape(dA) || A.n < 1) throw ShapeError("grad-cam: activation/gradient shape mismatch");
  ImageF cam(A.h, A.w, 0.0f);
  std::vector<double> acc(A.plane(), 0.0);
  for (int k = 0; k < A.c; ++k) {
    const float* g = dA.channel(0, k);
    double w = 0.0;
    for (std::size_t q = 0; q < A.plane(); ++q) w += g[q];
    w /= static_cast<double>(A.plane());
    const float* a = A.channel(0, k);
    for (std::size_t q = 0; q < A.plane(); ++q) acc[q] += w * a[q];
  }
  for (std::size_t q = 0; q < acc.size(); ++q) cam.pixels[q] = static_cast<float>(std::max(0.0, acc[q]));
  return cam;
}

/// Divides by the maximum; an all-zero map is left untouched.
inline void max_normalize(ImageF& m) {
  float mx = 0.0f;
  for (float v : m.pixels) mx = std::max(mx, v);
  if (mx > 0.0f)
    for (float& v : m.pixels) v /= mx;
}

/// Grad-CAM for one preprocessed image. The score is the target-class logit;
/// the map is upsampled bilinearly to the input size and max-normalised.
inline HeatMap grad_cam(nn::Classifier& model, const ImageF& input, int target_class, std::string layer_id = "") {
  if (layer_id.empty()) layer_id = model.default_cam_layer();
  const auto ids = model.layer_ids();
  if (std::find(ids.begin(), ids.end(), layer_id) == ids.end())
    throw ConfigError("grad-cam: unknown layer id '" + layer_id + "'");
  if (target_class < 0 || target_class >= model.config().classes) throw ConfigError("grad-cam: bad target class");
  Tensor x(1, 1, input.rows, input.cols);
  std::copy(input.pixels.begin(), input.pixels.end(), x.data.begin());
  const Tensor logits = model.forward(x, false);
  Tensor d(1, logits.c, 1, 1);
  d.at(0, target_class, 0, 0) = 1.0f;
  const Tensor dA = model.backward(d, layer_id, false);
  ImageF cam = cam_from_activations(model.feature(layer_id), dA);
  HeatMap h{imgproc::resize(cam, input.rows, input.cols, imgproc::Interp::bilinear), target_class, layer_id,
            Frame::model_input};
  for (float& v : h.values.pixels) v = std::max(0.0f, v);
  max_normalize(h.values);
  return h;
}

/// Maps a model-input heatmap into the full-image frame. For crops, `crop_box`
/// gives the crop's position; the rest of the frame is zero.
inline HeatMap to_full_frame(const HeatMap& h, int full_rows, int full_cols, const std::optional<Box>& crop_box) {
  if (h.frame == Frame::full_image) return h;
  HeatMap out = h;
  out.frame = Frame::full_image;
  if (!crop_box) {
    out.values = imgproc::resize(h.values, full_rows, full_cols, imgproc::Interp::bilinear);
  } else {
    const Box& b = *crop_box;
    if (b.row0 < 0 || b.col0 < 0 || b.row1 > full_rows || b.col1 > full_cols || b.area() == 0)
      throw ConfigError("grad-cam: crop box outside the full-image frame");
    const auto local = imgproc::resize(h.values, b.height(), b.width(), imgproc::Interp::bilinear);
    out.values = ImageF(full_rows, full_cols, 0.0f);
    for (int r = 0; r < b.height(); ++r)
      for (int c = 0; c < b.width(); ++c) out.values(b.row0 + r, b.col0 + c) = local(r, c);
  }
  for (float& v : out.values.pixels) v = std::max(0.0f, v);
  max_normalize(out.values);
  return out;
}

/// Share of heatmap mass inside left ∪ right; 0 for an all-zero map.
inline double activation_in_box_fraction(const HeatMap& map, const SijBoxes& boxes) {
  if (map.frame != Frame::full_image)
    throw ConfigError("coordinate error: heatmap must be re-embedded into the full-image frame (crop offset missing)");
  double inside = 0.0, total = 0.0;
  for (int r = 0; r < map.values.rows; ++r)
    for (int c = 0; c < map.values.cols; ++c) {
      const double v = map.values(r, c);
      total += v;
      if (boxes.left.contains(r, c) || boxes.right.contains(r, c)) inside += v;
    }
  return total > 0.0 ? inside / total : 0.0;
}

}  // namespace sacropipe::explain
