#pragma once

// Preprocessing (CLAHE, resize, z-normalisation) and augmentation shared by
// the segmentation and both classification paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "sacropipe/config.hpp"
#include "sacropipe/errors.hpp"
#include "sacropipe/image.hpp"
#include "sacropipe/random.hpp"

namespace sacropipe::imgproc {

// ---- CLAHE --------------------------------------------------------------------

struct ClaheParams {
  int tile_rows = 8;
  int tile_cols = 8;
  // Multiple of the mean bin count; +inf disables clipping.
  double clip_limit = 2.0;
  int bins = 256;
};

template <class T>
constexpr double full_scale() {
  return static_cast<double>(std::numeric_limits<T>::max());
}

namespace detail {

/// Tile t of n over a length: [floor(t*len/n), floor((t+1)*len/n)).
inline int tile_start(int t, int n, int len) { return static_cast<int>(static_cast<long>(t) * len / n); }

template <class T>
int bin_of(T v, int bins) {
  return static_cast<int>(static_cast<std::uint64_t>(v) * static_cast<std::uint64_t>(bins) /
                          (static_cast<std::uint64_t>(std::numeric_limits<T>::max()) + 1));
}

}  // namespace detail

/// Clipped-histogram equalisation LUT for one tile: lut[b] in [0, full_scale].
inline std::vector<double> clahe_tile_lut(std::span<const std::uint32_t> hist_in, long tile_pixels, double clip_limit,
                                          double out_max) {
  const int bins = static_cast<int>(hist_in.size());
  std::vector<long> hist(hist_in.begin(), hist_in.end());
  if (std::isfinite(clip_limit)) {
    const long clip = std::max(1L, static_cast<long>(clip_limit * static_cast<double>(tile_pixels) / bins));
    long excess = 0;
    for (auto& h : hist) {
      if (h > clip) {
        excess += h - clip;
        h = clip;
      }
    }
    // Single pass: equal share to every bin, remainder spread with a fixed stride from bin 0.
    const long share = excess / bins;
    const long remainder = excess % bins;
    for (auto& h : hist) h += share;
    if (remainder > 0) {
      const long step = std::max(1L, bins / remainder);
      long given = 0;
      for (long b = 0; b < bins && given < remainder; b += step, ++given) ++hist[static_cast<std::size_t>(b)];
    }
  }
  std::vector<double> lut(static_cast<std::size_t>(bins));
  long cdf = 0;
  for (int b = 0; b < bins; ++b) {
    cdf += hist[static_cast<std::size_t>(b)];
    lut[static_cast<std::size_t>(b)] = static_cast<double>(cdf) / static_cast<double>(tile_pixels) * out_max;
  }
  return lut;
}

template <class T>
Image<T> clahe(const Image<T>& img, const ClaheParams& p = {}) {
  static_assert(std::is_same_v<T, std::uint8_t> || std::is_same_v<T, std::uint16_t>, "CLAHE needs 8 or 16-bit input");
  if (img.empty()) throw ConfigError("clahe: empty image");
  if (p.tile_rows < 1 || p.tile_cols < 1) throw ConfigError("clahe: tiles must be >= 1x1");
  if (!(p.clip_limit > 0)) throw ConfigError("clahe: clip_limit must be > 0");
  if (p.bins < 2) throw ConfigError("clahe: bins must be >= 2");
  if (img.rows / p.tile_rows < 2 || img.cols / p.tile_cols < 2) throw ConfigError("clahe: tiles smaller than 2x2 px");

  const int tr = p.tile_rows, tc = p.tile_cols;
  const double out_max = full_scale<T>();
  std::vector<std::vector<double>> luts(static_cast<std::size_t>(tr * tc));
  std::vector<double> centre_r(static_cast<std::size_t>(tr)), centre_c(static_cast<std::size_t>(tc));
  for (int i = 0; i < tr; ++i)
    centre_r[i] = 0.5 * (detail::tile_start(i, tr, img.rows) + detail::tile_start(i + 1, tr, img.rows)) - 0.5;
  for (int j = 0; j < tc; ++j)
    centre_c[j] = 0.5 * (detail::tile_start(j, tc, img.cols) + detail::tile_start(j + 1, tc, img.cols)) - 0.5;

  std::vector<std::uint32_t> hist(static_cast<std::size_t>(p.bins));
  for (int i = 0; i < tr; ++i) {
    const int r0 = detail::tile_start(i, tr, img.rows), r1 = detail::tile_start(i + 1, tr, img.rows);
    for (int j = 0; j < tc; ++j) {
      const int c0 = detail::tile_start(j, tc, img.cols), c1 = detail::tile_start(j + 1, tc, img.cols);
      std::fill(hist.begin(), hist.end(), 0u);
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) ++hist[static_cast<std::size_t>(detail::bin_of(img(r, c), p.bins))];
      luts[static_cast<std::size_t>(i * tc + j)] =
          clahe_tile_lut(hist, static_cast<long>(r1 - r0) * (c1 - c0), p.clip_limit, out_max);
    }
  }

  // Neighbouring tile index and weight along one axis; borders clamp to the outer tile.
  auto locate = [](const std::vector<double>& centres, double x, int& lo, int& hi, double& w) {
    const int n = static_cast<int>(centres.size());
    if (x <= centres.front()) {
      lo = hi = 0;
      w = 0.0;
    } else if (x >= centres.back()) {
      lo = hi = n - 1;
      w = 0.0;
    } else {
      hi = static_cast<int>(std::upper_bound(centres.begin(), centres.end(), x) - centres.begin());
      lo = hi - 1;
      w = (x - centres[lo]) / (centres[hi] - centres[lo]);
    }
  };

  Image<T> out(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r) {
    int i0, i1;
    double wy;
    locate(centre_r, r, i0, i1, wy);
    for (int c = 0; c < img.cols; ++c) {
      int j0, j1;
      double wx;
      locate(centre_c, c, j0, j1, wx);
      const auto b = static_cast<std::size_t>(detail::bin_of(img(r, c), p.bins));
      const double l00 = luts[static_cast<std::size_t>(i0 * tc + j0)][b];
      const double l01 = luts[static_cast<std::size_t>(i0 * tc + j1)][b];
      const double l10 = luts[static_cast<std::size_t>(i1 * tc + j0)][b];
      const double l11 = luts[static_cast<std::size_t>(i1 * tc + j1)][b];
      const double top = l00 + wx * (l01 - l00);
      const double bottom = l10 + wx * (l11 - l10);
      const double v = top + wy * (bottom - top);
      out(r, c) = static_cast<T>(std::clamp(std::round(v), 0.0, out_max));
    }
  }
  return out;
}

// ---- resize -----------------------------------------------------------------------

enum class Interp { bilinear, nearest };

/// Half-pixel-centre resampling; bilinear for images, nearest for label maps.
template <class T>
Image<T> resize(const Image<T>& img, int target_rows, int target_cols, Interp mode = Interp::bilinear) {
  if (target_rows < 1 || target_cols < 1) throw ConfigError("resize: target size must be >= 1");
  if (img.empty()) throw ConfigError("resize: empty image");
  if (target_rows == img.rows && target_cols == img.cols) return img;
  Image<T> out(target_rows, target_cols);
  const double sy = static_cast<double>(img.rows) / target_rows;
  const double sx = static_cast<double>(img.cols) / target_cols;
  if (mode == Interp::nearest) {
    for (int r = 0; r < target_rows; ++r) {
      const int yr = std::min(img.rows - 1, static_cast<int>(std::floor((r + 0.5) * sy)));
      for (int c = 0; c < target_cols; ++c) {
        const int xc = std::min(img.cols - 1, static_cast<int>(std::floor((c + 0.5) * sx)));
        out(r, c) = img(yr, xc);
      }
    }
    return out;
  }
  std::vector<int> x0(static_cast<std::size_t>(target_cols)), x1(x0.size());
  std::vector<double> wx(x0.size());
  for (int c = 0; c < target_cols; ++c) {
    const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, img.cols - 1.0);
    x0[c] = static_cast<int>(std::floor(x));
    x1[c] = std::min(x0[c] + 1, img.cols - 1);
    wx[c] = x - x0[c];
  }
  for (int r = 0; r < target_rows; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, img.rows - 1.0);
    const int y0 = static_cast<int>(std::floor(y));
    const int y1 = std::min(y0 + 1, img.rows - 1);
    const double wy = y - y0;
    for (int c = 0; c < target_cols; ++c) {
      const double top = img(y0, x0[c]) + wx[c] * (static_cast<double>(img(y0, x1[c])) - img(y0, x0[c]));
      const double bot = img(y1, x0[c]) + wx[c] * (static_cast<double>(img(y1, x1[c])) - img(y1, x0[c]));
      const double v = top + wy * (bot - top);
      if constexpr (std::is_integral_v<T>)
        out(r, c) = static_cast<T>(std::clamp(std::round(v), 0.0, full_scale<T>()));
      else
        out(r, c) = static_cast<T>(v);
    }
  }
  return out;
}

enum class FitPolicy { stretch, center_crop };

/// Brings an image to (rows, cols): direct non-uniform resize, or aspect-preserving
/// resize to cover the target followed by a centred crop.
template <class T>
Image<T> fit(const Image<T>& img, int rows, int cols, FitPolicy policy, Interp mode = Interp::bilinear) {
  if (policy == FitPolicy::stretch) return resize(img, rows, cols, mode);
  const double scale = std::max(static_cast<double>(rows) / img.rows, static_cast<double>(cols) / img.cols);
  const int rr = std::max(rows, static_cast<int>(std::ceil(img.rows * scale - 1e-9)));
  const int cc = std::max(cols, static_cast<int>(std::ceil(img.cols * scale - 1e-9)));
  auto big = resize(img, rr, cc, mode);
  const int r0 = (rr - rows) / 2, c0 = (cc - cols) / 2;
  return crop(big, Box{r0, c0, r0 + rows, c0 + cols});
}

// ---- normalisation --------------------------------------------------------------

/// (x - mean) / sd with population sd; constant images map to zeros.
template <class T>
ImageF znormalize(const Image<T>& img) {
  ImageF out(img.rows, img.cols, 0.0f);
  if (img.empty()) return out;
  double sum = 0.0;
  for (auto v : img.pixels) sum += static_cast<double>(v);
  const double mean = sum / static_cast<double>(img.size());
  double ss = 0.0;
  for (auto v : img.pixels) ss += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
  const double sd = std::sqrt(ss / static_cast<double>(img.size()));
  if (!(sd > 0.0)) return out;
  for (std::size_t i = 0; i < img.size(); ++i)
    out.pixels[i] = static_cast<float>((static_cast<double>(img.pixels[i]) - mean) / sd);
  return out;
}

struct PreprocessParams {
  ClaheParams clahe;
  FitPolicy fit = FitPolicy::stretch;
  bool use_clahe = true;
};

/// resize -> CLAHE -> z-score: the one path both classifier variants and the U-Net use.
inline ImageF preprocess(const ImageU16& img, int rows, int cols, const PreprocessParams& p = {}) {
  auto sized = fit(img, rows, cols, p.fit);
  if (p.use_clahe) {
    ClaheParams cp = p.clahe;
    cp.tile_rows = std::min(cp.tile_rows, std::max(1, rows / 2));
    cp.tile_cols = std::min(cp.tile_cols, std::max(1, cols / 2));
    sized = clahe(sized, cp);
  }
  return znormalize(sized);
}

// ---- augmentation -----------------------------------------------------------------

struct AugmentParams {
  double flip_prob = 0.5;          // horizontal only
  double max_rotation_deg = 10.0;
  double zoom_range = 0.10;        // scale drawn from [1 - z, 1 + z]
  double max_shear_deg = 5.0;
  double intensity_shift = 0.0;    // additive, in normalised units
  double contrast_range = 0.0;     // multiplicative factor from [1 - c, 1 + c]
  double gauss_noise_sigma = 0.0;
};

inline void validate(const AugmentParams& p) {
  if (p.flip_prob < 0 || p.flip_prob > 1) throw ConfigError("augment: flip_prob must be in [0,1]");
  if (p.max_rotation_deg < 0 || p.max_rotation_deg > 10.0) throw ConfigError("augment: rotation must be in [0,10] deg");
  if (p.zoom_range < 0 || p.zoom_range >= 1 || p.max_shear_deg < 0 || p.intensity_shift < 0 || p.contrast_range < 0 ||
      p.gauss_noise_sigma < 0)
    throw ConfigError("augment: magnitudes must be >= 0 (zoom < 1)");
}

/// One realisation of the random transform. Draw order: flip, rotation, zoom,
/// shear, intensity shift, contrast, then per-pixel noise (only if sigma > 0).
struct AugmentDraw {
  bool flip = false;
  double rotation_deg = 0.0;
  double zoom = 1.0;
  double shear_deg = 0.0;
  double shift = 0.0;
  double contrast = 1.0;

  bool geometric_identity() const { return !flip && rotation_deg == 0.0 && zoom == 1.0 && shear_deg == 0.0; }
};

inline AugmentDraw draw_augment(const AugmentParams& p, Rng& rng) {
  validate(p);
  AugmentDraw d;
  d.flip = uniform(rng) < p.flip_prob;
  d.rotation_deg = uniform(rng, -p.max_rotation_deg, p.max_rotation_deg);
  d.zoom = uniform(rng, 1.0 - p.zoom_range, 1.0 + p.zoom_range);
  d.shear_deg = uniform(rng, -p.max_shear_deg, p.max_shear_deg);
  d.shift = uniform(rng, -p.intensity_shift, p.intensity_shift);
  d.contrast = uniform(rng, 1.0 - p.contrast_range, 1.0 + p.contrast_range);
  return d;
}

namespace detail {

// Output->source mapping about the image centre: src = A^-1 (dst - c) + c, A = R * Shear * Zoom, then flip.
struct Affine {
  double a00, a01, a10, a11;
  double cx, cy;
  bool flip;
  int cols;
  void source(double x, double y, double& sx, double& sy) const {
    const double dx = x - cx, dy = y - cy;
    sx = a00 * dx + a01 * dy + cx;
    sy = a10 * dx + a11 * dy + cy;
    if (flip) sx = (cols - 1) - sx;
  }
};

inline Affine inverse_affine(const AugmentDraw& d, int rows, int cols) {
  const double th = d.rotation_deg * std::numbers::pi / 180.0;
  const double sh = std::tan(d.shear_deg * std::numbers::pi / 180.0);
  // Forward A = R(th) * [[1, sh],[0, 1]] * zoom; invert the 2x2.
  const double c = std::cos(th), s = std::sin(th);
  const double f00 = c * d.zoom, f01 = (c * sh - s) * d.zoom;
  const double f10 = s * d.zoom, f11 = (s * sh + c) * d.zoom;
  const double det = f00 * f11 - f01 * f10;
  return {f11 / det, -f01 / det, -f10 / det, f00 / det, 0.5 * (cols - 1), 0.5 * (rows - 1), d.flip, cols};
}

}  // namespace detail

template <class T>
struct Augmented {
  Image<T> image;
  std::optional<LabelMap> mask;
};

/// Applies one draw: geometry to image (bilinear, zero fill) and mask (nearest,
/// background fill); photometric changes to the image only.
inline Augmented<float> apply_augment(const ImageF& img, const std::optional<LabelMap>& mask, const AugmentDraw& d,
                                      double noise_sigma, Rng& rng) {
  if (mask && !mask->same_shape(img)) throw ShapeError("augment: mask shape differs from image");
  Augmented<float> out{img, mask};
  if (!d.geometric_identity()) {
    const auto A = detail::inverse_affine(d, img.rows, img.cols);
    for (int r = 0; r < img.rows; ++r) {
      for (int c = 0; c < img.cols; ++c) {
        double sx, sy;
        A.source(c, r, sx, sy);
        float v = 0.0f;
        if (sx > -1.0 && sy > -1.0 && sx < img.cols && sy < img.rows) {
          const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
          const double wx = sx - x0, wy = sy - y0;
          auto at = [&](int y, int x) -> double {
            return (x < 0 || y < 0 || x >= img.cols || y >= img.rows) ? 0.0 : img(y, x);
          };
          const double top = at(y0, x0) + wx * (at(y0, x0 + 1) - at(y0, x0));
          const double bot = at(y0 + 1, x0) + wx * (at(y0 + 1, x0 + 1) - at(y0 + 1, x0));
          v = static_cast<float>(top + wy * (bot - top));
        }
        out.image(r, c) = v;
        if (mask) {
          const int xn = static_cast<int>(std::lround(sx)), yn = static_cast<int>(std::lround(sy));
          (*out.mask)(r, c) = (xn < 0 || yn < 0 || xn >= img.cols || yn >= img.rows) ? 0 : (*mask)(yn, xn);
        }
      }
    }
  }
  if (d.shift != 0.0 || d.contrast != 1.0)
    for (auto& v : out.image.pixels) v = static_cast<float>(v * d.contrast + d.shift);
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& v : out.image.pixels) v = static_cast<float>(v + noise(rng));
  }
  return out;
}

inline Augmented<float> augment(const ImageF& img, const std::optional<LabelMap>& mask, const AugmentParams& p,
                                Rng& rng) {
  const AugmentDraw d = draw_augment(p, rng);
  return apply_augment(img, mask, d, p.gauss_noise_sigma, rng);
}

// ---- mixup ----------------------------------------------------------------------

struct MixupParams {
  double alpha = 0.2;
};

inline double draw_mixup_lambda(const MixupParams& p, Rng& rng) {
  if (!(p.alpha > 0.0)) throw ConfigError("mixup: alpha must be > 0");
  return beta(rng, p.alpha, p.alpha);
}

/// x = lambda * a + (1 - lambda) * b, elementwise.
inline void mix_into(std::span<const float> a, std::span<const float> b, double lambda, std::span<float> out) {
  if (a.size() != b.size() || out.size() != a.size()) throw ShapeError("mixup: shapes differ");
  const float l = static_cast<float>(lambda);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const float v = b[i] + l * (a[i] - b[i]);
    out[i] = std::clamp(v, std::min(a[i], b[i]), std::max(a[i], b[i]));
  }
}

struct MixupResult {
  ImageF image;
  double lambda = 1.0;
};

/// Targets are not mixed here; the loss is lambda * loss(y_a) + (1 - lambda) * loss(y_b).
inline MixupResult mixup(const ImageF& a, const ImageF& b, const MixupParams& p, Rng& rng,
                         std::optional<double> forced_lambda = std::nullopt) {
  if (!a.same_shape(b)) throw ShapeError("mixup: shapes differ");
  const double lambda = forced_lambda ? *forced_lambda : draw_mixup_lambda(p, rng);
  MixupResult r{ImageF(a.rows, a.cols), lambda};
  mix_into(a.pixels, b.pixels, lambda, r.image.pixels);
  return r;
}

// ---- JSON mapping ---------------------------------------------------------------

inline void to_json(nlohmann::json& j, const ClaheParams& p) {
  j = nlohmann::json{{"tiles", {p.tile_rows, p.tile_cols}}, {"clip_limit", p.clip_limit}, {"bins", p.bins}};
}
inline void from_json(const nlohmann::json& j, ClaheParams& p) {
  check_keys(j, {"tiles", "clip_limit", "bins"}, "clahe");
  ClaheParams d;
  if (j.contains("tiles")) {
    p.tile_rows = j.at("tiles").at(0).get<int>();
    p.tile_cols = j.at("tiles").at(1).get<int>();
  } else {
    p.tile_rows = d.tile_rows;
    p.tile_cols = d.tile_cols;
  }
  p.clip_limit = j.value("clip_limit", d.clip_limit);
  p.bins = j.value("bins", d.bins);
}

inline const char* to_string(FitPolicy f) { return f == FitPolicy::stretch ? "stretch" : "center_crop"; }
inline FitPolicy parse_fit_policy(const std::string& s) {
  if (s == "stretch") return FitPolicy::stretch;
  if (s == "center_crop") return FitPolicy::center_crop;
  throw ConfigError("unknown fit policy '" + s + "' (expected stretch or center_crop)");
}

inline void to_json(nlohmann::json& j, const PreprocessParams& p) {
  j = nlohmann::json{{"clahe", p.clahe}, {"fit", to_string(p.fit)}, {"use_clahe", p.use_clahe}};
}
inline void from_json(const nlohmann::json& j, PreprocessParams& p) {
  check_keys(j, {"clahe", "fit", "use_clahe"}, "preprocess");
  PreprocessParams d;
  p.clahe = j.contains("clahe") ? j.at("clahe").get<ClaheParams>() : d.clahe;
  p.fit = j.contains("fit") ? parse_fit_policy(j.at("fit").get<std::string>()) : d.fit;
  p.use_clahe = j.value("use_clahe", d.use_clahe);
}

inline void to_json(nlohmann::json& j, const AugmentParams& p) {
  j = nlohmann::json{{"flip_prob", p.flip_prob},
                     {"max_rotation_deg", p.max_rotation_deg},
                     {"zoom_range", p.zoom_range},
                     {"max_shear_deg", p.max_shear_deg},
                     {"intensity_shift", p.intensity_shift},
                     {"contrast_range", p.contrast_range},
                     {"gauss_noise_sigma", p.gauss_noise_sigma}};
}
inline void from_json(const nlohmann::json& j, AugmentParams& p) {
  check_keys(j,
             {"flip_prob", "max_rotation_deg", "zoom_range", "max_shear_deg", "intensity_shift", "contrast_range",
              "gauss_noise_sigma"},
             "augment");
  AugmentParams d;
  p.flip_prob = j.value("flip_prob", d.flip_prob);
  p.max_rotation_deg = j.value("max_rotation_deg", d.max_rotation_deg);
  p.zoom_range = j.value("zoom_range", d.zoom_range);
  p.max_shear_deg = j.value("max_shear_deg", d.max_shear_deg);
  p.intensity_shift = j.value("intensity_shift", d.intensity_shift);
  p.contrast_range = j.value("contrast_range", d.contrast_range);
  p.gauss_noise_sigma = j.value("gauss_noise_sigma", d.gauss_noise_sigma);
  validate(p);
}

}  // namespace sacropipe::imgproc
