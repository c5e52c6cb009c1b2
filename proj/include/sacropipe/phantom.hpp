#pragma once

// Synthetic AP pelvis radiographs with controllable sacroiliitis grades.
//
// All geometry lives in PhantomGeometry. Downstream code only relies on:
//   * mask labels {0 background, 1 pelvis, 2 sacrum},
//   * truth_boxes around the two sacroiliac joints,
//   * joint appearance that changes monotonically with grade.
//
// Layout (fractions of width W / height H, jittered per sample):
//   pelvis  = outer ellipse minus the pelvic inlet ellipse, minus the region
//             above the sacrum, minus a joint gap of `gap` px around the sacrum
//   sacrum  = inverted triangle hanging from the top of the ring
//   joints  = the gap pixels where the sacrum's lateral edges meet the ring
// "left" is the joint with the smaller column index.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "sacropipe/config.hpp"
#include "sacropipe/errors.hpp"
#include "sacropipe/image.hpp"
#include "sacropipe/labels.hpp"
#include "sacropipe/manifest.hpp"
#include "sacropipe/parallel.hpp"
#include "sacropipe/png_io.hpp"
#include "sacropipe/random.hpp"

namespace sacropipe::phantom {

inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kPelvis = 1;
inline constexpr std::uint8_t kSacrum = 2;

struct PhantomSpec {
  std::uint64_t seed = 0;
  int width = 628;
  int height = 416;
  int grade_left = 0;
  int grade_right = 0;
  double distractor_level = 0.0;
  double noise_sigma = 300.0;
};

struct PhantomSample {
  ImageU16 image;
  LabelMap mask;
  // Anatomical joint space (gap pixels between sacrum and ilium); for tests and audits.
  BinaryMask joint_line;
  SijBoxes truth_boxes;
  int grade_left = 0;
  int grade_right = 0;
  int label = 0;
};

inline void validate(const PhantomSpec& s) {
  if (s.width < 64 || s.height < 64) throw ConfigError("phantom dimensions must be at least 64 px");
  if (s.width <= s.height) throw ConfigError("phantom must be landscape (width > height)");
  labels::check_grade(s.grade_left);
  labels::check_grade(s.grade_right);
  if (!(s.distractor_level >= 0.0 && s.distractor_level <= 1.0)) throw ConfigError("distractor_level must be in [0,1]");
  if (!(s.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
}

struct Vec2 {
  double x = 0;  // column
  double y = 0;  // row
};

inline double segment_distance(Vec2 p, Vec2 a, Vec2 b, double* t_out = nullptr) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  if (t_out) *t_out = t;
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

struct Ellipse {
  Vec2 c;
  double ax = 1;
  double ay = 1;
  double value(Vec2 p) const {
    const double u = (p.x - c.x) / ax, v = (p.y - c.y) / ay;
    return u * u + v * v;
  }
  bool inside(Vec2 p) const { return value(p) < 1.0; }
};

struct Blob {
  Ellipse shape;
  double amplitude = 0;  // additive intensity at the centre, Gaussian falloff
};

struct Erosion {
  Vec2 centre;
  double radius = 0;
};

/// Appearance of one joint as a function of grade (intensities in raw units).
struct JointStyle {
  double gap_level = 10000;      // intensity of the joint space
  double gap_softness = 0.6;     // px, edge blur of the dark line
  double gap_fill = 1.0;         // 1 = fully dark, 0 = bridged by bone
  double widen = 0.0;            // extra joint-space width, px (iliac side)
  double sclerosis = 0.0;        // added brightness of the subchondral band
  double sclerosis_width = 0.0;  // px
  int erosions = 0;
  double erosion_radius = 0.0;  // px
};

inline JointStyle joint_style(int grade, double k) {
  JointStyle s;
  switch (grade) {
    case 0:
      break;
    case 1:
      s.gap_softness = 2.2 * k;
      s.gap_fill = 0.65;
      break;
    case 2:
      s.sclerosis = 8000;
      s.sclerosis_width = 8 * k;
      s.erosions = 4;
      s.erosion_radius = 3.0 * k;
      break;
    case 3:
      s.widen = 4 * k;
      s.sclerosis = 13000;
      s.sclerosis_width = 10 * k;
      s.erosions = 8;
      s.erosion_radius = 4.5 * k;
      break;
    default:
      s.gap_fill = 0.0;
      s.sclerosis = 9000;
      s.sclerosis_width = 7 * k;
      break;
  }
  return s;
}

struct PhantomGeometry {
  int rows = 0;
  int cols = 0;
  double k = 1.0;  // pixel scale relative to the 628 px reference width
  Vec2 sacrum_tl, sacrum_tr, sacrum_apex;
  Ellipse outer, inlet;
  double gap = 4.0;               // joint space, px
  double periarticular = 11.56;   // truth-region reach into the ilium, px (2% of width less 1)
  double notch_halfwidth = 0.0;   // no pelvis above the sacrum within this half-width
  double bone_level = 24000, sacrum_level = 21000, tissue_level = 9000;
  std::array<double, 4> texture_phase{};

  double sacrum_distance(Vec2 p) const {
    if (inside_sacrum(p)) return 0.0;
    return std::min({segment_distance(p, sacrum_tl, sacrum_tr), segment_distance(p, sacrum_tr, sacrum_apex),
                     segment_distance(p, sacrum_apex, sacrum_tl)});
  }
  bool inside_sacrum(Vec2 p) const {
    auto cross = [](Vec2 a, Vec2 b, Vec2 q) { return (b.x - a.x) * (q.y - a.y) - (b.y - a.y) * (q.x - a.x); };
    const double d1 = cross(sacrum_tl, sacrum_tr, p), d2 = cross(sacrum_tr, sacrum_apex, p),
                 d3 = cross(sacrum_apex, sacrum_tl, p);
    return (d1 >= 0 && d2 >= 0 && d3 >= 0) || (d1 <= 0 && d2 <= 0 && d3 <= 0);
  }
  bool in_notch(Vec2 p) const { return p.y < sacrum_tl.y && std::abs(p.x - sacrum_apex.x) < notch_halfwidth; }
  bool in_ring(Vec2 p) const { return outer.inside(p) && !inlet.inside(p) && !in_notch(p); }

  std::uint8_t label(Vec2 p) const {
    if (inside_sacrum(p)) return kSacrum;
    if (in_ring(p) && sacrum_distance(p) > gap) return kPelvis;
    return kBackground;
  }
  bool is_joint_space(Vec2 p) const {
    if (!in_ring(p)) return false;
    const double d = sacrum_distance(p);
    return d > 0.0 && d <= gap;
  }
  // Lateral sacral edge of a side: top corner to apex.
  std::pair<Vec2, Vec2> edge(bool left) const {
    return left ? std::pair{sacrum_tl, sacrum_apex} : std::pair{sacrum_tr, sacrum_apex};
  }
};

inline PhantomGeometry make_geometry(const PhantomSpec& spec, Rng& rng) {
  PhantomGeometry g;
  const double W = spec.width, H = spec.height;
  g.rows = spec.height;
  g.cols = spec.width;
  g.k = W / 628.0;
  const double s = uniform(rng, 0.95, 1.05);
  const double cx = W * (0.5 + uniform(rng, -0.02, 0.02));
  const double half_top = 0.14 * W * s * uniform(rng, 0.95, 1.05);
  const double top = H * (0.16 + uniform(rng, -0.01, 0.01));
  const double apex = H * (0.64 + uniform(rng, -0.02, 0.02));
  g.sacrum_tl = {cx - half_top, top};
  g.sacrum_tr = {cx + half_top, top};
  g.sacrum_apex = {cx, apex};
  g.outer = {{cx, 0.52 * H}, 0.44 * W * s, 0.40 * H * s};
  g.inlet = {{cx, 0.66 * H}, 0.22 * W * s, 0.24 * H * s};
  g.gap = 4.0 * g.k;
  // One pixel inside the default dilation radius, so pixel-centre discretisation of the
  // mask never leaves a truth pixel outside the mask-derived joint region.
  g.periarticular = 0.02 * W - 1.0;
  g.notch_halfwidth = half_top + g.gap + 2.0 * g.k;
  const double exposure = uniform(rng, 0.9, 1.1);
  g.bone_level = 24000 * exposure;
  g.sacrum_level = 21000 * exposure;
  g.tissue_level = 9000 * exposure;
  for (auto& ph : g.texture_phase) ph = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return g;
}

namespace detail {

inline double smoothstep(double e0, double e1, double x) {
  if (e1 <= e0) return x >= e1 ? 1.0 : 0.0;
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

inline std::vector<Erosion> place_erosions(const PhantomGeometry& g, bool left, const JointStyle& st, Rng& rng) {
  std::vector<Erosion> out;
  const auto [a, b] = g.edge(left);
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  // Outward (iliac-side) unit normal.
  Vec2 n{-(b.y - a.y) / len, (b.x - a.x) / len};
  if (left ? n.x > 0 : n.x < 0) n = {-n.x, -n.y};
  for (int i = 0; i < st.erosions; ++i) {
    const double t = uniform(rng, 0.08, 0.48);
    const double off = g.gap + st.widen + st.erosion_radius * uniform(rng, 0.2, 0.7);
    out.push_back({{a.x + t * (b.x - a.x) + off * n.x, a.y + t * (b.y - a.y) + off * n.y},
                   st.erosion_radius * uniform(rng, 0.8, 1.2)});
  }
  return out;
}

// Intensity modification of a pelvis/joint pixel at sacral distance d.
inline double joint_intensity(double base, double d, const JointStyle& st, double gap, double bone,
                              const std::vector<Erosion>& erosions, Vec2 p) {
  const double space = gap + st.widen;
  double v = base;
  if (st.sclerosis > 0) {
    const double w = smoothstep(space - 0.5, space + 0.5, d) * (1.0 - smoothstep(space + st.sclerosis_width * 0.6,
                                                                                   space + st.sclerosis_width, d));
    v += st.sclerosis * w;
  }
  // Dark joint space, softened at its outer edge.
  const double darkness = (1.0 - smoothstep(space - st.gap_softness, space + st.gap_softness, d)) * st.gap_fill;
  v = v * (1.0 - darkness) + st.gap_level * darkness;
  if (st.gap_fill == 0.0 && d <= space) v = bone + st.sclerosis * 0.5;
  for (const auto& e : erosions) {
    const double r = std::hypot(p.x - e.centre.x, p.y - e.centre.y);
    if (r < e.radius + 1.0) {
      const double w = 1.0 - smoothstep(e.radius - 1.0, e.radius + 1.0, r);
      v = v * (1.0 - w) + st.gap_level * w;
    }
  }
  return v;
}

inline double box_distance(const Box& b, Vec2 p) {
  const double dx = std::max({b.col0 - p.x, 0.0, p.x - b.col1});
  const double dy = std::max({b.row0 - p.y, 0.0, p.y - b.row1});
  return std::hypot(dx, dy);
}

/// A blob contributes out to 1.5 radii (see the exp falloff below), so that whole extent must clear the boxes.
inline bool blob_clear_of(const Ellipse& e, const SijBoxes& boxes, double pad) {
  const double r = 1.5 * std::max(e.ax, e.ay);
  return box_distance(boxes.left, e.c) > r + pad && box_distance(boxes.right, e.c) > r + pad;
}

}  // namespace detail

/// Joint-space pixels and truth boxes; computed before intensities so distractors can avoid the boxes.
/// A truth box is the periarticular ilium (pelvis within 2% of the width, less one pixel, of the
/// sacrum) grown by 10%.
inline void compute_truth(const PhantomGeometry& g, PhantomSample& out) {
  out.joint_line = BinaryMask(g.rows, g.cols, 0);
  std::array<Box, 2> tight{Box{g.rows, g.cols, 0, 0}, Box{g.rows, g.cols, 0, 0}};
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const Vec2 p{c + 0.5, r + 0.5};
      if (!g.in_ring(p)) continue;
      const double d = g.sacrum_distance(p);
      if (d <= 0.0 || d > std::max(g.gap, g.periarticular)) continue;
      if (d <= g.gap) {
        out.joint_line(r, c) = 1;
        continue;
      }
      auto& b = tight[p.x < g.sacrum_apex.x ? 0 : 1];
      b.row0 = std::min(b.row0, r);
      b.col0 = std::min(b.col0, c);
      b.row1 = std::max(b.row1, r + 1);
      b.col1 = std::max(b.col1, c + 1);
    }
  }
  constexpr double kTruthMargin = 0.1;
  out.truth_boxes.left = expand_box(tight[0], kTruthMargin, g.rows, g.cols);
  out.truth_boxes.right = expand_box(tight[1], kTruthMargin, g.rows, g.cols);
  out.truth_boxes.margin_applied = kTruthMargin;
}

inline PhantomSample generate_phantom(const PhantomSpec& spec) {
  validate(spec);
  Rng rng = make_rng(spec.seed, "phantom");
  const PhantomGeometry g = make_geometry(spec, rng);

  PhantomSample out;
  out.grade_left = spec.grade_left;
  out.grade_right = spec.grade_right;
  out.label = labels::mny_positive(spec.grade_left, spec.grade_right) ? 1 : 0;
  compute_truth(g, out);

  const std::array<JointStyle, 2> style{joint_style(spec.grade_left, g.k), joint_style(spec.grade_right, g.k)};
  const std::array<std::vector<Erosion>, 2> erosions{detail::place_erosions(g, true, style[0], rng),
                                                     detail::place_erosions(g, false, style[1], rng)};

  // Distractors: hip joints, pubic symphysis, bowel gas and bright clutter, all clear of the truth boxes.
  const double level = spec.distractor_level;
  const double W = spec.width, H = spec.height;
  std::vector<Blob> blobs;
  if (level > 0) {
    const double pad = 6.0 * g.k;
    for (int side : {-1, 1}) {
      Ellipse head{{g.sacrum_apex.x + side * 0.34 * W, 0.82 * H}, 0.075 * W, 0.075 * W};
      if (detail::blob_clear_of(head, out.truth_boxes, pad)) blobs.push_back({head, 9000 * level});
      Ellipse rim{head.c, head.ax * 1.08, head.ay * 1.08};
      if (detail::blob_clear_of(rim, out.truth_boxes, pad)) blobs.push_back({rim, -3500 * level});
    }
    const Ellipse symphysis{{g.sacrum_apex.x, 0.93 * H}, 3.0 * g.k, 0.05 * H};
    if (detail::blob_clear_of(symphysis, out.truth_boxes, pad)) blobs.push_back({symphysis, -7000 * level});
    for (int side : {-1, 1}) {
      const Ellipse ramus{{symphysis.c.x + side * 6.0 * g.k, symphysis.c.y}, 3.0 * g.k, 0.05 * H};
      if (detail::blob_clear_of(ramus, out.truth_boxes, pad)) blobs.push_back({ramus, 9000 * level});
    }
    const int n_gas = static_cast<int>(std::lround(7 * level));
    const int n_bright = static_cast<int>(std::lround(6 * level));
    for (int i = 0; i < n_gas + n_bright; ++i) {
      for (int attempt = 0; attempt < 50; ++attempt) {
        const double rad = uniform(rng, 0.015, 0.045) * W;
        Ellipse e{{uniform(rng, 0.05, 0.95) * W, uniform(rng, 0.05, 0.95) * H}, rad, rad * uniform(rng, 0.5, 1.0)};
        if (!detail::blob_clear_of(e, out.truth_boxes, pad)) continue;
        blobs.push_back({e, i < n_gas ? -6000 * level : 10000 * level});
        break;
      }
    }
  }

  out.mask = LabelMap(g.rows, g.cols, kBackground);
  out.image = ImageU16(g.rows, g.cols, 0);
  const double tex_amp = 900.0 + 1500.0 * level;
  const double two_pi = 2.0 * std::numbers::pi;
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const Vec2 p{c + 0.5, r + 0.5};
      const std::uint8_t lab = g.label(p);
      out.mask(r, c) = lab;
      // Soft-tissue falloff toward the image border.
      const double ex = (p.x / W - 0.5) * 2.0, ey = (p.y / H - 0.5) * 2.0;
      double v = g.tissue_level * (1.0 - 0.25 * (ex * ex + ey * ey));
      const double tex = std::sin(two_pi * p.x / (0.11 * W) + g.texture_phase[0]) *
                             std::cos(two_pi * p.y / (0.13 * H) + g.texture_phase[1]) +
                         0.5 * std::sin(two_pi * (p.x + p.y) / (0.05 * W) + g.texture_phase[2]);
      if (lab == kPelvis) {
        v = g.bone_level + 700.0 * tex;
        // Cortical rim along the outer ellipse.
        const double ov = g.outer.value(p);
        if (ov > 0.93) v += 3000.0;
      } else if (lab == kSacrum) {
        v = g.sacrum_level + 600.0 * tex;
        // Sacral foramina.
        for (int f = 1; f <= 4; ++f) {
          const double fy = g.sacrum_tl.y + (g.sacrum_apex.y - g.sacrum_tl.y) * (0.15 + 0.17 * (f - 1));
          const double frel = (fy - g.sacrum_tl.y) / (g.sacrum_apex.y - g.sacrum_tl.y);
          const double fhalf = (g.sacrum_tr.x - g.sacrum_tl.x) * 0.5 * (1.0 - frel);
          for (int sgn : {-1, 1}) {
            const double fx = g.sacrum_apex.x + sgn * 0.4 * fhalf;
            if (std::hypot(p.x - fx, p.y - fy) < 0.012 * W) v -= 4000.0;
          }
        }
      } else {
        const double dist_boxes =
            std::min(detail::box_distance(out.truth_boxes.left, p), detail::box_distance(out.truth_boxes.right, p));
        const double w = detail::smoothstep(0.0, 12.0 * g.k, dist_boxes);
        v += tex_amp * w * tex;
      }
      // Joint region: ring pixels near the sacrum, styled by the grade of their side.
      if (g.in_ring(p)) {
        const double d = g.sacrum_distance(p);
        const int side = p.x < g.sacrum_apex.x ? 0 : 1;
        const auto& st = style[side];
        if (d > 0.0 && d <= g.gap + st.widen + st.sclerosis_width + 3.0 * g.k + st.erosion_radius * 2.0)
          v = detail::joint_intensity(d <= g.gap ? g.bone_level : v, d, st, g.gap, g.bone_level, erosions[side], p);
      }
      for (const auto& b : blobs) {
        const double q = b.shape.value(p);
        if (q < 2.25) v += b.amplitude * std::exp(-2.0 * q);
      }
      out.image(r, c) = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
    }
  }
  if (spec.noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (auto& px : out.image.pixels)
      px = static_cast<std::uint16_t>(std::clamp(std::round(px + noise(rng)), 0.0, 65535.0));
  }
  return out;
}

// ---- corpora ----------------------------------------------------------------

struct CorpusConfig {
  int n = 100;
  // Per-joint grade distribution, applied independently to left and right.
  std::array<double, 5> grade_distribution{0.2, 0.2, 0.2, 0.2, 0.2};
  double distractor_level = 0.0;
  double noise_sigma = 300.0;
  std::uint64_t seed = 0;
  int width = 628;
  int height = 416;
  std::string cohort_tag = "phantom";
  std::string id_prefix = "s";
};

inline void to_json(json& j, const CorpusConfig& c) {
  j = json{{"n", c.n},           {"grade_distribution", c.grade_distribution},
           {"distractor_level", c.distractor_level},
           {"noise_sigma", c.noise_sigma},
           {"seed", c.seed},     {"width", c.width},
           {"height", c.height}, {"cohort_tag", c.cohort_tag},
           {"id_prefix", c.id_prefix}};
}
inline void from_json(const json& j, CorpusConfig& c) {
  check_keys(j,
             {"n", "grade_distribution", "distractor_level", "noise_sigma", "seed", "width", "height", "cohort_tag",
              "id_prefix"},
             "corpus config");
  CorpusConfig d;
  c.n = j.value("n", d.n);
  c.grade_distribution = j.value("grade_distribution", d.grade_distribution);
  c.distractor_level = j.value("distractor_level", d.distractor_level);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.seed = j.value("seed", d.seed);
  c.width = j.value("width", d.width);
  c.height = j.value("height", d.height);
  c.cohort_tag = j.value("cohort_tag", d.cohort_tag);
  c.id_prefix = j.value("id_prefix", d.id_prefix);
}

/// Label prevalence implied by independent per-joint grade draws (exhaustive over 25 pairs).
inline double implied_prevalence(const std::array<double, 5>& dist) {
  double p = 0.0;
  for (int l = 0; l <= 4; ++l)
    for (int r = 0; r <= 4; ++r)
      if (labels::mny_positive(l, r)) p += dist[l] * dist[r];
  return p;
}

inline int draw_grade(Rng& rng, const std::array<double, 5>& dist) {
  const double u = uniform(rng);
  double acc = 0.0;
  for (int g = 0; g < 4; ++g) {
    acc += dist[g];
    if (u < acc) return g;
  }
  return 4;
}

inline std::string sample_id(const CorpusConfig& cfg, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d", i);
  return cfg.id_prefix + buf;
}

/// Grades and phantom seed of sample i depend only on (seed, i).
inline PhantomSpec corpus_spec(const CorpusConfig& cfg, int i) {
  Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(i) * 2 + 1);
  PhantomSpec s;
  s.grade_left = draw_grade(rng, cfg.grade_distribution);
  s.grade_right = draw_grade(rng, cfg.grade_distribution);
  s.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i) * 2);
  s.width = cfg.width;
  s.height = cfg.height;
  s.distractor_level = cfg.distractor_level;
  s.noise_sigma = cfg.noise_sigma;
  return s;
}

inline void validate(const CorpusConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("corpus size n must be >= 1");
  double sum = 0.0;
  for (double p : cfg.grade_distribution) {
    if (!(p >= 0.0)) throw ConfigError("grade_distribution entries must be >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("grade_distribution must sum to 1");
}

/// Writes images/, masks/ and manifest.json under out_dir.
inline Manifest generate_corpus(const CorpusConfig& cfg, const fs::path& out_dir) {
  validate(cfg);
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "masks", ec);
  if (ec || !fs::is_directory(out_dir / "images")) throw IoError("cannot create output directory " + out_dir.string());

  Manifest m;
  m.seed = cfg.seed;
  m.base_dir = out_dir;
  m.entries.resize(static_cast<std::size_t>(cfg.n));
  parallel_for(m.entries.size(), [&](std::size_t i) {
    const PhantomSpec spec = corpus_spec(cfg, static_cast<int>(i));
    const PhantomSample sample = generate_phantom(spec);
    ManifestEntry e;
    e.sample_id = sample_id(cfg, static_cast<int>(i));
    e.image_path = "images/" + e.sample_id + ".png";
    e.mask_path = "masks/" + e.sample_id + ".png";
    e.grade_left = sample.grade_left;
    e.grade_right = sample.grade_right;
    e.label = sample.label;
    e.cohort_tag = cfg.cohort_tag;
    e.truth_boxes = sample.truth_boxes;
    png::write(out_dir / e.image_path, sample.image);
    png::write(out_dir / e.mask_path, sample.mask);
    m.entries[i] = std::move(e);
  });
  save_manifest(out_dir / "manifest.json", m);
  return m;
}

// ---- follow-up ----------------------------------------------------------------

/// Baseline-negative with both joints at least grade 1, or one joint at grade 2.
inline bool near_miss(int grade_left, int grade_right) {
  return !labels::mny_positive(grade_left, grade_right) &&
         (std::min(grade_left, grade_right) >= 1 || std::max(grade_left, grade_right) >= 2);
}

/// Baseline-positive entries stay positive. Baseline-negatives progress with
/// probability `progression_rate`, raised to rate + boost * (1 - rate) in the near-miss stratum.
inline FollowUpManifest synth_followup(const Manifest& manifest, double progression_rate, double high_risk_boost,
                                       std::uint64_t seed) {
  if (!(progression_rate >= 0.0 && progression_rate <= 1.0)) throw ConfigError("progression_rate must be in [0,1]");
  if (!(high_risk_boost >= 0.0 && high_risk_boost <= 1.0)) throw ConfigError("high_risk_boost must be in [0,1]");
  FollowUpManifest f;
  f.seed = seed;
  for (const auto& e : manifest.entries) {
    FollowUpEntry fe{e.sample_id, e.label, e.label, 24};
    if (e.label == 0) {
      Rng rng = make_rng(seed, "followup/" + e.sample_id);
      const double p = near_miss(e.grade_left, e.grade_right)
                           ? progression_rate + high_risk_boost * (1.0 - progression_rate)
                           : progression_rate;
      fe.followup_label = uniform(rng) < p ? 1 : 0;
    }
    f.entries.push_back(fe);
  }
  return f;
}

}  // namespace sacropipe::phantom
