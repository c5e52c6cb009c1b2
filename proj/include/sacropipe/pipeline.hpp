#pragma once

// Pipeline stages over manifests. Each stage reads its inputs from files,
// writes its outputs under an output directory and returns a summary.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sacropipe/anatomy.hpp"
#include "sacropipe/errors.hpp"
#include "sacropipe/explain.hpp"
#include "sacropipe/manifest.hpp"
#include "sacropipe/parallel.hpp"
#include "sacropipe/phantom.hpp"
#include "sacropipe/png_io.hpp"
#include "sacropipe/stats.hpp"
#include "sacropipe/train.hpp"

namespace sacropipe::pipeline {

// ---- segment ----------------------------------------------------------------

struct SegmentOptions {
  bool use_ground_truth = false;
  fs::path checkpoint;  // U-Net checkpoint; ignored with use_ground_truth
};

/// Writes seg/<id>.png label maps and a manifest pointing at them.
inline Manifest segment_stage(const Manifest& in, const fs::path& out_dir, const SegmentOptions& opt) {
  Manifest m = rebase(in, out_dir);
  fs::create_directories(out_dir / "seg");
  std::optional<train::LoadedUNet> model;
  if (!opt.use_ground_truth) model.emplace(train::load_unet(opt.checkpoint));
  auto write_one = [&](std::size_t i, const LabelMap& labels) {
    auto& e = m.entries[i];
    e.seg_mask_path = "seg/" + e.sample_id + ".png";
    e.sij_boxes.reset();
    e.crop_path.reset();
    e.crop_box.reset();
    e.crop_fallback_full = false;
    png::write(out_dir / *e.seg_mask_path, labels);
  };
  if (opt.use_ground_truth) {
    parallel_for(m.entries.size(), [&](std::size_t i) {
      const auto mask = png::read_u8(m.resolve(m.entries[i].mask_path));
      anatomy::check_labels(mask);
      write_one(i, mask);
    });
  } else {
    for (std::size_t i = 0; i < m.entries.size(); ++i)
      write_one(i, train::segment_image(*model, png::read_u16(m.resolve(m.entries[i].image_path))));
  }
  save_manifest(out_dir / "manifest.json", m);
  return m;
}

// ---- crop -------------------------------------------------------------------

struct CropOptions {
  bool fallback_full = false;  // crop = full frame when localization fails
  anatomy::LocalizeParams localize;
};

struct CropSummary {
  Manifest manifest;
  std::vector<std::string> fallbacks;
};

/// Derives SIJ boxes from each segmentation mask and writes crops/<id>.png.
inline CropSummary crop_stage(const Manifest& in, const fs::path& out_dir, const CropOptions& opt) {
  for (const auto& e : in.entries)
    if (!e.seg_mask_path) throw UpstreamMissing("no segmentation mask recorded for " + e.sample_id, "segment");
  Manifest m = rebase(in, out_dir);
  fs::create_directories(out_dir / "crops");
  std::vector<std::string> errors(m.entries.size());
  parallel_for(m.entries.size(), [&](std::size_t i) {
    auto& e = m.entries[i];
    const auto img = png::read_u16(m.resolve(e.image_path));
    const auto seg = png::read_u8(m.resolve(*e.seg_mask_path));
    if (!img.same_shape(seg)) throw ShapeError("mask and image sizes differ for " + e.sample_id);
    anatomy::check_labels(seg);
    e.crop_path = "crops/" + e.sample_id + ".png";
    e.crop_fallback_full = false;
    try {
      const auto boxes = anatomy::localize(seg, opt.localize);
      auto c = anatomy::crop_to_sij(img, boxes);
      e.sij_boxes = boxes;
      e.crop_box = c.box;
      png::write(out_dir / *e.crop_path, c.image);
    } catch (const LocalizationError& err) {
      errors[i] = err.what();
      e.sij_boxes.reset();
      e.crop_box = Box{0, 0, img.rows, img.cols};
      e.crop_fallback_full = true;
      if (opt.fallback_full) png::write(out_dir / *e.crop_path, img);
    }
  });
  CropSummary s;
  std::string failed;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i].empty()) continue;
    s.fallbacks.push_back(m.entries[i].sample_id);
    failed += "\n  " + m.entries[i].sample_id + ": " + errors[i];
  }
  if (!failed.empty() && !opt.fallback_full)
    throw LocalizationError("SIJ localization failed for " + std::to_string(s.fallbacks.size()) +
                            " sample(s) (rerun with --fallback-full to use full images):" + failed);
  save_manifest(out_dir / "manifest.json", m);
  s.manifest = std::move(m);
  return s;
}

// ---- scoring ------------------------------------------------------------------

struct Scoring {
  stats::ScoredSet scored;
  std::vector<train::ClfSample> inputs;  // preprocessed model inputs, manifest order
};

inline Scoring score_manifest(train::LoadedClassifier& model, const Manifest& m) {
  if (m.entries.empty()) throw ConfigError("cannot score an empty manifest");
  const auto raw = train::load_raw(m, model.variant);
  Scoring s;
  s.inputs = train::preprocess_set(raw, model.rows, model.cols, model.config.preprocess);
  std::vector<const ImageF*> imgs;
  for (const auto& x : s.inputs) imgs.push_back(&x.image);
  const auto p = train::predict_proba(model.net, imgs);
  for (std::size_t i = 0; i < p.size(); ++i) s.scored.push_back({raw.ids[i], p[i], raw.labels[i]});
  return s;
}

// ---- calibrate-cutoff -----------------------------------------------------------

struct CutoffFile {
  double cutoff = 0.5;
  std::string objective = "accuracy";
  std::string variant;
  std::string config_hash;
  long n = 0;
  double objective_value = 0.0;
};

inline void to_json(json& j, const CutoffFile& c) {
  j = json{{"cutoff", c.cutoff},           {"objective", c.objective}, {"variant", c.variant},
           {"config_hash", c.config_hash}, {"n", c.n},                 {"objective_value", c.objective_value}};
}
inline void from_json(const json& j, CutoffFile& c) {
  c.cutoff = j.at("cutoff").get<double>();
  c.objective = j.value("objective", "accuracy");
  c.variant = j.value("variant", "");
  c.config_hash = j.value("config_hash", "");
  c.n = j.value("n", 0L);
  c.objective_value = j.value("objective_value", 0.0);
}

inline stats::CutoffObjective parse_objective(const std::string& s) {
  if (s == "accuracy") return stats::CutoffObjective::accuracy;
  if (s == "balanced_accuracy") return stats::CutoffObjective::balanced_accuracy;
  throw ConfigError("unknown cut-off objective '" + s + "'");
}

inline CutoffFile load_cutoff(const fs::path& path) {
  if (!fs::exists(path)) throw UpstreamMissing("cut-off file not found: " + path.string(), "calibrate-cutoff");
  try {
    return read_json(path).get<CutoffFile>();
  } catch (const json::exception& e) {
    throw ConfigError("invalid cut-off file " + path.string() + ": " + e.what());
  }
}

/// Optimal cut-off on a validation manifest; written to out_dir/cutoff.json.
inline CutoffFile calibrate_stage(const fs::path& checkpoint, const Manifest& val, const fs::path& out_dir,
                                  const std::string& objective = "accuracy") {
  auto model = train::load_classifier(checkpoint);
  const auto s = score_manifest(model, val).scored;
  const auto obj = parse_objective(objective);
  CutoffFile c;
  c.cutoff = stats::optimal_cutoff(s, obj);
  c.objective = objective;
  c.variant = train::to_string(model.variant);
  c.config_hash = model.config_hash;
  c.n = static_cast<long>(s.size());
  const auto bm = stats::basic_metrics(stats::confusion(s, c.cutoff));
  c.objective_value = (obj == stats::CutoffObjective::accuracy ? bm.accuracy : bm.balanced_accuracy).value_or(0.0);
  write_json(out_dir / "cutoff.json", json(c));
  return c;
}

inline void check_cutoff_matches(const CutoffFile& c, const train::LoadedClassifier& m) {
  if (c.variant != train::to_string(m.variant) || c.config_hash != m.config_hash)
    throw ConfigError("cut-off file was calibrated for variant '" + c.variant + "' (config " + c.config_hash +
                      "), checkpoint is '" + train::to_string(m.variant) + "' (config " + m.config_hash + ")");
}

// ---- evaluate ---------------------------------------------------------------------

struct EvalOptions {
  std::string dataset = "test";
  int bootstrap = 1000;
  std::uint64_t seed = 0;
};

inline std::string predictions_csv(const stats::ScoredSet& s, double tau) {
  std::string out = "sample_id,label,probability,predicted\n";
  char buf[64];
  for (const auto& x : s) {
    std::snprintf(buf, sizeof buf, ",%d,%.9g,%d\n", x.label, x.probability, x.probability > tau ? 1 : 0);
    out += x.sample_id + buf;
  }
  return out;
}

inline void write_eval_outputs(const fs::path& dir, const stats::EvalReport& r, const stats::ScoredSet& s) {
  write_json(dir / "report.json", json(r));
  write_text_atomic(dir / "roc.csv", stats::roc_csv(r.roc));
  write_text_atomic(dir / "confusion.csv", stats::confusion_csv(r.confusion));
  write_text_atomic(dir / "predictions.csv", predictions_csv(s, r.cutoff));
}

inline stats::EvalReport evaluate_stage(const fs::path& checkpoint, const Manifest& m, const fs::path& cutoff_file,
                                        const fs::path& out_dir, const EvalOptions& opt = {}) {
  auto model = train::load_classifier(checkpoint);
  const auto cut = load_cutoff(cutoff_file);
  check_cutoff_matches(cut, model);
  const auto s = score_manifest(model, m).scored;
  const auto r = stats::build_report(s, cut.cutoff, opt.bootstrap, opt.seed, opt.dataset, train::to_string(model.variant));
  write_eval_outputs(out_dir, r, s);
  return r;
}

// ---- compare ----------------------------------------------------------------------

struct VariantInputs {
  fs::path checkpoint;
  fs::path cutoff_file;
};

struct Comparison {
  stats::EvalReport a, b;
  stats::DelongResult delong;
  stats::McNemarResult mcnemar;
};

/// Both variants on the same manifest, plus the paired DeLong and McNemar tests.
inline Comparison compare_stage(const VariantInputs& va, const VariantInputs& vb, const Manifest& m,
                                const fs::path& out_dir, const EvalOptions& opt = {}) {
  auto ma = train::load_classifier(va.checkpoint);
  auto mb = train::load_classifier(vb.checkpoint);
  if (ma.config_hash.empty() || ma.config_hash != mb.config_hash)
    throw ConfigError("comparability error: training configs differ (" + ma.config_hash + " vs " + mb.config_hash +
                      "); paired variants may differ only in their input images");
  const auto ca = load_cutoff(va.cutoff_file);
  const auto cb = load_cutoff(vb.cutoff_file);
  check_cutoff_matches(ca, ma);
  check_cutoff_matches(cb, mb);
  const auto sa = score_manifest(ma, m).scored;
  const auto sb = score_manifest(mb, m).scored;

  Comparison c;
  c.a = stats::build_report(sa, ca.cutoff, opt.bootstrap, opt.seed, opt.dataset, train::to_string(ma.variant));
  c.b = stats::build_report(sb, cb.cutoff, opt.bootstrap, opt.seed, opt.dataset, train::to_string(mb.variant));
  std::vector<double> pa, pb;
  std::vector<int> labels, preds_a, preds_b;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    pa.push_back(sa[i].probability);
    pb.push_back(sb[i].probability);
    labels.push_back(sa[i].label);
    preds_a.push_back(sa[i].probability > ca.cutoff ? 1 : 0);
    preds_b.push_back(sb[i].probability > cb.cutoff ? 1 : 0);
  }
  c.delong = stats::delong_test(pa, pb, labels);
  c.mcnemar = stats::mcnemar(preds_a, preds_b, labels);

  write_eval_outputs(out_dir / c.a.variant, c.a, sa);
  write_eval_outputs(out_dir / c.b.variant, c.b, sb);
  json j{{"datasets", json::array({opt.dataset})},
         {"variants", json::array({c.a.variant, c.b.variant})},
         {"config_hash", ma.config_hash},
         {"delong", c.delong},
         {"mcnemar", c.mcnemar},
         {"reports", {{c.a.variant, c.a}, {c.b.variant, c.b}}}};
  write_json(out_dir / "compare.json", j);
  return c;
}

// ---- followup -----------------------------------------------------------------------

struct FollowupOptions {
  double conf_threshold = stats::kConfidentThreshold;
};

/// Confident false positives among baseline-negatives vs progression at follow-up.
inline stats::ProgressionResult followup_stage(const fs::path& checkpoint, const fs::path& cutoff_file,
                                               const Manifest& baseline, const FollowUpManifest& fu,
                                               const fs::path& out_dir, const FollowupOptions& opt = {}) {
  auto model = train::load_classifier(checkpoint);
  const auto cut = load_cutoff(cutoff_file);
  check_cutoff_matches(cut, model);
  Manifest negatives = baseline;
  std::erase_if(negatives.entries, [](const ManifestEntry& e) { return e.label != 0; });
  if (negatives.entries.empty()) throw ConfigError("follow-up: no baseline-negative samples in the manifest");
  const auto s = score_manifest(model, negatives).scored;
  std::vector<stats::PredictionRecord> records;
  for (const auto& x : s) records.push_back(stats::make_prediction(x.sample_id, x.probability, cut.cutoff, opt.conf_threshold));
  const auto r = stats::progression_ratios(records, fu, opt.conf_threshold);

  std::map<std::string, int> fu_label;
  for (const auto& e : fu.entries) fu_label[e.sample_id] = e.followup_label;
  std::string csv = "sample_id,probability,predicted,confident_fp,progressed\n";
  char buf[64];
  for (const auto& rec : records) {
    const bool cfp = rec.probability > opt.conf_threshold;
    std::snprintf(buf, sizeof buf, ",%.9g,%d,%d,%d\n", rec.probability, rec.predicted ? 1 : 0, cfp ? 1 : 0,
                  fu_label.count(rec.sample_id) ? fu_label[rec.sample_id] : -1);
    csv += rec.sample_id + buf;
  }
  write_text_atomic(out_dir / "baseline_predictions.csv", csv);
  json j = r;
  j["variant"] = train::to_string(model.variant);
  j["conf_threshold"] = opt.conf_threshold;
  j["definitions"] = {
      {"risk_ratio", "(progressors in confident-FP group / group size) / (all progressors / all baseline-negatives)"},
      {"odds_ratio", "2x2 cross-product, confident-FP vs rest by progressed vs not"}};
  write_json(out_dir / "followup.json", j);
  return r;
}

// ---- explain --------------------------------------------------------------------------

struct ExplainOptions {
  std::string layer;       // empty: last backbone stage
  int target_class = 1;
  int overlays = 8;        // overlay PNGs written for the first N positives
  int limit = 0;           // 0: every sample
};

struct ExplainSample {
  std::string sample_id;
  int label = 0;
  double probability = 0.0;
  double in_box_fraction = 0.0;
};

struct ExplainSummary {
  std::string variant;
  std::string layer;
  std::vector<ExplainSample> samples;
  double mean_fraction_positives = 0.0;
  double mean_fraction_all = 0.0;
  long n_positives = 0;
};

inline void to_json(json& j, const ExplainSample& s) {
  j = json{{"sample_id", s.sample_id}, {"label", s.label}, {"probability", s.probability},
           {"in_box_fraction", s.in_box_fraction}};
}
inline void to_json(json& j, const ExplainSummary& s) {
  j = json{{"variant", s.variant},
           {"layer", s.layer},
           {"mean_fraction_positives", s.mean_fraction_positives},
           {"mean_fraction_all", s.mean_fraction_all},
           {"n_positives", s.n_positives},
           {"n", s.samples.size()},
           {"samples", s.samples}};
}

/// Jet-like colour for t in [0,1].
inline std::array<double, 3> heat_color(double t) {
  auto ramp = [](double x) { return std::clamp(1.5 - std::abs(x), 0.0, 1.0); };
  return {ramp(4 * t - 3), ramp(4 * t - 2), ramp(4 * t - 1)};
}

/// Grayscale image blended with a heatmap; truth boxes outlined in green.
inline std::vector<std::uint8_t> render_overlay(const ImageU16& img, const ImageF& heat,
                                                const std::optional<SijBoxes>& boxes) {
  if (!img.same_shape(heat)) throw ShapeError("overlay: heatmap and image sizes differ");
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const double span = std::max(1.0, static_cast<double>(*hi) - *lo);
  std::vector<std::uint8_t> rgb(img.size() * 3);
  for (std::size_t q = 0; q < img.size(); ++q) {
    const double g = (img.pixels[q] - *lo) / span;
    const double h = std::clamp(static_cast<double>(heat.pixels[q]), 0.0, 1.0);
    const auto col = heat_color(h);
    const double a = 0.5 * h;
    for (int k = 0; k < 3; ++k) rgb[q * 3 + k] = static_cast<std::uint8_t>(std::lround(255 * ((1 - a) * g + a * col[k])));
  }
  if (boxes) {
    for (const Box& b : {boxes->left, boxes->right}) {
      auto put = [&](int r, int c) {
        if (r < 0 || c < 0 || r >= img.rows || c >= img.cols) return;
        const std::size_t q = (static_cast<std::size_t>(r) * img.cols + c) * 3;
        rgb[q] = 0;
        rgb[q + 1] = 255;
        rgb[q + 2] = 0;
      };
      for (int c = b.col0; c < b.col1; ++c) put(b.row0, c), put(b.row1 - 1, c);
      for (int r = b.row0; r < b.row1; ++r) put(r, b.col0), put(r, b.col1 - 1);
    }
  }
  return rgb;
}

/// Grad-CAM per sample, re-embedded into the full image and scored against
/// the phantom truth boxes.
inline ExplainSummary explain_stage(const fs::path& checkpoint, const Manifest& m, const fs::path& out_dir,
                                    const ExplainOptions& opt = {}) {
  auto model = train::load_classifier(checkpoint);
  if (model.config.preprocess.fit != imgproc::FitPolicy::stretch)
    throw ConfigError("grad-cam re-embedding requires the stretch fit policy");
  Manifest sub = m;
  if (opt.limit > 0 && sub.entries.size() > static_cast<std::size_t>(opt.limit))
    sub.entries.resize(static_cast<std::size_t>(opt.limit));
  for (const auto& e : sub.entries)
    if (!e.truth_boxes) throw ConfigError("explain: sample " + e.sample_id + " has no truth boxes");
  const auto scoring = score_manifest(model, sub);
  ExplainSummary out;
  out.variant = train::to_string(model.variant);
  out.layer = opt.layer.empty() ? model.net.default_cam_layer() : opt.layer;
  int written = 0;
  double sum_pos = 0.0, sum_all = 0.0;
  for (std::size_t i = 0; i < sub.entries.size(); ++i) {
    const auto& e = sub.entries[i];
    const auto full = png::read_u16(sub.resolve(e.image_path));
    const auto h = explain::grad_cam(model.net, scoring.inputs[i].image, opt.target_class, out.layer);
    std::optional<Box> crop_box;
    if (model.variant == train::Variant::anatomy_aware) crop_box = e.crop_box;
    const auto ff = explain::to_full_frame(h, full.rows, full.cols, crop_box);
    ExplainSample s{e.sample_id, e.label, scoring.scored[i].probability,
                    explain::activation_in_box_fraction(ff, *e.truth_boxes)};
    sum_all += s.in_box_fraction;
    if (e.label == 1) {
      sum_pos += s.in_box_fraction;
      ++out.n_positives;
      if (written < opt.overlays) {
        fs::create_directories(out_dir / "overlays");
        png::write_rgb(out_dir / "overlays" / (e.sample_id + ".png"), full.rows, full.cols,
                       render_overlay(full, ff.values, e.truth_boxes));
        ++written;
      }
    }
    out.samples.push_back(s);
  }
  out.mean_fraction_all = sum_all / static_cast<double>(out.samples.size());
  out.mean_fraction_positives = out.n_positives ? sum_pos / static_cast<double>(out.n_positives) : 0.0;
  write_json(out_dir / "explain.json", json(out));
  return out;
}

// ---- report ---------------------------------------------------------------------------

struct RocSeries {
  std::string name;
  double auc = 0.0;
  std::vector<stats::RocPoint> points;
};

/// Parses the threshold,fpr,tpr CSV written by evaluate.
inline std::vector<stats::RocPoint> read_roc_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UpstreamMissing("ROC table not found: " + path.string(), "evaluate");
  std::vector<stats::RocPoint> pts;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    stats::RocPoint p;
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) throw ConfigError("malformed ROC row in " + path.string());
    p.threshold = std::stod(line.substr(0, c1));
    p.fpr = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    p.tpr = std::stod(line.substr(c2 + 1));
    pts.push_back(p);
  }
  return pts;
}

/// ROC curves as a standalone SVG (unit square, diagonal reference, legend).
inline std::string roc_svg(const std::vector<RocSeries>& series, const std::string& title = "ROC") {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  const double x0 = 60, y0 = 40, w = 360, h = 360;
  auto X = [&](double f) { return x0 + f * w; };
  auto Y = [&](double t) { return y0 + (1 - t) * h; };
  char buf[256];
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"460\" font-family=\"sans-serif\" "
                  "font-size=\"12\">\n<rect width=\"480\" height=\"460\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">", x0 + w / 2);
  s += std::string(buf) + title + "</text>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%.0f\" y=\"%.0f\" width=\"%.0f\" height=\"%.0f\" fill=\"none\" stroke=\"black\"/>\n",
                x0, y0, w, h);
  s += buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n",
                X(0), Y(0), X(1), Y(1));
  s += buf;
  for (int k = 0; k <= 5; ++k) {
    const double v = k / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.1f</text>\n"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.1f</text>\n",
                  X(v), y0 + h + 16, v, x0 - 6, Y(v) + 4, v);
    s += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">1 - specificity</text>\n"
                "<text x=\"16\" y=\"%.1f\" text-anchor=\"middle\" transform=\"rotate(-90 16 %.1f)\">sensitivity</text>\n",
                x0 + w / 2, y0 + h + 34, y0 + h / 2, y0 + h / 2);
  s += buf;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* col = colors[i % 5];
    s += "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" + std::string(col) + "\" points=\"";
    for (const auto& p : series[i].points) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", X(p.fpr), Y(p.tpr));
      s += buf;
    }
    s += "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"2\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\">",
                  X(0.45), Y(0.2) + 18.0 * i, X(0.52), Y(0.2) + 18.0 * i, col, X(0.54), Y(0.2) + 18.0 * i + 4);
    s += buf;
    std::snprintf(buf, sizeof buf, " (AUC %.3f)</text>\n", series[i].auc);
    s += series[i].name + buf;
  }
  return s + "</svg>\n";
}

}  // namespace sacropipe::pipeline
