#pragma once

// Training loops: U-Net segmentation and the progressive-resizing classifier
// regimen (frozen-head warm-up, discriminative learning rates, one-cycle,
// mixup, label smoothing, checkpoint on monitored-metric improvement).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sacropipe/config.hpp"
#include "sacropipe/errors.hpp"
#include "sacropipe/imgproc.hpp"
#include "sacropipe/manifest.hpp"
#include "sacropipe/nn/checkpoint.hpp"
#include "sacropipe/nn/losses.hpp"
#include "sacropipe/nn/nets.hpp"
#include "sacropipe/nn/optim.hpp"
#include "sacropipe/parallel.hpp"
#include "sacropipe/png_io.hpp"
#include "sacropipe/random.hpp"
#include "sacropipe/stats.hpp"

namespace sacropipe::train {

using nn::Tensor;
using Logger = std::function<void(const std::string&)>;

// ---- history ---------------------------------------------------------------------

struct HistoryRow {
  int epoch = 0;  // 1-based, counted across all phases
  std::string phase;
  double lr = 0.0;  // largest group learning rate at the end of the epoch
  double train_loss = 0.0;
  double val_metric = 0.0;
  bool saved = false;
};

inline std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string s = "epoch,phase,lr,train_loss,val_metric,saved\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%s,%.9g,%.9g,%.9g,%d\n", r.epoch, r.phase.c_str(), r.lr, r.train_loss,
                  r.val_metric, r.saved ? 1 : 0);
    s += buf;
  }
  return s;
}

struct TrainResult {
  std::vector<HistoryRow> history;
  double best_metric = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  fs::path checkpoint;
};

// ---- shared helpers ----------------------------------------------------------------

inline std::vector<std::size_t> shuffled_order(std::size_t n, Rng rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
  return idx;
}

inline Tensor stack_images(const std::vector<const ImageF*>& imgs) {
  if (imgs.empty()) return {};
  Tensor t(static_cast<int>(imgs.size()), 1, imgs[0]->rows, imgs[0]->cols);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    if (!imgs[i]->same_shape(*imgs[0])) throw ShapeError("batch images differ in shape");
    std::copy(imgs[i]->pixels.begin(), imgs[i]->pixels.end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

inline void check_finite(double loss, const std::string& where) {
  if (!std::isfinite(loss)) throw NumericalError("non-finite training loss at " + where);
}

inline std::string json_hash(const json& j) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

// ---- segmentation ------------------------------------------------------------------

struct SegTrainConfig {
  int epochs = 500;
  double lr = 1e-3;
  int batch = 8;
  double weight_decay = 1e-2;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  nn::UNetConfig model;
  nn::LossWeights loss;
  imgproc::PreprocessParams preprocess;
  imgproc::AugmentParams augment{0.5, 10.0, 0.10, 5.0, 0.1, 0.1, 0.05};

  void validate() const {
    if (epochs < 1 || batch < 1 || lr <= 0 || weight_decay < 0) throw ConfigError("segmentation: invalid epochs/batch/lr");
    if (preprocess.fit != imgproc::FitPolicy::stretch)
      throw ConfigError("segmentation requires the stretch fit policy (masks are mapped back by resizing)");
    loss.validate();
    imgproc::validate(augment);
  }
};

inline void to_json(json& j, const SegTrainConfig& c) {
  j = json{{"epochs", c.epochs},       {"lr", c.lr},
           {"batch", c.batch},         {"weight_decay", c.weight_decay},
           {"pct_start", c.pct_start}, {"div_factor", c.div_factor},
           {"final_div_factor", c.final_div_factor},
           {"model", c.model},         {"loss", c.loss},
           {"preprocess", c.preprocess}, {"augment", c.augment}};
}
inline void from_json(const json& j, SegTrainConfig& c) {
  check_keys(j,
             {"epochs", "lr", "batch", "weight_decay", "pct_start", "div_factor", "final_div_factor", "model", "loss",
              "preprocess", "augment"},
             "train-seg config");
  SegTrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.lr = j.value("lr", d.lr);
  c.batch = j.value("batch", d.batch);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.pct_start = j.value("pct_start", d.pct_start);
  c.div_factor = j.value("div_factor", d.div_factor);
  c.final_div_factor = j.value("final_div_factor", d.final_div_factor);
  c.model = j.contains("model") ? j.at("model").get<nn::UNetConfig>() : d.model;
  c.loss = j.contains("loss") ? j.at("loss").get<nn::LossWeights>() : d.loss;
  c.preprocess = j.contains("preprocess") ? j.at("preprocess").get<imgproc::PreprocessParams>() : d.preprocess;
  c.augment = j.contains("augment") ? j.at("augment").get<imgproc::AugmentParams>() : d.augment;
}

struct SegSample {
  std::string id;
  ImageF image;     // preprocessed, model input size
  LabelMap mask;    // nearest-resized to the model input size
};

inline std::vector<SegSample> load_seg_samples(const Manifest& m, const SegTrainConfig& cfg) {
  const int s = cfg.model.input_size;
  std::vector<SegSample> out(m.entries.size());
  parallel_for(out.size(), [&](std::size_t i) {
    const auto& e = m.entries[i];
    const auto img = png::read_u16(m.resolve(e.image_path));
    const auto mask = png::read_u8(m.resolve(e.mask_path));
    out[i] = {e.sample_id, imgproc::preprocess(img, s, s, cfg.preprocess),
              imgproc::resize(mask, s, s, imgproc::Interp::nearest)};
  });
  return out;
}

/// Hard Dice of one class; 1 when the class is absent from both maps.
inline double dice_score(const LabelMap& pred, const LabelMap& truth, std::uint8_t cls) {
  if (!pred.same_shape(truth)) throw ShapeError("dice: shape mismatch");
  long inter = 0, p = 0, t = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred.pixels[i] == cls, b = truth.pixels[i] == cls;
    inter += a && b;
    p += a;
    t += b;
  }
  return p + t == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(p + t);
}

/// Mean Dice over the foreground classes (pelvis, sacrum).
inline double foreground_dice(const LabelMap& pred, const LabelMap& truth) {
  return (dice_score(pred, truth, 1) + dice_score(pred, truth, 2)) / 2;
}

inline LabelMap argmax_map(const Tensor& logits, int i) {
  LabelMap m(logits.h, logits.w, 0);
  for (std::size_t q = 0; q < logits.plane(); ++q) {
    int best = 0;
    float bv = logits.channel(i, 0)[q];
    for (int c = 1; c < logits.c; ++c)
      if (logits.channel(i, c)[q] > bv) {
        bv = logits.channel(i, c)[q];
        best = c;
      }
    m.pixels[q] = static_cast<std::uint8_t>(best);
  }
  return m;
}

/// Inference-mode label maps at model resolution.
inline std::vector<LabelMap> predict_masks(nn::UNet& net, const std::vector<const ImageF*>& imgs, int batch = 8) {
  std::vector<LabelMap> out;
  for (std::size_t b = 0; b < imgs.size(); b += static_cast<std::size_t>(batch)) {
    std::vector<const ImageF*> chunk(imgs.begin() + static_cast<long>(b),
                                     imgs.begin() + static_cast<long>(std::min(imgs.size(), b + batch)));
    const Tensor logits = net.forward(stack_images(chunk), false);
    for (int i = 0; i < logits.n; ++i) out.push_back(argmax_map(logits, i));
  }
  return out;
}

inline double validation_dice(nn::UNet& net, const std::vector<SegSample>& val, int batch) {
  std::vector<const ImageF*> imgs;
  for (const auto& s : val) imgs.push_back(&s.image);
  const auto preds = predict_masks(net, imgs, batch);
  double sum = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) sum += foreground_dice(preds[i], val[i].mask);
  return sum / static_cast<double>(val.size());
}

inline TrainResult train_segmentation(const Manifest& train_m, const Manifest& val_m, const SegTrainConfig& cfg,
                                      std::uint64_t seed, const fs::path& checkpoint_path, const Logger& log = {}) {
  cfg.validate();
  if (train_m.entries.empty()) throw ConfigError("segmentation: empty training manifest");
  if (val_m.entries.empty()) throw ConfigError("segmentation: empty validation manifest");
  const auto train = load_seg_samples(train_m, cfg);
  const auto val = load_seg_samples(val_m, cfg);

  nn::UNet net(cfg.model, seed);
  nn::AdamW opt(net.params(), {0.9, 0.999, 1e-8, cfg.weight_decay});
  const long steps_per_epoch = (static_cast<long>(train.size()) + cfg.batch - 1) / cfg.batch;
  const nn::OneCycleConfig oc{cfg.lr, cfg.epochs * steps_per_epoch, cfg.pct_start, cfg.div_factor,
                              cfg.final_div_factor};
  const json config_echo = cfg;
  TrainResult res;
  res.checkpoint = checkpoint_path;
  long step = 0;
  const int S = cfg.model.input_size;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled_order(train.size(), make_rng(seed, "seg-order/" + std::to_string(epoch)));
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t nb = std::min<std::size_t>(cfg.batch, order.size() - b);
      std::vector<imgproc::Augmented<float>> aug(nb);
      parallel_for(nb, [&](std::size_t k) {
        const auto& s = train[order[b + k]];
        Rng rng = make_rng(seed, "seg-aug/" + std::to_string(epoch) + "/" + s.id);
        aug[k] = imgproc::augment(s.image, s.mask, cfg.augment, rng);
      });
      std::vector<const ImageF*> imgs;
      std::vector<std::uint8_t> target;
      for (auto& a : aug) {
        imgs.push_back(&a.image);
        target.insert(target.end(), a.mask->pixels.begin(), a.mask->pixels.end());
      }
      const Tensor x = stack_images(imgs);
      const Tensor logits = net.forward(x, true);
      const std::vector<double> z(logits.data.begin(), logits.data.end());
      const auto L = nn::dice_ce_loss<double>(z, target, logits.n, logits.c, logits.plane(), cfg.loss);
      check_finite(L.value, "segmentation epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      Tensor g(logits.n, logits.c, logits.h, logits.w);
      std::transform(L.grad.begin(), L.grad.end(), g.data.begin(), [](double v) { return static_cast<float>(v); });
      opt.zero_grad();
      net.backward(g);
      lr = nn::one_cycle_lr(static_cast<double>(step), oc);
      opt.step({lr});
      ++step;
      loss_sum += L.value * static_cast<double>(nb);
    }
    const double metric = validation_dice(net, val, cfg.batch);
    HistoryRow row{epoch, "seg-" + std::to_string(S) + "x" + std::to_string(S), lr,
                   loss_sum / static_cast<double>(train.size()), metric, false};
    if (metric > res.best_metric) {
      res.best_metric = metric;
      res.best_epoch = epoch;
      row.saved = true;
      json meta{{"kind", "unet"},         {"epoch", epoch},          {"phase", row.phase},
                {"monitor", "mean_dice"}, {"metric", metric},        {"input_rows", S},
                {"input_cols", S},        {"config_hash", json_hash(config_echo)}, {"seed", seed}};
      nn::save_checkpoint(checkpoint_path, nn::capture(net, config_echo, meta));
    }
    res.history.push_back(row);
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "seg epoch %d/%d  loss %.4f  val dice %.4f%s", epoch, cfg.epochs, row.train_loss,
                    metric, row.saved ? "  (saved)" : "");
      log(buf);
    }
  }
  return res;
}

struct LoadedUNet {
  nn::UNet net;
  SegTrainConfig config;
  json metadata;
};

inline LoadedUNet load_unet(const fs::path& path) {
  const auto ck = nn::load_checkpoint(path, "train-seg");
  if (ck.metadata.value("kind", "") != "unet") throw ConfigError(path.string() + " is not a U-Net checkpoint");
  auto cfg = ck.config.get<SegTrainConfig>();
  LoadedUNet m{nn::UNet(cfg.model, 0), cfg, ck.metadata};
  nn::restore(m.net, ck);
  return m;
}

/// Full-resolution label map: preprocess, predict, nearest-resize back.
inline LabelMap segment_image(LoadedUNet& model, const ImageU16& img) {
  const int s = model.config.model.input_size;
  const ImageF x = imgproc::preprocess(img, s, s, model.config.preprocess);
  const auto pred = predict_masks(model.net, {&x}, 1);
  return imgproc::resize(pred[0], img.rows, img.cols, imgproc::Interp::nearest);
}

// ---- classification ------------------------------------------------------------------

enum class Variant { standard, anatomy_aware };

inline const char* to_string(Variant v) { return v == Variant::standard ? "standard" : "anatomy_aware"; }
inline Variant parse_variant(const std::string& s) {
  if (s == "standard") return Variant::standard;
  if (s == "anatomy_aware" || s == "anatomy-aware") return Variant::anatomy_aware;
  throw ConfigError("unknown variant '" + s + "' (expected standard or anatomy_aware)");
}

/// Full radiograph for the standard model, SIJ crop for the anatomy-aware one.
inline fs::path source_image(const Manifest& m, const ManifestEntry& e, Variant v) {
  if (v == Variant::standard) return m.resolve(e.image_path);
  if (!e.crop_path) throw UpstreamMissing("no SIJ crop recorded for " + e.sample_id, "crop");
  return m.resolve(*e.crop_path);
}

struct SizeStage {
  int rows = 0;
  int cols = 0;
  int epochs = 0;
  int batch = 64;
};

inline void to_json(json& j, const SizeStage& s) { j = json::array({s.rows, s.cols, s.epochs, s.batch}); }
inline void from_json(const json& j, SizeStage& s) {
  s.rows = j.at(0).get<int>();
  s.cols = j.at(1).get<int>();
  s.epochs = j.at(2).get<int>();
  s.batch = j.size() > 3 ? j.at(3).get<int>() : 64;
}

struct ClfTrainConfig {
  std::vector<SizeStage> size_schedule{{106, 158, 25, 64}, {208, 314, 25, 64}, {312, 472, 30, 64}, {416, 628, 40, 32}};
  int frozen_head_epochs = 15;
  bool counts_include_frozen = false;  // true: schedule epochs include the frozen-head epochs
  double lr = 1e-3;                    // head learning rate (one-cycle peak)
  double lr_group_ratio = 2.6;
  bool mixup = true;
  double mixup_alpha = 0.2;
  double label_smooth_eps = 0.1;
  double weight_decay = 1e-2;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  nn::ClassifierConfig model;
  imgproc::PreprocessParams preprocess;
  imgproc::AugmentParams augment{0.5, 10.0, 0.10, 5.0, 0.0, 0.0, 0.0};

  void validate() const {
    if (size_schedule.empty()) throw ConfigError("size_schedule must not be empty");
    for (std::size_t i = 0; i < size_schedule.size(); ++i) {
      const auto& s = size_schedule[i];
      if (s.rows < model.min_input || s.cols < model.min_input || s.epochs < 0 || s.batch < 1)
        throw ConfigError("invalid size_schedule entry " + std::to_string(i));
      if (i > 0 && (s.rows <= size_schedule[i - 1].rows || s.cols <= size_schedule[i - 1].cols))
        throw ConfigError("size_schedule must strictly increase in resolution");
    }
    if (frozen_head_epochs < 0 || lr <= 0 || lr_group_ratio < 1 || weight_decay < 0)
      throw ConfigError("classifier: invalid frozen_head_epochs/lr/lr_group_ratio/weight_decay");
    if (mixup && !(mixup_alpha > 0)) throw ConfigError("mixup_alpha must be > 0");
    if (label_smooth_eps < 0 || label_smooth_eps >= 1) throw ConfigError("label_smooth_eps must be in [0,1)");
    imgproc::validate(augment);
  }

  int unfrozen_epochs(const SizeStage& s) const {
    return counts_include_frozen ? std::max(0, s.epochs - frozen_head_epochs) : s.epochs;
  }
};

inline void to_json(json& j, const ClfTrainConfig& c) {
  j = json{{"size_schedule", c.size_schedule},
           {"frozen_head_epochs", c.frozen_head_epochs},
           {"counts_include_frozen", c.counts_include_frozen},
           {"lr", c.lr},
           {"lr_group_ratio", c.lr_group_ratio},
           {"mixup", c.mixup},
           {"mixup_alpha", c.mixup_alpha},
           {"label_smooth_eps", c.label_smooth_eps},
           {"weight_decay", c.weight_decay},
           {"pct_start", c.pct_start},
           {"div_factor", c.div_factor},
           {"final_div_factor", c.final_div_factor},
           {"model", c.model},
           {"preprocess", c.preprocess},
           {"augment", c.augment}};
}
inline void from_json(const json& j, ClfTrainConfig& c) {
  check_keys(j,
             {"size_schedule", "frozen_head_epochs", "counts_include_frozen", "lr", "lr_group_ratio", "mixup",
              "mixup_alpha", "label_smooth_eps", "weight_decay", "pct_start", "div_factor", "final_div_factor", "model",
              "preprocess", "augment"},
             "train-clf config");
  ClfTrainConfig d;
  c.size_schedule = j.value("size_schedule", d.size_schedule);
  c.frozen_head_epochs = j.value("frozen_head_epochs", d.frozen_head_epochs);
  c.counts_include_frozen = j.value("counts_include_frozen", d.counts_include_frozen);
  c.lr = j.value("lr", d.lr);
  c.lr_group_ratio = j.value("lr_group_ratio", d.lr_group_ratio);
  c.mixup = j.value("mixup", d.mixup);
  c.mixup_alpha = j.value("mixup_alpha", d.mixup_alpha);
  c.label_smooth_eps = j.value("label_smooth_eps", d.label_smooth_eps);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.pct_start = j.value("pct_start", d.pct_start);
  c.div_factor = j.value("div_factor", d.div_factor);
  c.final_div_factor = j.value("final_div_factor", d.final_div_factor);
  c.model = j.contains("model") ? j.at("model").get<nn::ClassifierConfig>() : d.model;
  c.preprocess = j.contains("preprocess") ? j.at("preprocess").get<imgproc::PreprocessParams>() : d.preprocess;
  c.augment = j.contains("augment") ? j.at("augment").get<imgproc::AugmentParams>() : d.augment;
}

struct ClfSample {
  std::string id;
  ImageF image;
  int label = 0;
};

/// Raw 16-bit sources, loaded once per training run.
struct RawSet {
  std::vector<std::string> ids;
  std::vector<ImageU16> images;
  std::vector<int> labels;
};

inline RawSet load_raw(const Manifest& m, Variant v) {
  RawSet r;
  r.ids.resize(m.entries.size());
  r.images.resize(m.entries.size());
  r.labels.resize(m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) source_image(m, m.entries[i], v);  // fail fast on missing crops
  parallel_for(m.entries.size(), [&](std::size_t i) {
    const auto& e = m.entries[i];
    r.ids[i] = e.sample_id;
    r.images[i] = png::read_u16(source_image(m, e, v));
    r.labels[i] = e.label;
  });
  return r;
}

inline std::vector<ClfSample> preprocess_set(const RawSet& raw, int rows, int cols,
                                             const imgproc::PreprocessParams& pp) {
  std::vector<ClfSample> out(raw.images.size());
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = {raw.ids[i], imgproc::preprocess(raw.images[i], rows, cols, pp), raw.labels[i]};
  });
  return out;
}

inline std::vector<double> softmax_positive(const Tensor& logits) {
  std::vector<double> p(static_cast<std::size_t>(logits.n));
  for (int i = 0; i < logits.n; ++i) {
    const double a = logits.at(i, 0, 0, 0), b = logits.at(i, 1, 0, 0);
    p[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(a - b));
  }
  return p;
}

/// Probability of the positive class, inference mode.
inline std::vector<double> predict_proba(nn::Classifier& net, const std::vector<const ImageF*>& imgs, int batch = 16) {
  std::vector<double> out;
  for (std::size_t b = 0; b < imgs.size(); b += static_cast<std::size_t>(batch)) {
    std::vector<const ImageF*> chunk(imgs.begin() + static_cast<long>(b),
                                     imgs.begin() + static_cast<long>(std::min(imgs.size(), b + batch)));
    const auto p = softmax_positive(net.forward(stack_images(chunk), false));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

/// Validation MCC at the 0.5 decision boundary; an undefined MCC counts as 0.
inline double validation_mcc(nn::Classifier& net, const std::vector<ClfSample>& val, int batch) {
  std::vector<const ImageF*> imgs;
  std::vector<int> preds, labels;
  for (const auto& s : val) imgs.push_back(&s.image);
  const auto p = predict_proba(net, imgs, batch);
  for (std::size_t i = 0; i < val.size(); ++i) {
    preds.push_back(p[i] > 0.5 ? 1 : 0);
    labels.push_back(val[i].label);
  }
  return stats::mcc(stats::confusion_from_predictions(preds, labels)).value_or(0.0);
}

inline TrainResult train_classifier(const Manifest& train_m, const Manifest& val_m, const ClfTrainConfig& cfg,
                                    Variant variant, std::uint64_t seed, const fs::path& checkpoint_path,
                                    const Logger& log = {}) {
  cfg.validate();
  if (train_m.entries.empty()) throw ConfigError("classifier: empty training manifest");
  if (val_m.entries.empty()) throw ConfigError("classifier: empty validation manifest");
  const RawSet raw_train = load_raw(train_m, variant);
  const RawSet raw_val = load_raw(val_m, variant);

  // Identical seeds and hyperparameters for both variants; only the inputs differ.
  nn::Classifier net(cfg.model, seed);
  const json config_echo = cfg;
  const std::string config_hash = json_hash(config_echo);
  const int G = cfg.model.layer_groups;
  TrainResult res;
  res.checkpoint = checkpoint_path;
  std::optional<nn::Checkpoint> best;
  int epoch_counter = 0;

  for (const auto& size : cfg.size_schedule) {
    const auto train = preprocess_set(raw_train, size.rows, size.cols, cfg.preprocess);
    const auto val = preprocess_set(raw_val, size.rows, size.cols, cfg.preprocess);
    const std::string tag = std::to_string(size.rows) + "x" + std::to_string(size.cols);

    for (const bool frozen : {true, false}) {
      const int epochs = frozen ? cfg.frozen_head_epochs : cfg.unfrozen_epochs(size);
      if (epochs == 0) continue;
      if (best) nn::restore(net, *best);
      net.set_backbone_frozen(frozen);
      nn::AdamW opt(net.params(), {0.9, 0.999, 1e-8, cfg.weight_decay});
      const std::vector<double> peak_lrs =
          frozen ? std::vector<double>(static_cast<std::size_t>(G), cfg.lr)
                 : nn::discriminative_lrs(cfg.lr, G, cfg.lr_group_ratio);
      const long steps_per_epoch = (static_cast<long>(train.size()) + size.batch - 1) / size.batch;
      const nn::OneCycleConfig oc{1.0, epochs * steps_per_epoch, cfg.pct_start, cfg.div_factor, cfg.final_div_factor};
      const std::string phase = (frozen ? "frozen-" : "unfrozen-") + tag;
      long step = 0;

      for (int e = 0; e < epochs; ++e) {
        ++epoch_counter;
        const std::string ep = std::to_string(epoch_counter);
        const auto order = shuffled_order(train.size(), make_rng(seed, "clf-order/" + ep));
        double loss_sum = 0.0;
        std::vector<double> lrs(peak_lrs.size());
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(size.batch)) {
          const std::size_t nb = std::min<std::size_t>(size.batch, order.size() - b);
          std::vector<imgproc::Augmented<float>> aug(nb);
          parallel_for(nb, [&](std::size_t k) {
            const auto& s = train[order[b + k]];
            Rng rng = make_rng(seed, "clf-aug/" + ep + "/" + s.id);
            aug[k] = imgproc::augment(s.image, std::nullopt, cfg.augment, rng);
          });
          // Mixup: each sample is blended with a shuffled partner from the same batch.
          std::vector<double> target(nb * 2, 0.0);
          std::vector<ImageF> mixed(nb);
          Rng mix_rng = make_rng(seed, "clf-mix/" + ep + "/" + std::to_string(b));
          const auto partner = shuffled_order(nb, make_rng(seed, "clf-pair/" + ep + "/" + std::to_string(b)));
          for (std::size_t k = 0; k < nb; ++k) {
            const int ya = train[order[b + k]].label, yb = train[order[b + partner[k]]].label;
            double lambda = 1.0;
            if (cfg.mixup) {
              auto r = imgproc::mixup(aug[k].image, aug[partner[k]].image, {cfg.mixup_alpha}, mix_rng);
              mixed[k] = std::move(r.image);
              lambda = r.lambda;
            } else {
              mixed[k] = aug[k].image;
            }
            target[k * 2 + static_cast<std::size_t>(ya)] += lambda;
            target[k * 2 + static_cast<std::size_t>(yb)] += 1.0 - lambda;
          }
          std::vector<const ImageF*> imgs;
          for (const auto& m : mixed) imgs.push_back(&m);
          const Tensor logits = net.forward(stack_images(imgs), true);
          const std::vector<double> z(logits.data.begin(), logits.data.end());
          const auto L = nn::soft_target_ce<double>(z, target, logits.n, 2, cfg.label_smooth_eps);
          check_finite(L.value, "classifier epoch " + ep + " (" + phase + ")");
          Tensor g(logits.n, logits.c, 1, 1);
          std::transform(L.grad.begin(), L.grad.end(), g.data.begin(), [](double v) { return static_cast<float>(v); });
          opt.zero_grad();
          net.backward(g);
          const double factor = nn::one_cycle_lr(static_cast<double>(step), oc);
          for (std::size_t k = 0; k < lrs.size(); ++k) lrs[k] = peak_lrs[k] * factor;
          opt.step(lrs);
          ++step;
          loss_sum += L.value * static_cast<double>(nb);
        }
        const double metric = validation_mcc(net, val, size.batch);
        HistoryRow row{epoch_counter, phase, *std::max_element(lrs.begin(), lrs.end()),
                       loss_sum / static_cast<double>(train.size()), metric, false};
        if (metric > res.best_metric) {
          res.best_metric = metric;
          res.best_epoch = epoch_counter;
          row.saved = true;
          json meta{{"kind", "classifier"},  {"variant", to_string(variant)}, {"epoch", epoch_counter},
                    {"phase", phase},        {"monitor", "mcc"},              {"metric", metric},
                    {"input_rows", size.rows}, {"input_cols", size.cols},     {"config_hash", config_hash},
                    {"seed", seed}};
          best = nn::capture(net, config_echo, meta);
          nn::save_checkpoint(checkpoint_path, *best);
        }
        res.history.push_back(row);
        if (log) {
          char buf[200];
          std::snprintf(buf, sizeof buf, "%s epoch %d (%s)  loss %.4f  val mcc %.4f%s", to_string(variant),
                        epoch_counter, phase.c_str(), row.train_loss, metric, row.saved ? "  (saved)" : "");
          log(buf);
        }
      }
    }
  }
  if (best) nn::restore(net, *best);
  return res;
}

struct LoadedClassifier {
  nn::Classifier net;
  ClfTrainConfig config;
  json metadata;
  int rows = 0;
  int cols = 0;
  Variant variant = Variant::standard;
  std::string config_hash;
};

inline LoadedClassifier load_classifier(const fs::path& path) {
  const auto ck = nn::load_checkpoint(path, "train-clf");
  if (ck.metadata.value("kind", "") != "classifier") throw ConfigError(path.string() + " is not a classifier checkpoint");
  auto cfg = ck.config.get<ClfTrainConfig>();
  LoadedClassifier m{nn::Classifier(cfg.model, 0),
                     cfg,
                     ck.metadata,
                     ck.metadata.at("input_rows").get<int>(),
                     ck.metadata.at("input_cols").get<int>(),
                     parse_variant(ck.metadata.at("variant").get<std::string>()),
                     ck.metadata.value("config_hash", "")};
  nn::restore(m.net, ck);
  return m;
}

inline ImageF prepare_input(const LoadedClassifier& m, const ImageU16& img) {
  return imgproc::preprocess(img, m.rows, m.cols, m.config.preprocess);
}

}  // namespace sacropipe::train
