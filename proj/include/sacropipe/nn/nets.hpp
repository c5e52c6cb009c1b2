#pragma once

// Compact U-Net (3-class segmentation) and residual CNN classifier.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "sacropipe/config.hpp"
#include "sacropipe/nn/layers.hpp"

namespace sacropipe::nn {

using json = nlohmann::json;

// ---- building blocks -----------------------------------------------------------

/// conv3x3 -> BN -> ReLU.
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(const std::string& name, int in, int out, int stride, Rng& rng)
      : conv_(name + ".conv", in, out, 3, stride, 1, false, rng), bn_(name + ".bn", out) {}
  Tensor forward(const Tensor& x, bool train) { return relu_.forward(bn_.forward(conv_.forward(x), train)); }
  Tensor backward(const Tensor& dy, bool param_grads = true, bool input_grad = true) {
    return conv_.backward(bn_.backward(relu_.backward(dy), param_grads), param_grads, input_grad);
  }
  void collect(std::vector<Param*>& ps) {
    conv_.collect(ps);
    bn_.collect(ps);
  }
  void collect_buffers(std::vector<Buffer>& bs) { bn_.collect_buffers(bs); }
  int out_size(int len) const { return conv_.out_size(len); }

 private:
  Conv2d conv_;
  BatchNorm2d bn_;
  ReLU relu_;
};

class DoubleConv {
 public:
  DoubleConv() = default;
  DoubleConv(const std::string& name, int in, int out, Rng& rng)
      : a_(name + ".0", in, out, 1, rng), b_(name + ".1", out, out, 1, rng) {}
  Tensor forward(const Tensor& x, bool train) { return b_.forward(a_.forward(x, train), train); }
  Tensor backward(const Tensor& dy) { return a_.backward(b_.backward(dy)); }
  void collect(std::vector<Param*>& ps) {
    a_.collect(ps);
    b_.collect(ps);
  }
  void collect_buffers(std::vector<Buffer>& bs) {
    a_.collect_buffers(bs);
    b_.collect_buffers(bs);
  }

 private:
  ConvBnRelu a_, b_;
};

// ---- U-Net -------------------------------------------------------------------------

struct UNetConfig {
  int input_size = 512;
  std::vector<int> channels{16, 32, 64, 128};
  int classes = 3;
  bool zero_init_head = false;
};

inline void to_json(json& j, const UNetConfig& c) {
  j = json{{"input_size", c.input_size}, {"channels", c.channels}, {"classes", c.classes},
           {"zero_init_head", c.zero_init_head}};
}
inline void from_json(const json& j, UNetConfig& c) {
  check_keys(j, {"input_size", "channels", "classes", "zero_init_head"}, "U-Net config");
  UNetConfig d;
  c.input_size = j.value("input_size", d.input_size);
  c.channels = j.value("channels", d.channels);
  c.classes = j.value("classes", d.classes);
  c.zero_init_head = j.value("zero_init_head", d.zero_init_head);
}

class UNet {
 public:
  UNet(const UNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.channels.size() < 3) throw ConfigError("U-Net needs at least 3 levels");
    const int levels = static_cast<int>(cfg.channels.size());
    const int factor = 1 << (levels - 1);
    if (cfg.input_size % factor != 0)
      throw ConfigError("U-Net input size must be divisible by " + std::to_string(factor));
    Rng rng = make_rng(seed, "unet-init");
    int in = 1;
    for (int l = 0; l < levels; ++l) {
      enc_.emplace_back("enc" + std::to_string(l), in, cfg.channels[l], rng);
      in = cfg.channels[l];
    }
    pools_.resize(static_cast<std::size_t>(levels - 1));
    for (int l = levels - 2; l >= 0; --l) {
      up_.emplace_back("up" + std::to_string(l), cfg.channels[l + 1], cfg.channels[l], rng);
      dec_.emplace_back("dec" + std::to_string(l), 2 * cfg.channels[l], cfg.channels[l], rng);
    }
    head_ = Conv2d("head", cfg.channels[0], cfg.classes, 1, 1, 0, true, rng);
    if (cfg.zero_init_head) std::fill(head_.weight().value.begin(), head_.weight().value.end(), 0.0f);
  }

  const UNetConfig& config() const { return cfg_; }

  /// (N,1,S,S) normalised images -> (N,classes,S,S) logits.
  Tensor forward(const Tensor& x, bool train) {
    if (x.c != 1 || x.h != cfg_.input_size || x.w != cfg_.input_size)
      throw ShapeError("U-Net expects (N,1," + std::to_string(cfg_.input_size) + "," +
                       std::to_string(cfg_.input_size) + "), got " + x.shape_str());
    const int levels = static_cast<int>(enc_.size());
    skip_ch_.clear();
    std::vector<Tensor> skips;
    Tensor h = x;
    for (int l = 0; l < levels; ++l) {
      h = enc_[l].forward(h, train);
      if (l < levels - 1) {
        skips.push_back(h);
        skip_ch_.push_back(h.c);
        h = pools_[l].forward(h);
      }
    }
    for (int d = 0; d < levels - 1; ++d) {
      const int l = levels - 2 - d;
      Tensor u = up_[d].forward(h);
      h = dec_[d].forward(concat_channels(u, skips[l]), train);
    }
    return head_.forward(h);
  }

  void backward(const Tensor& dlogits) {
    const int levels = static_cast<int>(enc_.size());
    Tensor g = head_.backward(dlogits);
    std::vector<Tensor> dskip(static_cast<std::size_t>(levels - 1));
    for (int d = levels - 2; d >= 0; --d) {
      const int l = levels - 2 - d;
      Tensor dcat = dec_[d].backward(g);
      Tensor du, ds;
      split_channels(dcat, dcat.c - skip_ch_[l], du, ds);
      dskip[l] = std::move(ds);
      g = up_[d].backward(du);
    }
    for (int l = levels - 1; l >= 0; --l) {
      if (l < levels - 1) {
        g = pools_[l].backward(g);
        add_inplace(g, dskip[l]);
      }
      g = enc_[l].backward(g);
    }
  }

  std::vector<Param*> params() {
    std::vector<Param*> ps;
    for (auto& e : enc_) e.collect(ps);
    for (std::size_t d = 0; d < up_.size(); ++d) {
      up_[d].collect(ps);
      dec_[d].collect(ps);
    }
    head_.collect(ps);
    return ps;
  }
  std::vector<Buffer> buffers() {
    std::vector<Buffer> bs;
    for (auto& e : enc_) e.collect_buffers(bs);
    for (auto& d : dec_) d.collect_buffers(bs);
    return bs;
  }

 private:
  UNetConfig cfg_;
  std::vector<DoubleConv> enc_, dec_;
  std::vector<MaxPool2x2> pools_;
  std::vector<ConvTranspose2x2> up_;
  Conv2d head_;
  std::vector<int> skip_ch_;
};

// ---- residual classifier ---------------------------------------------------------

class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(const std::string& name, int in, int out, int stride, Rng& rng)
      : c1_(name + ".conv1", in, out, 3, stride, 1, false, rng), b1_(name + ".bn1", out),
        c2_(name + ".conv2", out, out, 3, 1, 1, false, rng), b2_(name + ".bn2", out),
        projection_(stride != 1 || in != out) {
    if (projection_) {
      sc_ = Conv2d(name + ".down", in, out, 1, stride, 0, false, rng);
      sbn_ = BatchNorm2d(name + ".down_bn", out);
    }
  }

  Tensor forward(const Tensor& x, bool train) {
    Tensor h = r1_.forward(b1_.forward(c1_.forward(x), train));
    h = b2_.forward(c2_.forward(h), train);
    add_inplace(h, projection_ ? sbn_.forward(sc_.forward(x), train) : x);
    return r2_.forward(h);
  }

  Tensor backward(const Tensor& dy, bool param_grads) {
    Tensor g = r2_.backward(dy);
    Tensor dmain = c1_.backward(b1_.backward(r1_.backward(c2_.backward(b2_.backward(g, param_grads), param_grads)),
                                             param_grads),
                                param_grads);
    Tensor dshort = projection_ ? sc_.backward(sbn_.backward(g, param_grads), param_grads) : g;
    add_inplace(dmain, dshort);
    return dmain;
  }

  void collect(std::vector<Param*>& ps) {
    c1_.collect(ps);
    b1_.collect(ps);
    c2_.collect(ps);
    b2_.collect(ps);
    if (projection_) {
      sc_.collect(ps);
      sbn_.collect(ps);
    }
  }
  void collect_buffers(std::vector<Buffer>& bs) {
    b1_.collect_buffers(bs);
    b2_.collect_buffers(bs);
    if (projection_) sbn_.collect_buffers(bs);
  }

 private:
  Conv2d c1_;
  BatchNorm2d b1_;
  ReLU r1_;
  Conv2d c2_;
  BatchNorm2d b2_;
  ReLU r2_;
  bool projection_ = false;
  Conv2d sc_;
  BatchNorm2d sbn_;
};

struct StageSpec {
  int channels = 64;
  int blocks = 1;
};

struct ClassifierConfig {
  int stem_channels = 32;
  std::vector<StageSpec> stages{{32, 1}, {64, 1}, {128, 1}, {256, 1}};
  int classes = 2;
  int layer_groups = 3;
  int min_input = 64;
};

inline void to_json(json& j, const StageSpec& s) { j = json::array({s.channels, s.blocks}); }
inline void from_json(const json& j, StageSpec& s) {
  s.channels = j.at(0).get<int>();
  s.blocks = j.at(1).get<int>();
}
inline void to_json(json& j, const ClassifierConfig& c) {
  j = json{{"stem_channels", c.stem_channels}, {"stages", c.stages}, {"classes", c.classes},
           {"layer_groups", c.layer_groups},   {"min_input", c.min_input}};
}
inline void from_json(const json& j, ClassifierConfig& c) {
  check_keys(j, {"stem_channels", "stages", "classes", "layer_groups", "min_input"}, "classifier config");
  ClassifierConfig d;
  c.stem_channels = j.value("stem_channels", d.stem_channels);
  c.stages = j.value("stages", d.stages);
  c.classes = j.value("classes", d.classes);
  c.layer_groups = j.value("layer_groups", d.layer_groups);
  c.min_input = j.value("min_input", d.min_input);
}

/// stem (stride 2) -> stages (stride 2 from the second on) -> GAP -> linear.
/// Feature maps addressable by Grad-CAM: "stem", "stage1" .. "stageN".
class Classifier {
 public:
  Classifier(const ClassifierConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.stages.empty()) throw ConfigError("classifier needs at least one stage");
    if (cfg.layer_groups < 1) throw ConfigError("layer_groups must be >= 1");
    Rng rng = make_rng(seed, "classifier-init");
    stem_ = ConvBnRelu("stem", 1, cfg.stem_channels, 2, rng);
    int in = cfg.stem_channels;
    for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
      std::vector<BasicBlock> blocks;
      for (int b = 0; b < cfg.stages[s].blocks; ++b) {
        const int stride = (b == 0 && s > 0) ? 2 : 1;
        blocks.emplace_back("stage" + std::to_string(s + 1) + "." + std::to_string(b), in, cfg.stages[s].channels,
                            stride, rng);
        in = cfg.stages[s].channels;
      }
      stages_.push_back(std::move(blocks));
    }
    fc_ = Linear("head.fc", in, cfg.classes, rng);
    assign_groups();
  }

  const ClassifierConfig& config() const { return cfg_; }

  std::vector<std::string> layer_ids() const {
    std::vector<std::string> ids{"stem"};
    for (std::size_t s = 0; s < stages_.size(); ++s) ids.push_back("stage" + std::to_string(s + 1));
    return ids;
  }
  std::string default_cam_layer() const { return layer_ids().back(); }

  /// (N,1,H,W) -> (N,classes,1,1). Feature maps of every unit are kept for Grad-CAM.
  Tensor forward(const Tensor& x, bool train) {
    if (x.c != 1 || x.h < cfg_.min_input || x.w < cfg_.min_input)
      throw ShapeError("classifier input must be (N,1,>=" + std::to_string(cfg_.min_input) + ",>=" +
                       std::to_string(cfg_.min_input) + "), got " + x.shape_str());
    features_.clear();
    Tensor h = stem_.forward(x, train);
    features_["stem"] = h;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      for (auto& b : stages_[s]) h = b.forward(h, train);
      features_["stage" + std::to_string(s + 1)] = h;
    }
    return fc_.forward(pool_.forward(h));
  }

  /// Backpropagates dlogits. With a frozen backbone only the head receives
  /// gradients. If `stop_at` names a feature map, returns dL/d(that map).
  Tensor backward(const Tensor& dlogits, const std::string& stop_at = "", bool param_grads = true) {
    Tensor g = pool_.backward(fc_.backward(dlogits, param_grads));
    if (backbone_frozen_ && stop_at.empty()) return g;
    const bool backbone_grads = param_grads && !backbone_frozen_;
    for (int s = static_cast<int>(stages_.size()) - 1; s >= 0; --s) {
      if (stop_at == "stage" + std::to_string(s + 1)) return g;
      for (int b = static_cast<int>(stages_[s].size()) - 1; b >= 0; --b) g = stages_[s][b].backward(g, backbone_grads);
    }
    if (stop_at == "stem") return g;
    if (!stop_at.empty()) throw ConfigError("unknown layer id '" + stop_at + "'");
    return stem_.backward(g, backbone_grads, false);
  }

  const Tensor& feature(const std::string& id) const {
    auto it = features_.find(id);
    if (it == features_.end()) throw ConfigError("unknown layer id '" + id + "'");
    return it->second;
  }

  void set_backbone_frozen(bool frozen) {
    backbone_frozen_ = frozen;
    for (Param* p : backbone_params()) p->trainable = !frozen;
  }
  bool backbone_frozen() const { return backbone_frozen_; }

  std::vector<Param*> params() {
    auto ps = backbone_params();
    fc_.collect(ps);
    return ps;
  }
  std::vector<Param*> head_params() {
    std::vector<Param*> ps;
    fc_.collect(ps);
    return ps;
  }
  std::vector<Buffer> buffers() {
    std::vector<Buffer> bs;
    stem_.collect_buffers(bs);
    for (auto& st : stages_)
      for (auto& b : st) b.collect_buffers(bs);
    return bs;
  }

 private:
  std::vector<Param*> backbone_params() {
    std::vector<Param*> ps;
    stem_.collect(ps);
    for (auto& st : stages_)
      for (auto& b : st) b.collect(ps);
    return ps;
  }

  // Head = last group; stem + stages split evenly over the remaining groups.
  void assign_groups() {
    const int G = cfg_.layer_groups;
    for (Param* p : head_params()) p->group = G - 1;
    const int units = 1 + static_cast<int>(stages_.size());
    auto group_of = [&](int unit) { return G == 1 ? 0 : unit * (G - 1) / units; };
    std::vector<Param*> ps;
    stem_.collect(ps);
    for (Param* p : ps) p->group = group_of(0);
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      ps.clear();
      for (auto& b : stages_[s]) b.collect(ps);
      for (Param* p : ps) p->group = group_of(static_cast<int>(s) + 1);
    }
  }

  ClassifierConfig cfg_;
  ConvBnRelu stem_;
  std::vector<std::vector<BasicBlock>> stages_;
  GlobalAvgPool pool_;
  Linear fc_;
  bool backbone_frozen_ = false;
  std::map<std::string, Tensor> features_;
};

inline std::size_t parameter_count(const std::vector<Param*>& ps) {
  std::size_t n = 0;
  for (const Param* p : ps) n += p->size();
  return n;
}

}  // namespace sacropipe::nn
