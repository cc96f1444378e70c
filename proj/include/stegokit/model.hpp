#pragma once

// Learnable stage: layer objects, the Type1/Type2 subnets and the hybrid
// model (one subnet per Q&T group, concatenated features, FC head).

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "stegokit/error.hpp"
#include "stegokit/layers.hpp"
#include "stegokit/residual.hpp"
#include "stegokit/rng.hpp"
#include "stegokit/tensor.hpp"

namespace stegokit::nn {

using json = nlohmann::json;

/// View of one trainable parameter tensor and its optimizer state.
template <class T>
struct ParamRef {
  std::string name;
  std::vector<int> dims;
  std::span<T> value, grad, velocity;
  bool decay = false;  // L2 weight decay applies (conv/FC weights only)
};

/// Non-trainable state stored with a checkpoint (BN running statistics).
template <class T>
struct BufferRef {
  std::string name;
  std::vector<int> dims;
  std::span<T> value;
};

template <class T>
struct Trainable {
  Tensor4<T> value, grad, velocity;

  Trainable() = default;
  explicit Trainable(Shape4 s) : value(s), grad(s), velocity(s) {}

  ParamRef<T> ref(std::string name, bool decay) {
    const auto d = value.shape().dims();
    return {std::move(name), {d.begin(), d.end()}, value.values(), grad.values(), velocity.values(), decay};
  }
};

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Shape4 output_shape(Shape4 in) const = 0;
  virtual Tensor4<T> forward(const Tensor4<T>& x, Mode mode) = 0;
  virtual Tensor4<T> backward(const Tensor4<T>& grad_out) = 0;
  virtual std::vector<ParamRef<T>> params(const std::string&) { return {}; }
  virtual std::vector<BufferRef<T>> buffers(const std::string&) { return {}; }
  virtual json describe() const { return {{"kind", kind()}}; }
};

template <class T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, ConvGeometry g, bool input_grad = true)
      : geometry_(g),
        weight_(Shape4{out_channels, in_channels, kernel, kernel}),
        bias_(Shape4{1, out_channels, 1, 1}),
        input_grad_(input_grad) {}

  std::string kind() const override { return "conv"; }
  Shape4 output_shape(Shape4 in) const override {
    return {in.n, weight_.value.n(), conv_out_size(in.h, kernel(), geometry_.stride, geometry_.pad),
            conv_out_size(in.w, kernel(), geometry_.stride, geometry_.pad)};
  }
  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override {
    if (mode == Mode::train) input_ = x;
    return conv2d_forward(x, weight_.value, bias_.value.values(), geometry_);
  }
  Tensor4<T> backward(const Tensor4<T>& grad_out) override {
    auto g = conv2d_backward(input_, weight_.value, grad_out, geometry_, input_grad_);
    accumulate(weight_.grad, g.weight.values());
    accumulate(bias_.grad, std::span<const T>(g.bias));
    return std::move(g.input);
  }
  std::vector<ParamRef<T>> params(const std::string& prefix) override {
    return {weight_.ref(prefix + ".weight", true), bias_.ref(prefix + ".bias", false)};
  }
  json describe() const override {
    return {{"kind", kind()},
            {"in", weight_.value.c()},
            {"out", weight_.value.n()},
            {"kernel", kernel()},
            {"stride", geometry_.stride},
            {"pad", geometry_.pad}};
  }

  int kernel() const noexcept { return weight_.value.h(); }
  int fan_in() const noexcept { return weight_.value.c() * kernel() * kernel(); }
  Trainable<T>& weight() noexcept { return weight_; }

 private:
  static void accumulate(Tensor4<T>& dst, std::span<const T> src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  }

  ConvGeometry geometry_;
  Trainable<T> weight_, bias_;
  bool input_grad_;
  Tensor4<T> input_;
};

template <class T>
class BatchNorm2d final : public Layer<T> {
 public:
  explicit BatchNorm2d(int channels)
      : state_(channels), gamma_grad_(channels), beta_grad_(channels), gamma_vel_(channels), beta_vel_(channels) {}

  std::string kind() const override { return "batchnorm"; }
  Shape4 output_shape(Shape4 in) const override { return in; }
  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override {
    return batchnorm_forward(x, state_, mode, mode == Mode::train ? &cache_ : nullptr);
  }
  Tensor4<T> backward(const Tensor4<T>& grad_out) override {
    auto g = batchnorm_backward(cache_, state_, grad_out);
    for (int c = 0; c < state_.channels(); ++c) {
      gamma_grad_[c] += g.gamma[c];
      beta_grad_[c] += g.beta[c];
    }
    return std::move(g.input);
  }
  std::vector<ParamRef<T>> params(const std::string& prefix) override {
    const std::vector<int> dims{state_.channels()};
    return {{prefix + ".gamma", dims, state_.gamma, gamma_grad_, gamma_vel_, false},
            {prefix + ".beta", dims, state_.beta, beta_grad_, beta_vel_, false}};
  }
  std::vector<BufferRef<T>> buffers(const std::string& prefix) override {
    const std::vector<int> dims{state_.channels()};
    return {{prefix + ".running_mean", dims, state_.running_mean}, {prefix + ".running_var", dims, state_.running_var}};
  }
  json describe() const override { return {{"kind", kind()}, {"channels", state_.channels()}}; }

  BatchNormState<T>& state() noexcept { return state_; }

 private:
  BatchNormState<T> state_;
  BatchNormCache<T> cache_;
  std::vector<T> gamma_grad_, beta_grad_, gamma_vel_, beta_vel_;
};

template <class T>
class Relu final : public Layer<T> {
 public:
  std::string kind() const override { return "relu"; }
  Shape4 output_shape(Shape4 in) const override { return in; }
  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override {
    auto y = relu_forward(x);
    if (mode == Mode::train) output_ = y;
    return y;
  }
  Tensor4<T> backward(const Tensor4<T>& grad_out) override { return relu_backward(output_, grad_out); }

 private:
  Tensor4<T> output_;
};

template <class T>
class AvgPool2d final : public Layer<T> {
 public:
  explicit AvgPool2d(PoolGeometry g) : geometry_(g) {}

  std::string kind() const override { return "avgpool"; }
  Shape4 output_shape(Shape4 in) const override {
    return {in.n, in.c, conv_out_size(in.h, geometry_.window, geometry_.stride, geometry_.pad),
            conv_out_size(in.w, geometry_.window, geometry_.stride, geometry_.pad)};
  }
  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override {
    if (mode == Mode::train) input_shape_ = x.shape();
    return avgpool_forward(x, geometry_);
  }
  Tensor4<T> backward(const Tensor4<T>& grad_out) override {
    return avgpool_backward(input_shape_, grad_out, geometry_);
  }
  json describe() const override {
    return {{"kind", kind()}, {"window", geometry_.window}, {"stride", geometry_.stride}, {"pad", geometry_.pad}};
  }

 private:
  PoolGeometry geometry_;
  Shape4 input_shape_;
};

template <class T>
class Linear final : public Layer<T> {
 public:
  Linear(int in, int out) : weight_(Shape4{out, in, 1, 1}), bias_(Shape4{1, out, 1, 1}) {}

  std::string kind() const override { return "fc"; }
  Shape4 output_shape(Shape4 in) const override { return {in.n, weight_.value.n(), 1, 1}; }
  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override {
    if (mode == Mode::train) input_ = x;
    return fc_forward(x, weight_.value, bias_.value.values());
  }
  Tensor4<T> backward(const Tensor4<T>& grad_out) override {
    auto g = fc_backward(input_, weight_.value, grad_out);
    for (std::size_t i = 0; i < g.weight.size(); ++i) weight_.grad[i] += g.weight[i];
    for (std::size_t i = 0; i < g.bias.size(); ++i) bias_.grad[i] += g.bias[i];
    return std::move(g.input);
  }
  std::vector<ParamRef<T>> params(const std::string& prefix) override {
    return {weight_.ref(prefix + ".weight", true), bias_.ref(prefix + ".bias", false)};
  }
  json describe() const override { return {{"kind", kind()}, {"in", weight_.value.c()}, {"out", weight_.value.n()}}; }

  int fan_in() const noexcept { return weight_.value.c(); }
  Trainable<T>& weight() noexcept { return weight_; }

 private:
  Trainable<T> weight_, bias_;
  Tensor4<T> input_;
};

/// Ordered layer pipeline.
template <class T>
class Sequential {
 public:
  void add(std::unique_ptr<Layer<T>> layer, std::string name) {
    names_.push_back(std::move(name));
    layers_.push_back(std::move(layer));
  }

  Tensor4<T> forward(Tensor4<T> x, Mode mode) {
    for (auto& l : layers_) x = l->forward(x, mode);
    return x;
  }
  Tensor4<T> backward(Tensor4<T> g) {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }
  Shape4 output_shape(Shape4 in) const {
    for (const auto& l : layers_) in = l->output_shape(in);
    return in;
  }

  std::vector<ParamRef<T>> params(const std::string& prefix) {
    std::vector<ParamRef<T>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      for (auto& p : layers_[i]->params(prefix + "." + names_[i])) out.push_back(std::move(p));
    return out;
  }
  std::vector<BufferRef<T>> buffers(const std::string& prefix) {
    std::vector<BufferRef<T>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      for (auto& b : layers_[i]->buffers(prefix + "." + names_[i])) out.push_back(std::move(b));
    return out;
  }
  json describe(Shape4 in) const {
    json arr = json::array();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      json d = layers_[i]->describe();
      d["name"] = names_[i];
      in = layers_[i]->output_shape(in);
      d["output"] = {in.c, in.h, in.w};
      arr.push_back(std::move(d));
    }
    return arr;
  }

  std::size_t size() const noexcept { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<std::string> names_;
};

// ---- subnet and model configuration ----------------------------------------

enum class SubnetVariant { type1, type2 };

/// Which convolutions are followed by batch normalization.
enum class BnPlacement { all, no_first, none };

inline std::string to_string(SubnetVariant v) { return v == SubnetVariant::type1 ? "type1" : "type2"; }
inline std::string to_string(BnPlacement b) {
  switch (b) {
    case BnPlacement::all: return "all";
    case BnPlacement::no_first: return "no-bn1";
    case BnPlacement::none: return "none";
  }
  return "all";
}
inline SubnetVariant parse_subnet_variant(const std::string& s) {
  if (s == "type1") return SubnetVariant::type1;
  if (s == "type2") return SubnetVariant::type2;
  throw InvalidArgument("unknown subnet variant '" + s + "' (expected type1 or type2)");
}
inline BnPlacement parse_bn_placement(const std::string& s) {
  if (s == "all") return BnPlacement::all;
  if (s == "no-bn1") return BnPlacement::no_first;
  if (s == "none") return BnPlacement::none;
  throw InvalidArgument("unknown batch-norm placement '" + s + "' (expected all, no-bn1 or none)");
}

/// Type1: conv5x5/2 -> conv3x3/2 -> conv1x1/2 -> global average pool.
/// Type2: conv5x5/1 -> pool3/2 -> conv3x3/1 -> pool3/2 -> conv3x3/2 -> pool to 2x2.
/// Each conv is followed by BN (per `bn`) and ReLU. The channel widths are a
/// tunable choice; the only fixed requirement is the feature width.
struct SubnetConfig {
  SubnetVariant variant = SubnetVariant::type1;
  std::array<int, 3> widths{16, 64, 512};
  int input_channels = 25;
  int input_size = 256;
  bool double_first_stride = false;
  BnPlacement bn = BnPlacement::all;
  int feature_width = 512;

  static SubnetConfig type1(int input_size = 256) {
    SubnetConfig c;
    return c.with_size(input_size);
  }
  static SubnetConfig type2(int input_size = 256) {
    SubnetConfig c;
    c.variant = SubnetVariant::type2;
    c.widths = {16, 32, 128};
    return c.with_size(input_size);
  }
  SubnetConfig with_size(int s) const {
    SubnetConfig c = *this;
    c.input_size = s;
    return c;
  }

  friend bool operator==(const SubnetConfig&, const SubnetConfig&) = default;
};

/// Builds the subnet layer pipeline and checks it ends at exactly
/// `feature_width` values per image. Conv weights are drawn from `rng`.
template <class T>
Sequential<T> build_subnet(const SubnetConfig& cfg, Rng& rng) {
  auto fail = [&](const std::string& why) {
    throw InvalidConfiguration("subnet " + to_string(cfg.variant) + " on " + std::to_string(cfg.input_size) + "x" +
                               std::to_string(cfg.input_size) + " input: " + why);
  };
  if (cfg.input_size < 1 || cfg.input_channels < 1) fail("bad input shape");
  for (int w : cfg.widths)
    if (w < 1) fail("channel widths must be positive");

  Sequential<T> seq;
  Shape4 shape{1, cfg.input_channels, cfg.input_size, cfg.input_size};
  auto check = [&](Layer<T>& l) {
    shape = l.output_shape(shape);
    if (shape.h < 1 || shape.w < 1) fail("spatial size collapses to zero");
  };
  auto add = [&](std::unique_ptr<Layer<T>> l, std::string name) {
    check(*l);
    seq.add(std::move(l), std::move(name));
  };
  auto conv_block = [&](int idx, int kernel, int stride, int pad) {
    const int in = idx == 0 ? cfg.input_channels : cfg.widths[idx - 1];
    auto conv = std::make_unique<Conv2d<T>>(in, cfg.widths[idx], kernel, ConvGeometry{stride, pad}, idx != 0);
    const double std_dev = std::sqrt(2.0 / conv->fan_in());
    for (auto& w : conv->weight().value.values()) w = static_cast<T>(rng.normal(0.0, std_dev));
    const std::string n = std::to_string(idx + 1);
    add(std::move(conv), "conv" + n);
    const bool with_bn = cfg.bn == BnPlacement::all || (cfg.bn == BnPlacement::no_first && idx != 0);
    if (with_bn) add(std::make_unique<BatchNorm2d<T>>(cfg.widths[idx]), "bn" + n);
    add(std::make_unique<Relu<T>>(), "relu" + n);
  };

  const int first_stride_scale = cfg.double_first_stride ? 2 : 1;
  if (cfg.variant == SubnetVariant::type1) {
    conv_block(0, 5, 2 * first_stride_scale, 2);
    conv_block(1, 3, 2, 1);
    conv_block(2, 1, 2, 0);
    if (shape.h != shape.w) fail("non-square map before global pooling");
    add(std::make_unique<AvgPool2d<T>>(PoolGeometry{shape.h, shape.h, 0}), "pool");
  } else {
    conv_block(0, 5, first_stride_scale, 2);
    add(std::make_unique<AvgPool2d<T>>(PoolGeometry{3, 2, 1}), "pool1");
    conv_block(1, 3, 1, 1);
    add(std::make_unique<AvgPool2d<T>>(PoolGeometry{3, 2, 1}), "pool2");
    conv_block(2, 3, 2, 1);
    if (shape.h % 2 != 0 || shape.h != shape.w) fail("final map is not an even square, cannot pool to 2x2");
    add(std::make_unique<AvgPool2d<T>>(PoolGeometry{shape.h / 2, shape.h / 2, 0}), "pool3");
  }
  const auto features = static_cast<int>(shape.per_item());
  if (features != cfg.feature_width)
    fail("produces " + std::to_string(features) + " features, expected " + std::to_string(cfg.feature_width));
  return seq;
}

/// Full learnable stage. Group g of the residual stack feeds subnet g; the
/// concatenated features go through FC head -> ReLU ... -> 2 logits.
struct HybridConfig {
  SubnetConfig subnet = SubnetConfig::type1();
  int kernel_size = 5;
  std::vector<QtSpec> qt = default_qt_specs();
  std::vector<int> head{800, 400, 200};
  int classes = 2;

  int groups() const noexcept { return static_cast<int>(qt.size()); }
  int head_input() const noexcept { return groups() * subnet.feature_width; }

  /// Full-size default with the input size adjusted.
  static HybridConfig standard(int input_size = 256) {
    HybridConfig c;
    c.subnet = SubnetConfig::type1(input_size);
    return c;
  }
};

inline json to_json(const HybridConfig& c) {
  json qt = json::array();
  for (const auto& s : c.qt) qt.push_back({{"T", s.threshold}, {"q", s.step}});
  return {{"subnet",
           {{"variant", to_string(c.subnet.variant)},
            {"widths", c.subnet.widths},
            {"input_channels", c.subnet.input_channels},
            {"input_size", c.subnet.input_size},
            {"double_first_stride", c.subnet.double_first_stride},
            {"bn", to_string(c.subnet.bn)},
            {"feature_width", c.subnet.feature_width}}},
          {"kernel_size", c.kernel_size},
          {"qt", qt},
          {"head", c.head},
          {"classes", c.classes}};
}

inline HybridConfig hybrid_config_from_json(const json& j) {
  HybridConfig c;
  const auto& s = j.at("subnet");
  c.subnet.variant = parse_subnet_variant(s.at("variant").get<std::string>());
  c.subnet.widths = s.at("widths").get<std::array<int, 3>>();
  c.subnet.input_channels = s.at("input_channels").get<int>();
  c.subnet.input_size = s.at("input_size").get<int>();
  c.subnet.double_first_stride = s.at("double_first_stride").get<bool>();
  c.subnet.bn = parse_bn_placement(s.at("bn").get<std::string>());
  c.subnet.feature_width = s.at("feature_width").get<int>();
  c.kernel_size = j.at("kernel_size").get<int>();
  c.qt.clear();
  for (const auto& q : j.at("qt")) c.qt.push_back({q.at("T").get<int>(), q.at("q").get<double>()});
  c.head = j.at("head").get<std::vector<int>>();
  c.classes = j.at("classes").get<int>();
  return c;
}

template <class T>
class HybridModel {
 public:
  HybridModel(HybridConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
    if (cfg_.qt.empty()) throw InvalidConfiguration("model needs at least one Q&T group");
    if (cfg_.classes < 2) throw InvalidConfiguration("model needs at least two classes");
    if (cfg_.subnet.input_channels != cfg_.kernel_size * cfg_.kernel_size)
      throw InvalidConfiguration("subnet input channels must equal the kernel bank size");
    Rng rng(seed);
    for (int g = 0; g < cfg_.groups(); ++g) subnets_.push_back(build_subnet<T>(cfg_.subnet, rng));
    int in = cfg_.head_input();
    int idx = 1;
    auto add_fc = [&](int out) {
      auto fc = std::make_unique<Linear<T>>(in, out);
      const double std_dev = std::sqrt(2.0 / fc->fan_in());
      for (auto& w : fc->weight().value.values()) w = static_cast<T>(rng.normal(0.0, std_dev));
      head_.add(std::move(fc), "fc" + std::to_string(idx));
      in = out;
    };
    for (int width : cfg_.head) {
      if (width < 1) throw InvalidConfiguration("head widths must be positive");
      add_fc(width);
      head_.add(std::make_unique<Relu<T>>(), "relu" + std::to_string(idx));
      ++idx;
    }
    add_fc(cfg_.classes);
  }

  const HybridConfig& config() const noexcept { return cfg_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Logits of shape (batch, classes, 1, 1). groups[g] has shape
  /// (batch, k*k, size, size).
  Tensor4<T> forward(const std::vector<Tensor4<T>>& groups, Mode mode) {
    if (groups.size() != subnets_.size())
      throw InvalidArgument("model expects " + std::to_string(subnets_.size()) + " residual groups, got " +
                            std::to_string(groups.size()));
    const int batch = groups.front().n();
    const int fw = cfg_.subnet.feature_width;
    Tensor4<T> features(batch, cfg_.head_input(), 1, 1);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto expect = Shape4{batch, cfg_.subnet.input_channels, cfg_.subnet.input_size, cfg_.subnet.input_size};
      if (groups[g].shape() != expect)
        throw InvalidArgument("residual group " + std::to_string(g) + " has shape " + groups[g].shape().str() +
                              ", expected " + expect.str());
      const auto f = subnets_[g].forward(groups[g], mode);
      for (int b = 0; b < batch; ++b) std::copy(f.item(b), f.item(b) + fw, features.item(b) + g * fw);
    }
    return head_.forward(std::move(features), mode);
  }

  /// Accumulates parameter gradients; returns nothing since the inputs are fixed.
  void backward(const Tensor4<T>& grad_logits) {
    const auto gfeat = head_.backward(grad_logits);
    const int batch = gfeat.n();
    const int fw = cfg_.subnet.feature_width;
    const auto out_shape = subnets_.front().output_shape(
        Shape4{batch, cfg_.subnet.input_channels, cfg_.subnet.input_size, cfg_.subnet.input_size});
    for (std::size_t g = 0; g < subnets_.size(); ++g) {
      Tensor4<T> part(out_shape);
      for (int b = 0; b < batch; ++b)
        std::copy(gfeat.item(b) + g * fw, gfeat.item(b) + (g + 1) * fw, part.item(b));
      subnets_[g].backward(std::move(part));
    }
  }

  Tensor4<T> predict_proba(const std::vector<Tensor4<T>>& groups) { return softmax(forward(groups, Mode::eval)); }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (std::size_t g = 0; g < subnets_.size(); ++g)
      for (auto& p : subnets_[g].params("subnet" + std::to_string(g))) out.push_back(std::move(p));
    for (auto& p : head_.params("head")) out.push_back(std::move(p));
    return out;
  }
  std::vector<BufferRef<T>> buffers() {
    std::vector<BufferRef<T>> out;
    for (std::size_t g = 0; g < subnets_.size(); ++g)
      for (auto& b : subnets_[g].buffers("subnet" + std::to_string(g))) out.push_back(std::move(b));
    return out;
  }
  void zero_grad() {
    for (auto& p : params()) std::fill(p.grad.begin(), p.grad.end(), T{0});
  }

  json describe() const {
    const Shape4 in{1, cfg_.subnet.input_channels, cfg_.subnet.input_size, cfg_.subnet.input_size};
    return {{"subnet", subnets_.front().describe(in)}, {"head", head_.describe(Shape4{1, cfg_.head_input(), 1, 1})}};
  }

  Sequential<T>& subnet(std::size_t g) { return subnets_[g]; }
  Sequential<T>& head() { return head_; }

 private:
  HybridConfig cfg_;
  std::uint64_t seed_;
  std::vector<Sequential<T>> subnets_;
  Sequential<T> head_;
};

/// Converts residual stacks (one per image) into per-group input tensors.
template <class T>
std::vector<Tensor4<T>> stacks_to_groups(std::span<const ResidualStack> stacks) {
  if (stacks.empty()) throw InvalidArgument("empty batch");
  const auto& first = stacks.front();
  const int maps = static_cast<int>(first.maps_per_group());
  std::vector<Tensor4<T>> groups;
  for (std::size_t g = 0; g < first.group_count(); ++g)
    groups.emplace_back(static_cast<int>(stacks.size()), maps, first.height(), first.width());
  for (std::size_t b = 0; b < stacks.size(); ++b) {
    const auto& s = stacks[b];
    if (s.group_count() != first.group_count() || s.maps_per_group() != first.maps_per_group() ||
        s.width() != first.width() || s.height() != first.height())
      throw InvalidArgument("residual stacks in a batch must have identical shapes");
    for (std::size_t g = 0; g < s.group_count(); ++g) {
      T* dst = groups[g].item(static_cast<int>(b));
      for (int m = 0; m < maps; ++m)
        for (std::int16_t v : s.groups[g][m].values()) *dst++ = static_cast<T>(v);
    }
  }
  return groups;
}

/// Class probabilities (batch x 2) for a batch of residual stacks.
template <class T>
Tensor4<T> hybrid_forward(HybridModel<T>& model, std::span<const ResidualStack> stacks) {
  if (!stacks.empty() && static_cast<int>(stacks.front().group_count()) != model.config().groups())
    throw InvalidArgument("residual stack has " + std::to_string(stacks.front().group_count()) +
                          " groups, model expects " + std::to_string(model.config().groups()));
  return model.predict_proba(stacks_to_groups<T>(stacks));
}

}  // namespace stegokit::nn
