#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "normgen/nn/layers.hpp"
#include "normgen/nn/tensor.hpp"
#include "normgen/rng.hpp"

namespace normgen {

struct UNetConfig {
  int depth = 16;  ///< total layer count: depth/2 encoder + depth/2 decoder blocks
  int base_channels = 64;
  int in_channels = 4;
  int out_channels = 3;
  bool batch_norm = true;
  double leaky_slope = 0.2;

  int levels() const { return depth / 2; }
  /// Smallest input edge the net accepts; inputs must be multiples of it.
  int size_quantum() const { return 1 << levels(); }
  /// Output width of encoder block k: base * 2^k, capped at 8 * base.
  int encoder_channels(int k) const { return base_channels * std::min(1 << k, 8); }

  bool operator==(const UNetConfig&) const = default;
};

/// Throws Config for an invalid config or an input size the net cannot take.
void validate(const UNetConfig& cfg);
void validate(const UNetConfig& cfg, int height, int width);

enum class NoiseMode { Off, Dropout };

const char* to_string(NoiseMode mode);
NoiseMode parse_noise_mode(const std::string& text);

struct ForwardOptions {
  bool training = false;
  NoiseMode noise = NoiseMode::Off;
  Rng* noise_rng = nullptr;  ///< required when noise = Dropout
};

/// Introspection record for one U-Net block.
struct BlockInfo {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  bool batch_norm = false;
  int skip_from = -1;  ///< encoder block whose output is concatenated into the input, or -1
  int skip_channels = 0;
};

namespace nn {

/// Encoder/decoder stack with mirrored skip connections.
///
/// Encoder block k computes h_k = BN(conv(LReLU(h_{k-1}))) (no activation on the
/// raw input, no BN on the first block or the bottleneck). Decoder block j
/// computes d_j = BN(convT(LReLU([d_{j-1}, h_{L-1-j}]))); the first decoder block
/// reads the bottleneck alone and the last one has no BN. Every tensor handed
/// between blocks, including the skips, is therefore taken after batch
/// normalization.
template <class Scalar>
class UNet {
 public:
  /// Decoder blocks that carry dropout noise.
  static constexpr int kNoisyDecoderBlocks = 3;
  static constexpr double kDropoutRate = 0.5;

  UNet(const UNetConfig& cfg, Rng& rng) : cfg_(cfg) {
    validate(cfg);
    const int L = cfg.levels();
    for (int k = 0; k < L; ++k) {
      const int in = k == 0 ? cfg.in_channels : cfg.encoder_channels(k - 1);
      const int out = cfg.encoder_channels(k);
      const bool norm = encoder_norm(k);
      const std::string name = "enc" + std::to_string(k + 1);
      enc_conv_.emplace_back(name + ".conv", in, out, !norm, rng);
      enc_bn_.push_back(norm ? std::make_optional<BatchNorm<Scalar>>(name + ".bn", out, rng) : std::nullopt);
    }
    for (int j = 0; j < L; ++j) {
      const int in = j == 0 ? cfg.encoder_channels(L - 1) : 2 * cfg.encoder_channels(L - 1 - j);
      const int out = j == L - 1 ? cfg.out_channels : cfg.encoder_channels(L - 2 - j);
      const bool norm = decoder_norm(j);
      const std::string name = "dec" + std::to_string(j + 1);
      dec_conv_.emplace_back(name + ".convt", in, out, !norm, rng);
      dec_bn_.push_back(norm ? std::make_optional<BatchNorm<Scalar>>(name + ".bn", out, rng) : std::nullopt);
    }
    h_.resize(L);
    d_.resize(L);
    dec_in_.resize(L);
    drop_.resize(L);
  }

  const UNetConfig& config() const { return cfg_; }

  std::vector<BlockInfo> describe() const {
    std::vector<BlockInfo> info;
    const int L = cfg_.levels();
    for (int k = 0; k < L; ++k) {
      info.push_back({"enc" + std::to_string(k + 1), enc_conv_[k].in_channels(),
                      enc_conv_[k].out_channels(), encoder_norm(k), -1, 0});
    }
    for (int j = 0; j < L; ++j) {
      const int skip = j == 0 ? -1 : L - 1 - j;
      info.push_back({"dec" + std::to_string(j + 1), dec_conv_[j].in_channels(),
                      dec_conv_[j].out_channels(), decoder_norm(j), skip,
                      skip < 0 ? 0 : cfg_.encoder_channels(skip)});
    }
    return info;
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, const ForwardOptions& opt) {
    validate(cfg_, x.extent.height, x.extent.width);
    if (x.channels() != cfg_.in_channels) {
      throw Error(ErrorKind::ShapeMismatch, "U-Net expects " + std::to_string(cfg_.in_channels) +
                                                " input channels, got " + std::to_string(x.channels()));
    }
    if (opt.noise == NoiseMode::Dropout && !opt.noise_rng) {
      throw Error(ErrorKind::Config, "dropout noise needs a random stream");
    }
    const int L = cfg_.levels();
    const Scalar slope = Scalar(cfg_.leaky_slope);
    for (int k = 0; k < L; ++k) {
      FeatureMap<Scalar> z = k == 0 ? enc_conv_[k].forward(x)
                                    : enc_conv_[k].forward({leaky_relu(h_[k - 1].values, slope), h_[k - 1].extent});
      h_[k] = enc_bn_[k] ? enc_bn_[k]->forward(z, opt.training) : std::move(z);
    }
    for (int j = 0; j < L; ++j) {
      dec_in_[j] = j == 0 ? h_[L - 1] : concat_channels(d_[j - 1], h_[L - 1 - j]);
      FeatureMap<Scalar> z = dec_conv_[j].forward({leaky_relu(dec_in_[j].values, slope), dec_in_[j].extent});
      d_[j] = dec_bn_[j] ? dec_bn_[j]->forward(z, opt.training) : std::move(z);
      drop_[j].resize(0, 0);
      if (opt.noise == NoiseMode::Dropout && j < std::min(kNoisyDecoderBlocks, L - 1)) {
        drop_[j].resize(d_[j].values.rows(), d_[j].values.cols());
        const Scalar scale = Scalar(1.0 / (1.0 - kDropoutRate));
        for (Eigen::Index i = 0; i < drop_[j].size(); ++i) {
          drop_[j].data()[i] = opt.noise_rng->uniform() < kDropoutRate ? Scalar(0) : scale;
        }
        d_[j].values.array() *= drop_[j].array();
      }
    }
    return d_[L - 1];
  }

  /// Bottleneck features h_{L-1} from the last forward pass.
  const FeatureMap<Scalar>& bottleneck() const { return h_.back(); }

  /// Backpropagates d(output); `d_bottleneck`, if given, is an extra gradient
  /// on the bottleneck features. Returns the gradient w.r.t. the input.
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& d_out, const Matrix<Scalar>* d_bottleneck = nullptr) {
    const int L = cfg_.levels();
    const Scalar slope = Scalar(cfg_.leaky_slope);
    std::vector<Matrix<Scalar>> gh(L);
    for (int k = 0; k < L; ++k) gh[k] = Matrix<Scalar>::Zero(h_[k].values.rows(), h_[k].values.cols());
    if (d_bottleneck) gh[L - 1] += *d_bottleneck;

    FeatureMap<Scalar> g = d_out;
    for (int j = L - 1; j >= 0; --j) {
      if (drop_[j].size() > 0) g.values.array() *= drop_[j].array();
      if (dec_bn_[j]) g = dec_bn_[j]->backward(g);
      FeatureMap<Scalar> ga = dec_conv_[j].backward(g);
      Matrix<Scalar> gin = leaky_relu_backward(ga.values, dec_in_[j].values, slope);
      if (j == 0) {
        gh[L - 1] += gin;
      } else {
        const int prev = static_cast<int>(d_[j - 1].values.rows());
        gh[L - 1 - j] += gin.bottomRows(gin.rows() - prev);
        g = FeatureMap<Scalar>{gin.topRows(prev), dec_in_[j].extent};
      }
    }
    FeatureMap<Scalar> dx;
    for (int k = L - 1; k >= 0; --k) {
      FeatureMap<Scalar> gk{std::move(gh[k]), h_[k].extent};
      if (enc_bn_[k]) gk = enc_bn_[k]->backward(gk);
      FeatureMap<Scalar> ga = enc_conv_[k].backward(gk);
      if (k > 0) gh[k - 1] += leaky_relu_backward(ga.values, h_[k - 1].values, slope);
      else dx = std::move(ga);
    }
    return dx;
  }

  /// Parameters in a stable order, encoder first.
  std::vector<Parameter<Scalar>*> parameters() {
    std::vector<Parameter<Scalar>*> out;
    for (std::size_t k = 0; k < enc_conv_.size(); ++k) {
      enc_conv_[k].collect(out);
      if (enc_bn_[k]) enc_bn_[k]->collect(out);
    }
    for (std::size_t j = 0; j < dec_conv_.size(); ++j) {
      dec_conv_[j].collect(out);
      if (dec_bn_[j]) dec_bn_[j]->collect(out);
    }
    return out;
  }

  std::vector<NamedTensor<Scalar>> buffers() {
    std::vector<NamedTensor<Scalar>> out;
    for (auto& bn : enc_bn_)
      if (bn) bn->collect_buffers(out);
    for (auto& bn : dec_bn_)
      if (bn) bn->collect_buffers(out);
    return out;
  }

  /// Parameters of encoder block k (for gradient-flow checks).
  std::vector<Parameter<Scalar>*> encoder_parameters(int k) {
    std::vector<Parameter<Scalar>*> out;
    enc_conv_[k].collect(out);
    if (enc_bn_[k]) enc_bn_[k]->collect(out);
    return out;
  }

 private:
  bool encoder_norm(int k) const { return cfg_.batch_norm && k > 0 && k < cfg_.levels() - 1; }
  bool decoder_norm(int j) const { return cfg_.batch_norm && j < cfg_.levels() - 1; }

  UNetConfig cfg_;
  std::vector<Conv2d<Scalar>> enc_conv_;
  std::vector<std::optional<BatchNorm<Scalar>>> enc_bn_;
  std::vector<ConvTranspose2d<Scalar>> dec_conv_;
  std::vector<std::optional<BatchNorm<Scalar>>> dec_bn_;
  std::vector<FeatureMap<Scalar>> h_, d_, dec_in_;
  std::vector<Matrix<Scalar>> drop_;
};

}  // namespace nn

/// Sketch + hints (4 channels) -> normals (3 channels, tanh-bounded).
template <class Scalar>
class Generator {
 public:
  Generator(UNetConfig cfg, std::uint64_t seed) : Generator(cfg, Rng(seed)) {}

  const UNetConfig& config() const { return net_.config(); }

  nn::FeatureMap<Scalar> forward(const nn::FeatureMap<Scalar>& input, const ForwardOptions& opt = {}) {
    output_ = net_.forward(input, opt);
    output_.values = output_.values.array().tanh();
    return output_;
  }

  /// Gradient w.r.t. the 4-channel input.
  nn::FeatureMap<Scalar> backward(const nn::FeatureMap<Scalar>& d_out) {
    nn::FeatureMap<Scalar> g{d_out.values.array() * (Scalar(1) - output_.values.array().square()), d_out.extent};
    return net_.backward(g);
  }

  std::vector<nn::Parameter<Scalar>*> parameters() { return net_.parameters(); }
  std::vector<nn::NamedTensor<Scalar>> buffers() { return net_.buffers(); }
  std::vector<BlockInfo> describe() const { return net_.describe(); }
  nn::UNet<Scalar>& net() { return net_; }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

 private:
  Generator(UNetConfig cfg, Rng rng) : net_(cfg, rng) {}

  nn::UNet<Scalar> net_;
  nn::FeatureMap<Scalar> output_;
};

/// Critic readout: a global score per sample (from the bottleneck) and a
/// per-pixel score map (from the decoder head). Both unbounded.
template <class Scalar>
struct CriticOutput {
  nn::RowVector<Scalar> global;
  nn::FeatureMap<Scalar> map;

  /// Per-sample critic value: the average of the global score and the mean of the map.
  nn::RowVector<Scalar> combined() const {
    const int n = map.extent.batch;
    const int hw = map.extent.pixels_per_sample();
    nn::RowVector<Scalar> c(n);
    for (int s = 0; s < n; ++s) c[s] = Scalar(0.5) * (global[s] + map.values.block(0, s * hw, 1, hw).mean());
    return c;
  }
  Scalar mean_combined() const { return combined().mean(); }
};

/// U-Net critic with the generator's depth and channel schedule.
template <class Scalar>
class Discriminator {
 public:
  Discriminator(UNetConfig cfg, std::uint64_t seed) : Discriminator(cfg, Rng(seed)) {}

  const UNetConfig& config() const { return net_.config(); }

  CriticOutput<Scalar> forward(const nn::FeatureMap<Scalar>& input, const ForwardOptions& opt = {}) {
    CriticOutput<Scalar> out;
    out.map = net_.forward(input, opt);
    const auto& b = net_.bottleneck();
    const Scalar slope = Scalar(net_.config().leaky_slope);
    const int hw = b.extent.pixels_per_sample();
    activated_ = nn::leaky_relu(b.values, slope);
    pooled_.resize(b.values.rows(), b.extent.batch);
    for (int s = 0; s < b.extent.batch; ++s) pooled_.col(s) = activated_.middleCols(s * hw, hw).rowwise().mean();
    out.global = (global_w_.value * pooled_).row(0);
    out.global.array() += global_b_.value(0, 0);
    map_extent_ = out.map.extent;
    return out;
  }

  /// Backpropagates d(sum_s w_s * combined_s) given per-sample weights w.
  /// Returns the gradient w.r.t. the 7-channel input.
  nn::FeatureMap<Scalar> backward(const nn::RowVector<Scalar>& d_combined) {
    const int n = map_extent_.batch;
    const int hw = map_extent_.pixels_per_sample();
    const nn::RowVector<Scalar> d_global = Scalar(0.5) * d_combined;
    nn::FeatureMap<Scalar> d_map(1, map_extent_);
    for (int s = 0; s < n; ++s) d_map.values.block(0, s * hw, 1, hw).setConstant(d_global[s] / Scalar(hw));

    global_w_.grad.noalias() += d_global * pooled_.transpose();
    global_b_.grad(0, 0) += d_global.sum();
    const nn::Matrix<Scalar> d_pooled = global_w_.value.transpose() * d_global;
    const auto& b = net_.bottleneck();
    const int bhw = b.extent.pixels_per_sample();
    nn::Matrix<Scalar> d_act(b.values.rows(), b.values.cols());
    for (int s = 0; s < n; ++s)
      d_act.middleCols(s * bhw, bhw).colwise() = d_pooled.col(s) / Scalar(bhw);
    const nn::Matrix<Scalar> d_b =
        nn::leaky_relu_backward(d_act, b.values, Scalar(net_.config().leaky_slope));
    return net_.backward(d_map, &d_b);
  }

  std::vector<nn::Parameter<Scalar>*> parameters() {
    auto out = net_.parameters();
    out.push_back(&global_w_);
    out.push_back(&global_b_);
    return out;
  }
  std::vector<nn::NamedTensor<Scalar>> buffers() { return net_.buffers(); }
  std::vector<BlockInfo> describe() const { return net_.describe(); }
  nn::UNet<Scalar>& net() { return net_; }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

 private:
  Discriminator(UNetConfig cfg, Rng rng)
      : net_(cfg, rng),
        global_w_("global.weight",
                  nn::gaussian<Scalar>(1, cfg.encoder_channels(cfg.levels() - 1), 0.0, 0.02, rng)),
        global_b_("global.bias", nn::Matrix<Scalar>::Zero(1, 1)) {}

  nn::UNet<Scalar> net_;
  nn::Parameter<Scalar> global_w_;
  nn::Parameter<Scalar> global_b_;
  nn::Matrix<Scalar> activated_;
  nn::Matrix<Scalar> pooled_;
  nn::Extent map_extent_;
};

/// Generator config for a given edge size: depth 16 at 256 px, two fewer
/// layers per halving of the edge, 4 -> 3 channels.
UNetConfig generator_config(int image_size, int base_channels = 64);

/// The critic mirrors the generator; only the heads differ (7 -> 1 channels).
UNetConfig discriminator_config(const UNetConfig& generator);

inline constexpr int kCriticInputChannels = 7;

/// Clamps every learnable critic parameter into [-c, c].
template <class Scalar>
void clip_weights(Discriminator<Scalar>& d, double c) {
  if (!(c > 0)) throw Error(ErrorKind::Config, "clip bound must be positive");
  const Scalar bound = Scalar(c);
  for (auto* p : d.parameters()) p->value = p->value.cwiseMax(-bound).cwiseMin(bound);
}

template <class Scalar>
Scalar max_abs_parameter(Discriminator<Scalar>& d) {
  Scalar m = 0;
  for (auto* p : d.parameters()) m = std::max(m, p->value.cwiseAbs().maxCoeff());
  return m;
}

}  // namespace normgen
