#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "normgen/dataset.hpp"
#include "normgen/losses.hpp"
#include "normgen/model.hpp"
#include "normgen/rng.hpp"

namespace normgen {

struct TrainConfig {
  double lambda_l1 = 100.0;
  double lambda_mask = 100.0;
  double learning_rate = 5e-5;
  double clip_c = 0.01;
  int critic_steps_per_gen = 5;
  int batch_size = 4;
  int max_iterations = 2000;
  std::uint64_t seed = 0;
  NoiseMode noise_mode = NoiseMode::Off;
  CompositeScope composite_scope = CompositeScope::CriticOnly;
  int checkpoint_every = 500;  ///< 0 = only the final checkpoint
  bool augment = false;        ///< random horizontal flips

  LossWeights weights() const { return {lambda_l1, lambda_mask, composite_scope}; }
};

void validate(const TrainConfig& cfg);

/// One row of losses.csv.
struct LossRecord {
  double critic = 0;  ///< mean critic loss over the iteration's critic steps
  double adv = 0;     ///< generator adversarial term
  double l1 = 0;
  double mask = 0;

  bool operator==(const LossRecord&) const = default;
};

/// RMSProp without momentum: v <- a v + (1 - a) g^2,  p <- p - lr g / (sqrt(v) + eps).
template <class Scalar>
class RmsProp {
 public:
  static constexpr double kDecay = 0.99;
  static constexpr double kEpsilon = 1e-8;

  /// Allocates zeroed accumulators on first use.
  void init(const std::vector<nn::Parameter<Scalar>*>& params) {
    if (!square_avg_.empty()) return;
    for (auto* p : params) square_avg_.push_back(nn::Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
  }

  void step(const std::vector<nn::Parameter<Scalar>*>& params, double learning_rate) {
    init(params);
    const Scalar a = Scalar(kDecay);
    const Scalar lr = Scalar(learning_rate);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& v = square_avg_[i];
      const auto& g = params[i]->grad;
      v = a * v + (Scalar(1) - a) * g.cwiseAbs2();
      params[i]->value.array() -= lr * g.array() / (v.array().sqrt() + Scalar(kEpsilon));
    }
  }

  std::vector<nn::Matrix<Scalar>>& accumulators() { return square_avg_; }

 private:
  std::vector<nn::Matrix<Scalar>> square_avg_;
};

/// Epoch-wise shuffled stream of pair ids.
class BatchSampler {
 public:
  BatchSampler() = default;
  BatchSampler(std::vector<std::string> ids, std::uint64_t seed);

  std::vector<std::string> next(int batch_size);
  bool coin();  ///< fair coin from the same stream

  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<std::size_t>& order() const { return order_; }
  std::size_t position() const { return pos_; }
  const Rng& rng() const { return rng_; }
  void restore(std::vector<std::size_t> order, std::size_t pos, const std::string& rng_state);

 private:
  void reshuffle();

  std::vector<std::string> ids_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  Rng rng_;
};

using Real = float;

/// Everything needed to continue a run bit-for-bit.
struct TrainState {
  int iteration = 0;
  TrainConfig config;
  Generator<Real> generator;
  Discriminator<Real> critic;
  RmsProp<Real> generator_opt;
  RmsProp<Real> critic_opt;
  std::vector<LossRecord> history;
  BatchSampler sampler;
  Rng noise_rng;

  TrainState(const UNetConfig& generator_cfg, const TrainConfig& cfg, std::vector<std::string> train_ids);
};

/// Loads the training split into memory once.
std::vector<PairImages> load_training_pairs(const DatasetManifest& manifest);

/// Runs critic_steps_per_gen critic updates (each clipped) and one generator update.
LossRecord train_iteration(TrainState& state, const std::vector<PairImages>& pool);

struct RunOptions {
  std::optional<std::filesystem::path> run_dir;  ///< losses.csv + checkpoints; none = in-memory only
  bool quiet = true;
};

/// Fresh run up to cfg.max_iterations.
TrainState train(const DatasetManifest& manifest, const UNetConfig& generator_cfg, const TrainConfig& cfg,
                 const RunOptions& run = {});

/// Continues `state` until it reaches state.config.max_iterations.
void continue_training(TrainState& state, const DatasetManifest& manifest, const RunOptions& run = {});

/// Inference on one sketch (+ optional hint mask) with running batch-norm statistics
/// and no noise. Returns a 3-channel normal map PNG raster.
Image infer_normals(Generator<Real>& generator, const Image& sketch, const Image* mask);

/// Batched eval-mode inference over the given pairs; one image per pair.
std::vector<Image> infer_pairs(Generator<Real>& generator, const std::vector<PairImages>& pairs,
                               bool use_masks = true);

std::string format_loss_row(int iteration, const LossRecord& r);
inline constexpr const char* kLossCsvHeader = "iter,critic,adv,l1,mask";

}  // namespace normgen
