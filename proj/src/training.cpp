#include "normgen/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "normgen/checkpoint.hpp"

namespace normgen {
namespace fs = std::filesystem;

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::Config, "train config: " + why); };
  if (!(c.lambda_l1 >= 0) || !(c.lambda_mask >= 0)) fail("lambdas must be >= 0");
  if (!(c.learning_rate >= 0)) fail("learning_rate must be >= 0");
  if (!(c.clip_c > 0)) fail("clip_c must be > 0");
  if (c.critic_steps_per_gen < 1) fail("critic_steps_per_gen must be >= 1");
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (c.max_iterations < 0) fail("max_iterations must be >= 0");
  if (c.checkpoint_every < 0) fail("checkpoint_every must be >= 0");
}

BatchSampler::BatchSampler(std::vector<std::string> ids, std::uint64_t seed)
    : ids_(std::move(ids)), rng_(seed) {
  if (ids_.empty()) throw Error(ErrorKind::EmptyInput, "no training pairs to sample from");
  reshuffle();
}

void BatchSampler::reshuffle() {
  order_.resize(ids_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
  pos_ = 0;
}

std::vector<std::string> BatchSampler::next(int batch_size) {
  std::vector<std::string> out;
  out.reserve(batch_size);
  while (static_cast<int>(out.size()) < batch_size) {
    if (pos_ == order_.size()) reshuffle();
    out.push_back(ids_[order_[pos_++]]);
  }
  return out;
}

bool BatchSampler::coin() { return (rng_.next_u64() >> 63) != 0; }

void BatchSampler::restore(std::vector<std::size_t> order, std::size_t pos, const std::string& rng_state) {
  if (order.size() != ids_.size() || pos > order.size()) {
    throw Error(ErrorKind::Config, "sampler state does not match the training split");
  }
  order_ = std::move(order);
  pos_ = pos;
  rng_.set_state(rng_state);
}

TrainState::TrainState(const UNetConfig& generator_cfg, const TrainConfig& cfg, std::vector<std::string> train_ids)
    : config(cfg),
      generator(generator_cfg, derive_seed(cfg.seed, 1)),
      critic(discriminator_config(generator_cfg), derive_seed(cfg.seed, 2)),
      sampler(std::move(train_ids), derive_seed(cfg.seed, 3)),
      noise_rng(derive_seed(cfg.seed, 4)) {
  validate(cfg);
}

std::vector<PairImages> load_training_pairs(const DatasetManifest& manifest) {
  std::vector<PairImages> pool;
  for (const auto& id : manifest.ids(Split::Train)) pool.push_back(load_pair(manifest, id));
  if (pool.empty()) throw Error(ErrorKind::EmptyInput, "manifest has no training pairs");
  return pool;
}

namespace {

Batch<Real> draw_batch(TrainState& s, const std::vector<PairImages>& pool) {
  const auto ids = s.sampler.next(s.config.batch_size);
  std::vector<PairImages> pairs;
  pairs.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = std::find_if(pool.begin(), pool.end(), [&](const PairImages& p) { return p.id == id; });
    if (it == pool.end()) throw Error(ErrorKind::Io, "pair " + id + " is not loaded");
    const bool flip = s.config.augment && s.sampler.coin();
    pairs.push_back(flip ? flip_horizontal(*it) : *it);
  }
  return assemble_batch<Real>(pairs);
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : ",") + id;
  return out;
}

void check_finite(double v, const char* what, int iteration, const std::vector<std::string>& ids) {
  if (std::isfinite(v)) return;
  throw Error(ErrorKind::NonFinite, std::string("non-finite ") + what + " loss at iteration " +
                                        std::to_string(iteration) + " on batch [" + join_ids(ids) + "]");
}

}  // namespace

LossRecord train_iteration(TrainState& s, const std::vector<PairImages>& pool) {
  const TrainConfig& cfg = s.config;
  const ForwardOptions fwd{true, cfg.noise_mode, &s.noise_rng};
  const int iteration = s.iteration + 1;
  LossRecord rec;

  for (int k = 0; k < cfg.critic_steps_per_gen; ++k) {
    const Batch<Real> batch = draw_batch(s, pool);
    const auto y_gen = s.generator.forward(batch.input, fwd);
    s.critic.zero_grad();
    const Real loss = critic_loss(s.critic, batch.input, batch.target, y_gen, batch.hints, true, fwd);
    check_finite(loss, "critic", iteration, batch.ids);
    s.critic_opt.step(s.critic.parameters(), cfg.learning_rate);
    clip_weights(s.critic, cfg.clip_c);
    rec.critic += loss;
  }
  rec.critic /= cfg.critic_steps_per_gen;

  const Batch<Real> batch = draw_batch(s, pool);
  s.generator.zero_grad();
  const auto y_gen = s.generator.forward(batch.input, fwd);
  auto g = generator_loss(s.critic, batch.input, batch.target, y_gen, batch.hints, cfg.weights(), true, fwd);
  check_finite(g.total, "generator", iteration, batch.ids);
  s.generator.backward(g.grad);
  s.generator_opt.step(s.generator.parameters(), cfg.learning_rate);
  s.critic.zero_grad();

  rec.adv = g.adversarial;
  rec.l1 = g.l1;
  rec.mask = g.mask;
  s.history.push_back(rec);
  s.iteration = iteration;
  return rec;
}

std::string format_loss_row(int iteration, const LossRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g", iteration, r.critic, r.adv, r.l1, r.mask);
  return buf;
}

namespace {

void write_loss_csv(const fs::path& path, const std::vector<LossRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << kLossCsvHeader << '\n';
  for (std::size_t i = 0; i < history.size(); ++i) out << format_loss_row(static_cast<int>(i + 1), history[i]) << '\n';
}

void run_loop(TrainState& s, const DatasetManifest& manifest, const RunOptions& run) {
  const auto pool = load_training_pairs(manifest);
  std::ofstream csv;
  if (run.run_dir) {
    std::error_code ec;
    fs::create_directories(*run.run_dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create run directory " + run.run_dir->string());
    // Rewritten from the state so a resumed run continues the same file.
    write_loss_csv(*run.run_dir / "losses.csv", s.history);
    csv.open(*run.run_dir / "losses.csv", std::ios::app);
  }
  while (s.iteration < s.config.max_iterations) {
    LossRecord rec;
    try {
      rec = train_iteration(s, pool);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NonFinite && run.run_dir) {
        std::ofstream snap(*run.run_dir / ("nonfinite_" + std::to_string(s.iteration + 1) + ".txt"));
        snap << e.what() << '\n';
      }
      throw;
    }
    if (csv.is_open()) csv << format_loss_row(s.iteration, rec) << '\n' << std::flush;
    if (!run.quiet && (s.iteration % 50 == 0 || s.iteration == 1)) {
      std::cerr << "iter " << format_loss_row(s.iteration, rec) << '\n';
    }
    const bool periodic = s.config.checkpoint_every > 0 && s.iteration % s.config.checkpoint_every == 0;
    if (run.run_dir && periodic) save_checkpoint(checkpoint_path(*run.run_dir, s.iteration), s);
  }
  if (run.run_dir) {
    const fs::path last = checkpoint_path(*run.run_dir, s.iteration);
    if (!fs::exists(last)) save_checkpoint(last, s);
  }
}

}  // namespace

TrainState train(const DatasetManifest& manifest, const UNetConfig& generator_cfg, const TrainConfig& cfg,
                 const RunOptions& run) {
  TrainState state(generator_cfg, cfg, manifest.ids(Split::Train));
  run_loop(state, manifest, run);
  return state;
}

void continue_training(TrainState& state, const DatasetManifest& manifest, const RunOptions& run) {
  run_loop(state, manifest, run);
}

std::vector<Image> infer_pairs(Generator<Real>& generator, const std::vector<PairImages>& pairs, bool use_masks) {
  std::vector<Image> out;
  for (const auto& pair : pairs) {
    out.push_back(infer_normals(generator, pair.sketch, use_masks ? &pair.mask : nullptr));
  }
  return out;
}

Image infer_normals(Generator<Real>& generator, const Image& sketch, const Image* mask) {
  if (sketch.channels != 1) throw Error(ErrorKind::MalformedImage, "sketch must be a grayscale image");
  if (mask && (mask->channels != 1 || mask->width != sketch.width || mask->height != sketch.height)) {
    throw Error(ErrorKind::MalformedImage, "hint mask must be grayscale and match the sketch size");
  }
  const nn::Extent e{1, sketch.height, sketch.width};
  nn::FeatureMap<Real> input(kInputChannels, e);
  write_sketch_channels(sketch, input, 0);
  if (mask) {
    for (int y = 0; y < e.height; ++y)
      for (int x = 0; x < e.width; ++x) input.values(kSketchChannels, e.column(0, y, x)) = mask->at(x, y) >= 128;
  }
  const auto out = generator.forward(input, ForwardOptions{false, NoiseMode::Off, nullptr});
  Image image(e.width, e.height, 3);
  for (int y = 0; y < e.height; ++y)
    for (int x = 0; x < e.width; ++x)
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = encode_component(out.values(c, e.column(0, y, x)));
  return image;
}

}  // namespace normgen
