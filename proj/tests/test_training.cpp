#include <doctest.h>

#include <fstream>
#include <sstream>

#include "normgen/checkpoint.hpp"
#include "normgen/evaluation.hpp"
#include "normgen/training.hpp"
#include "support.hpp"

using namespace normgen;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig quick(int iterations) {
  TrainConfig cfg;
  cfg.max_iterations = iterations;
  cfg.batch_size = 2;
  cfg.critic_steps_per_gen = 2;
  cfg.checkpoint_every = 0;
  cfg.seed = 17;
  return cfg;
}

DatasetManifest small_dataset(const fs::path& dir, int pairs) {
  DatasetOptions opt;
  opt.seed = 2;
  return build_dataset(random_specs(pairs, 64, 4, {ShapeKind::Sphere, ShapeKind::Torus}), dir, opt);
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.critic_steps_per_gen = 0;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = {};
  cfg.lambda_l1 = -1;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = {};
  cfg.learning_rate = -1e-3;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = {};
  cfg.clip_c = 0;
  CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("rmsprop step") {
  nn::Parameter<double> p("w", nn::Matrix<double>::Constant(1, 2, 1.0));
  p.grad << 2.0, -0.5;
  RmsProp<double> opt;
  opt.step({&p}, 0.1);
  // v = 0.01 g^2, step = lr g / (sqrt(v) + eps) = lr * sign(g) / 0.1
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 1.0).epsilon(1e-6));
  CHECK(p.value(0, 1) == doctest::Approx(1.0 + 1.0).epsilon(1e-6));
  CHECK(opt.accumulators()[0](0, 0) == doctest::Approx(0.04));
}

TEST_CASE("one iteration on one pair") {
  testing::TempDir dir("one");
  const DatasetManifest m = small_dataset(dir / "ds", 1);
  TrainConfig cfg = quick(1);
  cfg.batch_size = 4;
  const TrainState s = train(m, generator_config(64, 4), cfg, {dir / "run"});
  CHECK(s.iteration == 1);
  CHECK(s.history.size() == 1);
  CHECK(fs::exists(dir / "run" / "ckpt_1"));
  std::ifstream csv(dir / "run" / "losses.csv");
  std::string header, row, extra;
  std::getline(csv, header);
  std::getline(csv, row);
  CHECK(header == kLossCsvHeader);
  CHECK(row.rfind("1,", 0) == 0);
  CHECK_FALSE(std::getline(csv, extra));
}

TEST_CASE("critic stays clipped through training") {
  testing::TempDir dir("clip");
  const DatasetManifest m = small_dataset(dir.path(), 3);
  const auto pool = load_training_pairs(m);
  TrainState s(generator_config(64, 4), quick(3), m.ids(Split::Train));
  for (int i = 0; i < 3; ++i) {
    train_iteration(s, pool);
    CHECK(max_abs_parameter(s.critic) <= float(s.config.clip_c));
  }
  CHECK(s.history.size() == 3);
  CHECK(s.iteration == 3);
}

TEST_CASE("resume reproduces an uninterrupted run") {
  testing::TempDir dir("resume");
  const DatasetManifest m = small_dataset(dir / "ds", 4);
  TrainConfig cfg = quick(6);
  cfg.checkpoint_every = 3;
  cfg.augment = true;
  const TrainState full = train(m, generator_config(64, 4), cfg, {dir / "full"});

  TrainState resumed = load_checkpoint(dir / "full" / "ckpt_3");
  CHECK(resumed.iteration == 3);
  CHECK(resumed.history.size() == 3);
  continue_training(resumed, m, {dir / "resumed"});
  REQUIRE(resumed.history.size() == full.history.size());
  for (std::size_t i = 0; i < full.history.size(); ++i) CHECK(resumed.history[i] == full.history[i]);
  CHECK(slurp(dir / "full" / "losses.csv") == slurp(dir / "resumed" / "losses.csv"));
  CHECK(slurp(dir / "full" / "ckpt_6") == slurp(dir / "resumed" / "ckpt_6"));
}

TEST_CASE("same seed, same run") {
  testing::TempDir dir("same");
  const DatasetManifest m = small_dataset(dir / "ds", 3);
  const TrainState a = train(m, generator_config(64, 4), quick(3), {dir / "a"});
  const TrainState b = train(m, generator_config(64, 4), quick(3), {dir / "b"});
  CHECK(slurp(dir / "a" / "losses.csv") == slurp(dir / "b" / "losses.csv"));
  TrainConfig other = quick(3);
  other.seed = 18;
  const TrainState c = train(m, generator_config(64, 4), other);
  CHECK_FALSE(c.history == a.history);
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir("ckpt");
  const DatasetManifest m = small_dataset(dir / "ds", 2);
  TrainState s = train(m, generator_config(64, 4), quick(2));
  save_checkpoint(dir / "c", s);
  TrainState back = load_checkpoint(dir / "c");
  CHECK(back.iteration == 2);
  CHECK(back.config.seed == 17);
  CHECK(back.generator.config() == s.generator.config());
  auto pa = s.generator.parameters();
  auto pb = back.generator.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  auto ba = s.generator.buffers();
  auto bb = back.generator.buffers();
  for (std::size_t i = 0; i < ba.size(); ++i) CHECK(*ba[i].tensor == *bb[i].tensor);
  auto ca = s.critic.parameters();
  auto cb = back.critic.parameters();
  for (std::size_t i = 0; i < ca.size(); ++i) CHECK(ca[i]->value == cb[i]->value);

  Generator<Real> g = load_generator(dir / "c");
  const PairImages p = load_pair(m, m.entries[0].id);
  const Image out = infer_normals(g, p.sketch, &p.mask);
  CHECK(out.width == 64);
  CHECK(out.height == 64);
  CHECK(out.channels == 3);
  CHECK(out == infer_normals(s.generator, p.sketch, &p.mask));

  {
    std::ofstream bad(dir / "bad", std::ios::binary);
    bad << "NGCKPT00garbage";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad"), Error);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), Error);
}

TEST_CASE("non-finite loss aborts and names the batch") {
  testing::TempDir dir("nan");
  const DatasetManifest m = small_dataset(dir.path(), 2);
  const auto pool = load_training_pairs(m);
  TrainState s(generator_config(64, 4), quick(1), m.ids(Split::Train));
  for (auto* p : s.generator.parameters()) p->value.setConstant(std::numeric_limits<float>::quiet_NaN());
  try {
    train_iteration(s, pool);
    FAIL("expected a non-finite error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
    CHECK(std::string(e.what()).find("pair_") != std::string::npos);
  }
}

TEST_CASE("empty training split is rejected") {
  testing::TempDir dir("empty");
  DatasetManifest m = small_dataset(dir.path(), 2);
  for (auto& e : m.entries) e.split = Split::Validation;
  CHECK_THROWS_AS(train(m, generator_config(64, 4), quick(1)), Error);
}

TEST_CASE("loss row formatting") {
  CHECK(format_loss_row(3, {0.5, -0.25, 1.0, 0.0}) == "3,0.5,-0.25,1,0");
}
