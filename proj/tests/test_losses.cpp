#include <doctest.h>

#include <cmath>

#include "normgen/losses.hpp"
#include "support.hpp"

using namespace normgen;
using nn::Extent;
using nn::FeatureMap;

namespace {

// Scalar-loop references, written against the (channel, n, y, x) indexing only.
double l1_reference(const FeatureMap<double>& y, const FeatureMap<double>& g) {
  const Extent e = y.extent;
  double sum = 0;
  for (int n = 0; n < e.batch; ++n)
    for (int r = 0; r < e.height; ++r)
      for (int c = 0; c < e.width; ++c)
        for (int ch = 0; ch < y.channels(); ++ch)
          sum += std::abs(y.values(ch, e.column(n, r, c)) - g.values(ch, e.column(n, r, c)));
  return sum / (e.batch * e.height * e.width);
}

double mask_reference(const FeatureMap<double>& y, const FeatureMap<double>& g, const FeatureMap<double>& m) {
  const Extent e = y.extent;
  double sum = 0, pop = 0;
  for (int n = 0; n < e.batch; ++n)
    for (int r = 0; r < e.height; ++r)
      for (int c = 0; c < e.width; ++c) {
        const int col = e.column(n, r, c);
        if (m.values(0, col) == 0) continue;
        pop += 1;
        for (int ch = 0; ch < y.channels(); ++ch) sum += std::abs(y.values(ch, col) - g.values(ch, col));
      }
  return pop == 0 ? 0.0 : sum / pop;
}

FeatureMap<double> away_from_kinks(const FeatureMap<double>& y, FeatureMap<double> g) {
  for (Eigen::Index i = 0; i < g.values.size(); ++i) {
    double& v = g.values.data()[i];
    const double d = v - y.values.data()[i];
    if (std::abs(d) < 0.05) v = y.values.data()[i] + (d < 0 ? -0.05 : 0.05);
  }
  return g;
}

template <class F>
nn::Matrix<double> numeric_grad(F f, FeatureMap<double> x, double h = 1e-6) {
  nn::Matrix<double> g(x.values.rows(), x.values.cols());
  for (Eigen::Index i = 0; i < x.values.size(); ++i) {
    const double keep = x.values.data()[i];
    x.values.data()[i] = keep + h;
    const double up = f(x);
    x.values.data()[i] = keep - h;
    const double down = f(x);
    x.values.data()[i] = keep;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

double rel_err(const nn::Matrix<double>& a, const nn::Matrix<double>& b) {
  return (a - b).norm() / std::max(1e-12, std::max(a.norm(), b.norm()));
}

FeatureMap<double> flip(const FeatureMap<double>& m) {
  FeatureMap<double> out(m.channels(), m.extent);
  const Extent e = m.extent;
  for (int n = 0; n < e.batch; ++n)
    for (int r = 0; r < e.height; ++r)
      for (int c = 0; c < e.width; ++c) out.values.col(e.column(n, r, c)) = m.values.col(e.column(n, r, e.width - 1 - c));
  return out;
}

UNetConfig toy_critic_config(bool linear) {
  UNetConfig c;
  c.depth = 2;
  c.base_channels = 2;
  c.in_channels = kCriticInputChannels;
  c.out_channels = 1;
  c.batch_norm = !linear;
  if (linear) c.leaky_slope = 1.0;
  return c;
}

}  // namespace

TEST_CASE("l1 loss examples") {
  std::mt19937 gen(1);
  const Extent e{2, 5, 3};
  const auto y = testing::random_map<double>(3, e, gen);
  CHECK(l1_loss(y, y) == 0.0);
  FeatureMap<double> ones(nn::Matrix<double>::Ones(3, e.pixels()), e);
  CHECK(l1_loss(ones, FeatureMap<double>(3, e)) == doctest::Approx(3.0));
  for (int t = 0; t < 20; ++t) {
    const auto a = testing::random_map<double>(3, {1, 8, 8}, gen);
    const auto b = testing::random_map<double>(3, {1, 8, 8}, gen);
    CHECK(std::abs(l1_loss(a, b) - l1_reference(a, b)) < 1e-12);
  }
  CHECK_THROWS_AS(l1_loss(y, testing::random_map<double>(3, {2, 5, 4}, gen)), Error);
}

TEST_CASE("mask loss examples") {
  const Extent e{1, 2, 2};
  FeatureMap<double> y(nn::Matrix<double>::Ones(3, 4), e);
  FeatureMap<double> g(3, e);
  FeatureMap<double> m(1, e);
  m.values << 1, 0, 0, 1;
  CHECK(mask_loss(y, g, m) == doctest::Approx(3.0));
  CHECK(mask_loss(y, g, FeatureMap<double>(1, e)) == 0.0);

  // off-mask pixels don't matter at all
  std::mt19937 gen(3);
  const auto a = testing::random_map<double>(3, {2, 6, 6}, gen);
  const auto mask = testing::random_mask<double>(a.extent, gen);
  auto b = a;
  for (Eigen::Index col = 0; col < b.values.cols(); ++col)
    if (mask.values(0, col) == 0) b.values.col(col).setRandom();
  CHECK(mask_loss(a, b, mask) == 0.0);
  auto c = testing::random_map<double>(3, a.extent, gen);
  const double before = mask_loss(a, c, mask);
  for (Eigen::Index col = 0; col < c.values.cols(); ++col)
    if (mask.values(0, col) == 0) c.values.col(col) *= -3.0;
  CHECK(mask_loss(a, c, mask) == before);
  CHECK_THROWS_AS(mask_loss(a, c, FeatureMap<double>(1, {2, 6, 5})), Error);
}

TEST_CASE("losses are non-negative and positively homogeneous") {
  std::mt19937 gen(9);
  for (int t = 0; t < 10; ++t) {
    const auto y = testing::random_map<double>(3, {2, 4, 4}, gen);
    const auto g = testing::random_map<double>(3, y.extent, gen);
    const auto m = testing::random_mask<double>(y.extent, gen, 0.5);
    const double alpha = std::uniform_real_distribution<double>(0, 4)(gen);
    FeatureMap<double> ys{alpha * y.values, y.extent}, gs{alpha * g.values, y.extent};
    CHECK(l1_loss(y, g) >= 0);
    CHECK(mask_loss(y, g, m) >= 0);
    CHECK(l1_loss(ys, gs) == doctest::Approx(alpha * l1_loss(y, g)).epsilon(1e-12));
    CHECK(mask_loss(ys, gs, m) == doctest::Approx(alpha * mask_loss(y, g, m)).epsilon(1e-12));
  }
}

TEST_CASE("composite_hints is a projection") {
  std::mt19937 gen(4);
  const Extent e{2, 4, 6};
  const auto a = testing::random_map<double>(3, e, gen);
  const auto b = testing::random_map<double>(3, e, gen);
  const auto m = testing::random_mask<double>(e, gen);
  FeatureMap<double> full(nn::Matrix<double>::Ones(1, e.pixels()), e);
  CHECK(composite_hints(a, b, full).values == b.values);
  CHECK(composite_hints(a, b, FeatureMap<double>(1, e)).values == a.values);
  const auto once = composite_hints(a, b, m);
  CHECK(composite_hints(once, b, m).values == once.values);
  CHECK(flip(composite_hints(a, b, m)).values == composite_hints(flip(a), flip(b), flip(m)).values);
}

TEST_CASE("toy linear critic gives the hand-computed gap") {
  // depth 2 on 2x2 images: the conv sees every input pixel through exactly one
  // tap and the transposed conv writes each output pixel from exactly one tap,
  // so with constant weights each of the C bottleneck channels holds
  // h = a * sum(x) + b1, map = C beta h + b2, global = C wg h + bg.
  Discriminator<double> d(toy_critic_config(true), 1);
  const double a = 0.3, b1 = 0.1, beta = -0.7, b2 = 0.05, wg = 1.5, bg = -0.2;
  for (auto* p : d.parameters()) {
    if (p->name == "enc1.conv.weight") p->value.setConstant(a);
    if (p->name == "enc1.conv.bias") p->value.setConstant(b1);
    if (p->name == "dec1.convt.weight") p->value.setConstant(beta);
    if (p->name == "dec1.convt.bias") p->value.setConstant(b2);
    if (p->name == "global.weight") p->value.setConstant(wg);
    if (p->name == "global.bias") p->value.setConstant(bg);
  }
  std::mt19937 gen(2);
  const Extent e{3, 2, 2};
  const auto cond = testing::random_map<double>(4, e, gen);
  const auto y = testing::random_map<double>(3, e, gen);
  const auto g = testing::random_map<double>(3, e, gen);
  const FeatureMap<double> none(1, e);

  auto score = [&](const FeatureMap<double>& normals, int n) {
    double s = 0;
    for (int col = n * 4; col < n * 4 + 4; ++col) s += cond.values.col(col).sum() + normals.values.col(col).sum();
    const double h = a * s + b1;
    const double C = toy_critic_config(true).base_channels;
    return 0.5 * ((C * wg * h + bg) + (C * beta * h + b2));
  };
  double real = 0, fake = 0;
  for (int n = 0; n < 3; ++n) {
    real += score(y, n) / 3;
    fake += score(g, n) / 3;
  }
  CHECK(critic_loss(d, cond, y, g, none) == doctest::Approx(-(real - fake)).epsilon(1e-12));
  CHECK(critic_loss(d, cond, y, y, none) == 0.0);
}

TEST_CASE("generator loss composes its parts") {
  std::mt19937 gen(7);
  Discriminator<double> d(toy_critic_config(false), 3);
  const Extent e{2, 2, 2};
  for (int t = 0; t < 10; ++t) {
    const auto cond = testing::random_map<double>(4, e, gen);
    const auto y = testing::random_map<double>(3, e, gen);
    const auto g = testing::random_map<double>(3, e, gen);
    const auto m = testing::random_mask<double>(e, gen, 0.5);
    const LossWeights w{std::uniform_real_distribution<double>(0, 200)(gen),
                        std::uniform_real_distribution<double>(0, 200)(gen), CompositeScope::CriticOnly};
    const auto out = generator_loss(d, cond, y, g, m, w);
    const double adv = -d.forward(critic_input(cond, composite_hints(g, y, m)), {true}).mean_combined();
    const double expect = adv + w.lambda_l1 * l1_reference(y, g) + w.lambda_mask * mask_reference(y, g, m);
    CHECK(std::abs(out.total - expect) < 1e-6);

    LossWeights everywhere = w;
    everywhere.composite_scope = CompositeScope::Everywhere;
    const auto yt = composite_hints(g, y, m);
    const auto ev = generator_loss(d, cond, y, g, m, everywhere);
    CHECK(std::abs(ev.total - (adv + w.lambda_l1 * l1_reference(y, yt))) < 1e-6);
    CHECK(ev.mask == 0.0);

    // identity case: the regularisers vanish
    const auto same = generator_loss(d, cond, y, y, m, w);
    CHECK(same.total == doctest::Approx(-d.forward(critic_input(cond, y), {true}).mean_combined()));
  }
  for (auto* p : d.parameters()) p->value.setZero();
  const auto z = generator_loss(d, FeatureMap<double>(4, e), testing::random_map<double>(3, e, gen),
                                testing::random_map<double>(3, e, gen), FeatureMap<double>(1, e), {0, 0});
  CHECK(z.total == 0.0);
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937 gen(21);
  const Extent e{1, 2, 2};
  for (int t = 0; t < 5; ++t) {
    const auto y = testing::random_map<double>(3, e, gen);
    const auto g = away_from_kinks(y, testing::random_map<double>(3, e, gen));
    auto m = testing::random_mask<double>(e, gen, 0.5);
    m.values(0, 0) = 1;

    CHECK(rel_err(l1_loss_grad(y, g).values, numeric_grad([&](const auto& x) { return l1_loss(y, x); }, g)) < 1e-4);
    CHECK(rel_err(mask_loss_grad(y, g, m).values,
                  numeric_grad([&](const auto& x) { return mask_loss(y, x, m); }, g)) < 1e-4);

    Discriminator<double> d(toy_critic_config(false), 10 + t);
    const auto cond = testing::random_map<double>(4, e, gen);
    for (CompositeScope scope : {CompositeScope::CriticOnly, CompositeScope::Everywhere}) {
      const LossWeights w{100, 100, scope};
      const auto analytic = generator_loss(d, cond, y, g, m, w, true).grad.values;
      const auto numeric =
          numeric_grad([&](const auto& x) { return generator_loss(d, cond, y, x, m, w).total; }, g);
      CHECK(rel_err(analytic, numeric) < 1e-4);
    }
  }
}

TEST_CASE("critic accumulation matches finite differences") {
  std::mt19937 gen(5);
  Discriminator<double> d(toy_critic_config(false), 2);
  const Extent e{2, 2, 2};
  const auto cond = testing::random_map<double>(4, e, gen);
  const auto y = testing::random_map<double>(3, e, gen);
  const auto g = testing::random_map<double>(3, e, gen);
  const auto m = testing::random_mask<double>(e, gen);
  d.zero_grad();
  critic_loss(d, cond, y, g, m, true);
  for (auto* p : d.parameters()) {
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(p->value.size(), 6); ++i) {
      const double keep = p->value.data()[i];
      p->value.data()[i] = keep + 1e-6;
      const double up = critic_loss(d, cond, y, g, m);
      p->value.data()[i] = keep - 1e-6;
      const double down = critic_loss(d, cond, y, g, m);
      p->value.data()[i] = keep;
      CHECK_MESSAGE(p->grad.data()[i] == doctest::Approx((up - down) / 2e-6).epsilon(1e-5).scale(1e-4), p->name);
    }
  }
}

TEST_CASE("scope names") {
  CHECK(parse_composite_scope("critic_only") == CompositeScope::CriticOnly);
  CHECK(parse_composite_scope("everywhere") == CompositeScope::Everywhere);
  CHECK_THROWS_AS(parse_composite_scope("sometimes"), Error);
  CHECK(std::string(to_string(CompositeScope::Everywhere)) == "everywhere");
}
