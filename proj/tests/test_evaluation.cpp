#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

#include "normgen/evaluation.hpp"
#include "support.hpp"

using namespace normgen;
namespace fs = std::filesystem;

namespace {

NormalField<double> uniform(int w, int h, Eigen::Vector3d n) {
  NormalField<double> f(w, h);
  f.foreground.setConstant(true);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f.set(x, y, n);
  return f;
}

NormalField<double> random_unit_field(int w, int h, std::mt19937& gen) {
  std::normal_distribution<double> g;
  NormalField<double> f(w, h);
  f.foreground.setConstant(true);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f.set(x, y, Eigen::Vector3d(g(gen), g(gen), g(gen)).normalized());
  return f;
}

BinaryMask all(int w, int h) { return BinaryMask::Constant(h, w, true); }

}  // namespace

TEST_CASE("metric identities") {
  const auto up = uniform(4, 3, {0, 0, 1});
  const auto side = uniform(4, 3, {0, 1, 0});
  const auto down = uniform(4, 3, {0, 0, -1});
  CHECK(angular_error(up, up, all(4, 3)) == 0.0);
  CHECK(angular_error(up, side, all(4, 3)) == doctest::Approx(90.0));
  CHECK(angular_error(up, down, all(4, 3)) == doctest::Approx(180.0));
  CHECK(l1_metric(up, up, all(4, 3)) == 0.0);
  CHECK(l2_metric(up, up, all(4, 3)) == 0.0);

  const auto a = uniform(5, 5, {0.2, 0.1, 0.3});
  const auto b = uniform(5, 5, {1.2, 0.1, 0.3});
  CHECK(l1_metric(a, b, all(5, 5)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(l2_metric(a, b, all(5, 5)) == doctest::Approx(1.0).epsilon(1e-12));
  const auto c = uniform(5, 5, {-0.5, -0.5, -0.5});
  const auto d = uniform(5, 5, {0.5, 0.5, 0.5});
  CHECK(std::abs(l1_metric(c, d, all(5, 5)) - 3.0) < 1e-9);
  CHECK(std::abs(l2_metric(c, d, all(5, 5)) - std::sqrt(3.0)) < 1e-9);
}

TEST_CASE("metric errors") {
  const auto a = uniform(4, 4, {0, 0, 1});
  CHECK_THROWS_AS(angular_error(a, a, BinaryMask::Zero(4, 4)), Error);
  CHECK_THROWS_AS(l1_metric(a, uniform(4, 5, {0, 0, 1}), all(4, 4)), Error);
  try {
    l2_metric(a, a, BinaryMask::Zero(4, 4));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UndefinedMetric);
  }
}

TEST_CASE("metric properties on random fields") {
  std::mt19937 gen(3);
  for (int t = 0; t < 50; ++t) {
    const auto y = random_unit_field(6, 5, gen);
    const auto g = random_unit_field(6, 5, gen);
    const BinaryMask fg = all(6, 5);
    const double l1 = l1_metric(y, g, fg), l2 = l2_metric(y, g, fg);
    CHECK(l2 <= l1 + 1e-12);
    CHECK(l1 <= std::sqrt(3.0) * l2 + 1e-12);
    CHECK(l1_metric(g, y, fg) == doctest::Approx(l1));
    CHECK(l2_metric(g, y, fg) == doctest::Approx(l2));
    const double ang = angular_error(y, g, fg);
    CHECK(ang >= 0);
    CHECK(ang <= 180);
    CHECK(angular_error(g, y, fg) == doctest::Approx(ang));

    // a common rotation leaves the angle alone
    const Eigen::Matrix3d R =
        Eigen::AngleAxisd(0.1 * t + 0.3, Eigen::Vector3d(1, 2, 3 - t % 5).normalized()).toRotationMatrix();
    auto yr = y, gr = g;
    for (int yy = 0; yy < 5; ++yy)
      for (int xx = 0; xx < 6; ++xx) {
        yr.set(xx, yy, R * y.at(xx, yy));
        gr.set(xx, yy, R * g.at(xx, yy));
      }
    CHECK(std::abs(angular_error(yr, gr, fg) - ang) < 1e-6);
  }
}

TEST_CASE("sentinel pixels do not change the metrics") {
  std::mt19937 gen(5);
  const Image gy = encode_normals(random_unit_field(8, 8, gen));
  const Image gg = encode_normals(random_unit_field(8, 8, gen));
  REQUIRE(foreground_mask(gy).count() == 64);
  const MetricsRecord base = evaluate_pair("p", gy, gg);

  // pad both images with background rows that carry the sentinel
  auto pad = [](const Image& img) {
    Image out = img;
    out.height += 3;
    for (int i = 0; i < img.width * 3; ++i) out.data.insert(out.data.end(), {128, 128, 255});
    return out;
  };
  const MetricsRecord padded = evaluate_pair("p", pad(gy), pad(gg));
  CHECK(padded.foreground_pixels == 64);
  CHECK(padded.angular_deg == base.angular_deg);
  CHECK(padded.l1 == base.l1);
  CHECK(padded.l2 == base.l2);
}

TEST_CASE("foreground mask of a rendered sphere") {
  const double r = 24.0;
  const Image img = render_primitive(ShapeSpec::sphere(64, {32, 32, 32}, r));
  const BinaryMask fg = foreground_mask(img);
  CHECK(std::abs(fg.count() - std::numbers::pi * r * r) / (std::numbers::pi * r * r) < 0.02);
  CHECK((foreground_mask(encode_normals(decode_normals(img))) == fg).all());
  Image flat = img;
  for (std::size_t i = 0; i < flat.data.size(); i += 3) {
    flat.data[i] = 128;
    flat.data[i + 1] = 128;
    flat.data[i + 2] = 255;
  }
  CHECK_FALSE(foreground_mask(flat).any());
}

TEST_CASE("ramp is monotone and saturates") {
  auto intensity = [](std::array<std::uint8_t, 3> c) { return int(c[0]) + c[1] + c[2]; };
  CHECK(intensity(ramp_color(0)) == 0);
  CHECK(intensity(ramp_color(90)) == 765);
  CHECK(intensity(ramp_color(180)) == 765);
  int prev = -1;
  std::array<std::uint8_t, 3> prev_c{0, 0, 0};
  for (int k = 0; k <= 18000; ++k) {
    const auto c = ramp_color(k / 100.0);
    CHECK(intensity(c) >= prev);
    for (int ch = 0; ch < 3; ++ch) CHECK(c[ch] >= prev_c[ch]);
    prev = intensity(c);
    prev_c = c;
  }
}

TEST_CASE("error map examples") {
  const Image gt = render_primitive(ShapeSpec::sphere(64, {32, 32, 32}, 20));
  const BinaryMask fg = foreground_mask(gt);
  const Image same = error_map(gt, gt, fg);
  for (auto v : same.data) CHECK(v == 0);

  auto field = decode_normals(gt);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (fg(y, x)) field.set(x, y, -field.at(x, y));
  const Image anti = error_map(gt, encode_normals(field), fg);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const int sum = anti.at(x, y, 0) + anti.at(x, y, 1) + anti.at(x, y, 2);
      CHECK(sum == (fg(y, x) ? 765 : 0));
    }
}

TEST_CASE("evaluate_run scores methods on a shared pair set") {
  testing::TempDir dir("eval");
  DatasetOptions opt;
  opt.seed = 3;
  opt.validation_fraction = 0.5;
  const DatasetManifest m = build_dataset(random_specs(4, 64, 2), dir / "ds", opt);
  fs::create_directories(dir / "flat");
  for (const auto& id : m.ids()) {
    Image flat(64, 64, 3, 128);
    for (std::size_t i = 2; i < flat.data.size(); i += 3) flat.data[i] = 255;
    write_png(dir / "flat" / (id + ".png"), flat);
  }
  const EvalReport rep = evaluate_run(m, {{"truth", dir / "ds" / "normals"}, {"flat", dir / "flat"}});
  REQUIRE(rep.methods.size() == 2);
  CHECK(rep.methods[0].pairs.size() == 4);
  CHECK(rep.methods[0].mean.angular_deg == 0.0);
  CHECK(rep.methods[0].mean.l1 == 0.0);
  CHECK(rep.methods[0].mean.l2 == 0.0);
  CHECK(rep.methods[1].mean.angular_deg > 10.0);
  CHECK(fs::exists(dir / "flat" / (m.ids()[0] + "_error.png")));
  const std::string table = format_table(rep);
  CHECK(table.find("0.000°") != std::string::npos);
  CHECK(table.find("flat") != std::string::npos);

  write_report(rep, dir / "report");
  CHECK(fs::exists(dir / "report" / "report.tsv"));
  CHECK(fs::exists(dir / "report" / "per_pair.tsv"));
  CHECK(fs::exists(dir / "report" / "report.txt"));

  EvalOptions val;
  val.split = Split::Validation;
  CHECK(evaluate_run(m, {{"truth", dir / "ds" / "normals"}}, val).methods[0].pairs.size() == 2);

  fs::remove(dir / "flat" / (m.ids()[1] + ".png"));
  try {
    evaluate_run(m, {{"flat", dir / "flat"}});
    FAIL("expected missing outputs");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingGenerated);
    CHECK(std::string(e.what()).find(m.ids()[1]) != std::string::npos);
  }
}

TEST_CASE("summary weights pairs equally") {
  std::vector<MetricsRecord> pairs{{"a", 10, 1, 0.5, 100}, {"b", 20, 3, 1.5, 1}};
  const MethodReport r = summarize("m", pairs);
  CHECK(r.mean.angular_deg == doctest::Approx(15));
  CHECK(r.mean.l1 == doctest::Approx(2));
  CHECK(r.mean.l2 == doctest::Approx(1));
}
