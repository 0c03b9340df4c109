#include "normgen/dataset.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "normgen/rng.hpp"

namespace normgen {
namespace fs = std::filesystem;

const char* to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Torus: return "torus";
    case ShapeKind::Capsule: return "capsule";
    case ShapeKind::SphereUnion: return "union";
  }
  return "?";
}

const char* to_string(Split split) { return split == Split::Train ? "train" : "validation"; }

ShapeSpec ShapeSpec::sphere(int size, Eigen::Vector3d c, double r) {
  ShapeSpec s;
  s.kind = ShapeKind::Sphere;
  s.image_size = size;
  s.center = c;
  s.radius = r;
  return s;
}

ShapeSpec ShapeSpec::torus(int size, Eigen::Vector3d c, double ring, double tube, Eigen::Vector3d axis) {
  ShapeSpec s;
  s.kind = ShapeKind::Torus;
  s.image_size = size;
  s.center = c;
  s.major_radius = ring;
  s.radius = tube;
  s.axis = axis;
  return s;
}

ShapeSpec ShapeSpec::capsule(int size, Eigen::Vector3d c, double r, double half_len, Eigen::Vector3d axis) {
  ShapeSpec s;
  s.kind = ShapeKind::Capsule;
  s.image_size = size;
  s.center = c;
  s.radius = r;
  s.half_length = half_len;
  s.axis = axis;
  return s;
}

ShapeSpec ShapeSpec::sphere_union(int size, std::vector<Ball> balls) {
  ShapeSpec s;
  s.kind = ShapeKind::SphereUnion;
  s.image_size = size;
  s.balls = std::move(balls);
  if (!s.balls.empty()) s.center = s.balls.front().center;
  return s;
}

namespace {

struct Bounds {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(INFINITY);
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(-INFINITY);

  void add_ball(const Eigen::Vector3d& c, double r) {
    lo = lo.cwiseMin(c - Eigen::Vector3d::Constant(r));
    hi = hi.cwiseMax(c + Eigen::Vector3d::Constant(r));
  }
};

Bounds bounds_of(const ShapeSpec& s) {
  Bounds b;
  switch (s.kind) {
    case ShapeKind::Sphere:
      b.add_ball(s.center, s.radius);
      break;
    case ShapeKind::Torus: {
      // Extent of a ring of radius R around axis a along unit direction e is R*sqrt(1 - (a.e)^2).
      const Eigen::Vector3d a = s.axis.normalized();
      for (int k = 0; k < 3; ++k) {
        const double ext = s.major_radius * std::sqrt(std::max(0.0, 1.0 - a[k] * a[k])) + s.radius;
        b.lo[k] = s.center[k] - ext;
        b.hi[k] = s.center[k] + ext;
      }
      break;
    }
    case ShapeKind::Capsule: {
      const Eigen::Vector3d d = s.half_length * s.axis.normalized();
      b.add_ball(s.center + d, s.radius);
      b.add_ball(s.center - d, s.radius);
      break;
    }
    case ShapeKind::SphereUnion:
      for (const auto& ball : s.balls) b.add_ball(ball.center, ball.radius);
      break;
  }
  return b;
}

/// Signed distance plus outward normal of the feature nearest to p.
struct SurfaceQuery {
  double distance;
  Eigen::Vector3d normal;
};

SurfaceQuery query_ball(const Eigen::Vector3d& p, const Eigen::Vector3d& c, double r) {
  const Eigen::Vector3d d = p - c;
  const double len = d.norm();
  return {len - r, len > 0 ? Eigen::Vector3d(d / len) : Eigen::Vector3d::UnitZ()};
}

SurfaceQuery query(const ShapeSpec& s, const Eigen::Vector3d& p) {
  switch (s.kind) {
    case ShapeKind::Sphere:
      return query_ball(p, s.center, s.radius);
    case ShapeKind::Torus: {
      const Eigen::Vector3d a = s.axis.normalized();
      const Eigen::Vector3d local = p - s.center;
      Eigen::Vector3d radial = local - local.dot(a) * a;
      const double rl = radial.norm();
      // On the axis every ring point is equidistant; any perpendicular will do.
      if (rl < 1e-12) radial = a.unitOrthogonal();
      else radial /= rl;
      return query_ball(p, s.center + s.major_radius * radial, s.radius);
    }
    case ShapeKind::Capsule: {
      const Eigen::Vector3d a = s.axis.normalized();
      const double t = std::clamp((p - s.center).dot(a), -s.half_length, s.half_length);
      return query_ball(p, s.center + t * a, s.radius);
    }
    case ShapeKind::SphereUnion: {
      SurfaceQuery best{INFINITY, Eigen::Vector3d::UnitZ()};
      for (const auto& ball : s.balls) {
        const SurfaceQuery q = query_ball(p, ball.center, ball.radius);
        if (q.distance < best.distance) best = q;
      }
      return best;
    }
  }
  return {INFINITY, Eigen::Vector3d::UnitZ()};
}

std::optional<Eigen::Vector3d> trace_pixel(const ShapeSpec& s, const Bounds& b, double px, double py) {
  if (s.kind == ShapeKind::Sphere) {
    const double dx = px - s.center.x();
    const double dy = py - s.center.y();
    const double h2 = s.radius * s.radius - dx * dx - dy * dy;
    if (h2 < 0) return std::nullopt;
    return Eigen::Vector3d(dx, dy, std::sqrt(h2)) / s.radius;
  }
  // Sphere tracing down the view ray from above the bounding box.
  const double eps = 1e-7 * s.image_size;
  double z = b.hi.z() + 1.0;
  const double z_end = b.lo.z() - 1.0;
  for (int it = 0; it < 4096 && z > z_end; ++it) {
    const SurfaceQuery q = query(s, {px, py, z});
    if (q.distance < eps) return q.normal;
    z -= q.distance;
  }
  return std::nullopt;
}

void check_vector(const Eigen::Vector3d& v, const char* what) {
  if (!(v.norm() > 0) || !v.allFinite()) {
    throw Error(ErrorKind::InvalidShape, std::string(what) + " must be a non-zero vector");
  }
}

}  // namespace

void validate(const ShapeSpec& s) {
  if (s.image_size < 64) {
    throw Error(ErrorKind::InvalidShape,
                "image size must be at least 64, got " + std::to_string(s.image_size));
  }
  auto positive = [](double v, const char* what) {
    if (!(v > 0)) throw Error(ErrorKind::InvalidShape, std::string(what) + " must be positive");
  };
  switch (s.kind) {
    case ShapeKind::Sphere: positive(s.radius, "sphere radius"); break;
    case ShapeKind::Torus:
      positive(s.radius, "torus tube radius");
      positive(s.major_radius, "torus ring radius");
      check_vector(s.axis, "torus axis");
      break;
    case ShapeKind::Capsule:
      positive(s.radius, "capsule radius");
      if (!(s.half_length >= 0)) throw Error(ErrorKind::InvalidShape, "capsule length must be >= 0");
      check_vector(s.axis, "capsule axis");
      break;
    case ShapeKind::SphereUnion:
      if (s.balls.empty()) throw Error(ErrorKind::InvalidShape, "sphere union needs members");
      for (const auto& ball : s.balls) positive(ball.radius, "union member radius");
      break;
  }
  const Bounds b = bounds_of(s);
  const double margin = 2.0;
  if (b.lo.x() < margin || b.lo.y() < margin || b.hi.x() > s.image_size - margin ||
      b.hi.y() > s.image_size - margin) {
    std::ostringstream os;
    os << to_string(s.kind) << " footprint [" << b.lo.x() << ", " << b.hi.x() << "] x ["
       << b.lo.y() << ", " << b.hi.y() << "] leaves less than a 2 px margin in a "
       << s.image_size << " px frame";
    throw Error(ErrorKind::OutOfFrame, os.str());
  }
}

NormalField<double> render_normals(const ShapeSpec& spec) {
  validate(spec);
  const int n = spec.image_size;
  const Bounds b = bounds_of(spec);
  NormalField<double> field(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (auto normal = trace_pixel(spec, b, x + 0.5, y + 0.5)) {
        field.set(x, y, normal->normalized());
        field.foreground(y, x) = true;
      }
    }
  }
  return field;
}

Image render_primitive(const ShapeSpec& spec) {
  const NormalField<double> field = render_normals(spec);
  Image image = encode_normals(field);
  // A foreground pixel facing the viewer would encode to the background value;
  // move its x byte one step off the sentinel box so foreground stays recoverable.
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      if (!field.foreground(y, x) || is_foreground_bytes(image, x, y)) continue;
      image.at(x, y, 0) = image.at(x, y, 0) >= 128 ? 129 : 126;
    }
  return image;
}

std::vector<ShapeSpec> random_specs(int count, int image_size, std::uint64_t seed,
                                    const std::vector<ShapeKind>& kinds) {
  if (kinds.empty()) throw Error(ErrorKind::EmptyInput, "no shape kinds to sample from");
  Rng rng(seed);
  const double S = image_size;
  auto in = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  auto tilted_axis = [&](double max_tilt_deg) {
    const double tilt = in(0.0, max_tilt_deg) * std::numbers::pi / 180.0;
    const double azimuth = in(0.0, 2.0 * std::numbers::pi);
    return Eigen::Vector3d(std::sin(tilt) * std::cos(azimuth), std::sin(tilt) * std::sin(azimuth),
                           std::cos(tilt));
  };
  std::vector<ShapeSpec> specs;
  for (int i = 0; i < count; ++i) {
    const ShapeKind kind = kinds[i % kinds.size()];
    for (;;) {
      ShapeSpec s;
      const Eigen::Vector3d c(in(0.3 * S, 0.7 * S), in(0.3 * S, 0.7 * S), 0.5 * S);
      switch (kind) {
        case ShapeKind::Sphere:
          s = ShapeSpec::sphere(image_size, c, in(0.18 * S, 0.32 * S));
          break;
        case ShapeKind::Torus: {
          const double tube = in(0.07 * S, 0.12 * S);
          s = ShapeSpec::torus(image_size, c, in(tube + 0.08 * S, 0.30 * S), tube, tilted_axis(40));
          break;
        }
        case ShapeKind::Capsule: {
          const Eigen::Vector3d a(in(-1, 1), in(-1, 1), in(-0.5, 0.5));
          s = ShapeSpec::capsule(image_size, c, in(0.09 * S, 0.15 * S), in(0.1 * S, 0.25 * S),
                                 a.norm() > 1e-3 ? a.normalized() : Eigen::Vector3d::UnitX());
          break;
        }
        case ShapeKind::SphereUnion: {
          std::vector<Ball> balls;
          const int members = 2 + static_cast<int>(rng.below(3));
          for (int m = 0; m < members; ++m) {
            const Eigen::Vector3d offset(in(-0.18, 0.18) * S, in(-0.18, 0.18) * S, in(-0.1, 0.1) * S);
            balls.push_back({c + offset, in(0.1 * S, 0.2 * S)});
          }
          s = ShapeSpec::sphere_union(image_size, std::move(balls));
          break;
        }
      }
      try {
        validate(s);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::OutOfFrame) continue;
        throw;
      }
      specs.push_back(std::move(s));
      break;
    }
  }
  return specs;
}

std::vector<ShapeSpec> parse_specs(const std::string& text, int image_size) {
  std::vector<ShapeSpec> specs;
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream in(line);
    std::string kind;
    if (!(in >> kind)) continue;
    std::vector<double> v;
    for (double d; in >> d;) v.push_back(d);
    if (!in.eof()) {
      throw Error(ErrorKind::Config, "shape line " + std::to_string(line_no) + ": bad number");
    }
    auto expect = [&](std::size_t n) {
      if (v.size() != n) {
        throw Error(ErrorKind::Config, "shape line " + std::to_string(line_no) + ": '" + kind +
                                           "' takes " + std::to_string(n) + " numbers, got " +
                                           std::to_string(v.size()));
      }
    };
    if (kind == "sphere") {
      expect(4);
      specs.push_back(ShapeSpec::sphere(image_size, {v[0], v[1], v[2]}, v[3]));
    } else if (kind == "torus") {
      expect(8);
      specs.push_back(ShapeSpec::torus(image_size, {v[0], v[1], v[2]}, v[3], v[4], {v[5], v[6], v[7]}));
    } else if (kind == "capsule") {
      expect(8);
      specs.push_back(ShapeSpec::capsule(image_size, {v[0], v[1], v[2]}, v[3], v[4], {v[5], v[6], v[7]}));
    } else if (kind == "union") {
      if (v.empty() || v.size() % 4 != 0) {
        throw Error(ErrorKind::Config, "shape line " + std::to_string(line_no) +
                                           ": 'union' takes groups of 4 numbers (cx cy cz r)");
      }
      std::vector<Ball> balls;
      for (std::size_t k = 0; k < v.size(); k += 4) balls.push_back({{v[k], v[k + 1], v[k + 2]}, v[k + 3]});
      specs.push_back(ShapeSpec::sphere_union(image_size, std::move(balls)));
    } else {
      throw Error(ErrorKind::Config, "shape line " + std::to_string(line_no) +
                                         ": unknown shape kind '" + kind + "'");
    }
  }
  return specs;
}

std::vector<ShapeSpec> read_specs_file(const fs::path& path, int image_size) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open shape spec file: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_specs(text.str(), image_size);
}

BinaryMask thin(BinaryMask img) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  auto px = [&](int y, int x) -> int {
    return (y >= 0 && y < h && x >= 0 && x < w && img(y, x)) ? 1 : 0;
  };
  std::vector<std::pair<int, int>> doomed;
  for (bool changed = true; changed;) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      doomed.clear();
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (!img(y, x)) continue;
          // Neighbours P2..P9, clockwise from north.
          const int p[8] = {px(y - 1, x), px(y - 1, x + 1), px(y, x + 1), px(y + 1, x + 1),
                            px(y + 1, x), px(y + 1, x - 1), px(y, x - 1), px(y - 1, x - 1)};
          int b = 0, a = 0;
          for (int k = 0; k < 8; ++k) {
            b += p[k];
            a += (p[k] == 0 && p[(k + 1) % 8] == 1);
          }
          if (b < 2 || b > 6 || a != 1) continue;
          const bool c1 = pass == 0 ? !(p[0] && p[2] && p[4]) : !(p[0] && p[2] && p[6]);
          const bool c2 = pass == 0 ? !(p[2] && p[4] && p[6]) : !(p[0] && p[4] && p[6]);
          if (c1 && c2) doomed.emplace_back(y, x);
        }
      for (auto [y, x] : doomed) img(y, x) = false;
      changed |= !doomed.empty();
    }
  }
  return img;
}

Image extract_contours(const Image& normal_map, double nz_threshold) {
  const auto field = decode_normals<double>(normal_map);
  if (!field.foreground.any()) {
    throw Error(ErrorKind::EmptySketch, "normal map has no foreground to draw contours from");
  }
  const int h = field.height();
  const int w = field.width();
  const auto& fg = field.foreground;
  BinaryMask strokes = BinaryMask::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!fg(y, x)) continue;
      const bool silhouette = x == 0 || y == 0 || x == w - 1 || y == h - 1 || !fg(y, x - 1) ||
                              !fg(y, x + 1) || !fg(y - 1, x) || !fg(y + 1, x);
      const bool grazing = field.component[2](y, x) < nz_threshold;
      strokes(y, x) = silhouette || grazing;
    }
  strokes = thin(std::move(strokes));
  Image sketch(w, h, 1, 255);
  for (Eigen::Index i = 0; i < strokes.size(); ++i)
    if (strokes.data()[i]) sketch.data[i] = 0;
  return sketch;
}

const ManifestEntry& DatasetManifest::entry(const std::string& id) const {
  for (const auto& e : entries)
    if (e.id == id) return e;
  throw Error(ErrorKind::Io, "pair id not in manifest: " + id);
}

std::vector<std::string> DatasetManifest::ids(std::optional<Split> split) const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (!split || e.split == *split) out.push_back(e.id);
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

DatasetManifest build_dataset(const std::vector<ShapeSpec>& specs, const fs::path& out_dir,
                              const DatasetOptions& options) {
  if (specs.empty()) throw Error(ErrorKind::EmptyInput, "dataset needs at least one shape");
  if (!(options.validation_fraction >= 0.0 && options.validation_fraction < 1.0)) {
    throw Error(ErrorKind::Config, "validation fraction must lie in [0, 1)");
  }
  for (const auto& s : specs) validate(s);
  ensure_dir(out_dir / "normals");
  ensure_dir(out_dir / "sketches");
  ensure_dir(out_dir / "masks");

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.global_seed = options.seed;
  manifest.keep_prob = options.hints.keep_prob;

  // Validation pairs: the first round(f * n) entries of a seeded permutation.
  const std::size_t n = specs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng split_rng(derive_seed(options.seed, 0xA11CEull));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
  std::vector<bool> validation(n, false);
  const auto n_val = static_cast<std::size_t>(std::llround(options.validation_fraction * n));
  for (std::size_t k = 0; k < n_val; ++k) validation[order[k]] = true;

  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "pair_%04zu", i);
    ManifestEntry e;
    e.id = id;
    e.normal = fs::path("normals") / (e.id + ".png");
    e.sketch = fs::path("sketches") / (e.id + ".png");
    e.mask = fs::path("masks") / (e.id + ".png");
    e.seed = derive_seed(options.seed, i);
    e.split = validation[i] ? Split::Validation : Split::Train;

    const Image normal = render_primitive(specs[i]);
    const Image sketch = extract_contours(normal, options.contour_nz);
    const PointHintMask mask = sample_hints(normal, options.hints, e.seed);
    write_png(out_dir / e.normal, normal);
    write_png(out_dir / e.sketch, sketch);
    write_png(out_dir / e.mask, mask_to_image(mask.bits));
    write_mask_sidecar((out_dir / e.mask).replace_extension(".txt"), mask);
    manifest.entries.push_back(std::move(e));
  }
  write_manifest(manifest);
  return manifest;
}

void write_manifest(const DatasetManifest& m) {
  const fs::path path = m.root / "manifest.tsv";
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write manifest: " + path.string());
  out << "# global_seed=" << m.global_seed << '\n'
      << "# keep_prob=" << format_double(m.keep_prob) << '\n'
      << "id\tsketch\tnormal\tmask\tseed\tsplit\n";
  for (const auto& e : m.entries) {
    out << e.id << '\t' << e.sketch.generic_string() << '\t' << e.normal.generic_string() << '\t'
        << e.mask.generic_string() << '\t' << e.seed << '\t' << to_string(e.split) << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing manifest: " + path.string());
}

DatasetManifest read_manifest(const fs::path& manifest_path) {
  fs::path path = manifest_path;
  if (fs::is_directory(path)) path /= "manifest.tsv";
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open manifest: " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  bool header_seen = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string value = line.substr(eq + 1);
      if (key == "global_seed") m.global_seed = std::stoull(value);
      else if (key == "keep_prob") m.keep_prob = std::stod(value);
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::istringstream fields(line);
    ManifestEntry e;
    std::string sketch, normal, mask, seed, split;
    if (!std::getline(fields, e.id, '\t') || !std::getline(fields, sketch, '\t') ||
        !std::getline(fields, normal, '\t') || !std::getline(fields, mask, '\t') ||
        !std::getline(fields, seed, '\t') || !std::getline(fields, split, '\t')) {
      throw Error(ErrorKind::Io, path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    e.sketch = sketch;
    e.normal = normal;
    e.mask = mask;
    e.seed = std::stoull(seed);
    e.split = split == "validation" ? Split::Validation : Split::Train;
    m.entries.push_back(std::move(e));
  }
  return m;
}

PairImages load_pair(const DatasetManifest& manifest, const std::string& id) {
  const ManifestEntry& e = manifest.entry(id);
  PairImages p;
  p.id = id;
  try {
    p.sketch = read_png(manifest.root / e.sketch);
    p.normal = read_png(manifest.root / e.normal);
    p.mask = read_png(manifest.root / e.mask);
  } catch (const Error& err) {
    throw Error(ErrorKind::Io, "pair " + id + ": " + err.what());
  }
  const bool shapes_ok = p.normal.channels == 3 && p.sketch.channels == 1 && p.mask.channels == 1 &&
                         p.sketch.width == p.normal.width && p.sketch.height == p.normal.height &&
                         p.mask.width == p.normal.width && p.mask.height == p.normal.height;
  if (!shapes_ok) {
    throw Error(ErrorKind::Io, "pair " + id + ": sketch, normal map and mask do not match in shape");
  }
  return p;
}

namespace {

Image mirror(const Image& src) {
  Image out(src.width, src.height, src.channels);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c) out.at(src.width - 1 - x, y, c) = src.at(x, y, c);
  return out;
}

}  // namespace

PairImages flip_horizontal(const PairImages& pair) {
  PairImages out{pair.id, mirror(pair.sketch), mirror(pair.normal), mirror(pair.mask)};
  // 255 - b decodes to exactly -decode(b).
  for (int y = 0; y < out.normal.height; ++y)
    for (int x = 0; x < out.normal.width; ++x) out.normal.at(x, y, 0) = 255 - out.normal.at(x, y, 0);
  return out;
}

}  // namespace normgen
