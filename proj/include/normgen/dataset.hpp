#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "normgen/geometry.hpp"
#include "normgen/image.hpp"
#include "normgen/nn/tensor.hpp"
#include "normgen/normal_field.hpp"

namespace normgen {

enum class ShapeKind { Sphere, Torus, Capsule, SphereUnion };

const char* to_string(ShapeKind kind);

struct Ball {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;
};

/// Analytic primitive, positioned in pixel units (x = column, y = row, z towards
/// the viewer). Pixel (i, j) covers [i, i+1) x [j, j+1) and is sampled at its centre.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::Sphere;
  int image_size = 64;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;        ///< sphere radius, torus tube radius, capsule radius
  double major_radius = 0.0;  ///< torus ring radius
  double half_length = 0.0;   ///< capsule half segment length
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  ///< torus symmetry axis, capsule direction
  std::vector<Ball> balls;    ///< union-of-spheres members

  static ShapeSpec sphere(int size, Eigen::Vector3d c, double r);
  static ShapeSpec torus(int size, Eigen::Vector3d c, double ring, double tube, Eigen::Vector3d axis);
  static ShapeSpec capsule(int size, Eigen::Vector3d c, double r, double half_len, Eigen::Vector3d axis);
  static ShapeSpec sphere_union(int size, std::vector<Ball> balls);
};

/// Throws InvalidShape for bad parameters and OutOfFrame when the xy footprint
/// does not keep a 2-pixel margin.
void validate(const ShapeSpec& spec);

/// Frontmost analytic normals under orthographic projection along -z.
NormalField<double> render_normals(const ShapeSpec& spec);
Image render_primitive(const ShapeSpec& spec);

/// Random shapes cycling through `kinds`, each fitting the frame. Deterministic in seed.
std::vector<ShapeSpec> random_specs(int count, int image_size, std::uint64_t seed,
                                    const std::vector<ShapeKind>& kinds = {
                                        ShapeKind::Sphere, ShapeKind::Torus,
                                        ShapeKind::Capsule, ShapeKind::SphereUnion});

/// One shape per line; see README for the grammar. Coordinates are pixels at `image_size`.
std::vector<ShapeSpec> parse_specs(const std::string& text, int image_size);
std::vector<ShapeSpec> read_specs_file(const std::filesystem::path& path, int image_size);

inline constexpr double kDefaultContourNz = 0.15;

/// Sketch: silhouette plus grazing-angle contours, thinned. 0 = stroke, 255 = blank.
Image extract_contours(const Image& normal_map, double nz_threshold = kDefaultContourNz);

/// Zhang-Suen thinning of a binary raster.
BinaryMask thin(BinaryMask strokes);

enum class Split { Train, Validation };
const char* to_string(Split split);

struct ManifestEntry {
  std::string id;
  std::filesystem::path sketch;  ///< relative to the manifest root
  std::filesystem::path normal;
  std::filesystem::path mask;
  std::uint64_t seed = 0;
  Split split = Split::Train;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::uint64_t global_seed = 0;
  double keep_prob = 0.05;
  std::vector<ManifestEntry> entries;

  const ManifestEntry& entry(const std::string& id) const;
  /// Ids in manifest order; nullopt = every split.
  std::vector<std::string> ids(std::optional<Split> split = std::nullopt) const;
};

struct DatasetOptions {
  std::uint64_t seed = 0;
  HintSampling hints;
  double validation_fraction = 0.0;
  double contour_nz = kDefaultContourNz;
};

DatasetManifest build_dataset(const std::vector<ShapeSpec>& specs,
                              const std::filesystem::path& out_dir,
                              const DatasetOptions& options);

void write_manifest(const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& manifest_path);

struct PairImages {
  std::string id;
  Image sketch;
  Image normal;
  Image mask;
};

/// Loads and cross-checks one pair; errors name the pair id.
PairImages load_pair(const DatasetManifest& manifest, const std::string& id);

/// Mirrors all three rasters left-right and negates the x component of the normals.
PairImages flip_horizontal(const PairImages& pair);

/// Network-ready batch: input = 3 sketch channels (stroke = 1) + hint channel,
/// target = decoded normals, hints = the hint channel on its own.
template <class Scalar>
struct Batch {
  std::vector<std::string> ids;
  nn::FeatureMap<Scalar> input;
  nn::FeatureMap<Scalar> target;
  nn::FeatureMap<Scalar> hints;
};

inline constexpr int kSketchChannels = 3;
inline constexpr int kInputChannels = kSketchChannels + 1;

template <class Scalar>
void write_sketch_channels(const Image& sketch, nn::FeatureMap<Scalar>& input, int n) {
  const auto& e = input.extent;
  for (int y = 0; y < e.height; ++y)
    for (int x = 0; x < e.width; ++x) {
      const Scalar stroke = Scalar(1) - Scalar(sketch.at(x, y)) / Scalar(255);
      input.values.col(e.column(n, y, x)).template head<kSketchChannels>().setConstant(stroke);
    }
}

template <class Scalar>
Batch<Scalar> assemble_batch(const std::vector<PairImages>& pairs) {
  if (pairs.empty()) throw Error(ErrorKind::EmptyInput, "cannot assemble an empty batch");
  const int w = pairs.front().normal.width;
  const int h = pairs.front().normal.height;
  const nn::Extent e{static_cast<int>(pairs.size()), h, w};
  Batch<Scalar> batch;
  batch.input = nn::FeatureMap<Scalar>(kInputChannels, e);
  batch.target = nn::FeatureMap<Scalar>(3, e);
  batch.hints = nn::FeatureMap<Scalar>(1, e);
  for (int n = 0; n < e.batch; ++n) {
    const PairImages& p = pairs[n];
    if (p.normal.width != w || p.normal.height != h) {
      throw Error(ErrorKind::ShapeMismatch, "pair " + p.id + " has a different image size");
    }
    batch.ids.push_back(p.id);
    write_sketch_channels(p.sketch, batch.input, n);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int col = e.column(n, y, x);
        const Scalar hint = p.mask.at(x, y) >= 128 ? Scalar(1) : Scalar(0);
        batch.input.values(kSketchChannels, col) = hint;
        batch.hints.values(0, col) = hint;
        for (int c = 0; c < 3; ++c)
          batch.target.values(c, col) = decode_component<Scalar>(p.normal.at(x, y, c));
      }
  }
  return batch;
}

template <class Scalar>
Batch<Scalar> load_batch(const DatasetManifest& manifest, const std::vector<std::string>& ids,
                         bool flip = false) {
  std::vector<PairImages> pairs;
  pairs.reserve(ids.size());
  for (const auto& id : ids) {
    pairs.push_back(flip ? flip_horizontal(load_pair(manifest, id)) : load_pair(manifest, id));
  }
  return assemble_batch<Scalar>(pairs);
}

}  // namespace normgen
