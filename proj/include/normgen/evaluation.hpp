#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "normgen/dataset.hpp"
#include "normgen/image.hpp"
#include "normgen/normal_field.hpp"

namespace normgen {

struct MetricsRecord {
  std::string id;
  double angular_deg = 0;
  double l1 = 0;
  double l2 = 0;
  long foreground_pixels = 0;
};

/// Pixels whose decoded ground-truth normal is off the background sentinel.
BinaryMask foreground_mask(const Image& ground_truth);

namespace detail {

template <class Scalar>
void require_comparable(const NormalField<Scalar>& a, const NormalField<Scalar>& b, const BinaryMask& fg) {
  if (a.width() != b.width() || a.height() != b.height() || fg.cols() != a.width() || fg.rows() != a.height()) {
    throw Error(ErrorKind::ShapeMismatch, "metric inputs differ in size");
  }
  if (!fg.any()) throw Error(ErrorKind::UndefinedMetric, "metric over an empty foreground is undefined");
}

}  // namespace detail

/// Angle between the two vectors after renormalisation, in degrees. A
/// zero-length vector counts as orthogonal to everything.
template <class Scalar>
double angle_deg(const Eigen::Matrix<Scalar, 3, 1>& a, const Eigen::Matrix<Scalar, 3, 1>& b) {
  const double na = static_cast<double>(a.norm());
  const double nb = static_cast<double>(b.norm());
  if (na == 0.0 || nb == 0.0) return 90.0;
  if (a == b) return 0.0;
  // same angle as acos of the clamped unit dot product, but exact at 0 and 180
  const Eigen::Vector3d ua = a.template cast<double>() / na;
  const Eigen::Vector3d ub = b.template cast<double>() / nb;
  return std::atan2(ua.cross(ub).norm(), ua.dot(ub)) * 180.0 / std::numbers::pi;
}

template <class Scalar>
double angular_error(const NormalField<Scalar>& y, const NormalField<Scalar>& y_gen, const BinaryMask& fg) {
  detail::require_comparable(y, y_gen, fg);
  double sum = 0;
  for (int r = 0; r < y.height(); ++r)
    for (int c = 0; c < y.width(); ++c)
      if (fg(r, c)) sum += angle_deg<Scalar>(y.at(c, r), y_gen.at(c, r));
  return sum / static_cast<double>(fg.count());
}

template <class Scalar>
double l1_metric(const NormalField<Scalar>& y, const NormalField<Scalar>& y_gen, const BinaryMask& fg) {
  detail::require_comparable(y, y_gen, fg);
  double sum = 0;
  for (int r = 0; r < y.height(); ++r)
    for (int c = 0; c < y.width(); ++c)
      if (fg(r, c)) sum += static_cast<double>((y.at(c, r) - y_gen.at(c, r)).template lpNorm<1>());
  return sum / static_cast<double>(fg.count());
}

template <class Scalar>
double l2_metric(const NormalField<Scalar>& y, const NormalField<Scalar>& y_gen, const BinaryMask& fg) {
  detail::require_comparable(y, y_gen, fg);
  double sum = 0;
  for (int r = 0; r < y.height(); ++r)
    for (int c = 0; c < y.width(); ++c)
      if (fg(r, c)) sum += static_cast<double>((y.at(c, r) - y_gen.at(c, r)).norm());
  return sum / static_cast<double>(fg.count());
}

/// All three metrics for one image pair, foreground taken from the ground truth.
MetricsRecord evaluate_pair(const std::string& id, const Image& ground_truth, const Image& generated);

/// Fixed black -> red -> yellow -> white ramp over 0..90 degrees, saturated above.
std::array<std::uint8_t, 3> ramp_color(double angle_deg);

/// Per-pixel angular error through ramp_color; background black.
Image error_map(const Image& ground_truth, const Image& generated, const BinaryMask& fg);

struct MethodReport {
  std::string method;
  std::vector<MetricsRecord> pairs;
  MetricsRecord mean;  ///< per-pair means averaged with equal weight per pair
};

struct EvalReport {
  std::vector<MethodReport> methods;
};

struct MethodOutputs {
  std::string name;
  std::filesystem::path dir;  ///< holds <id>.png for every evaluated pair
};

struct EvalOptions {
  std::optional<Split> split;  ///< none = every pair in the manifest
  bool write_error_maps = true;  ///< <dir>/<id>_error.png beside each generated image
};

/// Scores every method on the same pair set. Throws MissingGenerated listing
/// all absent images before computing anything.
EvalReport evaluate_run(const DatasetManifest& manifest, const std::vector<MethodOutputs>& methods,
                        const EvalOptions& options = {});

MethodReport summarize(std::string method, std::vector<MetricsRecord> pairs);

/// Aligned plain-text table: Method | Angular | L1 | L2.
std::string format_table(const EvalReport& report);

/// report.tsv (method means), per_pair.tsv and report.txt under `out_dir`.
void write_report(const EvalReport& report, const std::filesystem::path& out_dir);

}  // namespace normgen
