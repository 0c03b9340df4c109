#pragma once

#include <cstdint>

#include "normgen/image.hpp"
#include "normgen/normal_field.hpp"

namespace normgen {

/// Quantized curvature magnitude, 0-255, background 0.
struct CurvatureMap {
  ByteMap values;

  int width() const { return static_cast<int>(values.cols()); }
  int height() const { return static_cast<int>(values.rows()); }
};

struct HintSampling {
  std::uint8_t t_hi = 127;
  std::uint8_t t_lo = 126;
  double keep_prob = 0.05;
};

/// Sparse set of hint pixels, with the parameters that produced it.
struct PointHintMask {
  BinaryMask bits;
  std::uint64_t seed = 0;
  double keep_prob = 1.0;
  std::uint8_t t_hi = 127;
  std::uint8_t t_lo = 126;

  int width() const { return static_cast<int>(bits.cols()); }
  int height() const { return static_cast<int>(bits.rows()); }
  long count() const { return bits.count(); }
};

/// Half the absolute divergence of the (nx, ny) field, in units of 1/pixel.
///
/// Central differences inside the image, one-sided at the image border. A pixel
/// whose stencil touches a background pixel gets zero. Background is zero.
template <class Scalar>
Plane<Scalar> curvature_proxy(const NormalField<Scalar>& field) {
  const int w = field.width();
  const int h = field.height();
  Plane<Scalar> kappa = Plane<Scalar>::Zero(h, w);
  const auto& fg = field.foreground;
  const auto& nx = field.component[0];
  const auto& ny = field.component[1];

  for (int y = 0; y < h; ++y) {
    const int y0 = y > 0 ? y - 1 : y;
    const int y1 = y + 1 < h ? y + 1 : y;
    for (int x = 0; x < w; ++x) {
      if (!fg(y, x)) continue;
      const int x0 = x > 0 ? x - 1 : x;
      const int x1 = x + 1 < w ? x + 1 : x;
      if (!fg(y, x0) || !fg(y, x1) || !fg(y0, x) || !fg(y1, x)) continue;
      const Scalar dnx = (nx(y, x1) - nx(y, x0)) / Scalar(x1 - x0);
      const Scalar dny = (ny(y1, x) - ny(y0, x)) / Scalar(y1 - y0);
      kappa(y, x) = Scalar(0.5) * std::abs(dnx + dny);
    }
  }
  return kappa;
}

/// Per-image max normalization: foreground maximum -> 255, zero -> 0.
template <class Scalar>
CurvatureMap quantize_curvature(const Plane<Scalar>& kappa, const BinaryMask& foreground) {
  CurvatureMap map{ByteMap::Zero(kappa.rows(), kappa.cols())};
  const Scalar peak = foreground.select(kappa, Scalar(0)).maxCoeff();
  if (!(peak > Scalar(0))) return map;
  for (Eigen::Index i = 0; i < kappa.size(); ++i) {
    if (!foreground.data()[i]) continue;
    const double v = std::round(255.0 * static_cast<double>(kappa.data()[i] / peak));
    map.values.data()[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return map;
}

template <class Scalar>
CurvatureMap estimate_curvature(const NormalField<Scalar>& field) {
  if (field.width() < 3 || field.height() < 3) {
    throw Error(ErrorKind::MalformedImage, "curvature needs a field of at least 3x3 pixels");
  }
  if (!field.foreground.any()) {
    throw Error(ErrorKind::EmptyForeground, "normal field has no foreground pixels");
  }
  return quantize_curvature(curvature_proxy(field), field.foreground);
}

/// XOR of the two binarizations (value >= t_hi) ^ (value >= t_lo):
/// set exactly where t_lo <= value < t_hi.
BinaryMask threshold_band(const CurvatureMap& cmap, std::uint8_t t_hi = 127,
                          std::uint8_t t_lo = 126);

/// Keeps each set bit independently with probability keep_prob.
PointHintMask dropout_mask(const BinaryMask& raw, double keep_prob, std::uint64_t seed);

/// decode -> curvature -> band -> dropout. An image with no foreground gives an empty mask.
PointHintMask sample_hints(const Image& normal_map, const HintSampling& params,
                           std::uint64_t seed);

/// Plain-text sidecar (`key = value` lines) describing how a mask was produced.
void write_mask_sidecar(const std::filesystem::path& path, const PointHintMask& mask);

}  // namespace normgen
