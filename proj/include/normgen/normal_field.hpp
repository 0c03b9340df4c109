#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include <Eigen/Core>

#include "normgen/errors.hpp"
#include "normgen/image.hpp"

namespace normgen {

template <class Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-pixel normal vectors plus a foreground flag. Planes are indexed (row, col).
///
/// Axis convention: x follows image columns, y follows image rows (downwards),
/// z points towards the viewer. The background sentinel is (0, 0, 1).
template <class Scalar>
struct NormalField {
  std::array<Plane<Scalar>, 3> component;
  BinaryMask foreground;

  NormalField() = default;
  NormalField(int width, int height) : foreground(BinaryMask::Zero(height, width)) {
    component[0] = Plane<Scalar>::Zero(height, width);
    component[1] = Plane<Scalar>::Zero(height, width);
    component[2] = Plane<Scalar>::Ones(height, width);
  }

  int width() const { return static_cast<int>(foreground.cols()); }
  int height() const { return static_cast<int>(foreground.rows()); }

  Eigen::Matrix<Scalar, 3, 1> at(int x, int y) const {
    return {component[0](y, x), component[1](y, x), component[2](y, x)};
  }
  void set(int x, int y, const Eigen::Matrix<Scalar, 3, 1>& n) {
    for (int c = 0; c < 3; ++c) component[c](y, x) = n[c];
  }
};

/// Byte <-> component convention: c = 2 b / 255 - 1, b = round(255 (c + 1) / 2).
template <class Scalar>
constexpr Scalar decode_component(std::uint8_t b) {
  return Scalar(2) * (Scalar(b) / Scalar(255)) - Scalar(1);
}

template <class Scalar>
std::uint8_t encode_component(Scalar c) {
  const double v = std::round(255.0 * (static_cast<double>(c) + 1.0) / 2.0);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

/// Decoded vectors farther than this (per component) from the sentinel are foreground.
inline constexpr double kSentinelTolerance = 2.0 / 255.0;

template <class Scalar>
bool differs_from_sentinel(Scalar x, Scalar y, Scalar z) {
  const Scalar tol = static_cast<Scalar>(kSentinelTolerance);
  return std::abs(x) > tol || std::abs(y) > tol || std::abs(z - Scalar(1)) > tol;
}

/// Exact byte form of the sentinel test: |2b - 255 - 255 s| > 2 for sentinel s.
inline bool is_foreground_bytes(std::uint8_t bx, std::uint8_t by, std::uint8_t bz) {
  return std::abs(2 * int(bx) - 255) > 2 || std::abs(2 * int(by) - 255) > 2 ||
         std::abs(2 * int(bz) - 510) > 2;
}

inline bool is_foreground_bytes(const Image& image, int x, int y) {
  return is_foreground_bytes(image.at(x, y, 0), image.at(x, y, 1), image.at(x, y, 2));
}

template <class Scalar = double>
NormalField<Scalar> decode_normals(const Image& image) {
  if (image.channels != 3) {
    throw Error(ErrorKind::MalformedImage,
                "normal map must have 3 channels, got " + std::to_string(image.channels));
  }
  NormalField<Scalar> field(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Scalar nx = decode_component<Scalar>(image.at(x, y, 0));
      const Scalar ny = decode_component<Scalar>(image.at(x, y, 1));
      const Scalar nz = decode_component<Scalar>(image.at(x, y, 2));
      field.component[0](y, x) = nx;
      field.component[1](y, x) = ny;
      field.component[2](y, x) = nz;
      field.foreground(y, x) = is_foreground_bytes(image, x, y);
    }
  }
  return field;
}

/// Writes vectors as bytes; the foreground flag is not stored.
template <class Scalar>
Image encode_normals(const NormalField<Scalar>& field) {
  Image image(field.width(), field.height(), 3);
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x)
      for (int c = 0; c < 3; ++c)
        image.at(x, y, c) = encode_component(field.component[c](y, x));
  return image;
}

}  // namespace normgen
