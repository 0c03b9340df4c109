#pragma once

#include <Eigen/Core>

#include "normgen/errors.hpp"

namespace normgen::nn {

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Spatial layout of a batch: column index = (n * height + y) * width + x.
struct Extent {
  int batch = 0;
  int height = 0;
  int width = 0;

  int pixels() const { return batch * height * width; }
  int pixels_per_sample() const { return height * width; }
  int column(int n, int y, int x) const { return (n * height + y) * width + x; }
  Extent halved() const { return {batch, height / 2, width / 2}; }
  Extent doubled() const { return {batch, height * 2, width * 2}; }
  bool operator==(const Extent&) const = default;
};

/// Batched feature map stored channel-major: one row per channel, one column
/// per pixel, so a 1x1 linear map over channels is a plain matrix product.
template <class Scalar>
struct FeatureMap {
  Matrix<Scalar> values;
  Extent extent;

  FeatureMap() = default;
  FeatureMap(int channels, Extent e) : values(Matrix<Scalar>::Zero(channels, e.pixels())), extent(e) {}
  FeatureMap(Matrix<Scalar> v, Extent e) : values(std::move(v)), extent(e) {}

  int channels() const { return static_cast<int>(values.rows()); }

  template <class Other>
  FeatureMap<Other> cast() const {
    return {values.template cast<Other>(), extent};
  }
};

template <class Scalar>
void require_same_shape(const FeatureMap<Scalar>& a, const FeatureMap<Scalar>& b,
                        const char* what) {
  if (!(a.extent == b.extent) || a.channels() != b.channels()) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": tensor shapes differ");
  }
}

/// Stacks channel blocks: rows of `top` followed by rows of `bottom`.
template <class Scalar>
FeatureMap<Scalar> concat_channels(const FeatureMap<Scalar>& top, const FeatureMap<Scalar>& bottom) {
  if (!(top.extent == bottom.extent)) {
    throw Error(ErrorKind::ShapeMismatch, "channel concatenation needs equal spatial extents");
  }
  FeatureMap<Scalar> out(top.channels() + bottom.channels(), top.extent);
  out.values.topRows(top.channels()) = top.values;
  out.values.bottomRows(bottom.channels()) = bottom.values;
  return out;
}

}  // namespace normgen::nn
