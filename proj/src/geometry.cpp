#include "normgen/geometry.hpp"

#include <fstream>

#include "normgen/rng.hpp"

namespace normgen {

BinaryMask threshold_band(const CurvatureMap& cmap, std::uint8_t t_hi, std::uint8_t t_lo) {
  if (t_hi <= t_lo) {
    throw Error(ErrorKind::InvalidThreshold, "threshold band needs t_hi > t_lo, got " +
                                                 std::to_string(t_hi) + " <= " +
                                                 std::to_string(t_lo));
  }
  const BinaryMask above_hi = cmap.values >= t_hi;
  const BinaryMask above_lo = cmap.values >= t_lo;
  return above_hi != above_lo;
}

PointHintMask dropout_mask(const BinaryMask& raw, double keep_prob, std::uint64_t seed) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw Error(ErrorKind::InvalidProbability,
                "keep probability must lie in (0, 1], got " + std::to_string(keep_prob));
  }
  PointHintMask mask;
  mask.bits = BinaryMask::Zero(raw.rows(), raw.cols());
  mask.seed = seed;
  mask.keep_prob = keep_prob;
  Rng rng(seed);
  // Raster order, one draw per candidate bit.
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (raw.data()[i]) mask.bits.data()[i] = rng.uniform() < keep_prob;
  }
  return mask;
}

PointHintMask sample_hints(const Image& normal_map, const HintSampling& params,
                           std::uint64_t seed) {
  const auto field = decode_normals<double>(normal_map);
  BinaryMask band;
  if (field.foreground.any()) {
    band = threshold_band(estimate_curvature(field), params.t_hi, params.t_lo);
  } else {
    if (params.t_hi <= params.t_lo) threshold_band(CurvatureMap{}, params.t_hi, params.t_lo);
    band = BinaryMask::Zero(normal_map.height, normal_map.width);
  }
  PointHintMask mask = dropout_mask(band, params.keep_prob, seed);
  mask.t_hi = params.t_hi;
  mask.t_lo = params.t_lo;
  return mask;
}

void write_mask_sidecar(const std::filesystem::path& path, const PointHintMask& mask) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write mask metadata: " + path.string());
  out << "seed = " << mask.seed << '\n'
      << "keep_prob = " << mask.keep_prob << '\n'
      << "t_hi = " << int(mask.t_hi) << '\n'
      << "t_lo = " << int(mask.t_lo) << '\n'
      << "hints = " << mask.count() << '\n';
  if (!out) throw Error(ErrorKind::Io, "failed writing mask metadata: " + path.string());
}

}  // namespace normgen
