#pragma once

#include <filesystem>

#include "normgen/training.hpp"

namespace normgen {

/// Single-file archive: 8-byte magic "NGCKPT01", u64 little-endian header length,
/// JSON header (configs, iteration, RNG and sampler state, loss history, tensor
/// index), then raw little-endian float32 tensor data in column-major order.
void save_checkpoint(const std::filesystem::path& path, TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

/// Only the generator (for inference).
Generator<Real> load_generator(const std::filesystem::path& path);

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, int iteration);

}  // namespace normgen
