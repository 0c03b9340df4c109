#include "normgen/model.hpp"

#include <bit>

#include "normgen/losses.hpp"

namespace normgen {

void validate(const UNetConfig& cfg) {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::Config, "U-Net config: " + why); };
  if (cfg.depth < 2 || cfg.depth % 2 != 0) fail("depth must be even and >= 2");
  if (cfg.depth > 24) fail("depth above 24 is not supported");
  if (cfg.base_channels < 1) fail("base_channels must be >= 1");
  if (cfg.in_channels < 1 || cfg.out_channels < 1) fail("channel counts must be >= 1");
  if (!(cfg.leaky_slope >= 0)) fail("leaky_slope must be >= 0");
}

void validate(const UNetConfig& cfg, int height, int width) {
  validate(cfg);
  const int q = cfg.size_quantum();
  if (height <= 0 || width <= 0 || height % q != 0 || width % q != 0) {
    throw Error(ErrorKind::Config, "input " + std::to_string(width) + "x" + std::to_string(height) +
                                       " is not a multiple of " + std::to_string(q) + " (depth " +
                                       std::to_string(cfg.depth) + ")");
  }
}

const char* to_string(NoiseMode mode) { return mode == NoiseMode::Off ? "off" : "dropout"; }

NoiseMode parse_noise_mode(const std::string& text) {
  if (text == "off") return NoiseMode::Off;
  if (text == "dropout") return NoiseMode::Dropout;
  throw Error(ErrorKind::Config, "noise_mode must be 'off' or 'dropout', got '" + text + "'");
}

const char* to_string(CompositeScope scope) {
  return scope == CompositeScope::CriticOnly ? "critic_only" : "everywhere";
}

CompositeScope parse_composite_scope(const std::string& text) {
  if (text == "critic_only") return CompositeScope::CriticOnly;
  if (text == "everywhere") return CompositeScope::Everywhere;
  throw Error(ErrorKind::Config, "composite_scope must be 'critic_only' or 'everywhere', got '" + text + "'");
}

UNetConfig generator_config(int image_size, int base_channels) {
  if (image_size < 2 || !std::has_single_bit(static_cast<unsigned>(image_size))) {
    throw Error(ErrorKind::Config, "image size must be a power of two, got " + std::to_string(image_size));
  }
  UNetConfig cfg;
  cfg.depth = 2 * std::countr_zero(static_cast<unsigned>(image_size));
  cfg.base_channels = base_channels;
  cfg.in_channels = 4;
  cfg.out_channels = 3;
  return cfg;
}

UNetConfig discriminator_config(const UNetConfig& generator) {
  UNetConfig cfg = generator;
  cfg.in_channels = kCriticInputChannels;
  cfg.out_channels = 1;
  return cfg;
}

}  // namespace normgen
