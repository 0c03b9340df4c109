#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "normgen/model.hpp"
#include "normgen/training.hpp"

namespace normgen {

/// Where an effective configuration value came from, lowest priority first.
enum class Source { Default, Env, File, Flag };
const char* to_string(Source source);

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every recognised `key = value` key, in display order.
const std::vector<ConfigKey>& config_keys();

inline constexpr const char* kSeedEnvVar = "NORMGEN_SEED";

/// Merged training/model configuration with per-key provenance.
/// Precedence: flag > file > NORMGEN_SEED (seed only) > default.
class RunConfig {
 public:
  struct Entry {
    std::string value;
    Source source = Source::Default;
  };

  RunConfig();

  /// Seed from the environment, if set and not already overridden.
  void apply_env();
  void apply_file(const std::filesystem::path& path);
  void apply_text(const std::string& text, const std::string& origin);
  void set(const std::string& key, const std::string& value, Source source);

  const Entry& entry(const std::string& key) const;
  const std::string& value(const std::string& key) const { return entry(key).value; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  TrainConfig train_config() const;
  /// Generator config for the dataset's image size; depth 0 means "derive from size".
  UNetConfig generator_config(int image_size) const;

  /// `key = value  # source` lines for every key.
  std::string describe() const;

 private:
  std::map<std::string, Entry> entries_;
};

/// Parses `key = value` lines ('#' comments, blank lines ignored).
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text, const std::string& origin);

}  // namespace normgen
