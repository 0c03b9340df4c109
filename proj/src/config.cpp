#include "normgen/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace normgen {

const char* to_string(Source source) {
  switch (source) {
    case Source::Default: return "default";
    case Source::Env: return "env";
    case Source::File: return "file";
    case Source::Flag: return "flag";
  }
  return "?";
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"lambda_l1", "100", "weight of the L1 reconstruction term"},
      {"lambda_mask", "100", "weight of the hint-mask term"},
      {"learning_rate", "5e-05", "RMSProp learning rate (both players)"},
      {"clip_c", "0.01", "critic weight clipping bound"},
      {"critic_steps_per_gen", "5", "critic updates per generator update"},
      {"batch_size", "4", "pairs per batch"},
      {"max_iterations", "2000", "generator updates to run"},
      {"seed", "0", "master seed (also NORMGEN_SEED)"},
      {"noise_mode", "off", "generator noise: off | dropout"},
      {"composite_scope", "critic_only", "where hint compositing applies: critic_only | everywhere"},
      {"checkpoint_every", "500", "checkpoint interval in iterations (0 = final only)"},
      {"augment", "false", "random horizontal flips"},
      {"depth", "0", "U-Net layer count (0 = 2*log2(image size))"},
      {"base_channels", "64", "channels of the first encoder block"},
      {"leaky_slope", "0.2", "leaky ReLU negative slope"},
      {"batch_norm", "true", "batch normalization in inner blocks"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) entries_[k.name] = {k.default_value, Source::Default};
}

void RunConfig::set(const std::string& key, const std::string& value, Source source) {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
  if (source < it->second.source) return;
  it->second = {value, source};
}

const RunConfig::Entry& RunConfig::entry(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
  return it->second;
}

void RunConfig::apply_env() {
  if (const char* env = std::getenv(kSeedEnvVar); env && *env) set("seed", env, Source::Env);
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::Config, origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void RunConfig::apply_text(const std::string& text, const std::string& origin) {
  for (const auto& [k, v] : parse_key_values(text, origin)) set(k, v, Source::File);
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config file: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_text(text.str(), path.string());
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error(ErrorKind::Config, "config key '" + key + "': '" + v + "' is not a valid number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorKind::Config, "config key '" + key + "': '" + v + "' is not a boolean");
}

}  // namespace

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  auto num = [&](const char* k, auto& out) { out = parse_number<std::decay_t<decltype(out)>>(k, value(k)); };
  num("lambda_l1", c.lambda_l1);
  num("lambda_mask", c.lambda_mask);
  num("learning_rate", c.learning_rate);
  num("clip_c", c.clip_c);
  num("critic_steps_per_gen", c.critic_steps_per_gen);
  num("batch_size", c.batch_size);
  num("max_iterations", c.max_iterations);
  num("seed", c.seed);
  num("checkpoint_every", c.checkpoint_every);
  c.noise_mode = parse_noise_mode(value("noise_mode"));
  c.composite_scope = parse_composite_scope(value("composite_scope"));
  c.augment = parse_bool("augment", value("augment"));
  validate(c);
  return c;
}

UNetConfig RunConfig::generator_config(int image_size) const {
  UNetConfig c = normgen::generator_config(image_size, parse_number<int>("base_channels", value("base_channels")));
  const int depth = parse_number<int>("depth", value("depth"));
  if (depth != 0) c.depth = depth;
  c.leaky_slope = parse_number<double>("leaky_slope", value("leaky_slope"));
  c.batch_norm = parse_bool("batch_norm", value("batch_norm"));
  validate(c, image_size, image_size);
  return c;
}

std::string RunConfig::describe() const {
  std::ostringstream os;
  for (const auto& k : config_keys()) {
    const Entry& e = entries_.at(k.name);
    os << k.name << " = " << e.value << "  # " << to_string(e.source) << '\n';
  }
  return os.str();
}

}  // namespace normgen
