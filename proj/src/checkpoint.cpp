#include "normgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>
#include <fstream>

#include <json.hpp>

namespace normgen {
namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'N', 'G', 'C', 'K', 'P', 'T', '0', '1'};

json to_json(const UNetConfig& c) {
  return {{"depth", c.depth},           {"base_channels", c.base_channels}, {"in_channels", c.in_channels},
          {"out_channels", c.out_channels}, {"batch_norm", c.batch_norm},   {"leaky_slope", c.leaky_slope}};
}

UNetConfig unet_from_json(const json& j) {
  UNetConfig c;
  c.depth = j.at("depth");
  c.base_channels = j.at("base_channels");
  c.in_channels = j.at("in_channels");
  c.out_channels = j.at("out_channels");
  c.batch_norm = j.at("batch_norm");
  c.leaky_slope = j.at("leaky_slope");
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"lambda_l1", c.lambda_l1},
          {"lambda_mask", c.lambda_mask},
          {"learning_rate", c.learning_rate},
          {"clip_c", c.clip_c},
          {"critic_steps_per_gen", c.critic_steps_per_gen},
          {"batch_size", c.batch_size},
          {"max_iterations", c.max_iterations},
          {"seed", c.seed},
          {"noise_mode", to_string(c.noise_mode)},
          {"composite_scope", to_string(c.composite_scope)},
          {"checkpoint_every", c.checkpoint_every},
          {"augment", c.augment}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.lambda_l1 = j.at("lambda_l1");
  c.lambda_mask = j.at("lambda_mask");
  c.learning_rate = j.at("learning_rate");
  c.clip_c = j.at("clip_c");
  c.critic_steps_per_gen = j.at("critic_steps_per_gen");
  c.batch_size = j.at("batch_size");
  c.max_iterations = j.at("max_iterations");
  c.seed = j.at("seed");
  c.noise_mode = parse_noise_mode(j.at("noise_mode"));
  c.composite_scope = parse_composite_scope(j.at("composite_scope"));
  c.checkpoint_every = j.at("checkpoint_every");
  c.augment = j.at("augment");
  return c;
}

/// Every tensor in the state under a stable key.
std::vector<std::pair<std::string, nn::Matrix<Real>*>> named_tensors(TrainState& s, bool generator_only) {
  std::vector<std::pair<std::string, nn::Matrix<Real>*>> out;
  auto add_model = [&](const std::string& prefix, auto& model, RmsProp<Real>* opt) {
    const auto params = model.parameters();
    for (auto* p : params) out.emplace_back(prefix + "/" + p->name, &p->value);
    for (auto& b : model.buffers()) out.emplace_back(prefix + "/" + b.name, b.tensor);
    if (!opt) return;
    auto& acc = opt->accumulators();
    for (std::size_t i = 0; i < acc.size(); ++i) out.emplace_back(prefix + "_opt/" + params[i]->name, &acc[i]);
  };
  add_model("generator", s.generator, generator_only ? nullptr : &s.generator_opt);
  if (!generator_only) add_model("discriminator", s.critic, &s.critic_opt);
  return out;
}

struct RawCheckpoint {
  json header;
  std::vector<char> blob;
};

RawCheckpoint read_raw(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open checkpoint: " + path.string());
  char magic[8];
  std::uint64_t header_len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw Error(ErrorKind::Io, "not a checkpoint file: " + path.string());
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  RawCheckpoint raw;
  try {
    raw.header = json::parse(header);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, "corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  raw.blob.assign(std::istreambuf_iterator<char>(in), {});
  return raw;
}

void fill_tensors(const RawCheckpoint& raw, const std::vector<std::pair<std::string, nn::Matrix<Real>*>>& targets,
                  const fs::path& path) {
  std::map<std::string, json> index;
  for (const auto& t : raw.header.at("tensors")) index[t.at("name")] = t;
  for (const auto& [name, m] : targets) {
    const auto it = index.find(name);
    if (it == index.end()) throw Error(ErrorKind::Io, path.string() + ": missing tensor " + name);
    const long rows = it->second.at("rows");
    const long cols = it->second.at("cols");
    const std::size_t offset = it->second.at("offset");
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(Real);
    if (offset + bytes > raw.blob.size()) throw Error(ErrorKind::Io, path.string() + ": truncated tensor " + name);
    m->resize(rows, cols);
    std::memcpy(m->data(), raw.blob.data() + offset, bytes);
  }
}

}  // namespace

fs::path checkpoint_path(const fs::path& run_dir, int iteration) {
  return run_dir / ("ckpt_" + std::to_string(iteration));
}

void save_checkpoint(const fs::path& path, TrainState& s) {
  s.generator_opt.init(s.generator.parameters());
  s.critic_opt.init(s.critic.parameters());

  json header;
  header["format_version"] = 1;
  header["scalar"] = "float32";
  header["iteration"] = s.iteration;
  header["generator_config"] = to_json(s.generator.config());
  header["discriminator_config"] = to_json(s.critic.config());
  header["train_config"] = to_json(s.config);
  header["noise_rng"] = s.noise_rng.state();
  header["sampler"] = {{"ids", s.sampler.ids()},
                       {"order", s.sampler.order()},
                       {"position", s.sampler.position()},
                       {"rng", s.sampler.rng().state()}};
  json history = json::array();
  for (const auto& r : s.history) history.push_back({r.critic, r.adv, r.l1, r.mask});
  header["history"] = std::move(history);

  json tensors = json::array();
  std::size_t offset = 0;
  const auto named = named_tensors(s, false);
  for (const auto& [name, m] : named) {
    tensors.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}, {"offset", offset}});
    offset += static_cast<std::size_t>(m->size()) * sizeof(Real);
  }
  header["tensors"] = std::move(tensors);

  const std::string text = header.dump();
  const fs::path tmp = fs::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write checkpoint: " + tmp.string());
    const std::uint64_t len = text.size();
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : named) {
      out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(Real)));
    }
    if (!out) throw Error(ErrorKind::Io, "failed writing checkpoint: " + tmp.string());
  }
  fs::rename(tmp, path);
}

TrainState load_checkpoint(const fs::path& path) {
  const RawCheckpoint raw = read_raw(path);
  const json& h = raw.header;
  try {
    const auto& sampler = h.at("sampler");
    TrainState s(unet_from_json(h.at("generator_config")), train_from_json(h.at("train_config")),
                 sampler.at("ids").get<std::vector<std::string>>());
    s.iteration = h.at("iteration");
    s.noise_rng.set_state(h.at("noise_rng"));
    s.sampler.restore(sampler.at("order").get<std::vector<std::size_t>>(), sampler.at("position"),
                      sampler.at("rng"));
    for (const auto& r : h.at("history")) s.history.push_back({r[0], r[1], r[2], r[3]});
    s.generator_opt.init(s.generator.parameters());
    s.critic_opt.init(s.critic.parameters());
    fill_tensors(raw, named_tensors(s, false), path);
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, "malformed checkpoint " + path.string() + ": " + e.what());
  }
}

Generator<Real> load_generator(const fs::path& path) {
  const RawCheckpoint raw = read_raw(path);
  try {
    Generator<Real> g(unet_from_json(raw.header.at("generator_config")), 0);
    std::vector<std::pair<std::string, nn::Matrix<Real>*>> targets;
    for (auto* p : g.parameters()) targets.emplace_back("generator/" + p->name, &p->value);
    for (auto& b : g.buffers()) targets.emplace_back("generator/" + b.name, b.tensor);
    fill_tensors(raw, targets, path);
    return g;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, "malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace normgen
