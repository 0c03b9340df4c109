#include "normgen/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <iostream>

#include "normgen/checkpoint.hpp"
#include "normgen/config.hpp"
#include "normgen/dataset.hpp"
#include "normgen/evaluation.hpp"
#include "normgen/geometry.hpp"
#include "normgen/training.hpp"

namespace normgen {
namespace fs = std::filesystem;

namespace {

constexpr const char* kExitCodeHelp =
    "Exit codes: 0 ok, 1 internal error, 2 usage, 3 config, 4 I/O, 5 invalid data, "
    "6 non-finite training loss, 7 evaluation (missing outputs / undefined metric).";

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return kExitConfig;
    case ErrorKind::Io:
      return kExitIo;
    case ErrorKind::NonFinite:
      return kExitDiverged;
    case ErrorKind::MissingGenerated:
    case ErrorKind::UndefinedMetric:
      return kExitEvaluation;
    default:
      return kExitData;
  }
}

std::string dashed(std::string key) {
  for (auto& ch : key)
    if (ch == '_') ch = '-';
  return key;
}

std::uint64_t seed_from_env_or(std::uint64_t fallback) {
  if (const char* env = std::getenv(kSeedEnvVar); env && *env) return std::stoull(env);
  return fallback;
}

std::optional<Split> parse_split(const std::string& s) {
  if (s == "all") return std::nullopt;
  if (s == "train") return Split::Train;
  if (s == "validation") return Split::Validation;
  throw Error(ErrorKind::Config, "split must be all, train or validation");
}

int first_image_size(const DatasetManifest& m) {
  if (m.entries.empty()) throw Error(ErrorKind::EmptyInput, "manifest has no entries");
  return read_png(m.root / m.entries.front().normal).width;
}

// ---- dataset -------------------------------------------------------------

struct DatasetArgs {
  std::string specs;
  int random_count = 0;
  std::vector<std::string> kinds;
  std::string out;
  int size = 256;
  std::optional<std::uint64_t> seed;
  double keep_prob = 0.05;
  int t_hi = 127;
  int t_lo = 126;
  double val_fraction = 0.0;
  double contour_nz = kDefaultContourNz;
};

HintSampling hint_params(double keep_prob, int t_hi, int t_lo) {
  if (t_hi < 0 || t_hi > 255 || t_lo < 0 || t_lo > 255) {
    throw Error(ErrorKind::Config, "thresholds must lie in 0..255");
  }
  return {static_cast<std::uint8_t>(t_hi), static_cast<std::uint8_t>(t_lo), keep_prob};
}

ShapeKind parse_kind(const std::string& s) {
  if (s == "sphere") return ShapeKind::Sphere;
  if (s == "torus") return ShapeKind::Torus;
  if (s == "capsule") return ShapeKind::Capsule;
  if (s == "union") return ShapeKind::SphereUnion;
  throw Error(ErrorKind::Config, "unknown shape kind '" + s + "'");
}

int cmd_dataset(const DatasetArgs& a) {
  DatasetOptions opt;
  opt.seed = a.seed ? *a.seed : seed_from_env_or(0);
  opt.hints = hint_params(a.keep_prob, a.t_hi, a.t_lo);
  opt.validation_fraction = a.val_fraction;
  opt.contour_nz = a.contour_nz;
  std::vector<ShapeSpec> specs;
  if (!a.specs.empty()) {
    specs = read_specs_file(a.specs, a.size);
  } else {
    std::vector<ShapeKind> kinds;
    for (const auto& k : a.kinds) kinds.push_back(parse_kind(k));
    if (kinds.empty()) kinds = {ShapeKind::Sphere, ShapeKind::Torus, ShapeKind::Capsule, ShapeKind::SphereUnion};
    specs = random_specs(a.random_count, a.size, opt.seed, kinds);
  }
  const DatasetManifest m = build_dataset(specs, a.out, opt);
  long hints = 0;
  for (const auto& e : m.entries) hints += image_to_mask(read_png(m.root / e.mask)).count();
  std::cout << "wrote " << m.entries.size() << " pairs (" << m.ids(Split::Train).size() << " train, "
            << m.ids(Split::Validation).size() << " validation, " << hints << " hint pixels) to "
            << (m.root / "manifest.tsv").string() << '\n';
  return kExitOk;
}

// ---- mask ----------------------------------------------------------------

struct MaskArgs {
  std::string normal;
  std::string out;
  std::string curvature_out;
  std::string dataset;
  std::optional<std::uint64_t> seed;
  double keep_prob = 0.05;
  int t_hi = 127;
  int t_lo = 126;
};

int cmd_mask(const MaskArgs& a) {
  const HintSampling params = hint_params(a.keep_prob, a.t_hi, a.t_lo);
  if (!a.dataset.empty()) {
    DatasetManifest m = read_manifest(a.dataset);
    long total = 0;
    for (const auto& e : m.entries) {
      const PointHintMask mask = sample_hints(read_png(m.root / e.normal), params, e.seed);
      write_png(m.root / e.mask, mask_to_image(mask.bits));
      write_mask_sidecar((m.root / e.mask).replace_extension(".txt"), mask);
      total += mask.count();
    }
    std::cout << "regenerated " << m.entries.size() << " masks (" << total << " hint pixels)\n";
    return kExitOk;
  }
  if (a.normal.empty() || a.out.empty()) {
    throw Error(ErrorKind::Config, "mask needs --dataset, or --normal together with --out");
  }
  const Image normal = read_png(a.normal);
  const std::uint64_t seed = a.seed ? *a.seed : seed_from_env_or(0);
  const PointHintMask mask = sample_hints(normal, params, seed);
  write_png(a.out, mask_to_image(mask.bits));
  write_mask_sidecar(fs::path(a.out).replace_extension(".txt"), mask);
  if (!a.curvature_out.empty()) {
    const auto field = decode_normals<double>(normal);
    const CurvatureMap cmap = field.foreground.any() ? estimate_curvature(field)
                                                     : CurvatureMap{ByteMap::Zero(normal.height, normal.width)};
    write_png(a.curvature_out, bytes_to_image(cmap.values));
  }
  std::cout << "hint pixels: " << mask.count() << '\n';
  return kExitOk;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string config_file;
  std::string dataset;
  std::string run_dir;
  std::string resume;
  std::map<std::string, std::string> overrides;
  bool verbose = false;
};

int cmd_train(TrainArgs& a, const std::map<std::string, CLI::Option*>& key_options) {
  for (const auto& [key, opt] : key_options)
    if (opt->count() == 0) a.overrides.erase(key);

  RunConfig rc;
  rc.apply_env();
  if (!a.config_file.empty()) rc.apply_file(a.config_file);
  for (const auto& [k, v] : a.overrides) rc.set(k, v, Source::Flag);

  const DatasetManifest manifest = read_manifest(a.dataset);
  const RunOptions run{fs::path(a.run_dir), !a.verbose};
  fs::create_directories(a.run_dir);
  {
    std::ofstream eff(fs::path(a.run_dir) / "config.txt");
    eff << rc.describe();
  }
  if (!a.resume.empty()) {
    TrainState state = load_checkpoint(a.resume);
    if (rc.entry("max_iterations").source != Source::Default) {
      state.config.max_iterations = rc.train_config().max_iterations;
    }
    continue_training(state, manifest, run);
    std::cout << "resumed to iteration " << state.iteration << " in " << a.run_dir << '\n';
    return kExitOk;
  }
  const TrainConfig cfg = rc.train_config();
  const UNetConfig gcfg = rc.generator_config(first_image_size(manifest));
  const TrainState state = train(manifest, gcfg, cfg, run);
  if (!state.history.empty()) {
    std::cout << "trained " << state.iteration << " iterations; last losses "
              << format_loss_row(state.iteration, state.history.back()) << '\n';
  }
  return kExitOk;
}

// ---- infer ---------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::string sketch;
  std::string mask;
  bool no_mask = false;
  std::string out;
  std::string dataset;
  std::string out_dir;
  std::string split = "all";
};

int cmd_infer(const InferArgs& a) {
  Generator<Real> g = load_generator(a.checkpoint);
  if (!a.dataset.empty()) {
    if (a.out_dir.empty()) throw Error(ErrorKind::Config, "--dataset needs --out-dir");
    const DatasetManifest m = read_manifest(a.dataset);
    fs::create_directories(a.out_dir);
    const auto ids = m.ids(parse_split(a.split));
    for (const auto& id : ids) {
      const PairImages p = load_pair(m, id);
      write_png(fs::path(a.out_dir) / (id + ".png"), infer_normals(g, p.sketch, a.no_mask ? nullptr : &p.mask));
    }
    std::cout << "wrote " << ids.size() << " normal maps to " << a.out_dir << '\n';
    return kExitOk;
  }
  if (a.sketch.empty() || a.out.empty()) throw Error(ErrorKind::Config, "infer needs --sketch and --out");
  if (a.mask.empty() && !a.no_mask) throw Error(ErrorKind::Config, "give --mask or --no-mask");
  const Image sketch = read_png(a.sketch);
  const std::optional<Image> mask = a.no_mask ? std::nullopt : std::optional<Image>(read_png(a.mask));
  write_png(a.out, infer_normals(g, sketch, mask ? &*mask : nullptr));
  return kExitOk;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  std::string dataset;
  std::vector<std::string> methods;
  std::string report_dir;
  std::string split = "all";
  bool no_error_maps = false;
};

int cmd_eval(const EvalArgs& a) {
  const DatasetManifest m = read_manifest(a.dataset);
  std::vector<MethodOutputs> outputs;
  for (const auto& spec : a.methods) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      const fs::path dir(spec);
      outputs.push_back({dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string(), dir});
    } else {
      outputs.push_back({spec.substr(0, eq), spec.substr(eq + 1)});
    }
  }
  EvalOptions opt;
  opt.split = parse_split(a.split);
  opt.write_error_maps = !a.no_error_maps;
  const EvalReport report = evaluate_run(m, outputs, opt);
  std::cout << format_table(report);
  if (!a.report_dir.empty()) write_report(report, a.report_dir);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"normgen: sketch-to-normal-map generation with curvature-sampled point hints"};
  std::string footer = "Config keys (train flags or `key = value` lines; NORMGEN_SEED sets seed at lowest priority):\n";
  for (const auto& key : config_keys()) footer += "  " + key.name + " = " + key.default_value + "\n";
  app.footer(footer + "\n" + kExitCodeHelp);
  app.require_subcommand(1);

  DatasetArgs da;
  auto* ds = app.add_subcommand("dataset", "render synthetic shapes into sketch/normal/mask pairs");
  auto* specs_opt = ds->add_option("--specs", da.specs, "shape spec file (one shape per line)");
  auto* random_opt = ds->add_option("--random", da.random_count, "generate N random shapes instead of --specs");
  specs_opt->excludes(random_opt);
  ds->add_option("--kinds", da.kinds, "shape kinds for --random (sphere torus capsule union)")->delimiter(',');
  ds->add_option("--out", da.out, "output directory")->required();
  ds->add_option("--size", da.size, "image edge in pixels")->capture_default_str();
  ds->add_option("--seed", da.seed, "global seed (default: NORMGEN_SEED or 0)");
  ds->add_option("--keep-prob", da.keep_prob, "hint keep probability")->capture_default_str();
  ds->add_option("--t-hi", da.t_hi, "upper curvature threshold")->capture_default_str();
  ds->add_option("--t-lo", da.t_lo, "lower curvature threshold")->capture_default_str();
  ds->add_option("--val-fraction", da.val_fraction, "fraction of pairs assigned to validation")->capture_default_str();
  ds->add_option("--contour-nz", da.contour_nz, "n_z below which a pixel is drawn as contour")->capture_default_str();

  MaskArgs ma;
  auto* mk = app.add_subcommand("mask", "sample curvature point hints from a normal map");
  mk->add_option("--normal", ma.normal, "input normal map PNG");
  mk->add_option("--out", ma.out, "output mask PNG (sidecar .txt written beside it)");
  mk->add_option("--curvature-out", ma.curvature_out, "also write the quantized curvature map");
  mk->add_option("--dataset", ma.dataset, "regenerate every mask of a dataset in place");
  mk->add_option("--seed", ma.seed, "dropout seed for --normal (default: NORMGEN_SEED or 0)");
  mk->add_option("--keep-prob", ma.keep_prob, "hint keep probability")->capture_default_str();
  mk->add_option("--t-hi", ma.t_hi, "upper curvature threshold")->capture_default_str();
  mk->add_option("--t-lo", ma.t_lo, "lower curvature threshold")->capture_default_str();

  TrainArgs ta;
  std::map<std::string, CLI::Option*> key_options;
  auto* tr = app.add_subcommand("train", "adversarial training; every config key is also a flag");
  tr->add_option("--config", ta.config_file, "key = value config file");
  tr->add_option("--dataset", ta.dataset, "dataset directory or manifest.tsv")->required();
  tr->add_option("--run-dir", ta.run_dir, "output directory for losses.csv and checkpoints")->required();
  tr->add_option("--resume", ta.resume, "continue from a checkpoint file");
  tr->add_flag("--verbose", ta.verbose, "print progress to stderr");
  for (const auto& key : config_keys()) {
    key_options[key.name] = tr->add_option("--" + dashed(key.name), ta.overrides[key.name], key.help)
                                ->default_str(key.default_value)
                                ->group("Config keys");
  }

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "generate a normal map from a sketch (+ hint mask)");
  inf->add_option("--checkpoint", ia.checkpoint, "checkpoint file")->required();
  inf->add_option("--sketch", ia.sketch, "sketch PNG (0 = stroke)");
  auto* mask_opt = inf->add_option("--mask", ia.mask, "hint mask PNG");
  inf->add_flag("--no-mask", ia.no_mask, "all-zero hint channel")->excludes(mask_opt);
  inf->add_option("--out", ia.out, "output normal map PNG");
  inf->add_option("--dataset", ia.dataset, "run over every pair of a dataset instead");
  inf->add_option("--out-dir", ia.out_dir, "output directory for --dataset (<id>.png)");
  inf->add_option("--split", ia.split, "all | train | validation")->capture_default_str();

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "angular / L1 / L2 metrics over the normal regions");
  ev->add_option("--dataset", ea.dataset, "dataset directory or manifest.tsv")->required();
  ev->add_option("methods", ea.methods, "method output dirs, optionally name=dir")->required();
  ev->add_option("--report-dir", ea.report_dir, "write report.tsv, per_pair.tsv and report.txt here");
  ev->add_option("--split", ea.split, "all | train | validation")->capture_default_str();
  ev->add_flag("--no-error-maps", ea.no_error_maps, "skip <id>_error.png heatmaps");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (!argv_rev.empty()) argv_rev.pop_back();
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (ds->parsed()) {
      if (da.specs.empty() && da.random_count <= 0) throw Error(ErrorKind::Config, "dataset needs --specs or --random N");
      return cmd_dataset(da);
    }
    if (mk->parsed()) return cmd_mask(ma);
    if (tr->parsed()) return cmd_train(ta, key_options);
    if (inf->parsed()) return cmd_infer(ia);
    if (ev->parsed()) return cmd_eval(ea);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error (io): " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace normgen
