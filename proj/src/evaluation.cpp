#include "normgen/evaluation.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace normgen {
namespace fs = std::filesystem;

BinaryMask foreground_mask(const Image& ground_truth) {
  return decode_normals<double>(ground_truth).foreground;
}

MetricsRecord evaluate_pair(const std::string& id, const Image& ground_truth, const Image& generated) {
  if (generated.width != ground_truth.width || generated.height != ground_truth.height) {
    throw Error(ErrorKind::ShapeMismatch, "generated image for " + id + " has a different size");
  }
  const auto y = decode_normals<double>(ground_truth);
  const auto y_gen = decode_normals<double>(generated);
  MetricsRecord r;
  r.id = id;
  r.foreground_pixels = y.foreground.count();
  r.angular_deg = angular_error(y, y_gen, y.foreground);
  r.l1 = l1_metric(y, y_gen, y.foreground);
  r.l2 = l2_metric(y, y_gen, y.foreground);
  return r;
}

std::array<std::uint8_t, 3> ramp_color(double angle_deg) {
  const double t = std::clamp(angle_deg / 90.0, 0.0, 1.0);
  auto channel = [t](double shift) {
    return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(3.0 * t - shift, 0.0, 1.0)));
  };
  return {channel(0.0), channel(1.0), channel(2.0)};
}

Image error_map(const Image& ground_truth, const Image& generated, const BinaryMask& fg) {
  const auto y = decode_normals<double>(ground_truth);
  const auto y_gen = decode_normals<double>(generated);
  detail::require_comparable(y, y_gen, fg);
  Image out(y.width(), y.height(), 3, 0);
  for (int r = 0; r < y.height(); ++r)
    for (int c = 0; c < y.width(); ++c) {
      if (!fg(r, c)) continue;
      const auto rgb = ramp_color(angle_deg<double>(y.at(c, r), y_gen.at(c, r)));
      for (int k = 0; k < 3; ++k) out.at(c, r, k) = rgb[k];
    }
  return out;
}

MethodReport summarize(std::string method, std::vector<MetricsRecord> pairs) {
  MethodReport m;
  m.method = std::move(method);
  m.mean.id = "mean";
  for (const auto& p : pairs) {
    m.mean.angular_deg += p.angular_deg;
    m.mean.l1 += p.l1;
    m.mean.l2 += p.l2;
    m.mean.foreground_pixels += p.foreground_pixels;
  }
  if (!pairs.empty()) {
    const double n = static_cast<double>(pairs.size());
    m.mean.angular_deg /= n;
    m.mean.l1 /= n;
    m.mean.l2 /= n;
  }
  m.pairs = std::move(pairs);
  return m;
}

EvalReport evaluate_run(const DatasetManifest& manifest, const std::vector<MethodOutputs>& methods,
                        const EvalOptions& options) {
  if (methods.empty()) throw Error(ErrorKind::EmptyInput, "no methods to evaluate");
  const auto ids = manifest.ids(options.split);
  if (ids.empty()) throw Error(ErrorKind::EmptyInput, "no pairs in the selected split");

  std::vector<std::string> missing;
  for (const auto& m : methods)
    for (const auto& id : ids)
      if (!fs::exists(m.dir / (id + ".png"))) missing.push_back(m.name + ":" + id);
  if (!missing.empty()) {
    std::string list;
    for (const auto& s : missing) list += (list.empty() ? "" : ", ") + s;
    throw Error(ErrorKind::MissingGenerated, "missing generated images: " + list);
  }

  EvalReport report;
  for (const auto& m : methods) {
    std::vector<MetricsRecord> records;
    for (const auto& id : ids) {
      const Image truth = read_png(manifest.root / manifest.entry(id).normal);
      const Image generated = read_png(m.dir / (id + ".png"));
      records.push_back(evaluate_pair(id, truth, generated));
      if (options.write_error_maps) {
        write_png(m.dir / (id + "_error.png"), error_map(truth, generated, foreground_mask(truth)));
      }
    }
    report.methods.push_back(summarize(m.name, std::move(records)));
  }
  return report;
}

namespace {

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

std::string format_table(const EvalReport& report) {
  std::size_t name_w = 6;
  for (const auto& m : report.methods) name_w = std::max(name_w, m.method.size());
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%*s | %10s %8s %8s\n", static_cast<int>(name_w), "Method", "Angular", "L1", "L2");
  os << line << std::string(name_w, '-') << "-+-" << std::string(28, '-') << '\n';
  for (const auto& m : report.methods) {
    std::snprintf(line, sizeof line, "%*s | %9s\xC2\xB0 %8s %8s\n", static_cast<int>(name_w), m.method.c_str(),
                  fixed3(m.mean.angular_deg).c_str(), fixed3(m.mean.l1).c_str(), fixed3(m.mean.l2).c_str());
    os << line;
  }
  return os.str();
}

void write_report(const EvalReport& report, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create report directory " + out_dir.string());
  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + p.string());
    return out;
  };
  {
    auto out = open(out_dir / "report.tsv");
    out << "method\tangular_deg\tl1\tl2\tpairs\tforeground_pixels\n";
    for (const auto& m : report.methods) {
      out << m.method << '\t' << fixed3(m.mean.angular_deg) << '\t' << fixed3(m.mean.l1) << '\t'
          << fixed3(m.mean.l2) << '\t' << m.pairs.size() << '\t' << m.mean.foreground_pixels << '\n';
    }
  }
  {
    auto out = open(out_dir / "per_pair.tsv");
    out << "method\tid\tangular_deg\tl1\tl2\tforeground_pixels\n";
    char buf[256];
    for (const auto& m : report.methods)
      for (const auto& p : m.pairs) {
        std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f", p.angular_deg, p.l1, p.l2);
        out << m.method << '\t' << p.id << '\t' << buf << '\t' << p.foreground_pixels << '\n';
      }
  }
  open(out_dir / "report.txt") << format_table(report);
}

}  // namespace normgen
