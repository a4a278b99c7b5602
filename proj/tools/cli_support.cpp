#include "cli_support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "scoreis/checkpoint.hpp"
#include "scoreis/datasets.hpp"
#include "scoreis/errors.hpp"

namespace scoreis::cli {

using nlohmann::json;

namespace {

bool flag_present(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string out;
    for (const auto& e : v) out += (out.empty() ? "" : ",") + scalar_text(e);
    return out;
  }
  return v.dump();
}

}  // namespace

std::vector<std::string> merge_config_file(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::optional<std::string> path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;
  const json cfg = read_json(*path);
  if (!cfg.is_object()) throw ConfigError("config file '" + *path + "' must hold a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    if (flag_present(args, flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
      continue;
    }
    args.push_back(flag + "=" + scalar_text(value));
  }
  return args;
}

json resolved_config(const CLI::App& sub) {
  json out = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      std::string joined;
      for (const auto& r : results) joined += (joined.empty() ? "" : ",") + r;
      out[name] = opt->get_type_size() == 0 ? json(true) : json(joined);
    } else {
      out[name] = opt->get_type_size() == 0 ? json(false) : json(opt->get_default_str());
    }
  }
  return out;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || *end != '\0' || !std::isfinite(v))
      throw ConfigError(what + ": '" + cell + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  for (double v : parse_number_list(text, what)) {
    if (v != std::floor(v)) throw ConfigError(what + ": expected integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

Bounds2d parse_bounds(const std::string& text) {
  const auto v = parse_number_list(text, "--bounds");
  Bounds2d b;
  if (v.size() == 2)
    b = {v[0], v[1], v[0], v[1]};
  else if (v.size() == 4)
    b = {v[0], v[1], v[2], v[3]};
  else
    throw ConfigError("--bounds: expected lo,hi or x_lo,x_hi,y_lo,y_hi");
  if (!(b.x_min < b.x_max) || !(b.y_min < b.y_max)) throw ConfigError("--bounds: lower bound must be below upper");
  return b;
}

json bounds_to_json(const Bounds2d& b) { return json::array({b.x_min, b.x_max, b.y_min, b.y_max}); }

void write_json(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& out) { return out.string() + ".meta.json"; }

LoadedScore load_score(const std::string& spec, int steps, double eps_d) {
  LoadedScore out;
  const std::string prefix = "analytic:";
  if (spec.rfind(prefix, 0) == 0) {
    const std::string name = spec.substr(prefix.size());
    out.schedule.emplace(build_cosine_schedule(steps, eps_d));
    if (name == "8gaussians")
      out.score = std::make_unique<MixtureScore>(mixture_8gaussians(), *out.schedule);
    else if (name == "circles")
      out.score = std::make_unique<RingScore>(mixture_circles(), *out.schedule);
    else if (name == "normal")
      out.score = std::make_unique<MixtureScore>(standard_normal_mixture(2), *out.schedule);
    else
      throw ConfigError("unknown analytic score '" + name + "' (expected 8gaussians, circles or normal)");
    out.source = {{"kind", "analytic"}, {"name", name}};
    return out;
  }
  Checkpoint ckpt = load_checkpoint(spec);
  out.schedule.emplace(ckpt.schedule);
  out.source = {{"kind", "checkpoint"}, {"path", spec}, {"dataset_meta", ckpt.dataset_meta}};
  out.score = std::make_unique<MlpScore>(std::move(ckpt.params), std::move(ckpt.schedule));
  return out;
}

std::string render_ppm(const Eigen::MatrixXd& points, const Bounds2d& bounds, int bins) {
  const HistogramGrid grid = histogram2d(points, bounds, bins, bins);
  const double peak = static_cast<double>(grid.counts.maxCoeff());
  std::string out = "P6\n" + std::to_string(bins) + " " + std::to_string(bins) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(3 * bins * bins));
  // Stops at 0, 1/3, 2/3, 1.
  static constexpr double kStops[4][3] = {{0, 0, 0}, {0, 0, 255}, {255, 0, 0}, {255, 255, 0}};
  for (int row = 0; row < bins; ++row) {
    const int iy = bins - 1 - row;  // top row is y_max
    for (int ix = 0; ix < bins; ++ix) {
      const double c = static_cast<double>(grid.counts(ix, iy));
      const double v = peak > 0 ? std::log1p(c) / std::log1p(peak) : 0.0;
      const double pos = std::clamp(v, 0.0, 1.0) * 3.0;
      const int seg = std::min(2, static_cast<int>(pos));
      const double f = pos - seg;
      for (int ch = 0; ch < 3; ++ch) {
        const double val = kStops[seg][ch] + f * (kStops[seg + 1][ch] - kStops[seg][ch]);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(val))));
      }
    }
  }
  return out;
}

}  // namespace scoreis::cli
