#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scoreis/evaluation.hpp"
#include "scoreis/schedule.hpp"
#include "scoreis/score_models.hpp"

namespace scoreis::cli {

inline constexpr int kFormatVersion = 1;

enum ExitCode : int { kOk = 0, kUsage = 2, kIo = 3, kNumerical = 4, kVerification = 5 };

/// A verify suite ran and at least one check failed.
struct VerificationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Appends values from a `--config file.json` to argv for every key not
/// already given on the command line.
std::vector<std::string> merge_config_file(int argc, char** argv);

/// Every long option of `sub` with its resolved value.
nlohmann::json resolved_config(const CLI::App& sub);

std::vector<double> parse_number_list(const std::string& text, const std::string& what);
std::vector<int> parse_int_list(const std::string& text, const std::string& what);
/// "lo,hi" for both axes or "x_lo,x_hi,y_lo,y_hi".
Bounds2d parse_bounds(const std::string& text);
nlohmann::json bounds_to_json(const Bounds2d& b);

void write_json(const nlohmann::json& doc, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& out);

struct LoadedScore {
  std::unique_ptr<ScoreFunction> score;
  std::optional<NoiseSchedule> schedule;
  nlohmann::json source;
};

/// `analytic:{8gaussians|circles|normal}` or a checkpoint path. Analytic
/// scores use a cosine schedule with the given T and eps_d.
LoadedScore load_score(const std::string& spec, int steps, double eps_d);

/// P6 image, log-scaled counts, black -> blue -> red -> yellow.
std::string render_ppm(const Eigen::MatrixXd& points, const Bounds2d& bounds, int bins);

}  // namespace scoreis::cli
