#include "scoreis/checkpoint.hpp"

#include <fstream>
#include <optional>
#include <sstream>

#include "scoreis/datasets.hpp"
#include "scoreis/errors.hpp"

namespace scoreis {

using nlohmann::json;

namespace {

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw IoError("checkpoint: missing field '" + where + key + "'");
  return obj.at(key);
}

template <typename T>
T get_as(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw IoError("checkpoint: field '" + where + key + "' has the wrong type");
  }
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows, const std::string& where) {
  if (!rows.is_array() || rows.empty() || !rows[0].is_array() || rows[0].empty())
    throw IoError("checkpoint: field '" + where + "' must be a non-empty matrix");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].is_array() || rows[i].size() != rows[0].size())
      throw IoError("checkpoint: field '" + where + "' has ragged rows");
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      if (!rows[i][j].is_number()) throw IoError("checkpoint: field '" + where + "' holds a non-number");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
    }
  }
  return m;
}

}  // namespace

json checkpoint_to_json(const Checkpoint& ckpt) {
  json weights = json::array();
  for (const auto& w : ckpt.params.weights) weights.push_back(matrix_to_json(w));
  json biases = json::array();
  for (const auto& b : ckpt.params.biases) biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  const TrainingMeta& tm = ckpt.training_meta;
  return json{{"version", kCheckpointVersion},
              {"params", {{"weights", weights}, {"biases", biases}, {"d_emb", ckpt.params.time_dim}}},
              {"schedule", {{"T", ckpt.schedule.steps()}, {"eps_d", ckpt.schedule.eps_d()}, {"beta", ckpt.schedule.betas()}}},
              {"dataset_meta", ckpt.dataset_meta},
              {"training_meta",
               {{"epochs", tm.epochs},
                {"batch", tm.batch},
                {"lr", tm.lr},
                {"seed", tm.seed},
                {"final_loss", tm.final_loss},
                {"optimizer", tm.optimizer}}}};
}

Checkpoint checkpoint_from_json(const json& doc) {
  const int version = get_as<int>(doc, "version", "");
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: field 'version' is " + std::to_string(version) + ", expected " +
                  std::to_string(kCheckpointVersion));

  const json& p = field(doc, "params", "");
  const json& weights = field(p, "weights", "params.");
  const json& biases = field(p, "biases", "params.");
  if (!weights.is_array() || !biases.is_array() || weights.size() != biases.size())
    throw IoError("checkpoint: field 'params.weights' and 'params.biases' disagree in length");
  MlpScoreParams params;
  params.time_dim = get_as<int>(p, "d_emb", "params.");
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const std::string where = "params.weights[" + std::to_string(k) + "]";
    params.weights.push_back(matrix_from_json(weights[k], where));
    const std::string bwhere = "params.biases[" + std::to_string(k) + "]";
    std::vector<double> b;
    try {
      b = biases[k].get<std::vector<double>>();
    } catch (const json::exception&) {
      throw IoError("checkpoint: field '" + bwhere + "' must be a list of numbers");
    }
    params.biases.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())));
  }
  try {
    params.validate();
  } catch (const std::exception& e) {
    throw IoError(std::string("checkpoint: field 'params' is inconsistent: ") + e.what());
  }

  const json& s = field(doc, "schedule", "");
  const int steps = get_as<int>(s, "T", "schedule.");
  const double eps_d = get_as<double>(s, "eps_d", "schedule.");
  const auto beta = get_as<std::vector<double>>(s, "beta", "schedule.");
  if (static_cast<int>(beta.size()) != steps) throw IoError("checkpoint: field 'schedule.beta' must hold T values");
  std::optional<NoiseSchedule> schedule;
  try {
    schedule.emplace(steps, eps_d, beta);
  } catch (const std::exception& e) {
    throw IoError(std::string("checkpoint: field 'schedule' is invalid: ") + e.what());
  }

  const json& t = field(doc, "training_meta", "");
  TrainingMeta tm;
  tm.epochs = get_as<int>(t, "epochs", "training_meta.");
  tm.batch = get_as<std::int64_t>(t, "batch", "training_meta.");
  tm.lr = get_as<double>(t, "lr", "training_meta.");
  tm.seed = get_as<std::uint64_t>(t, "seed", "training_meta.");
  tm.final_loss = get_as<double>(t, "final_loss", "training_meta.");
  tm.optimizer = get_as<std::string>(t, "optimizer", "training_meta.");

  return Checkpoint{std::move(params), std::move(*schedule), field(doc, "dataset_meta", ""), tm};
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << checkpoint_to_json(ckpt).dump(1) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(doc);
}

json dataset_meta_for(const std::string& name) {
  if (name == "spiral")
    return {{"name", name},
            {"noise_std", spiral::kNoiseStd},
            {"margin_stds", spiral::kMarginStds},
            {"raw_x", {spiral::kRawXMin, spiral::kRawXMax}},
            {"raw_y", {spiral::kRawYMin, spiral::kRawYMax}}};
  if (name == "circles")
    return {{"name", name},
            {"radii", {circles::kInnerRadius, circles::kOuterRadius}},
            {"noise_std", circles::kNoiseStd}};
  if (name == "pinwheel")
    return {{"name", name},
            {"arms", pinwheel::kArms},
            {"radial_std", pinwheel::kRadialStd},
            {"angular_std", pinwheel::kAngularStd},
            {"swirl", pinwheel::kSwirl},
            {"scale", pinwheel::kScale}};
  if (name == "8gaussians")
    return {{"name", name}, {"radius", eight_gaussians::kRadius}, {"std", eight_gaussians::kStd}};
  return {{"name", name}};
}

}  // namespace scoreis
