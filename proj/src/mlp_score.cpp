#include <cmath>
#include <numeric>
#include <string>

#include "scoreis/autodiff.hpp"
#include "scoreis/rng.hpp"
#include "scoreis/score_models.hpp"

namespace scoreis {

namespace {

constexpr int kHiddenLayers = 4;
constexpr std::uint64_t kInitTag = 0x1A17ULL;

Eigen::MatrixXd relu(const Eigen::MatrixXd& m) { return m.cwiseMax(0.0); }

// Network input rows [x_t, emb(t)] and targets z for a minibatch.
struct Minibatch {
  ad::Storage input;
  ad::Storage target;
};

}  // namespace

Eigen::VectorXd time_embedding(int t, const NoiseSchedule& schedule) {
  constexpr int half = kTimeEmbeddingDim / 2;
  const double tau = static_cast<double>(t) / schedule.steps();
  Eigen::VectorXd out(kTimeEmbeddingDim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(1000.0, static_cast<double>(i) / (half - 1));
    out(i) = std::sin(freq * tau);
    out(half + i) = std::cos(freq * tau);
  }
  return out;
}

void MlpScoreParams::validate() const {
  if (weights.size() != kHiddenLayers + 1 || biases.size() != weights.size())
    throw ConfigError("MLP: expected " + std::to_string(kHiddenLayers + 1) + " layers");
  if (time_dim <= 0 || weights.front().rows() <= time_dim) throw ConfigError("MLP: bad input width");
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (biases[k].size() != weights[k].cols()) throw ConfigError("MLP: bias " + std::to_string(k) + " has wrong size");
    if (k > 0 && weights[k].rows() != weights[k - 1].cols())
      throw ConfigError("MLP: layer " + std::to_string(k) + " does not chain");
    if (!weights[k].allFinite() || !biases[k].allFinite()) throw ConfigError("MLP: non-finite parameter");
  }
  if (weights.back().cols() != input_dim()) throw ConfigError("MLP: output width must equal data dimension");
}

MlpScoreParams init_mlp_params(Eigen::Index data_dim, Eigen::Index hidden, std::uint64_t seed) {
  if (data_dim < 1 || hidden < 1) throw ConfigError("MLP: dimensions must be positive");
  MlpScoreParams p;
  std::vector<Eigen::Index> sizes{data_dim + kTimeEmbeddingDim};
  for (int i = 0; i < kHiddenLayers; ++i) sizes.push_back(hidden);
  sizes.push_back(data_dim);
  RngStream rng(derive_seed(seed, kInitTag), 0);
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[k]));
    Eigen::MatrixXd w(sizes[k], sizes[k + 1]);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = bound * (2.0 * rng.uniform() - 1.0);
    Eigen::VectorXd b(sizes[k + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = bound * (2.0 * rng.uniform() - 1.0);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

MlpScore::MlpScore(MlpScoreParams params, NoiseSchedule schedule)
    : params_(std::move(params)), schedule_(std::move(schedule)) {
  params_.validate();
  const Eigen::MatrixXd& w0 = params_.weights.front();
  first_layer_offset_.resize(schedule_.steps() + 1, w0.cols());
  for (int t = 0; t <= schedule_.steps(); ++t) {
    const Eigen::VectorXd emb = time_embedding(t, schedule_);
    first_layer_offset_.row(t) =
        (emb.transpose() * w0.bottomRows(params_.time_dim)) + params_.biases.front().transpose();
  }
}

Eigen::MatrixXd MlpScore::epsilon_batch(const Eigen::MatrixXd& points, int t) const {
  if (t < 1 || t > schedule_.steps()) throw ContractViolation("MlpScore: step must lie in 1..T");
  if (points.cols() != dim()) throw ContractViolation("MlpScore: points have wrong dimension");
  const Eigen::MatrixXd& w0 = params_.weights.front();
  Eigen::MatrixXd h = (points * w0.topRows(dim())).rowwise() + first_layer_offset_.row(t);
  h = relu(h);
  for (std::size_t k = 1; k < params_.weights.size(); ++k) {
    Eigen::MatrixXd next = (h * params_.weights[k]).rowwise() + params_.biases[k].transpose();
    h = (k + 1 < params_.weights.size()) ? relu(next) : std::move(next);
  }
  return h;
}

Eigen::MatrixXd MlpScore::score_batch(const Eigen::MatrixXd& points, int t) const {
  const double scale = -1.0 / std::sqrt(1.0 - schedule_.alpha_bar(t));
  return epsilon_batch(points, t) * scale;
}

TrainResult train_mlp_score(const SampleBatch& dataset, const NoiseSchedule& schedule, const TrainHyper& hyper,
                            const EpochCallback& on_epoch) {
  if (hyper.epochs < 1 || hyper.batch < 1 || !(hyper.lr > 0.0) || hyper.hidden < 1)
    throw ConfigError("train: epochs, batch, lr and hidden must be positive");
  const Eigen::Index n = dataset.count();
  const Eigen::Index d = dataset.dim();
  if (n < 1) throw ConfigError("train: empty dataset");

  TrainResult result;
  MlpScoreParams& params = result.params;
  params = init_mlp_params(d, hyper.hidden, hyper.seed);
  const std::size_t layers = params.weights.size();

  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;
  for (std::size_t k = 0; k < layers; ++k) {
    m_w.push_back(Eigen::MatrixXd::Zero(params.weights[k].rows(), params.weights[k].cols()));
    v_w.push_back(m_w.back());
    m_b.push_back(Eigen::VectorXd::Zero(params.biases[k].size()));
    v_b.push_back(m_b.back());
  }

  std::vector<Eigen::VectorXd> embeddings;
  embeddings.reserve(static_cast<std::size_t>(schedule.steps()) + 1);
  for (int t = 0; t <= schedule.steps(); ++t) embeddings.push_back(time_embedding(t, schedule));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  long long step = 0;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    RngStream rng(derive_seed(hyper.seed, static_cast<std::uint64_t>(epoch)), 0);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += hyper.batch) {
      const Eigen::Index b = std::min(hyper.batch, n - start);
      Minibatch mb{ad::Storage(b, d + params.time_dim), ad::Storage(b, d)};
      for (Eigen::Index r = 0; r < b; ++r) {
        const int t = 1 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(schedule.steps()));
        const double ab = schedule.alpha_bar(t);
        for (Eigen::Index c = 0; c < d; ++c) mb.target(r, c) = rng.normal();
        const auto x0 = dataset.data.row(order[static_cast<std::size_t>(start + r)]);
        mb.input.row(r).head(d) = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * mb.target.row(r);
        mb.input.row(r).tail(params.time_dim) = embeddings[static_cast<std::size_t>(t)].transpose();
      }

      ad::Tape tape;
      std::vector<ad::NodeId> w_ids, b_ids;
      ad::NodeId h = tape.leaf(ad::Tensor::matrix(mb.input));
      for (std::size_t k = 0; k < layers; ++k) {
        w_ids.push_back(tape.leaf(ad::Tensor::matrix(params.weights[k])));
        b_ids.push_back(tape.leaf(ad::Tensor::vector(params.biases[k])));
      }
      ad::NodeId loss;
      try {
        for (std::size_t k = 0; k < layers; ++k) {
          h = tape.broadcast_add(tape.matmul(h, w_ids[k]), b_ids[k]);
          if (k + 1 < layers) h = tape.relu(h);
        }
        const ad::NodeId diff = tape.sub(tape.leaf(ad::Tensor::matrix(mb.target)), h);
        loss = tape.scale(tape.norm_sq(diff), 1.0 / static_cast<double>(b));
      } catch (const NumericalError&) {
        throw NumericalError("train: non-finite activations at epoch " + std::to_string(epoch) +
                             " (learning rate too high?)");
      }
      const double batch_loss = tape.value(loss).item();
      if (!std::isfinite(batch_loss))
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + " (learning rate too high?)");
      loss_sum += batch_loss * static_cast<double>(b);

      const ad::Gradients grads = tape.backward(loss);
      ++step;
      const double c1 = 1.0 - std::pow(hyper.adam_beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(hyper.adam_beta2, static_cast<double>(step));
      auto adam = [&](auto& param, auto& m, auto& v, const ad::Storage& g) {
        m = hyper.adam_beta1 * m + (1.0 - hyper.adam_beta1) * g;
        v = hyper.adam_beta2 * v + (1.0 - hyper.adam_beta2) * g.cwiseAbs2();
        param.array() -= hyper.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + hyper.adam_eps);
      };
      for (std::size_t k = 0; k < layers; ++k) {
        adam(params.weights[k], m_w[k], v_w[k], grads[w_ids[k]].mat());
        const ad::Storage& gb = grads[b_ids[k]].mat();
        adam(params.biases[k], m_b[k], v_b[k], gb);
      }
    }
    const double epoch_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      throw NumericalError("train: non-finite epoch loss at epoch " + std::to_string(epoch));
    result.epoch_losses.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

double denoising_loss_at(const MlpScore& model, const Eigen::MatrixXd& clean, int t, std::uint64_t seed) {
  const NoiseSchedule& schedule = model.schedule();
  const double ab = schedule.alpha_bar(t);
  Eigen::MatrixXd z(clean.rows(), clean.cols());
  for (Eigen::Index i = 0; i < clean.rows(); ++i) {
    RngStream rng(seed, static_cast<std::uint64_t>(i));
    for (Eigen::Index j = 0; j < clean.cols(); ++j) z(i, j) = rng.normal();
  }
  const Eigen::MatrixXd noisy = std::sqrt(ab) * clean + std::sqrt(1.0 - ab) * z;
  return (z - model.epsilon_batch(noisy, t)).rowwise().squaredNorm().mean();
}

}  // namespace scoreis
