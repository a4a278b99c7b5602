#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "scoreis/datasets.hpp"
#include "scoreis/schedule.hpp"

namespace scoreis {

/// Produces grad_x log p_t(x) of a diffusion-perturbed base density.
///
/// Batch calls take one state per row; the result for a row depends only on
/// that row, t and the model.
class ScoreFunction {
 public:
  virtual ~ScoreFunction() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Eigen::MatrixXd score_batch(const Eigen::MatrixXd& points, int t) const = 0;

  Eigen::VectorXd score(const Eigen::VectorXd& x, int t) const;
};

/// Exact score of a Gaussian mixture under the VP diffusion; perturbed
/// mixtures are precomputed for every step.
class MixtureScore final : public ScoreFunction {
 public:
  MixtureScore(GaussianMixture base, const NoiseSchedule& schedule);

  Eigen::Index dim() const override { return base_.dim(); }
  Eigen::MatrixXd score_batch(const Eigen::MatrixXd& points, int t) const override;
  const GaussianMixture& base() const { return base_; }

 private:
  GaussianMixture base_;
  std::vector<GaussianMixture> per_step_;
};

/// Exact score of a ring mixture (the Circles density) under the VP diffusion.
class RingScore final : public ScoreFunction {
 public:
  RingScore(RingMixture base, const NoiseSchedule& schedule);

  Eigen::Index dim() const override { return 2; }
  Eigen::MatrixXd score_batch(const Eigen::MatrixXd& points, int t) const override;
  const RingMixture& base() const { return base_; }

 private:
  RingMixture base_;
  std::vector<RingMixture> per_step_;
};

/// grad_x log p_t(x) for p_0 = gm, computed from the closed-form perturbed mixture.
Eigen::VectorXd mixture_perturbed_score(const GaussianMixture& gm, const NoiseSchedule& schedule, int t,
                                        const Eigen::VectorXd& x);

inline constexpr int kTimeEmbeddingDim = 32;

/// Sinusoidal features [sin(w_i tau)..., cos(w_i tau)...], tau = t / T, with
/// 16 frequencies spaced geometrically from 1 to 1000.
Eigen::VectorXd time_embedding(int t, const NoiseSchedule& schedule);

/// Fully connected noise predictor: [d + d_emb] -> h -> h -> h -> h -> d,
/// ReLU on hidden layers. weights[k] is (fan_in x fan_out).
struct MlpScoreParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  int time_dim = kTimeEmbeddingDim;

  Eigen::Index input_dim() const { return weights.front().rows() - time_dim; }
  Eigen::Index hidden() const { return weights.front().cols(); }
  void validate() const;
};

/// Uniform(+-1/sqrt(fan_in)) initialization.
MlpScoreParams init_mlp_params(Eigen::Index data_dim, Eigen::Index hidden, std::uint64_t seed);

/// Score from an epsilon-predicting MLP: score = -eps(x, t) / sqrt(1 - alpha_bar_t).
class MlpScore final : public ScoreFunction {
 public:
  MlpScore(MlpScoreParams params, NoiseSchedule schedule);

  Eigen::Index dim() const override { return params_.input_dim(); }
  Eigen::MatrixXd score_batch(const Eigen::MatrixXd& points, int t) const override;
  /// Raw network output for states at step t (1 <= t <= T).
  Eigen::MatrixXd epsilon_batch(const Eigen::MatrixXd& points, int t) const;

  const MlpScoreParams& params() const { return params_; }
  const NoiseSchedule& schedule() const { return schedule_; }

 private:
  MlpScoreParams params_;
  NoiseSchedule schedule_;
  // Per step: time embedding pushed through the time rows of the first layer, plus bias.
  Eigen::MatrixXd first_layer_offset_;
};

struct TrainHyper {
  int epochs = 300;
  Eigen::Index batch = 1024;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  Eigen::Index hidden = 128;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct TrainResult {
  MlpScoreParams params;
  std::vector<double> epoch_losses;
};

/// Called after every epoch with (epoch index starting at 1, epoch-average loss).
using EpochCallback = std::function<void(int, double)>;

/// Denoising score matching with uniform t in {1..T} and Adam.
TrainResult train_mlp_score(const SampleBatch& dataset, const NoiseSchedule& schedule, const TrainHyper& hyper,
                            const EpochCallback& on_epoch = {});

/// Mean over rows of ||z - eps(sqrt(ab) x0 + sqrt(1 - ab) z, t)||^2 at a fixed t.
double denoising_loss_at(const MlpScore& model, const Eigen::MatrixXd& clean, int t, std::uint64_t seed);

}  // namespace scoreis
