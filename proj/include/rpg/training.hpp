#pragma once

#include "rpg/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rpg {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;

  friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
};

struct TrainConfig {
  /// Weight of the scaling-factor regularizer.
  double lambda = 5e-5;
  /// KL weight in VAE mode, reached after the warm-up.
  double beta = 1e-3;
  /// Fraction of epochs over which the KL weight ramps linearly from 0.
  double kl_warmup_fraction = 0.1;
  double learning_rate = 1e-3;
  int batch_size = 64;
  AdamWConfig adamw;
  int epochs = 100;
  std::uint64_t seed = 0;
  /// Write a checkpoint every this many epochs; 0 writes only the final one.
  int save_every = 0;
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

template <typename Scalar>
struct OptimizerState {
  Parameters<Scalar> first_moment;
  Parameters<Scalar> second_moment;
  std::int64_t step = 0;
};

template <typename Scalar>
OptimizerState<Scalar> init_optimizer(const Parameters<Scalar>& params) {
  auto zeros = [](const std::string&, const MatrixX<Scalar>& m) -> MatrixX<Scalar> {
    return MatrixX<Scalar>::Zero(m.rows(), m.cols());
  };
  return {params.map(zeros), params.map(zeros), 0};
}

/// One decoupled-weight-decay Adam update of every tensor.
template <typename Scalar>
void adamw_step(Parameters<Scalar>& params, const Parameters<Scalar>& grads,
                OptimizerState<Scalar>& state, const AdamWConfig& config, double learning_rate);

struct LossComponents {
  double cd = 0;
  double reg = 0;
  double kl = 0;
  double total = 0;
};

/// Per-example loss graph. `noise` (U x 1) selects the reparameterized
/// sample z = mu + exp(logvar / 2) * noise in VAE mode; when null the mean is
/// decoded.
template <typename Scalar>
struct ExampleLoss {
  ad::Var<Scalar> total;
  LossComponents parts;
};

template <typename Scalar>
ExampleLoss<Scalar> example_loss_graph(const ParameterVars<Scalar>& params,
                                       const Points3<Scalar>& cloud, const GeneratorConfig& gen,
                                       double lambda, double beta, const VectorX<Scalar>* noise);

template <typename Scalar>
struct LossAndGradient {
  LossComponents loss;
  Parameters<Scalar> gradient;
};

/// Batch mean of cd + lambda * reg + beta * kl. `noise` is either empty or
/// holds one vector per cloud.
template <typename Scalar>
LossComponents total_loss(const Parameters<Scalar>& params, const std::vector<Points3<Scalar>>& batch,
                          const GeneratorConfig& gen, const TrainConfig& train,
                          const std::vector<VectorX<Scalar>>& noise = {});

template <typename Scalar>
LossAndGradient<Scalar> total_loss_with_gradient(const Parameters<Scalar>& params,
                                                 const std::vector<Points3<Scalar>>& batch,
                                                 const GeneratorConfig& gen,
                                                 const TrainConfig& train,
                                                 const std::vector<VectorX<Scalar>>& noise = {});

struct EpochLog {
  int epoch = 0;
  LossComponents mean;

  friend bool operator==(const EpochLog& a, const EpochLog& b) {
    return a.epoch == b.epoch && a.mean.cd == b.mean.cd && a.mean.reg == b.mean.reg &&
           a.mean.kl == b.mean.kl && a.mean.total == b.mean.total;
  }
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct FitResult {
  Parameters<Scalar> params;
  OptimizerState<Scalar> optimizer;
  std::vector<EpochLog> log;
};

struct FitOptions {
  /// When set, checkpoints (float precision) and train_log.csv go here.
  std::filesystem::path out_dir;
  /// Called after every epoch.
  std::function<void(const EpochLog&)> on_epoch;
  /// Worker threads for per-example gradients. Results do not depend on it.
  int threads = 1;
};

/// Trains encoder and generator on normalized clouds.
template <typename Scalar>
FitResult<Scalar> fit(const std::vector<PointCloud>& dataset, const GeneratorConfig& gen,
                      const TrainConfig& train, const FitOptions& options = {});

/// "epoch,cd,reg,kl,total" with a header row.
std::string format_log_csv(const std::vector<EpochLog>& log);

// ---------------------------------------------------------------------------
// Checkpoints.
//
// Layout: "RPGK", u32 version, u32 header length, header (JSON text), then the
// raw little-endian float32 payload of every manifest entry. Offsets in the
// manifest are relative to the start of the payload.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  GeneratorConfig generator;
  TrainConfig train;
  Parameters<float> params;
  OptimizerState<float> optimizer;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<char> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Also verifies every tensor shape against `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const GeneratorConfig& expected);

}  // namespace rpg
