#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "vpnet/dynamics.hpp"
#include "vpnet/grad.hpp"
#include "vpnet/modules.hpp"

namespace vpnet {

struct TrainingConfig {
  double initial_lr = 0.01;
  double decay = 1000.0;  // lr falls by this factor over the whole run
  long epochs = 300000;
  std::uint64_t seed = 0;
  long log_interval = 1000;
  /// Stop after this epoch (the schedule still spans `epochs`); -1 runs to
  /// the end. Used to checkpoint part of a run.
  long stop_at = -1;

  long last_epoch() const { return stop_at < 0 ? epochs : stop_at; }
  void validate() const;
};

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros(std::size_t parameters);
};

struct TrainingRecord {
  long epoch = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
};

/// (1 / (D I)) sum_i ||psi(x_i) - y_i||^2.
double mse_loss(const Network& net, const TrajectoryDataset& dataset);
double mse_loss(const Network& net, const Matrix& inputs, const Matrix& targets);

/// Loss and its gradient for one full batch.
std::pair<double, GradientBundle> loss_and_gradient(const Network& net, const Matrix& inputs,
                                                    const Matrix& targets);

/// lr_0 * d^(-n / N).
double lr_at(long epoch, const TrainingConfig& cfg);

/// Bias-corrected Adam update, in place.
void adam_step(Vector& params, const Vector& grads, AdamState& state, double lr);

/// Everything needed to continue a run exactly where it stopped.
struct TrainingState {
  Network network;
  AdamState optimizer;
  long epoch = 0;
  double min_loss = std::numeric_limits<double>::infinity();
};

struct TrainingResult {
  TrainingState state;
  /// Loss before the update of every epoch that is a multiple of the log
  /// interval, then the loss of the final parameters at the last epoch.
  std::vector<TrainingRecord> history;
  double final_loss = 0.0;
};

using ProgressFn = std::function<void(const TrainingRecord&)>;

TrainingState initial_state(Network net);

/// Full-batch Adam from `state.epoch` up to `cfg.last_epoch()`. Deterministic.
/// Throws TrainingDivergedError on a non-finite loss.
TrainingResult train(TrainingState state, const TrajectoryDataset& dataset,
                     const TrainingConfig& cfg, const ProgressFn& progress = {});
TrainingResult train(Network net, const TrajectoryDataset& dataset, const TrainingConfig& cfg,
                     const ProgressFn& progress = {});

}  // namespace vpnet
