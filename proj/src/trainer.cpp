#include "vpnet/trainer.hpp"

#include <cmath>
#include <sstream>

namespace vpnet {

TrainingDivergedError::TrainingDivergedError(long epoch, double loss, double learning_rate)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "non-finite training loss at epoch " << epoch << " (loss " << loss << ", lr "
           << learning_rate << ")";
        return os.str();
      }()),
      epoch_(epoch),
      loss_(loss),
      learning_rate_(learning_rate) {}

void TrainingConfig::validate() const {
  if (!(initial_lr > 0.0)) throw std::invalid_argument("initial learning rate must be positive");
  if (!(decay >= 1.0)) throw std::invalid_argument("decay coefficient must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epoch count must be nonnegative");
  if (log_interval < 1) throw std::invalid_argument("log interval must be >= 1");
  if (stop_at < -1 || stop_at > epochs) throw std::invalid_argument("stop epoch outside the run");
}

AdamState AdamState::zeros(std::size_t parameters) {
  AdamState s;
  s.first_moment = Vector::Zero(static_cast<Eigen::Index>(parameters));
  s.second_moment = Vector::Zero(static_cast<Eigen::Index>(parameters));
  return s;
}

double mse_loss(const Network& net, const Matrix& inputs, const Matrix& targets) {
  if (inputs.cols() == 0) throw std::invalid_argument("empty dataset");
  if (inputs.rows() != targets.rows() || inputs.cols() != targets.cols()) {
    throw ShapeError("inputs and targets differ in shape");
  }
  const Matrix residual = network_forward(net, inputs) - targets;
  return residual.squaredNorm() / static_cast<double>(residual.size());
}

double mse_loss(const Network& net, const TrajectoryDataset& dataset) {
  return mse_loss(net, dataset.inputs, dataset.targets);
}

std::pair<double, GradientBundle> loss_and_gradient(const Network& net, const Matrix& inputs,
                                                    const Matrix& targets) {
  if (inputs.cols() == 0) throw std::invalid_argument("empty dataset");
  if (inputs.rows() != targets.rows() || inputs.cols() != targets.cols()) {
    throw ShapeError("inputs and targets differ in shape");
  }
  Tape tape;
  const Matrix residual = forward_with_tape(net, inputs, tape) - targets;
  const auto n = static_cast<double>(residual.size());
  const double loss = residual.squaredNorm() / n;
  return {loss, backward(net, tape, Matrix((2.0 / n) * residual))};
}

double lr_at(long epoch, const TrainingConfig& cfg) {
  if (cfg.epochs <= 0) return cfg.initial_lr;
  return cfg.initial_lr *
         std::pow(cfg.decay, -static_cast<double>(epoch) / static_cast<double>(cfg.epochs));
}

void adam_step(Vector& params, const Vector& grads, AdamState& state, double lr) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("Adam state, parameters and gradients differ in size");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  params.array() -= lr * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

TrainingState initial_state(Network net) {
  TrainingState s;
  s.optimizer = AdamState::zeros(parameter_count(net));
  s.network = std::move(net);
  return s;
}

TrainingResult train(TrainingState state, const TrajectoryDataset& dataset,
                     const TrainingConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  validate(state.network);
  if (dataset.size() == 0) throw std::invalid_argument("empty dataset");
  if (dataset.dimension() != state.network.dimension) {
    throw ShapeError("dataset dimension does not match the network");
  }
  const long last = cfg.last_epoch();
  if (state.epoch > last) throw std::invalid_argument("state is already past the last epoch");

  TrainingResult result;
  auto record = [&](long epoch, double loss) {
    TrainingRecord r{epoch, loss, lr_at(epoch, cfg)};
    result.history.push_back(r);
    if (progress) progress(r);
  };

  Vector params = pack_parameters(state.network.modules);
  for (; state.epoch < last; ++state.epoch) {
    auto [loss, grads] = loss_and_gradient(state.network, dataset.inputs, dataset.targets);
    const double lr = lr_at(state.epoch, cfg);
    if (!std::isfinite(loss)) throw TrainingDivergedError(state.epoch, loss, lr);
    state.min_loss = std::min(state.min_loss, loss);
    if (state.epoch % cfg.log_interval == 0) record(state.epoch, loss);
    adam_step(params, grads.flat(), state.optimizer, lr);
    unpack_parameters(state.network.modules, params);
  }

  result.final_loss = mse_loss(state.network, dataset);
  if (!std::isfinite(result.final_loss)) {
    throw TrainingDivergedError(state.epoch, result.final_loss, lr_at(state.epoch, cfg));
  }
  state.min_loss = std::min(state.min_loss, result.final_loss);
  record(state.epoch, result.final_loss);
  result.state = std::move(state);
  return result;
}

TrainingResult train(Network net, const TrajectoryDataset& dataset, const TrainingConfig& cfg,
                     const ProgressFn& progress) {
  return train(initial_state(std::move(net)), dataset, cfg, progress);
}

}  // namespace vpnet
