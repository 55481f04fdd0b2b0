#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vpnet {

/// Array or state dimensions do not agree with a module or network.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A field was evaluated on the symmetry axis R = 0.
class SingularityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An integrator or rollout produced a non-finite state.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Training hit a non-finite loss.
class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(long epoch, double loss, double learning_rate);
  long epoch() const noexcept { return epoch_; }
  double loss() const noexcept { return loss_; }
  double learning_rate() const noexcept { return learning_rate_; }

 private:
  long epoch_;
  double loss_;
  double learning_rate_;
};

/// A residual module cannot be rewritten as an LA composition (singular or
/// ill-conditioned K blocks, or a width that is not a multiple of the
/// complement size).
class NotEmbeddableError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed checkpoint, dataset or config file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vpnet
