#pragma once

// Reverse-mode differentiation of network_forward with hand-derived
// vector-Jacobian products for the three module families. Everything works
// on batches: columns of the state matrix are independent samples and
// parameter gradients are summed over them.

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "vpnet/modules.hpp"

namespace vpnet {

struct ResidualTape {
  Matrix complement;  // (D - span) x N
  Matrix hidden;      // K * complement + b, w x N
  Matrix activated;   // act(hidden)
};

struct LinearTape {
  std::vector<Matrix> shear_inputs;  // input to factor m, indexed like `factors`
};

struct ActivationTape {
  Matrix complement;
};

using TapeEntry = std::variant<ResidualTape, LinearTape, ActivationTape>;

/// One entry per module in forward order. Single use.
struct Tape {
  std::vector<TapeEntry> entries;
  Eigen::Index samples = 0;
};

/// Gradients shaped exactly like the parameters they differentiate: each
/// entry of `modules` has the same alternative and shapes as the network's
/// module, with parameter fields holding derivatives.
struct GradientBundle {
  std::vector<Module> modules;
  Matrix input;  // D x N

  Vector flat() const { return pack_parameters(modules); }
};

Matrix forward_with_tape(const Network& net, const Matrix& states, Tape& tape);
std::pair<Vector, Tape> forward_with_tape(const Network& net, const Vector& x);

/// Gradient of sum_n <upstream[:, n], psi(x_n)> with respect to every
/// parameter and every input column.
GradientBundle backward(const Network& net, const Tape& tape, const Matrix& upstream);
GradientBundle backward(const Network& net, const Tape& tape, const Vector& upstream);

/// Relative error |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).
double relative_error(double analytic, double numeric);

struct GradcheckReport {
  std::vector<double> module_max_error;  // per module, over its parameters
  double input_max_error = 0.0;
  double max_error = 0.0;
  std::size_t worst_parameter = 0;  // index into the packed parameter vector
  std::size_t parameters_checked = 0;
  bool passed = false;
};

/// Analytic gradient provider; defaults to forward_with_tape + backward.
using GradientFn =
    std::function<GradientBundle(const Network&, const Vector& x, const Vector& upstream)>;

/// Compares analytic gradients of <upstream, psi(x)> with central differences
/// over every parameter and input coordinate. The upstream weights are fixed
/// (k-th entry (-1)^k (k + 1) / D) so the check is deterministic.
GradcheckReport gradcheck(const Network& net, const Vector& x, double step, double tol,
                          const GradientFn& analytic = {});

}  // namespace vpnet
