#pragma once

#include <cstdint>
#include <functional>

#include "vpnet/modules.hpp"

namespace vpnet {

using MapFn = std::function<Vector(const Vector&)>;

/// Central-difference Jacobian; column k is (f(x + h e_k) - f(x - h e_k)) / 2h.
Matrix central_difference_jacobian(const MapFn& f, const Vector& x, double step);

/// |det J(x) - 1| with a central-difference Jacobian.
double volume_deviation(const Network& net, const Vector& x, double step = 1e-5);

struct VolumeReport {
  double max_deviation = 0.0;
  Vector worst_point;
  std::size_t points = 0;
  bool passed = false;
};

struct VolumeCheckOptions {
  std::size_t points = 1000;
  double tol = 1e-6;
  double step = 1e-5;
  Vector box_low;   // empty: [-2, 2]^D
  Vector box_high;
  std::uint64_t seed = 0;
};

/// max |det J - 1| over uniformly sampled points of the box.
VolumeReport check_volume(const Network& net, const VolumeCheckOptions& options = {});

}  // namespace vpnet
