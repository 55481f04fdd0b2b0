#include "vpnet/volume.hpp"

#include <cmath>
#include <random>

namespace vpnet {

Matrix central_difference_jacobian(const MapFn& f, const Vector& x, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  const auto n = x.size();
  Matrix jac;
  Vector probe = x;
  for (Eigen::Index k = 0; k < n; ++k) {
    probe[k] = x[k] + step;
    const Vector plus = f(probe);
    probe[k] = x[k] - step;
    const Vector minus = f(probe);
    probe[k] = x[k];
    if (k == 0) jac.resize(plus.size(), n);
    jac.col(k) = (plus - minus) / (2.0 * step);
  }
  return jac;
}

double volume_deviation(const Network& net, const Vector& x, double step) {
  const Matrix jac = central_difference_jacobian(
      [&net](const Vector& v) { return network_forward(net, v); }, x, step);
  return std::abs(jac.determinant() - 1.0);
}

VolumeReport check_volume(const Network& net, const VolumeCheckOptions& options) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  const int dim = net.dimension;
  const Vector low = options.box_low.size() > 0 ? options.box_low : Vector::Constant(dim, -2.0);
  const Vector high = options.box_high.size() > 0 ? options.box_high : Vector::Constant(dim, 2.0);
  if (low.size() != dim || high.size() != dim) throw ShapeError("box dimension mismatch");

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  VolumeReport report;
  Vector x(dim);
  for (std::size_t p = 0; p < options.points; ++p) {
    for (int k = 0; k < dim; ++k) x[k] = low[k] + (high[k] - low[k]) * unit(rng);
    const double dev = volume_deviation(net, x, options.step);
    if (p == 0 || !(dev <= report.max_deviation)) {
      report.max_deviation = dev;
      report.worst_point = x;
    }
  }
  report.points = options.points;
  report.passed = report.max_deviation <= options.tol;
  return report;
}

}  // namespace vpnet
