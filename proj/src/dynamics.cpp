#include "vpnet/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace vpnet {

namespace {

constexpr double kFieldStrength = 1e-2;

double planar_radius(const Vector3& x) { return std::hypot(x[0], x[1]); }

double require_radius(const Vector3& x) {
  const double r = planar_radius(x);
  if (!(r > 0.0)) throw SingularityError("field evaluated on the axis R = 0");
  return r;
}

bool finite(const Vector& v) { return v.allFinite(); }

}  // namespace

std::string_view to_string(System system) {
  return system == System::kVolterra ? "volterra" : "charged_particle";
}

System parse_system(std::string_view name) {
  if (name == "volterra") return System::kVolterra;
  if (name == "charged_particle") return System::kChargedParticle;
  throw std::invalid_argument("unknown system '" + std::string(name) + "'");
}

Vector3 volterra_rhs(const Vector3& y) {
  const double p = y[0], q = y[1], r = y[2];
  return {p * (q - r), q * (r - p), r * (p - q)};
}

VectorField volterra_field() {
  VectorField f;
  f.dimension = 3;
  f.rhs = [](const Vector& y) -> Vector {
    if (y.size() != 3) throw ShapeError("Volterra state must have 3 components");
    return volterra_rhs(Vector3(y[0], y[1], y[2]));
  };
  f.divergence = [](const Vector& y) {
    return (y[1] - y[2]) + (y[2] - y[0]) + (y[0] - y[1]);
  };
  return f;
}

double volterra_sum(const Vector& y) { return y[0] + y[1] + y[2]; }
double volterra_product(const Vector& y) { return y[0] * y[1] * y[2]; }

Vector3 ElectromagneticField::E(const Vector3& x) const {
  const double r = require_radius(x);
  if (!electric) return Vector3::Zero();
  return kFieldStrength / (r * r * r) * Vector3(x[0], x[1], 0.0);
}

Vector3 ElectromagneticField::B(const Vector3& x) const {
  const double r = require_radius(x);
  if (!magnetic) return Vector3::Zero();
  return {0.0, 0.0, r};
}

std::pair<Vector3, Vector3> lorentz_rhs(const ParticleState& s, const ElectromagneticField& field) {
  return {s.v, field.E(s.x) + s.v.cross(field.B(s.x))};
}

VectorField lorentz_field() {
  VectorField f;
  f.dimension = 6;
  f.rhs = [](const Vector& y) -> Vector {
    if (y.size() != 6) throw ShapeError("particle state must have 6 components");
    ParticleState s{y.head<3>(), y.tail<3>()};
    auto [dx, dv] = lorentz_rhs(s);
    Vector out(6);
    out << dx, dv;
    return out;
  };
  // dx/dt depends only on v; (v x B)_k does not involve v_k.
  f.divergence = [](const Vector&) { return 0.0; };
  return f;
}

double energy(const ParticleState& s) {
  const double r = require_radius(s.x);
  return 0.5 * (s.v[0] * s.v[0] + s.v[1] * s.v[1]) + kFieldStrength / r;
}

ParticleState particle_from_planar(const Vector& state) {
  if (state.size() != 4) throw ShapeError("planar particle state must have 4 components");
  return {Vector3(state[0], state[1], 0.0), Vector3(state[2], state[3], 0.0)};
}

Vector planar_from_particle(const ParticleState& s) {
  Vector out(4);
  out << s.x[0], s.x[1], s.v[0], s.v[1];
  return out;
}

double planar_energy(const Vector& state) { return energy(particle_from_planar(state)); }

double numerical_divergence(const VectorField& field, const Vector& y, double step) {
  double div = 0.0;
  Vector probe = y;
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    probe[k] = y[k] + step;
    const double plus = field.rhs(probe)[k];
    probe[k] = y[k] - step;
    const double minus = field.rhs(probe)[k];
    probe[k] = y[k];
    div += (plus - minus) / (2.0 * step);
  }
  return div;
}

namespace {

Vector rk4_step(const VectorField& field, const Vector& y, double h) {
  const Vector k1 = field.rhs(y);
  const Vector k2 = field.rhs(y + 0.5 * h * k1);
  const Vector k3 = field.rhs(y + 0.5 * h * k2);
  const Vector k4 = field.rhs(y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

Trajectory rk4_integrate(const VectorField& field, const Vector& y0, double step,
                         std::size_t n_steps) {
  if (!(step > 0.0)) throw std::invalid_argument("RK4 step must be positive");
  Trajectory out;
  out.reserve(n_steps + 1);
  out.push_back(y0);
  Vector y = y0;
  for (std::size_t n = 1; n <= n_steps; ++n) {
    y = rk4_step(field, y, step);
    if (!finite(y)) throw DivergenceError(n, "RK4 produced a non-finite state");
    out.push_back(y);
  }
  return out;
}

Trajectory rk4_sample(const VectorField& field, const Vector& y0, double data_step,
                      std::size_t n_samples, std::size_t substeps) {
  if (!(data_step > 0.0) || substeps == 0) {
    throw std::invalid_argument("data step and substep count must be positive");
  }
  const double h = data_step / static_cast<double>(substeps);
  Trajectory out;
  out.reserve(n_samples);
  if (n_samples == 0) return out;
  out.push_back(y0);
  Vector y = y0;
  for (std::size_t n = 1; n < n_samples; ++n) {
    for (std::size_t k = 0; k < substeps; ++k) y = rk4_step(field, y, h);
    if (!finite(y)) throw DivergenceError(n, "RK4 produced a non-finite state");
    out.push_back(y);
  }
  return out;
}

ParticleState boris_step(const ParticleState& s, double step, const ElectromagneticField& field) {
  if (!(step > 0.0)) throw std::invalid_argument("Boris step must be positive");
  const Vector3 x_mid = s.x + 0.5 * step * s.v;
  const Vector3 e = field.E(x_mid);
  const Vector3 b = field.B(x_mid);
  const Vector3 v_minus = s.v + 0.5 * step * e;
  const Vector3 t = 0.5 * step * b;
  const Vector3 w = 2.0 / (1.0 + t.squaredNorm()) * t;
  const Vector3 v_prime = v_minus + v_minus.cross(t);
  const Vector3 v_plus = v_minus + v_prime.cross(w);
  ParticleState next;
  next.v = v_plus + 0.5 * step * e;
  next.x = x_mid + 0.5 * step * next.v;
  return next;
}

std::vector<ParticleState> boris_sample(const ParticleState& s0, double data_step,
                                        std::size_t n_samples, std::size_t substeps,
                                        const ElectromagneticField& field) {
  if (!(data_step > 0.0) || substeps == 0) {
    throw std::invalid_argument("data step and substep count must be positive");
  }
  const double h = data_step / static_cast<double>(substeps);
  std::vector<ParticleState> out;
  out.reserve(n_samples);
  if (n_samples == 0) return out;
  out.push_back(s0);
  ParticleState s = s0;
  for (std::size_t n = 1; n < n_samples; ++n) {
    for (std::size_t k = 0; k < substeps; ++k) s = boris_step(s, h, field);
    if (!s.x.allFinite() || !s.v.allFinite()) {
      throw DivergenceError(n, "Boris produced a non-finite state");
    }
    out.push_back(s);
  }
  return out;
}

TrajectoryDataset dataset_from_trajectories(std::vector<Matrix> trajectories, double time_step) {
  if (!(time_step > 0.0)) throw std::invalid_argument("time step must be positive");
  if (trajectories.empty()) throw std::invalid_argument("no trajectories given");
  const auto dim = trajectories.front().rows();
  Eigen::Index pairs = 0;
  for (const auto& t : trajectories) {
    if (t.rows() != dim) throw ShapeError("trajectories have different dimensions");
    if (t.cols() < 2) throw std::invalid_argument("a trajectory needs at least two states");
    pairs += t.cols() - 1;
  }
  TrajectoryDataset ds;
  ds.time_step = time_step;
  ds.inputs.resize(dim, pairs);
  ds.targets.resize(dim, pairs);
  Eigen::Index col = 0;
  std::size_t row = 0;
  for (const auto& t : trajectories) {
    const auto n = t.cols() - 1;
    ds.inputs.middleCols(col, n) = t.leftCols(n);
    ds.targets.middleCols(col, n) = t.rightCols(n);
    col += n;
    ds.sources.push_back({t.col(0), row, static_cast<std::size_t>(t.cols())});
    row += static_cast<std::size_t>(t.cols());
  }
  ds.trajectories = std::move(trajectories);
  return ds;
}

namespace {

Matrix to_matrix(const Trajectory& traj) {
  Matrix m(traj.front().size(), static_cast<Eigen::Index>(traj.size()));
  for (std::size_t k = 0; k < traj.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = traj[k];
  return m;
}

ParticleState particle_initial_condition() {
  return {Vector3(0.1, 1.0, 0.0), Vector3(1.0, 0.2, 0.0)};
}

}  // namespace

TrajectoryDataset make_dataset(System system, const DatasetOptions& options) {
  if (system == System::kVolterra) {
    const double h = options.time_step > 0.0 ? options.time_step : 0.01;
    std::vector<Matrix> trajs;
    for (const Vector3& ic : {Vector3(5.0, 4.1, 5.9), Vector3(5.0, 3.9, 6.1)}) {
      trajs.push_back(to_matrix(rk4_sample(volterra_field(), Vector(ic), h,
                                           options.points_per_trajectory, options.substeps)));
    }
    auto ds = dataset_from_trajectories(std::move(trajs), h);
    ds.system = std::string(to_string(system));
    ds.state_layout = {"p", "q", "r"};
    ds.integrator = {"rk4", options.substeps, h / static_cast<double>(options.substeps)};
    return ds;
  }
  const double h = options.time_step > 0.0 ? options.time_step : 0.5;
  const auto states =
      boris_sample(particle_initial_condition(), h, options.pairs + 1, options.substeps);
  Matrix traj(4, static_cast<Eigen::Index>(states.size()));
  for (std::size_t k = 0; k < states.size(); ++k) {
    traj.col(static_cast<Eigen::Index>(k)) = planar_from_particle(states[k]);
  }
  auto ds = dataset_from_trajectories({traj}, h);
  ds.system = std::string(to_string(system));
  ds.state_layout = {"x1", "x2", "v1", "v2"};
  ds.integrator = {"boris", options.substeps, h / static_cast<double>(options.substeps)};
  return ds;
}

Trajectory reference_trajectory(System system, const Vector& x0, double data_step,
                                std::size_t n_steps, std::size_t substeps) {
  if (system == System::kVolterra) {
    if (x0.size() != 3) throw ShapeError("Volterra state must have 3 components");
    return rk4_sample(volterra_field(), x0, data_step, n_steps + 1, substeps);
  }
  const auto states = boris_sample(particle_from_planar(x0), data_step, n_steps + 1, substeps);
  Trajectory out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(planar_from_particle(s));
  return out;
}

Vector particle_reference_state(double t, double data_step, std::size_t substeps) {
  const double steps = t / data_step;
  const auto n = static_cast<std::size_t>(std::llround(steps));
  if (t < 0.0 || std::abs(steps - static_cast<double>(n)) > 1e-9) {
    throw std::invalid_argument("reference time must be a nonnegative multiple of the data step");
  }
  const auto states = boris_sample(particle_initial_condition(), data_step, n + 1, substeps);
  return planar_from_particle(states.back());
}

Trajectory rollout(const Network& net, const Vector& x0, std::size_t n_steps) {
  if (x0.size() != net.dimension) throw ShapeError("initial state dimension mismatch");
  Trajectory out;
  out.reserve(n_steps + 1);
  out.push_back(x0);
  Vector x = x0;
  for (std::size_t n = 1; n <= n_steps; ++n) {
    x = network_forward(net, x);
    if (!finite(x)) throw DivergenceError(n, "rollout produced a non-finite state");
    out.push_back(x);
  }
  return out;
}

MetricsReport metrics(const Trajectory& predicted, const Trajectory& reference, System system) {
  if (predicted.size() != reference.size()) {
    throw std::invalid_argument("predicted and reference trajectories differ in length (" +
                                std::to_string(predicted.size()) + " vs " +
                                std::to_string(reference.size()) + ")");
  }
  MetricsReport report;
  if (predicted.empty()) return report;
  const Vector& ref0 = reference.front();
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    if (predicted[k].size() != reference[k].size()) throw ShapeError("state dimension mismatch");
    const double ge = (predicted[k] - reference[k]).norm();
    report.global_error.push_back(ge);
    report.max_global_error = std::max(report.max_global_error, ge);
    if (system == System::kChargedParticle) {
      const double ee = std::abs(planar_energy(predicted[k]) - planar_energy(ref0));
      report.energy_error.push_back(ee);
      report.max_energy_error = std::max(report.max_energy_error, ee);
    } else {
      const double sd = std::abs(volterra_sum(predicted[k]) - volterra_sum(ref0));
      const double pd = std::abs(volterra_product(predicted[k]) - volterra_product(ref0));
      report.sum_drift.push_back(sd);
      report.product_drift.push_back(pd);
      report.max_sum_drift = std::max(report.max_sum_drift, sd);
      report.max_product_drift = std::max(report.max_product_drift, pd);
    }
  }
  return report;
}

std::vector<Vector> volterra_test_initial_conditions() {
  return {Vector3(5.0, 4.0, 6.0), Vector3(5.2, 4.0, 5.8), Vector3(4.9, 4.0, 6.1)};
}

}  // namespace vpnet
