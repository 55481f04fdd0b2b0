#pragma once

// Ground-truth physics for the two benchmarks: the Volterra system and a
// charged particle in a static non-uniform electromagnetic field (m = q = 1).

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vpnet/modules.hpp"

namespace vpnet {

using Vector3 = Eigen::Vector3d;
using Trajectory = std::vector<Vector>;

enum class System { kVolterra, kChargedParticle };

std::string_view to_string(System system);
System parse_system(std::string_view name);

struct VectorField {
  int dimension = 0;
  std::function<Vector(const Vector&)> rhs;
  std::function<double(const Vector&)> divergence;  // analytic
};

// Volterra: (p(q - r), q(r - p), r(p - q)).
Vector3 volterra_rhs(const Vector3& y);
VectorField volterra_field();
double volterra_sum(const Vector& y);      // p + q + r
double volterra_product(const Vector& y);  // p q r

struct ParticleState {
  Vector3 x = Vector3::Zero();
  Vector3 v = Vector3::Zero();
};

/// E(x) = 1e-2 / R^3 (x1, x2, 0), B(x) = (0, 0, R), R = sqrt(x1^2 + x2^2).
/// Either field can be switched off to isolate the Boris sub-steps.
struct ElectromagneticField {
  bool electric = true;
  bool magnetic = true;

  Vector3 E(const Vector3& x) const;
  Vector3 B(const Vector3& x) const;
};

/// (dx/dt, dv/dt) = (v, E + v x B). Throws SingularityError at R = 0.
std::pair<Vector3, Vector3> lorentz_rhs(const ParticleState& s,
                                        const ElectromagneticField& field = {});
/// Six-dimensional field on (x, v).
VectorField lorentz_field();

/// 1/2 (v1^2 + v2^2) + 1e-2 / R.
double energy(const ParticleState& s);
/// Energy of a planar state laid out as (x1, x2, v1, v2).
double planar_energy(const Vector& state);

ParticleState particle_from_planar(const Vector& state);
Vector planar_from_particle(const ParticleState& s);

/// Central-difference divergence (each partial derivative taken separately).
double numerical_divergence(const VectorField& field, const Vector& y, double step = 1e-3);

/// Classical RK4, n_steps + 1 states. Throws DivergenceError on non-finite
/// states.
Trajectory rk4_integrate(const VectorField& field, const Vector& y0, double step,
                         std::size_t n_steps);

/// RK4 sampled every `data_step`, taking `substeps` RK4 steps per sample.
Trajectory rk4_sample(const VectorField& field, const Vector& y0, double data_step,
                      std::size_t n_samples, std::size_t substeps);

/// One Boris step in symmetric drift-kick-drift form: half drift of x, then
/// half electric kick, exact magnetic rotation through the tan(theta/2)
/// vector, half electric kick, all with fields at the mid position, then
/// the second half drift. Every sub-map is volume preserving.
ParticleState boris_step(const ParticleState& s, double step,
                         const ElectromagneticField& field = {});

/// Boris sampled every `data_step` with `substeps` Boris steps per sample.
std::vector<ParticleState> boris_sample(const ParticleState& s0, double data_step,
                                        std::size_t n_samples, std::size_t substeps,
                                        const ElectromagneticField& field = {});

struct TrajectorySource {
  Vector initial_condition;
  std::size_t first_row = 0;  // row offset in the dataset CSV
  std::size_t num_points = 0;
};

struct IntegratorSettings {
  std::string method;  // "rk4" or "boris"
  std::size_t substeps = 500;
  double substep = 0.0;
};

/// Snapshot pairs (x_i, y_i) with y_i = phi_T(x_i), stored column-wise.
struct TrajectoryDataset {
  Matrix inputs;   // D x I
  Matrix targets;  // D x I
  double time_step = 0.0;
  std::string system;
  std::vector<std::string> state_layout;
  std::vector<Matrix> trajectories;  // D x n_points each; pairs are consecutive states
  std::vector<TrajectorySource> sources;
  IntegratorSettings integrator;

  int dimension() const { return static_cast<int>(inputs.rows()); }
  std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
};

/// Pairs consecutive states of each trajectory.
TrajectoryDataset dataset_from_trajectories(std::vector<Matrix> trajectories, double time_step);

struct DatasetOptions {
  std::size_t points_per_trajectory = 75;  // Volterra
  std::size_t pairs = 100;                 // charged particle
  std::size_t substeps = 500;              // reference steps per data step
  double time_step = 0.0;                  // 0 selects the system default
};

/// Volterra: states of the trajectories from (5, 4.1, 5.9) and (5, 3.9, 6.1)
/// at h = 0.01, paired consecutively. Charged particle: one trajectory from
/// x = (0.1, 1, 0), v = (1, 0.2, 0) at h = 0.5, projected to (x1, x2, v1, v2).
TrajectoryDataset make_dataset(System system, const DatasetOptions& options = {});

/// Reference (ground-truth) trajectory of `n_steps` data steps from a state
/// in the learned coordinates.
Trajectory reference_trajectory(System system, const Vector& x0, double data_step,
                                std::size_t n_steps, std::size_t substeps = 500);

/// Learned-coordinate state of the particle's reference orbit at time t
/// (a multiple of `data_step`).
Vector particle_reference_state(double t, double data_step = 0.5, std::size_t substeps = 500);

/// Iterates the network: x_{k+1} = psi(x_k), n_steps + 1 states.
Trajectory rollout(const Network& net, const Vector& x0, std::size_t n_steps);

struct MetricsReport {
  std::vector<double> global_error;    // ||pred_k - ref_k||
  std::vector<double> energy_error;    // particle: |H(pred_k) - H(ref_0)|
  std::vector<double> sum_drift;       // Volterra: |S(pred_k) - S(ref_0)|
  std::vector<double> product_drift;   // Volterra: |P(pred_k) - P(ref_0)|
  double max_global_error = 0.0;
  double max_energy_error = 0.0;
  double max_sum_drift = 0.0;
  double max_product_drift = 0.0;
};

MetricsReport metrics(const Trajectory& predicted, const Trajectory& reference, System system);

/// Preset initial conditions for prediction.
std::vector<Vector> volterra_test_initial_conditions();

}  // namespace vpnet
