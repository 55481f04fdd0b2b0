#include <cmath>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "test_support.hpp"
#include "vpnet/dynamics.hpp"

namespace vpnet {
namespace {

using testing::uniform_vector;

ParticleState reference_ic() {
  ParticleState s;
  s.x = {0.1, 1.0, 0.0};
  s.v = {1.0, 0.2, 0.0};
  return s;
}

TEST(Volterra, FixedLine) {
  EXPECT_EQ(volterra_rhs({2.5, 2.5, 2.5}), Vector3::Zero());
}

TEST(Volterra, Arithmetic) {
  EXPECT_EQ(volterra_rhs({1, 2, 3}), Vector3(-1, 4, -3));
}

TEST(Volterra, SourceFree) {
  std::mt19937_64 rng(1);
  const auto field = volterra_field();
  for (int k = 0; k < 1000; ++k) {
    const Vector y = uniform_vector(3, rng, 0.0, 8.0);
    EXPECT_LE(std::abs(numerical_divergence(field, y)), 1e-10);
    EXPECT_LE(std::abs(field.divergence(y)), 1e-14);
  }
}

TEST(Lorentz, ElectricForceAtRest) {
  ParticleState s;
  s.x = {1, 0, 0};
  const auto [dx, dv] = lorentz_rhs(s);
  EXPECT_EQ(dx, Vector3::Zero());
  EXPECT_NEAR((dv - Vector3(1e-2, 0, 0)).norm(), 0.0, 1e-17);
}

TEST(Lorentz, MagneticForce) {
  ParticleState s;
  s.x = {1, 0, 0};
  s.v = {0, 1, 0};
  const auto [dx, dv] = lorentz_rhs(s);
  const Vector3 expect = Vector3(1e-2, 0, 0) + s.v.cross(Vector3(0, 0, 1));
  EXPECT_NEAR((dv - expect).norm(), 0.0, 1e-16);
  EXPECT_NEAR(dv[0], 1.01, 1e-15);
}

TEST(Lorentz, PlanarInvariance) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    ParticleState s;
    const Vector p = uniform_vector(4, rng);
    s.x = {p[0], p[1], 0};
    s.v = {p[2], p[3], 0};
    const auto [dx, dv] = lorentz_rhs(s);
    EXPECT_EQ(dx[2], 0.0);
    EXPECT_EQ(dv[2], 0.0);
  }
}

TEST(Lorentz, SingularOnAxis) {
  ParticleState s;
  s.x = {0, 0, 1};
  EXPECT_THROW(lorentz_rhs(s), SingularityError);
  EXPECT_THROW(energy(s), SingularityError);
  EXPECT_THROW(boris_step(s, 0.1), SingularityError);
}

TEST(Lorentz, SourceFree) {
  std::mt19937_64 rng(3);
  const auto field = lorentz_field();
  int checked = 0;
  while (checked < 1000) {
    Vector y = uniform_vector(6, rng);
    if (std::hypot(y[0], y[1]) < 0.2) continue;
    EXPECT_LE(std::abs(numerical_divergence(field, y)), 1e-10);
    ++checked;
  }
}

TEST(Energy, Examples) {
  ParticleState s;
  s.x = {1, 0, 0};
  EXPECT_DOUBLE_EQ(energy(s), 1e-2);
  const double h0 = energy(reference_ic());
  EXPECT_NEAR(h0, 0.5 * 1.04 + 1e-2 / std::sqrt(1.01), 1e-15);
  EXPECT_NEAR(h0, 0.529950, 5e-7);
  EXPECT_DOUBLE_EQ(planar_energy(planar_from_particle(reference_ic())), h0);
}

TEST(Energy, ConservedByFineRK4) {
  const Vector y0{{0.1, 1.0, 0.0, 1.0, 0.2, 0.0}};
  const auto traj = rk4_integrate(lorentz_field(), y0, 1e-4, 100000);
  auto h = [](const Vector& y) {
    ParticleState s;
    s.x = y.head<3>();
    s.v = y.tail<3>();
    return energy(s);
  };
  const double h0 = h(y0);
  double drift = 0.0;
  for (const auto& y : traj) drift = std::max(drift, std::abs(h(y) - h0));
  EXPECT_LT(drift, 1e-8);
}

TEST(RK4, ZeroFieldIsConstant) {
  VectorField zero{2, [](const Vector& y) { return Vector(Vector::Zero(y.size())); }, {}};
  const Vector y0{{1.0, -2.0}};
  for (const auto& y : rk4_integrate(zero, y0, 0.1, 20)) EXPECT_EQ(y, y0);
}

TEST(RK4, MatchesMatrixExponential) {
  const Matrix a{{0.1, -0.8, 0.2}, {0.7, -0.3, 0.1}, {-0.2, 0.4, 0.2}};
  VectorField lin{3, [a](const Vector& y) { return Vector(a * y); }, {}};
  const Vector y0{{1.0, 0.5, -0.25}};
  const double h = 1e-2;
  const auto traj = rk4_integrate(lin, y0, h, 1);
  const Vector exact = (h * a).exp() * y0;
  EXPECT_LT((traj[1] - exact).norm(), 1e-10);
  EXPECT_EQ(traj.size(), 2u);
}

TEST(RK4, FourthOrderConvergence) {
  const auto field = volterra_field();
  const Vector y0{{5.0, 4.1, 5.9}};
  const double t_end = 0.5;
  const Vector ref = rk4_integrate(field, y0, t_end / 20000, 20000).back();
  const Vector coarse = rk4_integrate(field, y0, t_end / 50, 50).back();
  const Vector fine = rk4_integrate(field, y0, t_end / 100, 100).back();
  const double ratio = (coarse - ref).norm() / (fine - ref).norm();
  EXPECT_GE(ratio, 12.0);
  EXPECT_LE(ratio, 20.0);
}

TEST(RK4, VolterraInvariants) {
  const Vector y0{{5.0, 4.1, 5.9}};
  const auto traj = rk4_integrate(volterra_field(), y0, 1e-4, 10000);
  for (const auto& y : traj) {
    EXPECT_NEAR(volterra_sum(y), 15.0, 1e-9);
    EXPECT_NEAR(volterra_product(y), volterra_product(y0), 1e-9);
  }
}

TEST(RK4, BlowUpReportsStep) {
  VectorField blow{1, [](const Vector& y) { return Vector(y.cwiseAbs2() * 1e3); }, {}};
  try {
    rk4_integrate(blow, Vector::Ones(1), 0.1, 1000);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.step(), 0u);
    EXPECT_LT(e.step(), 1000u);
  }
  EXPECT_THROW(rk4_integrate(blow, Vector::Ones(1), 0.0, 1), std::invalid_argument);
}

TEST(Boris, MagneticOnlyConservesSpeed) {
  ElectromagneticField field{false, true};
  ParticleState s = reference_ic();
  s.v[2] = 0.3;
  const double speed = s.v.norm();
  for (int k = 0; k < 1000; ++k) {
    s = boris_step(s, 0.05, field);
    EXPECT_NEAR(s.v.norm(), speed, 1e-13);
  }
}

TEST(Boris, ElectricOnlyIsAKick) {
  ElectromagneticField field{true, false};
  const ParticleState s = reference_ic();
  const double h = 0.01;
  const ParticleState next = boris_step(s, h, field);
  const Vector3 mid = s.x + 0.5 * h * s.v;
  const Vector3 v = s.v + h * field.E(mid);
  EXPECT_LT((next.v - v).norm(), 1e-16);
  EXPECT_LT((next.x - (mid + 0.5 * h * v)).norm(), 1e-16);
}

TEST(Boris, EnergyConservedOverPredictionWindow) {
  for (double h : {1e-3, 1e-4}) {
    ParticleState s = reference_ic();
    const double h0 = energy(s);
    const long n = std::lround(125.0 / h);
    double drift = 0.0;
    for (long k = 0; k < n; ++k) {
      s = boris_step(s, h);
      drift = std::max(drift, std::abs(energy(s) - h0));
    }
    EXPECT_LT(drift, 1e-6) << "substep " << h;
  }
}

TEST(Boris, StaysPlanar) {
  const auto states = boris_sample(reference_ic(), 0.5, 21, 50);
  ASSERT_EQ(states.size(), 21u);
  for (const auto& s : states) {
    EXPECT_EQ(s.x[2], 0.0);
    EXPECT_EQ(s.v[2], 0.0);
  }
}

TEST(Dataset, VolterraPairs) {
  const auto ds = make_dataset(System::kVolterra);
  EXPECT_EQ(ds.size(), 148u);
  EXPECT_EQ(ds.dimension(), 3);
  EXPECT_DOUBLE_EQ(ds.time_step, 0.01);
  ASSERT_EQ(ds.trajectories.size(), 2u);
  EXPECT_EQ(ds.trajectories[0].cols(), 75);
  EXPECT_EQ(ds.sources[1].first_row, 75u);
  EXPECT_EQ(ds.integrator.method, "rk4");
  EXPECT_DOUBLE_EQ(ds.integrator.substep, 0.01 / 500);
  EXPECT_GT(ds.inputs.minCoeff(), 0.0);
  EXPECT_GT(ds.targets.minCoeff(), 0.0);
  EXPECT_EQ(ds.inputs.col(0), Vector(Vector{{5.0, 4.1, 5.9}}));
  EXPECT_EQ(ds.inputs.col(74), Vector(Vector{{5.0, 3.9, 6.1}}));
  for (Eigen::Index c = 0; c + 1 < 74; ++c) EXPECT_EQ(ds.targets.col(c), ds.inputs.col(c + 1));
}

TEST(Dataset, ParticlePairs) {
  const auto ds = make_dataset(System::kChargedParticle);
  EXPECT_EQ(ds.size(), 100u);
  EXPECT_EQ(ds.dimension(), 4);
  EXPECT_DOUBLE_EQ(ds.time_step, 0.5);
  EXPECT_EQ(ds.state_layout, (std::vector<std::string>{"x1", "x2", "v1", "v2"}));
  EXPECT_EQ(ds.integrator.method, "boris");
  EXPECT_EQ(ds.inputs.col(0), planar_from_particle(reference_ic()));
  for (Eigen::Index c = 0; c + 1 < 100; ++c) EXPECT_EQ(ds.targets.col(c), ds.inputs.col(c + 1));
  EXPECT_EQ(Vector(ds.targets.col(99)), particle_reference_state(50.0));
}

TEST(Dataset, CountOption) {
  DatasetOptions opts;
  opts.points_per_trajectory = 76;
  opts.substeps = 20;
  EXPECT_EQ(make_dataset(System::kVolterra, opts).size(), 150u);
}

TEST(Dataset, FromTrajectoriesValidates) {
  EXPECT_THROW(dataset_from_trajectories({}, 0.1), std::invalid_argument);
  EXPECT_THROW(dataset_from_trajectories({Matrix::Zero(2, 1)}, 0.1), std::invalid_argument);
  EXPECT_THROW(dataset_from_trajectories({Matrix::Zero(2, 3)}, 0.0), std::invalid_argument);
}

TEST(Reference, VolterraMatchesDataset) {
  const auto ds = make_dataset(System::kVolterra);
  const auto ref = reference_trajectory(System::kVolterra, Vector{{5.0, 4.1, 5.9}}, 0.01, 74);
  for (int k = 0; k < 74; ++k) EXPECT_EQ(ref[k + 1], Vector(ds.targets.col(k)));
}

TEST(Reference, ParticleStateAtZeroIsInitialCondition) {
  EXPECT_EQ(particle_reference_state(0.0), planar_from_particle(reference_ic()));
  EXPECT_THROW(particle_reference_state(0.3), std::invalid_argument);
}

TEST(Rollout, IdentityIsConstant) {
  std::mt19937_64 rng(4);
  const Network net = build_rvpnet(3, 4, rng);
  const Vector x0{{5.0, 4.0, 6.0}};
  const auto traj = rollout(net, x0, 10);
  ASSERT_EQ(traj.size(), 11u);
  for (const auto& x : traj) EXPECT_EQ(x, x0);
  EXPECT_EQ(rollout(net, x0, 0).size(), 1u);
  EXPECT_THROW(rollout(net, Vector::Zero(4), 1), ShapeError);
}

TEST(Rollout, DivergenceReportsStep) {
  std::mt19937_64 rng(5);
  Network net = build_rvpnet(2, 1, rng);
  auto& m = std::get<ResidualModule>(net.modules[0]);
  m.a(0, 0) = 1e308;
  m.b[0] = 10.0;
  try {
    rollout(net, Vector{{1.0, 1.0}}, 5);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.step(), 1u);
  }
}

TEST(Metrics, IdenticalTrajectoriesGiveZero) {
  const auto ref = reference_trajectory(System::kChargedParticle, particle_reference_state(0.0),
                                        0.5, 10, 50);
  const auto rep = metrics(ref, ref, System::kChargedParticle);
  EXPECT_EQ(rep.max_global_error, 0.0);
  EXPECT_EQ(rep.global_error.size(), 11u);
  EXPECT_LT(rep.max_energy_error, 1e-6);
}

TEST(Metrics, ConstantOffset) {
  const auto ref = reference_trajectory(System::kVolterra, Vector{{5.0, 4.0, 6.0}}, 0.01, 5, 10);
  Trajectory pred = ref;
  for (auto& x : pred) x[1] += 0.25;
  const auto rep = metrics(pred, ref, System::kVolterra);
  for (double e : rep.global_error) EXPECT_NEAR(e, 0.25, 1e-14);
  for (double d : rep.sum_drift) EXPECT_NEAR(d, 0.25, 1e-9);
  EXPECT_THROW(metrics(Trajectory(pred.begin(), pred.end() - 1), ref, System::kVolterra),
               std::invalid_argument);
}

TEST(Presets, VolterraTestConditions) {
  const auto ics = volterra_test_initial_conditions();
  ASSERT_EQ(ics.size(), 3u);
  EXPECT_EQ(ics[0], Vector(Vector{{5.0, 4.0, 6.0}}));
  EXPECT_EQ(ics[1], Vector(Vector{{5.2, 4.0, 5.8}}));
  EXPECT_EQ(ics[2], Vector(Vector{{4.9, 4.0, 6.1}}));
}

}  // namespace
}  // namespace vpnet
