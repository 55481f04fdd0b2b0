#pragma once

// File formats.
//
// Trajectory CSV: header `t,c1,...,cD`, one state per row, numbers in
// shortest round-trip form.
//
// Dataset: a trajectory CSV holding every trajectory's states back to back
// (t restarts at 0 for each) plus a JSON sidecar next to it with the same
// stem and a `.json` extension:
//
//   format_version  1
//   system          "volterra" | "charged_particle"
//   dimension       D
//   time_step       data step T
//   state_layout    component names, e.g. ["x1","x2","v1","v2"]
//   num_pairs       number of snapshot pairs
//   trajectories    [{initial_condition, first_row, num_points}]
//   integrator      {method, substeps, substep}
//
// Pairs are consecutive rows inside each trajectory.
//
// Checkpoint: `<stem>.json` manifest plus `<stem>.bin`, a little-endian
// float64 blob. The manifest lists every module in application order with
// the offset (in float64 elements) and shape of each parameter block;
// matrices are stored column-major. Linear-module shears are listed in the
// order the product is written and applied right to left. A shear may carry
// an explicit `diagonal` array (absent means unit diagonal). The optimizer
// moments, step counter, epoch and the training config are stored alongside,
// so training resumes bit-exactly.

#include <filesystem>
#include <string>
#include <vector>

#include "vpnet/dynamics.hpp"
#include "vpnet/trainer.hpp"

namespace vpnet {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;

std::string format_double(double value);

struct TimedTrajectory {
  std::vector<double> times;
  Trajectory states;
};

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& states,
                          double t0, double time_step);
void write_trajectory_csv(const std::filesystem::path& path, const TimedTrajectory& traj);
TimedTrajectory read_trajectory_csv(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);
void save_dataset(const std::filesystem::path& csv_path, const TrajectoryDataset& dataset);
TrajectoryDataset load_dataset(const std::filesystem::path& csv_path);

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<TrainingRecord>& history);

struct Checkpoint {
  TrainingState state;
  TrainingConfig config;
  std::string system;  // empty when not tied to a benchmark
  double time_step = 0.0;
  std::string rng_state;  // serialized std::mt19937_64
};

std::filesystem::path checkpoint_blob_path(const std::filesystem::path& manifest);
/// `manifest` should end in `.json`; the blob is written next to it.
void save_checkpoint(const std::filesystem::path& manifest, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& manifest);

}  // namespace vpnet
