#pragma once

// Experiment driver shared by the CLI and the Python bindings.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vpnet/dynamics.hpp"
#include "vpnet/io.hpp"
#include "vpnet/trainer.hpp"
#include "vpnet/volume.hpp"

namespace vpnet {

inline constexpr int kConfigSchemaVersion = 1;

struct ExperimentConfig {
  System system = System::kVolterra;
  NetworkKind network = NetworkKind::kRVPNet;
  int width = 64;
  Activation activation = Activation::kSigmoid;
  double initial_lr = 0.01;
  double decay = 1000.0;
  long epochs = 300000;
  long log_interval = 1000;
  long stop_at = -1;  // see TrainingConfig::stop_at
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::size_t horizon = 150;
  std::size_t points_per_trajectory = 75;
  std::size_t pairs = 100;
  std::size_t substeps = 500;
  std::filesystem::path output_dir = "runs";

  TrainingConfig training(std::uint64_t seed) const;
  std::string run_name() const;  // e.g. "volterra_r_vpnet"
};

/// Training parameters of the reference runs for each system/network pair.
ExperimentConfig default_config(System system, NetworkKind network);

/// Missing keys fall back to default_config(system, network).
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg);

/// Network freshly initialized from `seed`; `rng` is left in the
/// post-initialization state.
Network make_network(const ExperimentConfig& cfg, int dimension, std::mt19937_64& rng);

std::filesystem::path dataset_path(const ExperimentConfig& cfg);

/// Writes the benchmark dataset (CSV + sidecar) and returns the CSV path.
std::filesystem::path cmd_generate(const ExperimentConfig& cfg);

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double final_loss = 0.0;
  double min_loss = 0.0;
  std::filesystem::path checkpoint;
  std::filesystem::path history;
};

struct TrainSummary {
  std::vector<SeedOutcome> seeds;
  std::optional<std::size_t> best;  // index into `seeds`, lowest final loss
  std::filesystem::path summary_file;
};

/// Trains one network per seed (in parallel, up to `workers` at a time; 0
/// uses the hardware concurrency) and writes per-seed checkpoints, loss
/// histories and a summary JSON. A seed that diverges is reported and the
/// others continue.
TrainSummary cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& dataset,
                       unsigned workers = 0);

/// Continues a checkpoint to the end of a run of `epochs` epochs and writes a new checkpoint and the
/// history of the resumed epochs.
SeedOutcome cmd_resume(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                       long epochs, const std::filesystem::path& out_checkpoint);

/// Rollout of a checkpoint written as a trajectory CSV starting at time t0.
Trajectory cmd_predict(const std::filesystem::path& checkpoint, const Vector& x0,
                       std::size_t n_steps, double t0, const std::filesystem::path& out);

/// Ground-truth trajectory written as a trajectory CSV.
Trajectory cmd_reference(System system, const Vector& x0, std::size_t n_steps, double t0,
                         double data_step, std::size_t substeps,
                         const std::filesystem::path& out);

/// Per-step metrics CSV plus a JSON summary of the maxima next to it.
MetricsReport cmd_evaluate(const std::filesystem::path& predicted,
                           const std::filesystem::path& reference, System system,
                           const std::filesystem::path& out);

VolumeReport cmd_check_volume(const std::filesystem::path& checkpoint,
                              const VolumeCheckOptions& options);

/// Named initial conditions: "volterra-1".."volterra-3" and "particle-t50".
Vector preset_state(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace vpnet
