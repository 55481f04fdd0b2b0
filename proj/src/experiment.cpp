#include "vpnet/experiment.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace vpnet {

namespace fs = std::filesystem;
using nlohmann::json;

TrainingConfig ExperimentConfig::training(std::uint64_t seed) const {
  TrainingConfig t;
  t.initial_lr = initial_lr;
  t.decay = decay;
  t.epochs = epochs;
  t.seed = seed;
  t.log_interval = log_interval;
  t.stop_at = stop_at;
  return t;
}

std::string ExperimentConfig::run_name() const {
  return std::string(to_string(system)) + "_" + std::string(to_string(network));
}

ExperimentConfig default_config(System system, NetworkKind network) {
  ExperimentConfig cfg;
  cfg.system = system;
  cfg.network = network;
  const bool r = network == NetworkKind::kRVPNet;
  if (system == System::kVolterra) {
    cfg.initial_lr = 0.01;
    cfg.decay = 1000.0;
    cfg.epochs = 300000;
  } else {
    cfg.initial_lr = r ? 0.001 : 0.01;
    cfg.decay = 100.0;
    cfg.epochs = r ? 500000 : 800000;
  }
  return cfg;
}

namespace {

ExperimentConfig config_from_json(const json& j) {
  try {
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != kConfigSchemaVersion) {
      throw FormatError("unsupported config schema version");
    }
    const System system = parse_system(j.value("system", std::string("volterra")));
    const NetworkKind network = parse_network_kind(j.value("network", std::string("r_vpnet")));
    ExperimentConfig cfg = default_config(system, network);
    cfg.width = j.value("width", cfg.width);
    if (j.contains("activation")) cfg.activation = parse_activation(j.at("activation").get<std::string>());
    cfg.initial_lr = j.value("initial_lr", cfg.initial_lr);
    cfg.decay = j.value("decay", cfg.decay);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.log_interval = j.value("log_interval", cfg.log_interval);
    cfg.stop_at = j.value("stop_at", cfg.stop_at);
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.points_per_trajectory = j.value("points_per_trajectory", cfg.points_per_trajectory);
    cfg.pairs = j.value("pairs", cfg.pairs);
    cfg.substeps = j.value("substeps", cfg.substeps);
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    return cfg;
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
}

json summary_json(const ExperimentConfig& cfg, const TrainSummary& summary) {
  json seeds = json::array();
  for (const auto& s : summary.seeds) {
    json e = {{"seed", s.seed}, {"ok", s.ok}};
    if (s.ok) {
      e["final_loss"] = s.final_loss;
      e["min_loss"] = s.min_loss;
      e["checkpoint"] = s.checkpoint.filename().string();
      e["history"] = s.history.filename().string();
    } else {
      e["error"] = s.error;
    }
    seeds.push_back(std::move(e));
  }
  json out = {{"run", cfg.run_name()}, {"seeds", seeds}};
  if (summary.best) {
    out["best_seed"] = summary.seeds[*summary.best].seed;
    out["best_final_loss"] = summary.seeds[*summary.best].final_loss;
  } else {
    out["best_seed"] = nullptr;
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig config_from_json_text(const std::string& text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  json j = {{"schema_version", kConfigSchemaVersion},
            {"system", std::string(to_string(cfg.system))},
            {"network", std::string(to_string(cfg.network))},
            {"width", cfg.width},
            {"activation", std::string(to_string(cfg.activation))},
            {"initial_lr", cfg.initial_lr},
            {"decay", cfg.decay},
            {"epochs", cfg.epochs},
            {"log_interval", cfg.log_interval},
            {"stop_at", cfg.stop_at},
            {"seeds", cfg.seeds},
            {"horizon", cfg.horizon},
            {"points_per_trajectory", cfg.points_per_trajectory},
            {"pairs", cfg.pairs},
            {"substeps", cfg.substeps},
            {"output_dir", cfg.output_dir.string()}};
  return j.dump(2) + "\n";
}

Network make_network(const ExperimentConfig& cfg, int dimension, std::mt19937_64& rng) {
  if (cfg.network == NetworkKind::kRVPNet) {
    return build_rvpnet(dimension, cfg.width, rng, cfg.activation);
  }
  return build_lavpnet(dimension, cfg.activation);
}

fs::path dataset_path(const ExperimentConfig& cfg) {
  return cfg.output_dir / (std::string(to_string(cfg.system)) + ".csv");
}

fs::path cmd_generate(const ExperimentConfig& cfg) {
  DatasetOptions opts;
  opts.points_per_trajectory = cfg.points_per_trajectory;
  opts.pairs = cfg.pairs;
  opts.substeps = cfg.substeps;
  const auto ds = make_dataset(cfg.system, opts);
  const fs::path path = dataset_path(cfg);
  save_dataset(path, ds);
  return path;
}

TrainSummary cmd_train(const ExperimentConfig& cfg, const fs::path& dataset_file,
                       unsigned workers) {
  const TrajectoryDataset data = load_dataset(dataset_file);
  const fs::path run_dir = cfg.output_dir / cfg.run_name();
  fs::create_directories(run_dir);

  TrainSummary summary;
  summary.seeds.resize(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t k = next++; k < cfg.seeds.size(); k = next++) {
      SeedOutcome& out = summary.seeds[k];
      out.seed = cfg.seeds[k];
      try {
        std::mt19937_64 rng(out.seed);
        Network net = make_network(cfg, data.dimension(), rng);
        const TrainingConfig tcfg = cfg.training(out.seed);
        auto result = train(std::move(net), data, tcfg);
        const std::string stem = "seed_" + std::to_string(out.seed);
        out.checkpoint = run_dir / (stem + ".json");
        out.history = run_dir / (stem + "_loss.csv");
        Checkpoint ckpt{result.state, tcfg, data.system, data.time_step, rng_state(rng)};
        save_checkpoint(out.checkpoint, ckpt);
        write_history_csv(out.history, result.history);
        out.final_loss = result.final_loss;
        out.min_loss = result.state.min_loss;
        out.ok = true;
      } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
      }
    }
  };

  unsigned n_workers = workers != 0 ? workers : std::max(1u, std::thread::hardware_concurrency());
  n_workers = std::min<unsigned>(n_workers, static_cast<unsigned>(cfg.seeds.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  for (std::size_t k = 0; k < summary.seeds.size(); ++k) {
    const auto& s = summary.seeds[k];
    if (!s.ok) continue;
    if (!summary.best || s.final_loss < summary.seeds[*summary.best].final_loss) summary.best = k;
  }
  summary.summary_file = run_dir / "summary.json";
  write_text(summary.summary_file, summary_json(cfg, summary).dump(2) + "\n");
  return summary;
}

SeedOutcome cmd_resume(const fs::path& checkpoint, const fs::path& dataset_file, long epochs,
                       const fs::path& out_checkpoint) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  const TrajectoryDataset data = load_dataset(dataset_file);
  TrainingConfig cfg = ckpt.config;
  cfg.epochs = epochs;
  cfg.stop_at = -1;
  auto result = train(ckpt.state, data, cfg);
  SeedOutcome out;
  out.seed = cfg.seed;
  out.checkpoint = out_checkpoint;
  out.history = fs::path(out_checkpoint).replace_extension("").string() + "_loss.csv";
  Checkpoint next{result.state, cfg, ckpt.system, ckpt.time_step, ckpt.rng_state};
  save_checkpoint(out_checkpoint, next);
  write_history_csv(out.history, result.history);
  out.final_loss = result.final_loss;
  out.min_loss = result.state.min_loss;
  out.ok = true;
  return out;
}

Trajectory cmd_predict(const fs::path& checkpoint, const Vector& x0, std::size_t n_steps, double t0,
                       const fs::path& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  if (x0.size() != ckpt.state.network.dimension) {
    throw ShapeError("initial state has " + std::to_string(x0.size()) +
                     " components, checkpoint expects " +
                     std::to_string(ckpt.state.network.dimension));
  }
  const Trajectory traj = rollout(ckpt.state.network, x0, n_steps);
  const double dt = ckpt.time_step > 0.0 ? ckpt.time_step : 1.0;
  write_trajectory_csv(out, traj, t0, dt);
  return traj;
}

Trajectory cmd_reference(System system, const Vector& x0, std::size_t n_steps, double t0,
                         double data_step, std::size_t substeps, const fs::path& out) {
  const Trajectory traj = reference_trajectory(system, x0, data_step, n_steps, substeps);
  write_trajectory_csv(out, traj, t0, data_step);
  return traj;
}

MetricsReport cmd_evaluate(const fs::path& predicted, const fs::path& reference, System system,
                           const fs::path& out) {
  const auto pred = read_trajectory_csv(predicted);
  const auto ref = read_trajectory_csv(reference);
  const MetricsReport report = metrics(pred.states, ref.states, system);

  std::ostringstream csv;
  const bool particle = system == System::kChargedParticle;
  csv << (particle ? "step,t,global_error,energy_error\n"
                   : "step,t,global_error,sum_drift,product_drift\n");
  for (std::size_t k = 0; k < report.global_error.size(); ++k) {
    csv << k << "," << format_double(pred.times[k]) << "," << format_double(report.global_error[k]);
    if (particle) {
      csv << "," << format_double(report.energy_error[k]);
    } else {
      csv << "," << format_double(report.sum_drift[k]) << ","
          << format_double(report.product_drift[k]);
    }
    csv << "\n";
  }
  write_text(out, csv.str());

  json summary = {{"system", std::string(to_string(system))},
                  {"steps", report.global_error.size()},
                  {"max_global_error", report.max_global_error}};
  if (particle) {
    summary["max_energy_error"] = report.max_energy_error;
    if (!ref.states.empty()) {
      const double h0 = planar_energy(ref.states.front());
      summary["initial_energy"] = h0;
      summary["max_relative_energy_error"] = report.max_energy_error / std::abs(h0);
    }
  } else {
    summary["max_sum_drift"] = report.max_sum_drift;
    summary["max_product_drift"] = report.max_product_drift;
  }
  fs::path summary_path = out;
  summary_path.replace_extension(".json");
  write_text(summary_path, summary.dump(2) + "\n");
  return report;
}

VolumeReport cmd_check_volume(const fs::path& checkpoint, const VolumeCheckOptions& options) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  return check_volume(ckpt.state.network, options);
}

std::vector<std::string> preset_names() {
  return {"volterra-1", "volterra-2", "volterra-3", "particle-t50"};
}

Vector preset_state(const std::string& name) {
  const auto volterra = volterra_test_initial_conditions();
  if (name == "volterra-1") return volterra[0];
  if (name == "volterra-2") return volterra[1];
  if (name == "volterra-3") return volterra[2];
  if (name == "particle-t50") return particle_reference_state(50.0);
  throw std::invalid_argument("unknown preset '" + name + "'");
}

}  // namespace vpnet
