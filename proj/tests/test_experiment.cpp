#include <fstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "test_support.hpp"
#include "vpnet/experiment.hpp"

namespace vpnet {
namespace {

using testing::read_file;
using testing::scratch_dir;

ExperimentConfig tiny_config(const std::filesystem::path& dir, System system = System::kVolterra) {
  ExperimentConfig cfg = default_config(system, NetworkKind::kRVPNet);
  cfg.width = 8;
  cfg.epochs = 60;
  cfg.log_interval = 20;
  cfg.seeds = {0, 1};
  cfg.points_per_trajectory = 12;
  cfg.pairs = 10;
  cfg.substeps = 20;
  cfg.output_dir = dir;
  return cfg;
}

TEST(Config, DefaultsMatchReferenceRuns) {
  struct Row {
    System system;
    NetworkKind network;
    double lr;
    double decay;
    long epochs;
  };
  const Row rows[] = {
      {System::kVolterra, NetworkKind::kRVPNet, 0.01, 1000, 300000},
      {System::kVolterra, NetworkKind::kLAVPNet, 0.01, 1000, 300000},
      {System::kChargedParticle, NetworkKind::kRVPNet, 0.001, 100, 500000},
      {System::kChargedParticle, NetworkKind::kLAVPNet, 0.01, 100, 800000},
  };
  for (const auto& r : rows) {
    const auto cfg = default_config(r.system, r.network);
    EXPECT_EQ(cfg.initial_lr, r.lr);
    EXPECT_EQ(cfg.decay, r.decay);
    EXPECT_EQ(cfg.epochs, r.epochs);
    EXPECT_EQ(cfg.width, 64);
    EXPECT_EQ(cfg.activation, Activation::kSigmoid);
    EXPECT_EQ(cfg.horizon, 150u);
    EXPECT_EQ(cfg.seeds.size(), 5u);
  }
}

TEST(Config, JsonRoundTrip) {
  auto cfg = default_config(System::kChargedParticle, NetworkKind::kLAVPNet);
  cfg.seeds = {3, 9};
  cfg.width = 32;
  cfg.output_dir = "out/x";
  const auto back = config_from_json_text(config_to_json_text(cfg));
  EXPECT_EQ(config_to_json_text(back), config_to_json_text(cfg));
  EXPECT_EQ(back.system, System::kChargedParticle);
  EXPECT_EQ(back.seeds, (std::vector<std::uint64_t>{3, 9}));
}

TEST(Config, MissingKeysFallBackToDefaults) {
  const auto cfg =
      config_from_json_text(R"({"system": "charged_particle", "network": "r_vpnet", "epochs": 7})");
  EXPECT_EQ(cfg.epochs, 7);
  EXPECT_EQ(cfg.initial_lr, 0.001);
  EXPECT_EQ(cfg.decay, 100.0);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(config_from_json_text(R"({"schema_version": 2})"), FormatError);
  EXPECT_THROW(config_from_json_text("{"), FormatError);
  EXPECT_ANY_THROW(config_from_json_text(R"({"system": "lorenz"})"));
  EXPECT_THROW(config_from_json_text(R"({"epochs": "many"})"), FormatError);
}

TEST(Generate, DefaultDatasetSizes) {
  const auto dir = scratch_dir("gen");
  auto cfg = default_config(System::kVolterra, NetworkKind::kRVPNet);
  cfg.output_dir = dir;
  EXPECT_EQ(load_dataset(cmd_generate(cfg)).size(), 148u);
  cfg.system = System::kChargedParticle;
  const auto ds = load_dataset(cmd_generate(cfg));
  EXPECT_EQ(ds.size(), 100u);
  EXPECT_EQ(ds.dimension(), 4);
}

TEST(Generate, RerunIsByteIdentical) {
  const auto dir = scratch_dir("gen_twice");
  const auto cfg = tiny_config(dir);
  const auto path = cmd_generate(cfg);
  const std::string csv = read_file(path), meta = read_file(sidecar_path(path));
  cmd_generate(cfg);
  EXPECT_EQ(read_file(path), csv);
  EXPECT_EQ(read_file(sidecar_path(path)), meta);
}

TEST(Train, ZeroEpochsWritesInitialization) {
  const auto dir = scratch_dir("train_zero");
  auto cfg = tiny_config(dir);
  cfg.epochs = 0;
  cfg.seeds = {4};
  const auto data = cmd_generate(cfg);
  const auto summary = cmd_train(cfg, data, 1);
  ASSERT_TRUE(summary.best.has_value());
  const auto& s = summary.seeds[0];
  const auto ckpt = load_checkpoint(s.checkpoint);
  std::mt19937_64 rng(4);
  const Network fresh = make_network(cfg, 3, rng);
  EXPECT_EQ(pack_parameters(ckpt.state.network.modules), pack_parameters(fresh.modules));
  const std::string history = read_file(s.history);
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 2);
  EXPECT_EQ(history.rfind("epoch,loss,lr\n0,", 0), 0u);
}

TEST(Train, SummaryAndBestSeed) {
  const auto dir = scratch_dir("train_summary");
  const auto cfg = tiny_config(dir);
  const auto summary = cmd_train(cfg, cmd_generate(cfg), 2);
  ASSERT_EQ(summary.seeds.size(), 2u);
  ASSERT_TRUE(summary.best.has_value());
  for (const auto& s : summary.seeds) {
    EXPECT_TRUE(s.ok);
    EXPECT_LE(summary.seeds[*summary.best].final_loss, s.final_loss);
    EXPECT_TRUE(std::filesystem::exists(s.checkpoint));
    EXPECT_TRUE(std::filesystem::exists(checkpoint_blob_path(s.checkpoint)));
  }
  const auto meta = nlohmann::json::parse(read_file(summary.summary_file));
  EXPECT_EQ(meta.at("best_seed"), summary.seeds[*summary.best].seed);
  EXPECT_EQ(meta.at("seeds").size(), 2u);
}

TEST(Train, FailingSeedsAreReported) {
  const auto dir = scratch_dir("train_nan");
  const auto cfg = tiny_config(dir);
  auto ds = make_dataset(System::kVolterra, {12, 10, 20});
  ds.trajectories[0](1, 3) = std::numeric_limits<double>::quiet_NaN();
  ds = dataset_from_trajectories(ds.trajectories, ds.time_step);
  ds.system = "volterra";
  ds.state_layout = {"p", "q", "r"};
  ds.integrator = {"rk4", 20, 0.0005};
  save_dataset(dir / "nan.csv", ds);
  const auto summary = cmd_train(cfg, dir / "nan.csv", 1);
  EXPECT_FALSE(summary.best.has_value());
  for (const auto& s : summary.seeds) {
    EXPECT_FALSE(s.ok);
    EXPECT_NE(s.error.find("non-finite"), std::string::npos);
  }
  EXPECT_TRUE(std::filesystem::exists(summary.summary_file));
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  const auto dir = scratch_dir("train_resume");
  auto cfg = tiny_config(dir);
  cfg.seeds = {0};
  const auto data = cmd_generate(cfg);
  const auto full = cmd_train(cfg, data, 1).seeds[0];
  const std::string full_history = read_file(full.history);

  auto partial_cfg = cfg;
  partial_cfg.stop_at = 20;
  partial_cfg.output_dir = dir / "partial";
  const auto partial = cmd_train(partial_cfg, data, 1).seeds[0];
  const auto resumed = cmd_resume(partial.checkpoint, data, cfg.epochs, dir / "resumed.json");
  EXPECT_EQ(resumed.final_loss, full.final_loss);

  const auto a = load_checkpoint(full.checkpoint);
  const auto b = load_checkpoint(resumed.checkpoint);
  EXPECT_EQ(pack_parameters(a.state.network.modules), pack_parameters(b.state.network.modules));
  EXPECT_EQ(a.state.optimizer.second_moment, b.state.optimizer.second_moment);
  // the resumed history is the tail of the uninterrupted one
  const std::string tail = read_file(resumed.history).substr(std::string("epoch,loss,lr\n").size());
  EXPECT_EQ(full_history.substr(full_history.size() - tail.size()), tail);
  EXPECT_EQ(tail.rfind("20,", 0), 0u);
}

TEST(Pipeline, ByteReproducible) {
  std::vector<std::string> snapshots;
  for (int run = 0; run < 2; ++run) {
    const auto dir = scratch_dir("pipeline_" + std::to_string(run));
    const auto cfg = tiny_config(dir);
    const auto data = cmd_generate(cfg);
    const auto summary = cmd_train(cfg, data, 2);
    const auto& best = summary.seeds[*summary.best];
    cmd_predict(best.checkpoint, preset_state("volterra-1"), 30, 0.0, dir / "pred.csv");
    cmd_reference(System::kVolterra, preset_state("volterra-1"), 30, 0.0, 0.01, 20, dir / "ref.csv");
    cmd_evaluate(dir / "pred.csv", dir / "ref.csv", System::kVolterra, dir / "metrics.csv");
    std::string all;
    for (const char* f : {"volterra.csv", "volterra.json", "volterra_r_vpnet/seed_0.json",
                          "volterra_r_vpnet/seed_0.bin", "volterra_r_vpnet/seed_1.bin",
                          "volterra_r_vpnet/seed_1_loss.csv", "volterra_r_vpnet/summary.json",
                          "pred.csv", "ref.csv", "metrics.csv", "metrics.json"}) {
      all += read_file(dir / f);
      all += '\x1f';
    }
    snapshots.push_back(all);
  }
  EXPECT_EQ(snapshots[0], snapshots[1]);
}

TEST(Predict, IdentityCheckpointIsConstant) {
  const auto dir = scratch_dir("predict");
  auto cfg = tiny_config(dir);
  cfg.epochs = 0;
  cfg.seeds = {0};
  const auto s = cmd_train(cfg, cmd_generate(cfg), 1).seeds[0];
  const Vector x0 = preset_state("volterra-2");
  cmd_predict(s.checkpoint, x0, 10, 0.0, dir / "p.csv");
  const auto traj = read_trajectory_csv(dir / "p.csv");
  ASSERT_EQ(traj.states.size(), 11u);
  for (const auto& x : traj.states) EXPECT_EQ(x, x0);
  EXPECT_DOUBLE_EQ(traj.times.back(), 0.1);
  EXPECT_THROW(cmd_predict(s.checkpoint, Vector::Zero(4), 3, 0.0, dir / "q.csv"), ShapeError);

  cmd_reference(System::kVolterra, x0, 10, 0.0, 0.01, 20, dir / "r.csv");
  const auto rep = cmd_evaluate(dir / "p.csv", dir / "r.csv", System::kVolterra, dir / "m.csv");
  for (double d : rep.sum_drift) EXPECT_EQ(d, 0.0);
  EXPECT_GT(rep.max_global_error, 0.0);
  EXPECT_EQ(read_file(dir / "m.csv").rfind("step,t,global_error,sum_drift,product_drift\n", 0), 0u);
}

TEST(Evaluate, IdenticalInputsGiveZeros) {
  const auto dir = scratch_dir("evaluate");
  const Vector x0 = preset_state("particle-t50");
  cmd_reference(System::kChargedParticle, x0, 8, 50.0, 0.5, 20, dir / "r.csv");
  const auto rep =
      cmd_evaluate(dir / "r.csv", dir / "r.csv", System::kChargedParticle, dir / "m.csv");
  EXPECT_EQ(rep.max_global_error, 0.0);
  const auto meta = nlohmann::json::parse(read_file(dir / "m.json"));
  EXPECT_EQ(meta.at("max_global_error"), 0.0);
  EXPECT_TRUE(meta.contains("max_relative_energy_error"));

  cmd_reference(System::kChargedParticle, x0, 5, 50.0, 0.5, 20, dir / "short.csv");
  EXPECT_THROW(cmd_evaluate(dir / "short.csv", dir / "r.csv", System::kChargedParticle,
                            dir / "x.csv"),
               std::invalid_argument);
}

TEST(CheckVolume, PassesAndCatchesCorruption) {
  const auto dir = scratch_dir("check_volume");
  auto cfg = tiny_config(dir);
  cfg.network = NetworkKind::kLAVPNet;
  cfg.seeds = {0};
  const auto s = cmd_train(cfg, cmd_generate(cfg), 1).seeds[0];
  VolumeCheckOptions opts;
  opts.points = 100;
  EXPECT_TRUE(cmd_check_volume(s.checkpoint, opts).passed);

  auto ckpt = load_checkpoint(s.checkpoint);
  std::get<LinearModule>(ckpt.state.network.modules[2]).factors[1].diagonal =
      Vector::Constant(1, 0.9);
  save_checkpoint(dir / "bad.json", ckpt);
  const auto report = cmd_check_volume(dir / "bad.json", opts);
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.max_deviation, 0.05);
}

TEST(Presets, Names) {
  for (const auto& name : preset_names()) EXPECT_NO_THROW(preset_state(name));
  EXPECT_EQ(preset_state("volterra-3"), Vector(Vector{{4.9, 4.0, 6.1}}));
  EXPECT_EQ(preset_state("particle-t50").size(), 4);
  EXPECT_THROW(preset_state("nope"), std::invalid_argument);
}

}  // namespace
}  // namespace vpnet
