// vpnet: command line driver for data generation, training, prediction and
// the structural checks.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vpnet/experiment.hpp"
#include "vpnet/factorization.hpp"

namespace {

using namespace vpnet;
using nlohmann::json;

constexpr int kCheckFailed = 2;

Vector parse_vector(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    values.push_back(std::stod(item, &used));
    if (used != item.size() && item.find_first_not_of(" \t", used) != std::string::npos) {
      throw std::invalid_argument("bad number '" + item + "'");
    }
  }
  if (values.empty()) throw std::invalid_argument("empty vector");
  return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::vector<Vector> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.back() == '\r') line.pop_back();
    try {
      rows.push_back(parse_vector(line));
    } catch (const std::exception&) {
      if (rows.empty()) continue;  // header
      throw FormatError(path.string() + ": bad row '" + line + "'");
    }
  }
  if (rows.empty()) throw FormatError(path.string() + ": no rows");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw ShapeError(path.string() + ": ragged rows");
    m.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  }
  if (m.rows() != m.cols()) throw ShapeError(path.string() + ": matrix is not square");
  return m;
}

json matrix_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + out + "' for writing");
  f << j.dump(2) << "\n";
}

struct ConfigFlags {
  std::string config;
  std::string system = "volterra";
  std::string network = "r_vpnet";
  std::string activation;
  std::string output_dir;
  int width = 0;
  double lr = 0.0;
  double decay = 0.0;
  long epochs = -1;
  long log_interval = 0;
  long stop_at = -1;
  std::vector<std::uint64_t> seeds;
  std::size_t points_per_trajectory = 0;
  std::size_t pairs = 0;
  std::size_t substeps = 0;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool training) {
  cmd->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--system", f.system, "volterra | charged_particle");
  cmd->add_option("--output-dir", f.output_dir, "Directory for run artifacts");
  cmd->add_option("--substeps", f.substeps, "Reference steps per data step");
  cmd->add_option("--points-per-trajectory", f.points_per_trajectory);
  cmd->add_option("--pairs", f.pairs, "Particle snapshot pairs");
  if (!training) return;
  cmd->add_option("--network", f.network, "r_vpnet | la_vpnet");
  cmd->add_option("--width", f.width);
  cmd->add_option("--activation", f.activation, "sigmoid | tanh | relu");
  cmd->add_option("--lr", f.lr, "Initial learning rate");
  cmd->add_option("--decay", f.decay, "Total learning-rate decay factor");
  cmd->add_option("--epochs", f.epochs);
  cmd->add_option("--log-interval", f.log_interval);
  cmd->add_option("--stop-at", f.stop_at, "Stop (and checkpoint) at this epoch of the schedule");
  cmd->add_option("--seeds", f.seeds)->delimiter(',');
}

ExperimentConfig resolve_config(CLI::App* cmd, const ConfigFlags& f) {
  auto set = [cmd](const char* name) {
    auto* opt = cmd->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  ExperimentConfig cfg;
  if (!f.config.empty()) {
    cfg = load_config(f.config);
    if (set("--system")) cfg.system = parse_system(f.system);
    if (set("--network")) cfg.network = parse_network_kind(f.network);
  } else {
    cfg = default_config(parse_system(f.system), parse_network_kind(f.network));
  }
  if (set("--output-dir")) cfg.output_dir = f.output_dir;
  if (set("--substeps")) cfg.substeps = f.substeps;
  if (set("--points-per-trajectory")) cfg.points_per_trajectory = f.points_per_trajectory;
  if (set("--pairs")) cfg.pairs = f.pairs;
  if (set("--width")) cfg.width = f.width;
  if (set("--activation")) cfg.activation = parse_activation(f.activation);
  if (set("--lr")) cfg.initial_lr = f.lr;
  if (set("--decay")) cfg.decay = f.decay;
  if (set("--epochs")) cfg.epochs = f.epochs;
  if (set("--log-interval")) cfg.log_interval = f.log_interval;
  if (set("--stop-at")) cfg.stop_at = f.stop_at;
  if (set("--seeds")) cfg.seeds = f.seeds;
  return cfg;
}

json volume_json(const VolumeReport& r, double tol) {
  return {{"max_deviation", r.max_deviation},
          {"worst_point", vector_json(r.worst_point)},
          {"points", r.points},
          {"tol", tol},
          {"passed", r.passed}};
}

json shear_json(const ShearFactor& s) {
  json j = {{"range", {s.range.begin, s.range.end}},
            {"U", matrix_json(s.U)},
            {"V", matrix_json(s.V)},
            {"matrix", matrix_json(assemble(s))}};
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volume-preserving networks for source-free dynamics"};
  app.require_subcommand(1);

  // generate-data
  ConfigFlags gen_flags;
  auto* gen = app.add_subcommand("generate-data", "Write the benchmark dataset (CSV + sidecar)");
  add_config_flags(gen, gen_flags, false);

  // train
  ConfigFlags train_flags;
  std::string train_dataset;
  std::string resume_from;
  std::string resume_out;
  unsigned workers = 0;
  auto* trn = app.add_subcommand("train", "Train one network per seed");
  add_config_flags(trn, train_flags, true);
  trn->add_option("--dataset", train_dataset, "Dataset CSV (default: <output-dir>/<system>.csv)");
  trn->add_option("--workers", workers, "Parallel seeds (0: hardware concurrency)");
  trn->add_option("--resume", resume_from, "Continue this checkpoint up to --epochs");
  trn->add_option("--resume-out", resume_out, "Checkpoint written by --resume");

  // predict
  std::string pred_ckpt, pred_x0, pred_preset, pred_out, pred_reference;
  std::size_t pred_steps = 150, pred_substeps = 500;
  double pred_t0 = 0.0, pred_step = 0.0;
  auto* prd = app.add_subcommand("predict", "Roll out a checkpoint or the reference dynamics");
  prd->add_option("--checkpoint", pred_ckpt, "Checkpoint manifest");
  prd->add_option("--reference", pred_reference,
                  "Integrate the true system (volterra | charged_particle) instead");
  prd->add_option("--x0", pred_x0, "Initial state, comma separated");
  prd->add_option("--preset", pred_preset, "Named initial state");
  prd->add_option("--steps", pred_steps, "Number of steps");
  prd->add_option("--t0", pred_t0, "Time of the initial state");
  prd->add_option("--time-step", pred_step, "Data step for --reference");
  prd->add_option("--substeps", pred_substeps, "Integrator steps per data step for --reference");
  prd->add_option("--out", pred_out, "Trajectory CSV")->required();

  // evaluate
  std::string ev_pred, ev_ref, ev_system, ev_out;
  auto* evl = app.add_subcommand("evaluate", "Per-step error metrics of a rollout");
  evl->add_option("--predicted", ev_pred)->required()->check(CLI::ExistingFile);
  evl->add_option("--reference", ev_ref)->required()->check(CLI::ExistingFile);
  evl->add_option("--system", ev_system)->required();
  evl->add_option("--out", ev_out, "Metrics CSV; the summary goes next to it as .json")->required();

  // check-volume
  std::string cv_ckpt;
  VolumeCheckOptions cv_opts;
  std::string cv_low, cv_high;
  auto* chk = app.add_subcommand("check-volume", "max |det J - 1| over random points");
  chk->add_option("--checkpoint", cv_ckpt)->required()->check(CLI::ExistingFile);
  chk->add_option("--points", cv_opts.points);
  chk->add_option("--tol", cv_opts.tol);
  chk->add_option("--step", cv_opts.step, "Finite-difference step");
  chk->add_option("--seed", cv_opts.seed);
  chk->add_option("--box-low", cv_low, "Lower corner, comma separated");
  chk->add_option("--box-high", cv_high, "Upper corner, comma separated");

  // gradcheck
  std::string gc_network = "r_vpnet", gc_ckpt, gc_activation = "sigmoid";
  int gc_dim = 3, gc_width = 8;
  std::uint64_t gc_seed = 0;
  double gc_step = 1e-6, gc_tol = 1e-5;
  auto* grd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  grd->add_option("--network", gc_network, "r_vpnet | la_vpnet");
  grd->add_option("--checkpoint", gc_ckpt, "Check this checkpoint instead of a random network");
  grd->add_option("--dimension", gc_dim);
  grd->add_option("--width", gc_width);
  grd->add_option("--activation", gc_activation);
  grd->add_option("--seed", gc_seed);
  grd->add_option("--step", gc_step);
  grd->add_option("--tol", gc_tol);

  // factorize
  std::string fz_matrix, fz_bias, fz_out, fz_strategy = "perturb";
  double fz_eps = 1e-10;
  auto* fct = app.add_subcommand("factorize", "Factor a unit-determinant matrix into shears");
  fct->add_option("--matrix", fz_matrix, "Square matrix CSV")->required()->check(CLI::ExistingFile);
  fct->add_option("--bias", fz_bias, "Bias, comma separated");
  fct->add_option("--eps", fz_eps);
  fct->add_option("--strategy", fz_strategy, "perturb | exact");
  fct->add_option("--out", fz_out, "JSON output (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto cfg = resolve_config(gen, gen_flags);
      std::cout << cmd_generate(cfg).string() << "\n";
      return 0;
    }

    if (*trn) {
      const auto cfg = resolve_config(trn, train_flags);
      const std::filesystem::path dataset =
          train_dataset.empty() ? dataset_path(cfg) : std::filesystem::path(train_dataset);
      if (!resume_from.empty()) {
        if (resume_out.empty()) throw std::invalid_argument("--resume needs --resume-out");
        if (trn->count("--epochs") == 0) throw std::invalid_argument("--resume needs --epochs");
        const auto out = cmd_resume(resume_from, dataset, cfg.epochs, resume_out);
        std::cout << json{{"checkpoint", out.checkpoint.string()},
                          {"history", out.history.string()},
                          {"final_loss", out.final_loss},
                          {"min_loss", out.min_loss}}
                         .dump(2)
                  << "\n";
        return 0;
      }
      const auto summary = cmd_train(cfg, dataset, workers);
      for (const auto& s : summary.seeds) {
        if (s.ok) {
          std::cerr << "seed " << s.seed << ": final loss " << s.final_loss << "\n";
        } else {
          std::cerr << "seed " << s.seed << ": failed: " << s.error << "\n";
        }
      }
      std::cout << summary.summary_file.string() << "\n";
      if (!summary.best) {
        std::cerr << "error: every seed failed\n";
        return 1;
      }
      return 0;
    }

    if (*prd) {
      if (pred_x0.empty() == pred_preset.empty()) {
        throw std::invalid_argument("give exactly one of --x0 and --preset");
      }
      const Vector x0 = pred_x0.empty() ? preset_state(pred_preset) : parse_vector(pred_x0);
      double t0 = pred_t0;
      if (!pred_preset.empty() && prd->count("--t0") == 0 && pred_preset == "particle-t50") t0 = 50.0;
      if (!pred_reference.empty()) {
        const System system = parse_system(pred_reference);
        double step = pred_step;
        if (step <= 0.0) step = system == System::kVolterra ? 0.01 : 0.5;
        cmd_reference(system, x0, pred_steps, t0, step, pred_substeps, pred_out);
      } else {
        if (pred_ckpt.empty()) throw std::invalid_argument("--checkpoint or --reference required");
        cmd_predict(pred_ckpt, x0, pred_steps, t0, pred_out);
      }
      return 0;
    }

    if (*evl) {
      const auto report = cmd_evaluate(ev_pred, ev_ref, parse_system(ev_system), ev_out);
      std::cout << "max global error " << report.max_global_error << "\n";
      return 0;
    }

    if (*chk) {
      if (!cv_low.empty()) cv_opts.box_low = parse_vector(cv_low);
      if (!cv_high.empty()) cv_opts.box_high = parse_vector(cv_high);
      const auto report = cmd_check_volume(cv_ckpt, cv_opts);
      std::cout << volume_json(report, cv_opts.tol).dump(2) << "\n";
      return report.passed ? 0 : kCheckFailed;
    }

    if (*grd) {
      Network net;
      if (!gc_ckpt.empty()) {
        net = load_checkpoint(gc_ckpt).state.network;
      } else {
        std::mt19937_64 rng(gc_seed);
        const auto act = parse_activation(gc_activation);
        net = parse_network_kind(gc_network) == NetworkKind::kRVPNet
                  ? build_rvpnet(gc_dim, gc_width, rng, act)
                  : build_lavpnet(gc_dim, act);
        randomize_parameters(net, rng);
      }
      std::mt19937_64 rng(gc_seed + 1);
      std::uniform_real_distribution<double> unit(-1.0, 1.0);
      Vector x(net.dimension);
      for (auto& v : x) v = unit(rng);
      const auto report = gradcheck(net, x, gc_step, gc_tol);
      std::cout << json{{"parameters_checked", report.parameters_checked},
                        {"max_error", report.max_error},
                        {"input_max_error", report.input_max_error},
                        {"worst_parameter", report.worst_parameter},
                        {"module_max_error", report.module_max_error},
                        {"tol", gc_tol},
                        {"passed", report.passed}}
                       .dump(2)
                << "\n";
      return report.passed ? 0 : kCheckFailed;
    }

    if (*fct) {
      const Matrix a = read_matrix_csv(fz_matrix);
      const Vector bias = fz_bias.empty() ? Vector::Zero(a.rows()) : parse_vector(fz_bias);
      PivotStrategy strategy;
      if (fz_strategy == "perturb") {
        strategy = PivotStrategy::kPerturb;
      } else if (fz_strategy == "exact") {
        strategy = PivotStrategy::kExact;
      } else {
        throw std::invalid_argument("unknown strategy '" + fz_strategy + "'");
      }
      const LinearModule lin = factor_volume_preserving(a, bias, fz_eps, strategy);
      json records = json::array();
      for (const auto& s : lin.factors) records.push_back(shear_json(s));
      emit(records, fz_out);
      const double err = (assemble(lin) - a).cwiseAbs().maxCoeff();
      std::cerr << lin.factors.size() << " shears, max entry error " << err << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
