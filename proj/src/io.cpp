#include "vpnet/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vpnet {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return in;
}

double parse_double(std::string_view text, const fs::path& path, std::size_t line) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError(path.string() + ":" + std::to_string(line) + ": bad number '" +
                      std::string(text) + "'");
  }
  return value;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void write_trajectory_csv(const fs::path& path, const TimedTrajectory& traj) {
  if (traj.times.size() != traj.states.size()) {
    throw std::invalid_argument("trajectory times and states differ in length");
  }
  auto out = open_out(path);
  const auto dim = traj.states.empty() ? 0 : traj.states.front().size();
  out << "t";
  for (Eigen::Index k = 1; k <= dim; ++k) out << ",c" << k;
  out << "\n";
  for (std::size_t n = 0; n < traj.states.size(); ++n) {
    out << format_double(traj.times[n]);
    for (Eigen::Index k = 0; k < dim; ++k) out << "," << format_double(traj.states[n][k]);
    out << "\n";
  }
}

void write_trajectory_csv(const fs::path& path, const Trajectory& states, double t0,
                          double time_step) {
  TimedTrajectory traj;
  traj.states = states;
  for (std::size_t n = 0; n < states.size(); ++n) {
    traj.times.push_back(t0 + static_cast<double>(n) * time_step);
  }
  write_trajectory_csv(path, traj);
}

TimedTrajectory read_trajectory_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header[0] != "t") {
    throw FormatError(path.string() + ": header must read t,c1,...,cD");
  }
  for (std::size_t k = 1; k < header.size(); ++k) {
    if (header[k] != "c" + std::to_string(k)) {
      throw FormatError(path.string() + ": header must read t,c1,...,cD");
    }
  }
  const auto dim = static_cast<Eigen::Index>(header.size() - 1);
  TimedTrajectory traj;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (static_cast<Eigen::Index>(cells.size()) != dim + 1) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(dim + 1) + " columns");
    }
    traj.times.push_back(parse_double(cells[0], path, lineno));
    Vector state(dim);
    for (Eigen::Index k = 0; k < dim; ++k) state[k] = parse_double(cells[k + 1], path, lineno);
    traj.states.push_back(std::move(state));
  }
  return traj;
}

fs::path sidecar_path(const fs::path& csv_path) {
  fs::path p = csv_path;
  p.replace_extension(".json");
  return p;
}

void save_dataset(const fs::path& csv_path, const TrajectoryDataset& dataset) {
  if (dataset.trajectories.empty()) {
    throw std::invalid_argument("only trajectory-backed datasets can be written");
  }
  TimedTrajectory rows;
  for (const auto& t : dataset.trajectories) {
    for (Eigen::Index n = 0; n < t.cols(); ++n) {
      rows.times.push_back(static_cast<double>(n) * dataset.time_step);
      rows.states.push_back(t.col(n));
    }
  }
  write_trajectory_csv(csv_path, rows);

  json meta;
  meta["format_version"] = kDatasetFormatVersion;
  meta["system"] = dataset.system;
  meta["dimension"] = dataset.dimension();
  meta["time_step"] = dataset.time_step;
  meta["state_layout"] = dataset.state_layout;
  meta["num_pairs"] = dataset.size();
  meta["trajectories"] = json::array();
  for (const auto& s : dataset.sources) {
    meta["trajectories"].push_back({{"initial_condition", vector_json(s.initial_condition)},
                                    {"first_row", s.first_row},
                                    {"num_points", s.num_points}});
  }
  meta["integrator"] = {{"method", dataset.integrator.method},
                        {"substeps", dataset.integrator.substeps},
                        {"substep", dataset.integrator.substep}};
  auto out = open_out(sidecar_path(csv_path));
  out << meta.dump(2) << "\n";
}

TrajectoryDataset load_dataset(const fs::path& csv_path) {
  json meta;
  try {
    meta = json::parse(open_in(sidecar_path(csv_path)));
  } catch (const json::exception& e) {
    throw FormatError(sidecar_path(csv_path).string() + ": " + e.what());
  }
  try {
    if (meta.at("format_version").get<int>() != kDatasetFormatVersion) {
      throw FormatError("unsupported dataset format version");
    }
    const auto rows = read_trajectory_csv(csv_path);
    const auto dim = meta.at("dimension").get<Eigen::Index>();
    std::vector<Matrix> trajs;
    for (const auto& t : meta.at("trajectories")) {
      const auto first = t.at("first_row").get<std::size_t>();
      const auto count = t.at("num_points").get<std::size_t>();
      if (first + count > rows.states.size()) throw FormatError("trajectory rows out of range");
      Matrix m(dim, static_cast<Eigen::Index>(count));
      for (std::size_t n = 0; n < count; ++n) {
        if (rows.states[first + n].size() != dim) throw FormatError("row dimension mismatch");
        m.col(static_cast<Eigen::Index>(n)) = rows.states[first + n];
      }
      trajs.push_back(std::move(m));
    }
    auto ds = dataset_from_trajectories(std::move(trajs), meta.at("time_step").get<double>());
    ds.system = meta.at("system").get<std::string>();
    ds.state_layout = meta.at("state_layout").get<std::vector<std::string>>();
    const auto& integ = meta.at("integrator");
    ds.integrator = {integ.at("method").get<std::string>(), integ.at("substeps").get<std::size_t>(),
                     integ.at("substep").get<double>()};
    return ds;
  } catch (const json::exception& e) {
    throw FormatError(sidecar_path(csv_path).string() + ": " + e.what());
  }
}

void write_history_csv(const fs::path& path, const std::vector<TrainingRecord>& history) {
  auto out = open_out(path);
  out << "epoch,loss,lr\n";
  for (const auto& r : history) {
    out << r.epoch << "," << format_double(r.loss) << "," << format_double(r.learning_rate)
        << "\n";
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

class BlobWriter {
 public:
  json add(const double* data, Eigen::Index rows, Eigen::Index cols) {
    json entry = {{"offset", values_.size()}, {"rows", rows}, {"cols", cols}};
    values_.insert(values_.end(), data, data + rows * cols);
    return entry;
  }
  json add(const Matrix& m) { return add(m.data(), m.rows(), m.cols()); }
  json add(const Vector& v) { return add(v.data(), v.size(), 1); }

  void write(const fs::path& path) const {
    auto out = open_out(path, std::ios::out | std::ios::binary);
    for (double v : values_) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      unsigned char bytes[8];
      for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xFF);
      out.write(reinterpret_cast<const char*>(bytes), 8);
    }
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
  }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<double> values_;
};

std::vector<double> read_blob(const fs::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  std::vector<double> values;
  unsigned char bytes[8];
  while (in.read(reinterpret_cast<char*>(bytes), 8)) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
    values.push_back(std::bit_cast<double>(bits));
  }
  if (in.gcount() != 0) throw FormatError(path.string() + ": truncated float64 blob");
  return values;
}

Matrix read_block(const std::vector<double>& blob, const json& entry) {
  const auto offset = entry.at("offset").get<std::size_t>();
  const auto rows = entry.at("rows").get<Eigen::Index>();
  const auto cols = entry.at("cols").get<Eigen::Index>();
  const auto count = static_cast<std::size_t>(rows * cols);
  if (offset + count > blob.size()) throw FormatError("parameter block outside the blob");
  return Eigen::Map<const Matrix>(blob.data() + offset, rows, cols);
}

json range_json(IndexRange r) { return json::array({r.begin, r.end}); }

IndexRange range_from_json(const json& j) {
  return IndexRange{j.at(0).get<int>(), j.at(1).get<int>()};
}

json config_json(const TrainingConfig& cfg) {
  return {{"initial_lr", cfg.initial_lr},
          {"decay", cfg.decay},
          {"epochs", cfg.epochs},
          {"seed", cfg.seed},
          {"log_interval", cfg.log_interval},
          {"stop_at", cfg.stop_at}};
}

TrainingConfig config_from_json(const json& j) {
  TrainingConfig cfg;
  cfg.initial_lr = j.at("initial_lr").get<double>();
  cfg.decay = j.at("decay").get<double>();
  cfg.epochs = j.at("epochs").get<long>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.log_interval = j.at("log_interval").get<long>();
  cfg.stop_at = j.value("stop_at", -1L);
  return cfg;
}

}  // namespace

fs::path checkpoint_blob_path(const fs::path& manifest) {
  fs::path p = manifest;
  p.replace_extension(".bin");
  return p;
}

void save_checkpoint(const fs::path& manifest, const Checkpoint& ckpt) {
  const Network& net = ckpt.state.network;
  BlobWriter blob;
  json modules = json::array();
  for (const auto& module : net.modules) {
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, ResidualModule>) {
            modules.push_back({{"type", "residual"},
                               {"range", range_json(m.range)},
                               {"activation", std::string(to_string(m.activation))},
                               {"K", blob.add(m.K)},
                               {"b", blob.add(m.b)},
                               {"a", blob.add(m.a)}});
          } else if constexpr (std::is_same_v<T, LinearModule>) {
            json factors = json::array();
            for (const auto& s : m.factors) {
              json f = {{"range", range_json(s.range)}, {"U", blob.add(s.U)}, {"V", blob.add(s.V)}};
              if (s.diagonal.size() > 0) f["diagonal"] = vector_json(s.diagonal);
              factors.push_back(std::move(f));
            }
            json bias = blob.add(m.bias);
            modules.push_back({{"type", "linear"}, {"factors", factors}, {"bias", bias}});
          } else {
            modules.push_back({{"type", "activation"},
                               {"range", range_json(m.range)},
                               {"activation", std::string(to_string(m.activation))},
                               {"a", blob.add(m.a)}});
          }
        },
        module);
  }
  const auto& opt = ckpt.state.optimizer;
  json optimizer = {{"beta1", opt.beta1},
                    {"beta2", opt.beta2},
                    {"epsilon", opt.epsilon},
                    {"step", opt.step},
                    {"first_moment", blob.add(opt.first_moment)},
                    {"second_moment", blob.add(opt.second_moment)}};

  json meta;
  meta["format_version"] = kCheckpointFormatVersion;
  meta["network"] = {{"kind", std::string(to_string(net.kind))},
                     {"dimension", net.dimension},
                     {"width", net.width},
                     {"activation", std::string(to_string(net.activation))},
                     {"parameter_count", parameter_count(net)}};
  meta["modules"] = std::move(modules);
  meta["optimizer"] = std::move(optimizer);
  meta["training"] = {{"epoch", ckpt.state.epoch},
                      {"min_loss", std::isfinite(ckpt.state.min_loss) ? json(ckpt.state.min_loss)
                                                                      : json(nullptr)},
                      {"config", config_json(ckpt.config)}};
  meta["data"] = {{"system", ckpt.system}, {"time_step", ckpt.time_step}};
  meta["rng_state"] = ckpt.rng_state;
  const fs::path blob_path = checkpoint_blob_path(manifest);
  meta["blob"] = {{"file", blob_path.filename().string()},
                  {"dtype", "float64"},
                  {"byte_order", "little"},
                  {"count", blob.size()}};

  blob.write(blob_path);
  auto out = open_out(manifest);
  out << meta.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& manifest) {
  json meta;
  try {
    meta = json::parse(open_in(manifest));
  } catch (const json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  try {
    if (meta.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw FormatError("unsupported checkpoint format version");
    }
    const fs::path blob_path =
        manifest.parent_path() / meta.at("blob").at("file").get<std::string>();
    const auto blob = read_blob(blob_path);
    if (blob.size() != meta.at("blob").at("count").get<std::size_t>()) {
      throw FormatError(blob_path.string() + ": blob size does not match the manifest");
    }

    Checkpoint ckpt;
    Network& net = ckpt.state.network;
    const auto& nj = meta.at("network");
    net.kind = parse_network_kind(nj.at("kind").get<std::string>());
    net.dimension = nj.at("dimension").get<int>();
    net.width = nj.at("width").get<int>();
    net.activation = parse_activation(nj.at("activation").get<std::string>());
    for (const auto& mj : meta.at("modules")) {
      const auto type = mj.at("type").get<std::string>();
      if (type == "residual") {
        ResidualModule m;
        m.range = range_from_json(mj.at("range"));
        m.activation = parse_activation(mj.at("activation").get<std::string>());
        m.K = read_block(blob, mj.at("K"));
        m.b = read_block(blob, mj.at("b"));
        m.a = read_block(blob, mj.at("a"));
        net.modules.emplace_back(std::move(m));
      } else if (type == "linear") {
        LinearModule m;
        for (const auto& fj : mj.at("factors")) {
          ShearFactor s;
          s.range = range_from_json(fj.at("range"));
          s.U = read_block(blob, fj.at("U"));
          s.V = read_block(blob, fj.at("V"));
          if (fj.contains("diagonal")) s.diagonal = vector_from_json(fj.at("diagonal"));
          m.factors.push_back(std::move(s));
        }
        m.bias = read_block(blob, mj.at("bias"));
        net.modules.emplace_back(std::move(m));
      } else if (type == "activation") {
        ActivationModule m;
        m.range = range_from_json(mj.at("range"));
        m.activation = parse_activation(mj.at("activation").get<std::string>());
        m.a = read_block(blob, mj.at("a"));
        net.modules.emplace_back(std::move(m));
      } else {
        throw FormatError("unknown module type '" + type + "'");
      }
    }
    try {
      validate(net);
    } catch (const std::exception& e) {
      throw FormatError(manifest.string() + ": " + e.what());
    }

    const auto& oj = meta.at("optimizer");
    auto& opt = ckpt.state.optimizer;
    opt.beta1 = oj.at("beta1").get<double>();
    opt.beta2 = oj.at("beta2").get<double>();
    opt.epsilon = oj.at("epsilon").get<double>();
    opt.step = oj.at("step").get<long>();
    opt.first_moment = read_block(blob, oj.at("first_moment"));
    opt.second_moment = read_block(blob, oj.at("second_moment"));
    const auto params = static_cast<Eigen::Index>(parameter_count(net));
    if (opt.first_moment.size() != params || opt.second_moment.size() != params) {
      throw FormatError("optimizer state does not match the parameter count");
    }

    const auto& tj = meta.at("training");
    ckpt.state.epoch = tj.at("epoch").get<long>();
    ckpt.state.min_loss = tj.at("min_loss").is_null()
                              ? std::numeric_limits<double>::infinity()
                              : tj.at("min_loss").get<double>();
    ckpt.config = config_from_json(tj.at("config"));
    ckpt.system = meta.at("data").at("system").get<std::string>();
    ckpt.time_step = meta.at("data").at("time_step").get<double>();
    ckpt.rng_state = meta.at("rng_state").get<std::string>();
    return ckpt;
  } catch (const json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
}

}  // namespace vpnet
