#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "vpnet/modules.hpp"

namespace vpnet::testing {

inline Vector uniform_vector(int n, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline Matrix uniform_matrix(int r, int c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

inline Network random_network(NetworkKind kind, int dim, int width, std::uint64_t seed,
                              Activation act = Activation::kSigmoid) {
  std::mt19937_64 rng(seed);
  Network net = kind == NetworkKind::kRVPNet ? build_rvpnet(dim, width, rng, act)
                                             : build_lavpnet(dim, act);
  randomize_parameters(net, rng);
  return net;
}

/// Fresh scratch directory under the test binary's working directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::current_path() / ("scratch_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace vpnet::testing
