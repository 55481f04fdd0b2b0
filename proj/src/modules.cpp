#include "vpnet/modules.hpp"

#include <cmath>

namespace vpnet {

double activate(Activation act, double z) {
  switch (act) {
    case Activation::kSigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    case Activation::kTanh:
      return std::tanh(z);
    case Activation::kRelu:
      return z > 0.0 ? z : 0.0;
  }
  return z;
}

double activate_derivative(Activation act, double z) {
  switch (act) {
    case Activation::kSigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 - s);
    }
    case Activation::kTanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::kRelu:
      return z > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(NetworkKind kind) {
  return kind == NetworkKind::kRVPNet ? "r_vpnet" : "la_vpnet";
}

NetworkKind parse_network_kind(std::string_view name) {
  if (name == "r_vpnet") return NetworkKind::kRVPNet;
  if (name == "la_vpnet") return NetworkKind::kLAVPNet;
  throw std::invalid_argument("unknown network kind '" + std::string(name) + "'");
}

IndexRange IndexRange::make(int i, int j, int dimension) {
  if (!(1 <= i && i < j && j <= dimension + 1)) {
    throw std::invalid_argument("index range [" + std::to_string(i) + ":" + std::to_string(j) +
                                ") invalid for dimension " + std::to_string(dimension));
  }
  if (dimension - (j - i) < 1) {
    throw std::invalid_argument("index range must leave a nonempty complement");
  }
  return IndexRange{i, j};
}

Matrix gather_complement(const Matrix& states, IndexRange range) {
  const auto dim = static_cast<int>(states.rows());
  const int left = range.left_size();
  const int right = range.right_size(dim);
  Matrix out(left + right, states.cols());
  out.topRows(left) = states.topRows(left);
  out.bottomRows(right) = states.bottomRows(right);
  return out;
}

void scatter_complement_add(Matrix& states, IndexRange range, const Matrix& delta) {
  const auto dim = static_cast<int>(states.rows());
  const int left = range.left_size();
  const int right = range.right_size(dim);
  states.topRows(left) += delta.topRows(left);
  states.bottomRows(right) += delta.bottomRows(right);
}

bool ShearFactor::has_unit_diagonal() const {
  return diagonal.size() == 0 || (diagonal.array() == 1.0).all();
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

void check_range(IndexRange r, int dimension) {
  require(1 <= r.begin && r.begin < r.end && r.end <= dimension + 1 &&
              r.complement_size(dimension) >= 1,
          "module index range out of bounds");
}

void check_shear(const ShearFactor& s, int dimension) {
  require(s.range.begin >= 1 && s.range.begin < s.range.end && s.range.end <= dimension + 1,
          "shear range out of bounds");
  const int span = s.range.span();
  require(s.U.rows() == span && s.U.cols() == s.range.left_size(), "shear U has wrong shape");
  require(s.V.rows() == span && s.V.cols() == s.range.right_size(dimension),
          "shear V has wrong shape");
  require(s.diagonal.size() == 0 || s.diagonal.size() == span, "shear diagonal has wrong size");
}

Matrix activate(Activation act, const Matrix& z) {
  return z.unaryExpr([act](double v) { return activate(act, v); });
}

}  // namespace

int module_dimension(const Module& module) {
  return std::visit([](const auto& m) { return m.dimension(); }, module);
}

void validate(const Module& module, int dimension) {
  std::visit(
      [dimension](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ResidualModule>) {
          check_range(m.range, dimension);
          require(m.K.cols() == m.range.complement_size(dimension), "residual K has wrong shape");
          require(m.K.rows() == m.b.size(), "residual K/b width mismatch");
          require(m.a.rows() == m.range.span() && m.a.cols() == m.b.size(),
                  "residual a has wrong shape");
        } else if constexpr (std::is_same_v<T, LinearModule>) {
          require(m.bias.size() == dimension, "linear bias has wrong size");
          for (const auto& s : m.factors) check_shear(s, dimension);
        } else {
          check_range(m.range, dimension);
          require(m.a.rows() == m.range.span() &&
                      m.a.cols() == m.range.complement_size(dimension),
                  "activation a has wrong shape");
        }
      },
      module);
}

void validate(const Network& net) {
  require(net.dimension >= 1, "network dimension must be positive");
  for (const auto& m : net.modules) validate(m, net.dimension);
  if (net.kind == NetworkKind::kRVPNet) {
    for (const auto& m : net.modules) {
      if (!std::holds_alternative<ResidualModule>(m)) {
        throw std::invalid_argument("R-VPNet may only contain residual modules");
      }
    }
    return;
  }
  const auto n = net.modules.size();
  if (n % 2 == 0) throw std::invalid_argument("LA-VPNet must have an odd number of modules");
  for (std::size_t k = 0; k < n; ++k) {
    const bool want_linear = k % 2 == 0;
    const bool is_linear = std::holds_alternative<LinearModule>(net.modules[k]);
    const bool is_act = std::holds_alternative<ActivationModule>(net.modules[k]);
    if (want_linear ? !is_linear : !is_act) {
      throw std::invalid_argument("LA-VPNet must alternate linear and activation modules, "
                                  "starting and ending with a linear module");
    }
  }
}

void apply_shear(const ShearFactor& s, Matrix& states) {
  const auto dim = static_cast<int>(states.rows());
  const int off = s.range.offset();
  const int span = s.range.span();
  const int left = s.range.left_size();
  const int right = s.range.right_size(dim);
  Matrix update = Matrix::Zero(span, states.cols());
  if (left > 0) update.noalias() += s.U * states.topRows(left);
  if (right > 0) update.noalias() += s.V * states.bottomRows(right);
  if (s.diagonal.size() > 0) {
    states.middleRows(off, span) = s.diagonal.asDiagonal() * states.middleRows(off, span);
  }
  states.middleRows(off, span) += update;
}

void apply_shear_inverse(const ShearFactor& s, Matrix& states) {
  const auto dim = static_cast<int>(states.rows());
  const int off = s.range.offset();
  const int span = s.range.span();
  const int left = s.range.left_size();
  const int right = s.range.right_size(dim);
  Matrix update = Matrix::Zero(span, states.cols());
  if (left > 0) update.noalias() += s.U * states.topRows(left);
  if (right > 0) update.noalias() += s.V * states.bottomRows(right);
  states.middleRows(off, span) -= update;
  if (s.diagonal.size() > 0) {
    states.middleRows(off, span) =
        s.diagonal.cwiseInverse().asDiagonal() * states.middleRows(off, span);
  }
}

Matrix module_forward(const Module& module, const Matrix& states) {
  return std::visit(
      [&states](const auto& m) -> Matrix {
        using T = std::decay_t<decltype(m)>;
        if (states.rows() != m.dimension()) throw ShapeError("state dimension mismatch");
        Matrix out = states;
        if constexpr (std::is_same_v<T, ResidualModule>) {
          Matrix hidden = m.K * gather_complement(states, m.range);
          hidden.colwise() += m.b;
          out.middleRows(m.range.offset(), m.range.span()).noalias() +=
              m.a * activate(m.activation, hidden);
        } else if constexpr (std::is_same_v<T, LinearModule>) {
          for (auto it = m.factors.rbegin(); it != m.factors.rend(); ++it) apply_shear(*it, out);
          out.colwise() += m.bias;
        } else {
          out.middleRows(m.range.offset(), m.range.span()).noalias() +=
              m.a * activate(m.activation, gather_complement(states, m.range));
        }
        return out;
      },
      module);
}

Vector module_forward(const Module& module, const Vector& x) {
  return module_forward(module, Matrix(x)).col(0);
}

Matrix module_inverse(const Module& module, const Matrix& states) {
  return std::visit(
      [&states](const auto& m) -> Matrix {
        using T = std::decay_t<decltype(m)>;
        if (states.rows() != m.dimension()) throw ShapeError("state dimension mismatch");
        Matrix out = states;
        if constexpr (std::is_same_v<T, ResidualModule>) {
          Matrix hidden = m.K * gather_complement(states, m.range);
          hidden.colwise() += m.b;
          out.middleRows(m.range.offset(), m.range.span()).noalias() -=
              m.a * activate(m.activation, hidden);
        } else if constexpr (std::is_same_v<T, LinearModule>) {
          out.colwise() -= m.bias;
          for (const auto& s : m.factors) apply_shear_inverse(s, out);
        } else {
          out.middleRows(m.range.offset(), m.range.span()).noalias() -=
              m.a * activate(m.activation, gather_complement(states, m.range));
        }
        return out;
      },
      module);
}

Vector residual_forward(const ResidualModule& p, const Vector& x) {
  return module_forward(Module{p}, x);
}

Vector linear_forward(const LinearModule& p, const Vector& x) {
  return module_forward(Module{p}, x);
}

Vector activation_forward(const ActivationModule& p, const Vector& x) {
  return module_forward(Module{p}, x);
}

Matrix network_forward(const Network& net, const Matrix& states) {
  if (states.rows() != net.dimension) throw ShapeError("state dimension mismatch");
  Matrix out = states;
  for (const auto& m : net.modules) out = module_forward(m, out);
  return out;
}

Vector network_forward(const Network& net, const Vector& x) {
  return network_forward(net, Matrix(x)).col(0);
}

Vector network_inverse(const Network& net, const Vector& y) {
  if (y.size() != net.dimension) throw ShapeError("state dimension mismatch");
  Matrix out = y;
  for (auto it = net.modules.rbegin(); it != net.modules.rend(); ++it) {
    out = module_inverse(*it, out);
  }
  return out.col(0);
}

Matrix assemble(const ShearFactor& s) {
  const int dim = s.dimension();
  Matrix m = Matrix::Identity(dim, dim);
  const int off = s.range.offset();
  const int span = s.range.span();
  m.block(off, 0, span, s.U.cols()) = s.U;
  m.block(off, s.range.end - 1, span, s.V.cols()) = s.V;
  if (s.diagonal.size() > 0) m.block(off, off, span, span) = s.diagonal.asDiagonal();
  return m;
}

Matrix assemble(const LinearModule& p) {
  const int dim = p.dimension();
  Matrix m = Matrix::Identity(dim, dim);
  for (const auto& s : p.factors) m = m * assemble(s);
  return m;
}

ShearFactor zero_row_shear(int dimension, int row) {
  ShearFactor s;
  s.range = IndexRange::make(row, row + 1, dimension);
  s.U = Matrix::Zero(1, row - 1);
  s.V = Matrix::Zero(1, dimension - row);
  return s;
}

Network build_rvpnet(int dimension, int width, std::mt19937_64& rng, Activation activation) {
  if (dimension < 2) throw std::invalid_argument("R-VPNet needs dimension >= 2");
  if (width < 1) throw std::invalid_argument("R-VPNet needs width >= 1");
  Network net;
  net.kind = NetworkKind::kRVPNet;
  net.dimension = dimension;
  net.width = width;
  net.activation = activation;
  const int fan_in = dimension - 1;
  const double bound = std::sqrt(1.0 / fan_in);
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (int g = 1; g <= dimension; ++g) {
    const int middle = g == dimension ? 1 : g + 1;
    for (int row : {g, middle, g}) {
      ResidualModule r;
      r.range = IndexRange::make(row, row + 1, dimension);
      r.K.resize(width, fan_in);
      for (Eigen::Index c = 0; c < r.K.cols(); ++c) {
        for (Eigen::Index k = 0; k < r.K.rows(); ++k) r.K(k, c) = uniform(rng);
      }
      r.b = Vector::Zero(width);
      r.a = Matrix::Zero(1, width);
      r.activation = activation;
      net.modules.emplace_back(std::move(r));
    }
  }
  return net;
}

namespace {

LinearModule experiment_linear_module(int dimension) {
  LinearModule lin;
  for (int i = 1; i <= dimension; ++i) {
    const int next = i == dimension ? 1 : i + 1;
    for (int row : {i, next, i}) lin.factors.push_back(zero_row_shear(dimension, row));
  }
  lin.bias = Vector::Zero(dimension);
  return lin;
}

}  // namespace

Network build_lavpnet(int dimension, Activation activation) {
  if (dimension < 2) throw std::invalid_argument("LA-VPNet needs dimension >= 2");
  Network net;
  net.kind = NetworkKind::kLAVPNet;
  net.dimension = dimension;
  net.width = 0;
  net.activation = activation;
  for (int g = 1; g <= dimension; ++g) {
    const int middle = g == dimension ? 1 : g + 1;
    for (int row : {g, middle, g}) {
      net.modules.emplace_back(experiment_linear_module(dimension));
      ActivationModule act;
      act.range = IndexRange::make(row, row + 1, dimension);
      act.a = Matrix::Zero(1, dimension - 1);
      act.activation = activation;
      net.modules.emplace_back(std::move(act));
    }
  }
  net.modules.emplace_back(experiment_linear_module(dimension));
  return net;
}

Network concatenate(const Network& first, const Network& second) {
  if (first.dimension != second.dimension) throw ShapeError("cannot compose networks of different dimension");
  Network out = first;
  out.modules.insert(out.modules.end(), second.modules.begin(), second.modules.end());
  return out;
}

std::size_t parameter_count(const Module& module) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ResidualModule>) {
          return m.K.size() + m.b.size() + m.a.size();
        } else if constexpr (std::is_same_v<T, LinearModule>) {
          std::size_t n = m.bias.size();
          for (const auto& s : m.factors) n += s.U.size() + s.V.size();
          return n;
        } else {
          return m.a.size();
        }
      },
      module);
}

std::size_t parameter_count(const Network& net) {
  std::size_t n = 0;
  for (const auto& m : net.modules) n += parameter_count(m);
  return n;
}

namespace {

// Visits every trainable block in packing order.
template <typename ModuleRange, typename Fn>
void for_each_block(ModuleRange& modules, Fn&& fn) {
  for (auto& module : modules) {
    std::visit(
        [&fn](auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, ResidualModule>) {
            fn(m.K);
            fn(m.b);
            fn(m.a);
          } else if constexpr (std::is_same_v<T, LinearModule>) {
            for (auto& s : m.factors) {
              fn(s.U);
              fn(s.V);
            }
            fn(m.bias);
          } else {
            fn(m.a);
          }
        },
        module);
  }
}

}  // namespace

Vector pack_parameters(const std::vector<Module>& modules) {
  std::size_t total = 0;
  for (const auto& m : modules) total += parameter_count(m);
  Vector flat(static_cast<Eigen::Index>(total));
  Eigen::Index pos = 0;
  for_each_block(modules, [&](const auto& block) {
    flat.segment(pos, block.size()) = Eigen::Map<const Vector>(block.data(), block.size());
    pos += block.size();
  });
  return flat;
}

void unpack_parameters(std::vector<Module>& modules, const Vector& flat) {
  std::size_t total = 0;
  for (const auto& m : modules) total += parameter_count(m);
  if (static_cast<std::size_t>(flat.size()) != total) {
    throw ShapeError("parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                     std::to_string(total));
  }
  Eigen::Index pos = 0;
  for_each_block(modules, [&](auto& block) {
    Eigen::Map<Vector>(block.data(), block.size()) = flat.segment(pos, block.size());
    pos += block.size();
  });
}

void randomize_parameters(Network& net, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> uniform(-scale, scale);
  Vector flat = pack_parameters(net.modules);
  for (Eigen::Index k = 0; k < flat.size(); ++k) flat[k] = uniform(rng);
  unpack_parameters(net.modules, flat);
}

}  // namespace vpnet
