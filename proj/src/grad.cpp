#include "vpnet/grad.hpp"

#include <algorithm>
#include <cmath>

namespace vpnet {

namespace {

Matrix apply_activation(Activation act, const Matrix& z) {
  return z.unaryExpr([act](double v) { return activate(act, v); });
}

Matrix apply_derivative(Activation act, const Matrix& z) {
  return z.unaryExpr([act](double v) { return activate_derivative(act, v); });
}

Matrix as_matrix(const Vector& v) { return Matrix(v); }

}  // namespace

Matrix forward_with_tape(const Network& net, const Matrix& states, Tape& tape) {
  if (states.rows() != net.dimension) throw ShapeError("state dimension mismatch");
  tape.entries.clear();
  tape.entries.reserve(net.modules.size());
  tape.samples = states.cols();
  Matrix x = states;
  for (const auto& module : net.modules) {
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if (x.rows() != m.dimension()) throw ShapeError("state dimension mismatch");
          if constexpr (std::is_same_v<T, ResidualModule>) {
            ResidualTape entry;
            entry.complement = gather_complement(x, m.range);
            entry.hidden = m.K * entry.complement;
            entry.hidden.colwise() += m.b;
            entry.activated = apply_activation(m.activation, entry.hidden);
            x.middleRows(m.range.offset(), m.range.span()).noalias() += m.a * entry.activated;
            tape.entries.emplace_back(std::move(entry));
          } else if constexpr (std::is_same_v<T, LinearModule>) {
            LinearTape entry;
            entry.shear_inputs.resize(m.factors.size());
            for (std::size_t k = m.factors.size(); k-- > 0;) {
              entry.shear_inputs[k] = x;
              apply_shear(m.factors[k], x);
            }
            x.colwise() += m.bias;
            tape.entries.emplace_back(std::move(entry));
          } else {
            ActivationTape entry;
            entry.complement = gather_complement(x, m.range);
            x.middleRows(m.range.offset(), m.range.span()).noalias() +=
                m.a * apply_activation(m.activation, entry.complement);
            tape.entries.emplace_back(std::move(entry));
          }
        },
        module);
  }
  return x;
}

std::pair<Vector, Tape> forward_with_tape(const Network& net, const Vector& x) {
  Tape tape;
  Matrix out = forward_with_tape(net, as_matrix(x), tape);
  return {out.col(0), std::move(tape)};
}

GradientBundle backward(const Network& net, const Tape& tape, const Matrix& upstream) {
  if (tape.entries.size() != net.modules.size()) {
    throw std::logic_error("tape does not match network: module count differs");
  }
  if (upstream.rows() != net.dimension || upstream.cols() != tape.samples) {
    throw ShapeError("upstream gradient has wrong shape");
  }
  GradientBundle grads;
  grads.modules = net.modules;
  Matrix g = upstream;

  for (std::size_t idx = net.modules.size(); idx-- > 0;) {
    const auto& module = net.modules[idx];
    const auto& entry = tape.entries[idx];
    auto& out = grads.modules[idx];
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, ResidualModule>) {
            const auto* t = std::get_if<ResidualTape>(&entry);
            if (t == nullptr) throw std::logic_error("tape entry kind does not match module");
            auto& dm = std::get<ResidualModule>(out);
            const Matrix g_block = g.middleRows(m.range.offset(), m.range.span());
            dm.a.noalias() = g_block * t->activated.transpose();
            const Matrix d_hidden =
                (m.a.transpose() * g_block).cwiseProduct(apply_derivative(m.activation, t->hidden));
            dm.K.noalias() = d_hidden * t->complement.transpose();
            dm.b = d_hidden.rowwise().sum();
            scatter_complement_add(g, m.range, m.K.transpose() * d_hidden);
          } else if constexpr (std::is_same_v<T, LinearModule>) {
            const auto* t = std::get_if<LinearTape>(&entry);
            if (t == nullptr || t->shear_inputs.size() != m.factors.size()) {
              throw std::logic_error("tape entry kind does not match module");
            }
            auto& dm = std::get<LinearModule>(out);
            dm.bias = g.rowwise().sum();
            // Output of factor k feeds factor k-1, so walk the factors left to right.
            for (std::size_t k = 0; k < m.factors.size(); ++k) {
              const auto& s = m.factors[k];
              auto& ds = dm.factors[k];
              const Matrix& in = t->shear_inputs[k];
              const int off = s.range.offset();
              const int span = s.range.span();
              const int left = s.range.left_size();
              const int right = s.range.right_size(net.dimension);
              const Matrix g_block = g.middleRows(off, span);
              ds.U.noalias() = g_block * in.topRows(left).transpose();
              ds.V.noalias() = g_block * in.bottomRows(right).transpose();
              if (left > 0) g.topRows(left).noalias() += s.U.transpose() * g_block;
              if (right > 0) g.bottomRows(right).noalias() += s.V.transpose() * g_block;
              if (s.diagonal.size() > 0) {
                g.middleRows(off, span) = s.diagonal.asDiagonal() * g_block;
              }
            }
          } else {
            const auto* t = std::get_if<ActivationTape>(&entry);
            if (t == nullptr) throw std::logic_error("tape entry kind does not match module");
            auto& dm = std::get<ActivationModule>(out);
            const Matrix g_block = g.middleRows(m.range.offset(), m.range.span());
            dm.a.noalias() = g_block * apply_activation(m.activation, t->complement).transpose();
            const Matrix d_comp = (m.a.transpose() * g_block)
                                      .cwiseProduct(apply_derivative(m.activation, t->complement));
            scatter_complement_add(g, m.range, d_comp);
          }
        },
        module);
  }
  grads.input = std::move(g);
  return grads;
}

GradientBundle backward(const Network& net, const Tape& tape, const Vector& upstream) {
  return backward(net, tape, as_matrix(upstream));
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck(const Network& net, const Vector& x, double step, double tol,
                          const GradientFn& analytic) {
  if (!(step > 0.0)) throw std::invalid_argument("gradcheck step must be positive");
  const int dim = net.dimension;
  Vector upstream(dim);
  for (int k = 0; k < dim; ++k) upstream[k] = (k % 2 == 0 ? 1.0 : -1.0) * (k + 1) / dim;

  GradientBundle grads;
  if (analytic) {
    grads = analytic(net, x, upstream);
  } else {
    auto [y, tape] = forward_with_tape(net, x);
    grads = backward(net, tape, upstream);
  }

  auto objective = [&](const Network& n, const Vector& input) {
    return upstream.dot(network_forward(n, input));
  };

  GradcheckReport report;
  report.module_max_error.assign(net.modules.size(), 0.0);

  Network probe = net;
  Vector params = pack_parameters(net.modules);
  const Vector analytic_flat = pack_parameters(grads.modules);
  std::size_t offset = 0;
  for (std::size_t mi = 0; mi < net.modules.size(); ++mi) {
    const std::size_t count = parameter_count(net.modules[mi]);
    for (std::size_t k = offset; k < offset + count; ++k) {
      const double saved = params[k];
      const double hi = saved + step, lo = saved - step;
      params[k] = hi;
      unpack_parameters(probe.modules, params);
      const double plus = objective(probe, x);
      params[k] = lo;
      unpack_parameters(probe.modules, params);
      const double minus = objective(probe, x);
      params[k] = saved;
      const double numeric = (plus - minus) / (hi - lo);
      const double err = relative_error(analytic_flat[k], numeric);
      report.module_max_error[mi] = std::max(report.module_max_error[mi], err);
      if (err > report.max_error) {
        report.max_error = err;
        report.worst_parameter = k;
      }
      ++report.parameters_checked;
    }
    offset += count;
  }

  Vector probe_x = x;
  for (int k = 0; k < dim; ++k) {
    const double hi = x[k] + step, lo = x[k] - step;
    probe_x[k] = hi;
    const double plus = objective(net, probe_x);
    probe_x[k] = lo;
    const double minus = objective(net, probe_x);
    probe_x[k] = x[k];
    const double numeric = (plus - minus) / (hi - lo);
    report.input_max_error =
        std::max(report.input_max_error, relative_error(grads.input(k, 0), numeric));
  }
  report.max_error = std::max(report.max_error, report.input_max_error);
  report.passed = report.max_error <= tol;
  return report;
}

}  // namespace vpnet
