#include "vpnet/factorization.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vpnet {

namespace {

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Determinant of the 2x2 core of adjacent-shear rows.
double core_determinant(const Matrix& rows, int pivot) {
  const int c = pivot - 1;
  return rows(0, c) * rows(1, c + 1) - rows(0, c + 1) * rows(1, c);
}

// Inverse of an adjacent shear: the same row band, with
// [W1, C, W2] -> [-C^{-1} W1, C^{-1}, -C^{-1} W2].
AdjacentShear inverse(const AdjacentShear& p) {
  const int c = p.pivot - 1;
  const Eigen::Matrix2d core = p.rows.block<2, 2>(0, c);
  const double det = core.determinant();
  Eigen::Matrix2d inv;
  inv << core(1, 1), -core(0, 1), -core(1, 0), core(0, 0);
  inv /= det;
  AdjacentShear out;
  out.pivot = p.pivot;
  out.rows = -inv * p.rows;
  out.rows.block<2, 2>(0, c) = inv;
  return out;
}

UnitRowShear negated(UnitRowShear s) {
  s.U = -s.U;
  s.V = -s.V;
  return s;
}

}  // namespace

AdjacentShear AdjacentShear::make(int pivot, Matrix rows, double tol) {
  const auto dim = static_cast<int>(rows.cols());
  if (rows.rows() != 2) throw ShapeError("adjacent shear needs a 2 x D row block");
  if (pivot < 1 || pivot > dim - 1) {
    throw std::invalid_argument("adjacent shear pivot " + std::to_string(pivot) +
                                " out of range for dimension " + std::to_string(dim));
  }
  const double det = core_determinant(rows, pivot);
  if (!(std::abs(det - 1.0) <= tol)) {
    throw std::invalid_argument("adjacent shear core has determinant " + std::to_string(det));
  }
  return AdjacentShear{pivot, std::move(rows)};
}

AdjacentShear AdjacentShear::from_dense(const Matrix& m, int pivot, double tol) {
  if (m.rows() != m.cols()) throw ShapeError("adjacent shear must be square");
  const auto dim = static_cast<int>(m.rows());
  Matrix expected = Matrix::Identity(dim, dim);
  expected.middleRows(pivot - 1, 2) = m.middleRows(pivot - 1, 2);
  if (max_abs(expected - m) > 0.0) {
    throw std::invalid_argument("matrix differs from the identity outside the pivot rows");
  }
  return make(pivot, m.middleRows(pivot - 1, 2), tol);
}

Matrix assemble(const AdjacentShear& p) {
  const int dim = p.dimension();
  Matrix m = Matrix::Identity(dim, dim);
  m.middleRows(p.pivot - 1, 2) = p.rows;
  return m;
}

UnitRowShear make_unit_row_shear(int dimension, int row, const Vector& left, const Vector& right) {
  UnitRowShear s = zero_row_shear(dimension, row);
  if (left.size() != s.U.cols() || right.size() != s.V.cols()) {
    throw ShapeError("unit row shear coefficients have the wrong length");
  }
  s.U.row(0) = left.transpose();
  s.V.row(0) = right.transpose();
  return s;
}

Eigen::Matrix2d Sl2Factors::product() const {
  Eigen::Matrix2d la, ub, lc, ud;
  la << 1, 0, a, 1;
  ub << 1, b, 0, 1;
  lc << 1, 0, c, 1;
  ud << 1, d, 0, 1;
  return la * ub * lc * ud;
}

Sl2Factors factor_sl2(const Eigen::Matrix2d& m) {
  const double det = m.determinant();
  if (!(std::abs(det - 1.0) <= 1e-12)) {
    throw std::invalid_argument("factor_sl2 needs det = 1, got " + std::to_string(det));
  }
  const double p = m(0, 0), q = m(0, 1), r = m(1, 0), s = m(1, 1);
  // The product is [[1 + bc, d(1 + bc) + b], [a(1 + bc) + c, ...]]; the last
  // entry follows from det = 1. Solve dividing by whichever of q, p is larger.
  Sl2Factors f;
  if (std::abs(q) >= std::abs(p)) {
    // b = q, d = 0.
    f.b = q;
    f.d = 0.0;
    f.c = (p - 1.0) / q;
    f.a = (s - 1.0) / q;
  } else {
    // b = 1; p != 0 here.
    f.b = 1.0;
    f.c = p - 1.0;
    f.d = (q - 1.0) / p;
    f.a = (r - f.c) / p;
  }
  return f;
}

std::array<UnitRowShear, 4> factor_adjacent_shear(const AdjacentShear& p, ShearOrder order) {
  const int dim = p.dimension();
  const int i = p.pivot;
  if (order == ShearOrder::kTFirst) {
    // P^{-1} = A B C E  =>  P = E^{-1} C^{-1} B^{-1} A^{-1}.
    const auto f = factor_adjacent_shear(inverse(p), ShearOrder::kSFirst);
    return {negated(f[3]), negated(f[2]), negated(f[1]), negated(f[0])};
  }
  const int c = i - 1;  // 0-based column of the core
  const int left = i - 1;
  const int right = dim - i - 1;
  const Vector u11 = p.rows.row(0).head(left).transpose();
  const Vector u21 = p.rows.row(1).head(left).transpose();
  const Vector u12 = p.rows.row(0).tail(right).transpose();
  const Vector u22 = p.rows.row(1).tail(right).transpose();
  const Sl2Factors k = factor_sl2(p.rows.block<2, 2>(0, c));

  Vector s1_right(right + 1);
  s1_right << k.b, u12;
  Vector s2_right = Vector::Zero(right + 1);
  s2_right[0] = k.d;
  Vector t1_left(left + 1);
  t1_left << u21 - k.a * u11, k.a;
  Vector t2_left = Vector::Zero(left + 1);
  t2_left[left] = k.c;

  const UnitRowShear si_1 = make_unit_row_shear(dim, i, u11, s1_right);
  const UnitRowShear si_2 = make_unit_row_shear(dim, i, Vector::Zero(left), s2_right);
  const UnitRowShear sj_1 = make_unit_row_shear(dim, i + 1, t1_left, u22 - k.a * u12);
  const UnitRowShear sj_2 = make_unit_row_shear(dim, i + 1, t2_left, Vector::Zero(right));
  return {sj_1, si_1, sj_2, si_2};
}

Matrix SlBlockFactorization::product() const {
  const auto dim = target.rows();
  Matrix m = Matrix::Identity(dim, dim);
  for (const auto& s : corrections) m = m * vpnet::assemble(s);
  for (const auto& p : shears) m = m * vpnet::assemble(p);
  return m;
}

double SlBlockFactorization::max_error() const { return max_abs(product() - target); }

SlBlockFactorization factor_sl_block(const Matrix& a1, const Matrix& a2, double eps,
                                     PivotStrategy strategy) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (a1.rows() != a1.cols()) throw ShapeError("A1 must be square");
  const auto d = static_cast<int>(a1.rows());
  const int dim = d + static_cast<int>(a2.cols());
  if (d < 2) throw std::invalid_argument("block size must be at least 2");
  if (a2.rows() != d) throw ShapeError("A2 must have as many rows as A1");
  const double det = a1.determinant();
  if (!(std::abs(det - 1.0) <= 1e-10)) {
    throw std::invalid_argument("A1 must have determinant 1, got " + std::to_string(det));
  }

  SlBlockFactorization out;
  out.target = Matrix::Identity(dim, dim);
  out.target.topLeftCorner(d, d) = a1;
  out.target.topRightCorner(d, dim - d) = a2;

  // Each perturbation adds delta * (row k of the target) to the product, so
  // this budget keeps the accumulated error below eps.
  const double budget = eps / (2.0 * (d - 1));

  Matrix work = out.target;
  std::vector<AdjacentShear> reversed;
  for (int level = d; level >= 3; --level) {
    const int r = level - 1;  // 0-based row/column of the pivot
    if (std::abs(work(r, r)) < kPivotThreshold) {
      Eigen::Index k = 0;
      work.col(r).head(r).cwiseAbs().maxCoeff(&k);
      const double partner = work(k, r);
      if (partner == 0.0) throw std::invalid_argument("A1 is singular");
      if (strategy == PivotStrategy::kExact) {
        // work = E^{-1} (E work), E adds row k / partner to row r.
        const double delta = 1.0 / partner;
        work.row(r) += delta * work.row(k);
        Vector left = Vector::Zero(r);
        left[k] = -delta;
        out.corrections.push_back(make_unit_row_shear(dim, r + 1, left, Vector::Zero(dim - r - 1)));
      } else {
        const double row_scale = std::max(1.0, max_abs(out.target.row(k)));
        const double delta = std::copysign(budget / row_scale, partner);
        work.row(r) += delta * work.row(k);
        ++out.perturbed_pivots;
      }
    }
    const double pivot = work(r, r);
    Matrix band = Matrix::Zero(2, dim);
    band(0, r - 1) = 1.0 / pivot;
    band.row(1) = work.row(r);
    AdjacentShear p = AdjacentShear::make(level - 1, band, 1e-8);
    const Matrix top = work.topRows(r) * vpnet::assemble(inverse(p));
    work.setIdentity();
    work.topRows(r) = top;
    reversed.push_back(std::move(p));
  }
  reversed.push_back(AdjacentShear::make(1, work.topRows(2), 1e-6));
  out.shears.assign(reversed.rbegin(), reversed.rend());
  return out;
}

namespace {

LinearModule factor_linear(const Matrix& a, const Vector& bias, double eps,
                           PivotStrategy strategy, double det_tol) {
  if (a.rows() != a.cols()) throw ShapeError("matrix must be square");
  const auto dim = static_cast<int>(a.rows());
  if (bias.size() != dim) throw ShapeError("bias length must match the matrix");
  if (dim < 2) throw std::invalid_argument("dimension must be at least 2");
  const double det = a.determinant();
  if (!(std::abs(det - 1.0) <= det_tol)) {
    throw std::invalid_argument("matrix must have determinant 1, got " + std::to_string(det));
  }
  // Rounding in det(A) is already accounted for by the tolerance above.
  Matrix a1 = a;
  a1.row(dim - 1) /= det;
  const auto block = factor_sl_block(a1, Matrix::Zero(dim, 0), eps, strategy);
  LinearModule lin;
  lin.bias = bias;
  for (const auto& s : block.corrections) lin.factors.push_back(s);
  for (const auto& p : block.shears) {
    for (auto& s : factor_adjacent_shear(p)) lin.factors.push_back(std::move(s));
  }
  return lin;
}

}  // namespace

LinearModule factor_volume_preserving(const Matrix& a, const Vector& bias, double eps,
                                      PivotStrategy strategy) {
  return factor_linear(a, bias, eps, strategy, 1e-10);
}

Network LaEmbedding::network(int dimension) const {
  Network net;
  net.kind = NetworkKind::kLAVPNet;
  net.dimension = dimension;
  net.modules = modules;
  for (const auto& m : modules) {
    if (const auto* act = std::get_if<ActivationModule>(&m)) net.activation = act->activation;
  }
  return net;
}

LaEmbedding embed_residual_in_la(const ResidualModule& p, double eps, const EmbedOptions& options) {
  const int dim = p.dimension();
  validate(Module{p}, dim);
  const IndexRange range = p.range;
  const int span = range.span();
  const int comp = range.complement_size(dim);
  const int width = p.width();
  if (width == 0 || width % comp != 0) {
    throw NotEmbeddableError("width " + std::to_string(width) +
                             " is not a positive multiple of the complement size " +
                             std::to_string(comp));
  }
  const int blocks = width / comp;

  // Complement coordinates in their original order.
  std::vector<int> comp_index;
  for (int k = 0; k < dim; ++k) {
    if (k < range.offset() || k >= range.offset() + span) comp_index.push_back(k);
  }
  auto embed_matrix = [&](const Matrix& comp_block, const Matrix& range_block) {
    Matrix m = Matrix::Zero(dim, dim);
    for (int r = 0; r < comp; ++r) {
      for (int c = 0; c < comp; ++c) m(comp_index[r], comp_index[c]) = comp_block(r, c);
    }
    m.block(range.offset(), range.offset(), span, span) = range_block;
    return m;
  };
  auto embed_vector = [&](const Vector& comp_part) {
    Vector v = Vector::Zero(dim);
    for (int r = 0; r < comp; ++r) v[comp_index[r]] = comp_part[r];
    return v;
  };

  struct Block {
    Matrix lift;      // L_m
    Matrix lower;     // S_m = L_m^{-1}
    Vector shift_in;  // b_m on the complement
    Vector shift_out; // K_m^{-1} b_m on the complement
    ActivationModule act;
  };
  std::vector<Block> parts;
  for (int m = 0; m < blocks; ++m) {
    const Matrix k = p.K.middleRows(m * comp, comp);
    Eigen::JacobiSVD<Matrix> svd(k);
    const auto& sv = svd.singularValues();
    const double smin = sv[sv.size() - 1];
    if (!(smin > 0.0) || sv[0] / smin > options.max_condition) {
      throw NotEmbeddableError("K block " + std::to_string(m) +
                               " is singular or ill-conditioned");
    }
    const double det_k = k.determinant();
    Matrix k_range = Matrix::Identity(span, span);
    k_range(0, 0) = 1.0 / det_k;
    const Matrix k_inv = k.inverse();
    Matrix k_range_inv = Matrix::Identity(span, span);
    k_range_inv(0, 0) = det_k;

    Block part;
    part.lift = embed_matrix(k, k_range);
    part.lower = embed_matrix(k_inv, k_range_inv);
    part.shift_in = embed_vector(p.b.segment(m * comp, comp));
    part.shift_out = embed_vector(k_inv * p.b.segment(m * comp, comp));
    part.act.range = range;
    part.act.a = k_range * p.a.middleCols(m * comp, comp);
    part.act.activation = p.activation;
    parts.push_back(std::move(part));
  }

  // l_1 = (L_1, b_1); l_{m+1} = L_{m+1} (S_m z - g_m) + b_{m+1}; l_{M+1} = S_M z - g_M.
  const double linear_eps = eps * 1e-3;
  auto linear = [&](const Matrix& a, const Vector& bias) {
    return Module{factor_linear(a, bias, linear_eps, PivotStrategy::kExact, 1e-8)};
  };
  LaEmbedding out;
  out.blocks = blocks;
  out.modules.push_back(linear(parts[0].lift, parts[0].shift_in));
  for (int m = 0; m < blocks; ++m) {
    out.modules.emplace_back(parts[m].act);
    if (m + 1 < blocks) {
      const auto& next = parts[m + 1];
      out.modules.push_back(linear(next.lift * parts[m].lower,
                                   next.shift_in - next.lift * parts[m].shift_out));
    } else {
      out.modules.push_back(linear(parts[m].lower, -parts[m].shift_out));
    }
  }

  // Grid check on the test box.
  const int n = options.grid_points;
  if (n < 1) throw std::invalid_argument("grid needs at least one point per axis");
  long total = 1;
  for (int k = 0; k < dim; ++k) total *= n;
  Matrix grid(dim, total);
  for (long idx = 0; idx < total; ++idx) {
    long rest = idx;
    for (int k = 0; k < dim; ++k) {
      const long t = rest % n;
      rest /= n;
      grid(k, idx) = n == 1 ? options.box_low
                            : options.box_low + (options.box_high - options.box_low) *
                                                    static_cast<double>(t) / (n - 1);
    }
  }
  const Matrix expected = module_forward(Module{p}, grid);
  Matrix got = grid;
  for (const auto& m : out.modules) got = module_forward(m, got);
  out.max_error = max_abs(got - expected);
  if (!(out.max_error < eps)) {
    throw std::runtime_error("LA embedding error " + std::to_string(out.max_error) +
                             " exceeds eps " + std::to_string(eps));
  }
  return out;
}

Matrix random_unit_determinant(int dimension, std::mt19937_64& rng, int shears, double scale) {
  if (dimension < 1) throw std::invalid_argument("dimension must be positive");
  if (shears <= 0) shears = 2 * dimension;
  std::uniform_real_distribution<double> uniform(-scale, scale);
  std::uniform_int_distribution<int> pick_row(1, dimension);
  Matrix m = Matrix::Identity(dimension, dimension);
  for (int s = 0; s < shears; ++s) {
    const int row = pick_row(rng);
    Vector left(row - 1), right(dimension - row);
    for (auto& v : left) v = uniform(rng);
    for (auto& v : right) v = uniform(rng);
    m = m * assemble(make_unit_row_shear(dimension, row, left, right));
  }
  return m;
}

}  // namespace vpnet
