#pragma once

// Constructive factorizations behind the linear and activation modules:
//
//  * every unit-determinant 2x2 matrix is a product of four unit triangular
//    matrices (lower, upper, lower, upper);
//  * an adjacent-row block P^{i,i+1} (identity outside rows i, i+1, whose
//    2x2 core on columns i, i+1 has det 1) is a product of four single-row
//    shears, in either S or T ordering;
//  * a block matrix [[A1, A2], [0, I]] with det A1 = 1 is (approximately,
//    when a pivot vanishes) the product P^{1,2} ... P^{d-1,d};
//  * a residual module with square invertible K blocks is a composition of
//    linear and activation modules.

#include <array>
#include <vector>

#include "vpnet/modules.hpp"

namespace vpnet {

/// Identity except rows `pivot`, `pivot` + 1 (1-based), which hold `rows`.
struct AdjacentShear {
  int pivot = 1;
  Matrix rows;  // 2 x D

  int dimension() const { return static_cast<int>(rows.cols()); }
  /// Validates shape and |det core - 1| <= tol.
  static AdjacentShear make(int pivot, Matrix rows, double tol = 1e-10);
  static AdjacentShear from_dense(const Matrix& m, int pivot, double tol = 1e-10);
};

Matrix assemble(const AdjacentShear& p);

/// Single-row shear: identity except row `row`, which is (left, 1, right).
/// Represented by a ShearFactor whose range spans exactly one row.
using UnitRowShear = ShearFactor;
UnitRowShear make_unit_row_shear(int dimension, int row, const Vector& left, const Vector& right);

struct Sl2Factors {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

  /// [[1,0],[a,1]] [[1,b],[0,1]] [[1,0],[c,1]] [[1,d],[0,1]]
  Eigen::Matrix2d product() const;
};

Sl2Factors factor_sl2(const Eigen::Matrix2d& m);

enum class ShearOrder {
  kSFirst,  // P = S^{i+1}_1 S^i_1 S^{i+1}_2 S^i_2
  kTFirst,  // P = T^i_1 T^{i+1}_1 T^i_2 T^{i+1}_2
};

/// Four single-row shears whose product, in the returned order, is P.
std::array<UnitRowShear, 4> factor_adjacent_shear(const AdjacentShear& p,
                                                  ShearOrder order = ShearOrder::kSFirst);

struct SlBlockFactorization {
  /// P^{1,2}, ..., P^{d-1,d}, in product order.
  std::vector<AdjacentShear> shears;
  /// Exact mode only: single-row shears that multiply the shear product from
  /// the left, in product order.
  std::vector<UnitRowShear> corrections;
  int perturbed_pivots = 0;
  Matrix target;  // [[A1, A2], [0, I]]

  Matrix product() const;
  double max_error() const;  // max-entry |product - target|
};

enum class PivotStrategy {
  /// Zero pivots are nudged by a determinant-preserving row perturbation
  /// sized from eps; the product then only approximates the target.
  kPerturb,
  /// Zero pivots are fixed with an extra single-row shear per level; the
  /// product reproduces the target up to rounding.
  kExact,
};

/// Pivots with |value| below this trigger the perturbation/correction branch.
inline constexpr double kPivotThreshold = 1e-8;

SlBlockFactorization factor_sl_block(const Matrix& a1, const Matrix& a2, double eps,
                                     PivotStrategy strategy = PivotStrategy::kPerturb);

/// A linear module approximating x -> A x + bias with max-entry matrix error
/// below eps: block factorization with d = D, then every adjacent block split
/// into four single-row shears.
LinearModule factor_volume_preserving(const Matrix& a, const Vector& bias, double eps,
                                      PivotStrategy strategy = PivotStrategy::kPerturb);

struct EmbedOptions {
  double box_low = -2.0;
  double box_high = 2.0;
  int grid_points = 11;       // per axis
  double max_condition = 1e6;  // per K block
};

struct LaEmbedding {
  std::vector<Module> modules;  // linear, activation, ..., linear
  double max_error = 0.0;       // over the grid
  int blocks = 0;

  /// The modules wrapped as an LA-VPNet.
  Network network(int dimension) const;
};

/// Rewrites a residual module x[i:j) += a act(K xbar + b) as an alternating
/// LA composition. Requires width = M (D - span) with each square block K_m
/// invertible and cond(K_m) <= max_condition; throws NotEmbeddableError
/// otherwise and std::runtime_error when the grid error reaches eps.
LaEmbedding embed_residual_in_la(const ResidualModule& p, double eps,
                                 const EmbedOptions& options = {});

/// Random unit-determinant matrix built as a product of random single-row
/// shears (exactly det 1 in exact arithmetic).
Matrix random_unit_determinant(int dimension, std::mt19937_64& rng, int shears = 0,
                               double scale = 1.0);

}  // namespace vpnet
