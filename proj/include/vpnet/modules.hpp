#pragma once

// Volume-preserving building blocks.
//
// Every module updates one block of coordinates x[i:j) by a quantity that
// depends only on the remaining coordinates (or, for shears, adds a linear
// combination of them), so the Jacobian is unit triangular up to a
// permutation and det J = 1 for every parameter value.
//
// Index ranges use the 1-based, end-exclusive convention x[i:j] =
// (x_i, ..., x_{j-1}); the complement of a range is the remaining coordinates
// in their original order.

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "vpnet/errors.hpp"

namespace vpnet {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { kSigmoid, kTanh, kRelu };

double activate(Activation act, double z);
double activate_derivative(Activation act, double z);
std::string_view to_string(Activation act);
Activation parse_activation(std::string_view name);

struct IndexRange {
  int begin = 1;  // i, 1-based inclusive
  int end = 2;    // j, exclusive

  /// Validates 1 <= i < j <= D+1 with a nonempty complement.
  static IndexRange make(int i, int j, int dimension);

  int span() const { return end - begin; }
  int offset() const { return begin - 1; }  // 0-based first row
  int left_size() const { return begin - 1; }
  int right_size(int dimension) const { return dimension - end + 1; }
  int complement_size(int dimension) const { return dimension - span(); }

  bool operator==(const IndexRange&) const = default;
};

/// Rows of the complement of `range`, stacked in order (columns are samples).
Matrix gather_complement(const Matrix& states, IndexRange range);
/// Adds `delta` (complement-shaped) back into the complement rows of `states`.
void scatter_complement_add(Matrix& states, IndexRange range, const Matrix& delta);

/// x[i:j) += a * act(K * complement + b)
struct ResidualModule {
  IndexRange range;
  Matrix K;  // w x (D - span)
  Vector b;  // w
  Matrix a;  // span x w
  Activation activation = Activation::kSigmoid;

  int width() const { return static_cast<int>(b.size()); }
  int dimension() const { return static_cast<int>(K.cols() + a.rows()); }
};

/// D x D matrix equal to the identity except in rows [i, j), which read
/// (U, I, V). `diagonal`, when nonempty, replaces the identity block by
/// diag(diagonal); builders never set it, it exists so edited checkpoints
/// can be represented and caught by the volume checker.
struct ShearFactor {
  IndexRange range;
  Matrix U;  // span x (i - 1)
  Matrix V;  // span x (D - j + 1)
  Vector diagonal;

  int dimension() const { return static_cast<int>(U.cols() + range.span() + V.cols()); }
  bool has_unit_diagonal() const;
};

/// x -> S_1 S_2 ... S_M x + bias. Factors are stored in the order the product
/// is written and applied right to left (S_M first).
struct LinearModule {
  std::vector<ShearFactor> factors;
  Vector bias;

  int dimension() const { return static_cast<int>(bias.size()); }
};

/// x[i:j) += a * act(complement)
struct ActivationModule {
  IndexRange range;
  Matrix a;  // span x (D - span)
  Activation activation = Activation::kSigmoid;

  int dimension() const { return static_cast<int>(a.rows() + a.cols()); }
};

using Module = std::variant<ResidualModule, LinearModule, ActivationModule>;

enum class NetworkKind { kRVPNet, kLAVPNet };

std::string_view to_string(NetworkKind kind);
NetworkKind parse_network_kind(std::string_view name);

struct Network {
  NetworkKind kind = NetworkKind::kRVPNet;
  int dimension = 0;
  int width = 0;  // residual hidden width; 0 for LA-VPNets
  Activation activation = Activation::kSigmoid;
  std::vector<Module> modules;

  int depth() const { return static_cast<int>(modules.size()); }
};

int module_dimension(const Module& module);
void validate(const Module& module, int dimension);
/// Checks per-module shapes and the kind-specific layout: residual modules
/// only, or linear/activation alternation that starts and ends with a linear
/// module.
void validate(const Network& net);

// Forward evaluation. The matrix overloads treat each column as a sample.
Vector residual_forward(const ResidualModule& p, const Vector& x);
Vector linear_forward(const LinearModule& p, const Vector& x);
Vector activation_forward(const ActivationModule& p, const Vector& x);

void apply_shear(const ShearFactor& s, Matrix& states);
void apply_shear_inverse(const ShearFactor& s, Matrix& states);

Matrix module_forward(const Module& module, const Matrix& states);
Vector module_forward(const Module& module, const Vector& x);
Matrix module_inverse(const Module& module, const Matrix& states);

Matrix network_forward(const Network& net, const Matrix& states);
Vector network_forward(const Network& net, const Vector& x);
Vector network_inverse(const Network& net, const Vector& y);

/// Dense D x D form of one shear / of a whole linear module (without bias).
Matrix assemble(const ShearFactor& s);
Matrix assemble(const LinearModule& p);

// Builders for the two experiment architectures.

/// D groups of three single-coordinate residual modules. Listed in
/// application order, group g (0-based) is R^{g+1:g+2}, R^{g+2:g+3},
/// R^{g+1:g+2} with the middle index wrapping to 1 for the last group.
/// K is drawn uniform(+-1/sqrt(fan_in)); a and b start at zero so the fresh
/// network is the identity map.
Network build_rvpnet(int dimension, int width, std::mt19937_64& rng,
                     Activation activation = Activation::kSigmoid);

/// The alternating LA-VPNet of the same group structure: each group is
/// L, A, L, A, L, A and a trailing L closes the composition. Every linear
/// module is prod_{i=1}^{D} S^{i:i+1} S^{i+1:i+2} S^{i:i+1} with row D+1
/// wrapping to row 1. All parameters start at zero (identity map).
Network build_lavpnet(int dimension, Activation activation = Activation::kSigmoid);

/// Single-row shear in row `row` (1-based) with zero coefficients.
ShearFactor zero_row_shear(int dimension, int row);

/// Composition: apply `first`, then `second`.
Network concatenate(const Network& first, const Network& second);

// Flat parameter views, in module order; within a module: residual K, b, a
// (column-major); linear U_m, V_m for each factor then bias; activation a.
// Shear `diagonal` entries are not trainable and are never packed.
std::size_t parameter_count(const Module& module);
std::size_t parameter_count(const Network& net);
Vector pack_parameters(const std::vector<Module>& modules);
void unpack_parameters(std::vector<Module>& modules, const Vector& flat);

/// Fills every trainable entry with uniform(-scale, scale) values.
void randomize_parameters(Network& net, std::mt19937_64& rng, double scale = 0.5);

}  // namespace vpnet
