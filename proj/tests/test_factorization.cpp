#include <cmath>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "vpnet/factorization.hpp"
#include "vpnet/volume.hpp"

namespace vpnet {
namespace {

using testing::uniform_matrix;
using testing::uniform_vector;

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

Matrix product(const std::array<UnitRowShear, 4>& f) {
  Matrix p = Matrix::Identity(f[0].dimension(), f[0].dimension());
  for (const auto& s : f) p = p * assemble(s);
  return p;
}

bool single_row(const UnitRowShear& s) { return s.range.span() == 1 && s.has_unit_diagonal(); }

TEST(Sl2, IdentityAndSingleFactor) {
  const auto id = factor_sl2(Eigen::Matrix2d::Identity());
  EXPECT_LT((id.product() - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::Matrix2d u;
  u << 1, 2.5, 0, 1;
  EXPECT_LT((factor_sl2(u).product() - u).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Sl2, RandomMatrices) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unif(-3.0, 3.0);
  int done = 0;
  while (done < 100) {
    const double p = unif(rng), q = unif(rng), r = unif(rng);
    if (std::abs(p) < 0.05) continue;
    Eigen::Matrix2d m;
    m << p, q, r, (1.0 + q * r) / p;
    const auto f = factor_sl2(m);
    EXPECT_LE((f.product() - m).cwiseAbs().maxCoeff(), 1e-10);
    ++done;
  }
}

TEST(Sl2, ZeroCorner) {
  Eigen::Matrix2d rot;
  rot << 0, -1, 1, 0;
  EXPECT_LE((factor_sl2(rot).product() - rot).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::Matrix2d m;
  m << 0, 2, -0.5, 3;
  EXPECT_LE((factor_sl2(m).product() - m).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Sl2, RejectsWrongDeterminant) {
  EXPECT_THROW(factor_sl2(Eigen::Matrix2d::Identity() * 1.1), std::invalid_argument);
}

TEST(AdjacentShear, ValidatesConstruction) {
  EXPECT_NO_THROW(AdjacentShear::make(1, Matrix{{1, 0, 5}, {2, 1, 3}}));
  EXPECT_THROW(AdjacentShear::make(1, Matrix{{2, 0, 5}, {2, 1, 3}}), std::invalid_argument);
  EXPECT_THROW(AdjacentShear::make(3, Matrix{{1, 0, 5}, {2, 1, 3}}), std::invalid_argument);
  EXPECT_THROW(AdjacentShear::make(1, Matrix::Identity(3, 3)), ShapeError);
  const Matrix dense = assemble(AdjacentShear::make(2, Matrix{{4, 1, 2}, {-1, 2, 5}}));
  EXPECT_EQ(dense.row(0), (Matrix{{1, 0, 0}}));
  EXPECT_NEAR(dense.determinant(), 1.0, 1e-12);
}

TEST(AdjacentShear, IdentityFactorsMultiplyToIdentity) {
  const auto p = AdjacentShear::from_dense(Matrix::Identity(3, 3), 1);
  for (auto order : {ShearOrder::kSFirst, ShearOrder::kTFirst}) {
    Matrix prod = Matrix::Identity(3, 3);
    for (const auto& s : factor_adjacent_shear(p, order)) {
      EXPECT_TRUE(single_row(s));
      prod = prod * assemble(s);
    }
    EXPECT_LT(max_abs(prod - Matrix::Identity(3, 3)), 1e-15);
  }
}

TEST(AdjacentShear, WorkedExampleBothOrders) {
  const auto p = AdjacentShear::make(1, Matrix{{1, 0, 5}, {2, 1, 3}});
  const Matrix target = assemble(p);
  const auto s = factor_adjacent_shear(p, ShearOrder::kSFirst);
  const auto t = factor_adjacent_shear(p, ShearOrder::kTFirst);
  EXPECT_LE(max_abs(product(s) - target), 1e-10);
  EXPECT_LE(max_abs(product(t) - target), 1e-10);
  // S order: rows i+1, i, i+1, i; T order: rows i, i+1, i, i+1.
  const std::array<int, 4> s_rows = {2, 1, 2, 1}, t_rows = {1, 2, 1, 2};
  for (int k = 0; k < 4; ++k) {
    EXPECT_TRUE(single_row(s[k]));
    EXPECT_EQ(s[k].range.begin, s_rows[k]);
    EXPECT_EQ(t[k].range.begin, t_rows[k]);
  }
}

TEST(AdjacentShear, RandomRoundTrip) {
  std::mt19937_64 rng(2);
  for (int dim = 2; dim <= 4; ++dim) {
    for (int trial = 0; trial < 100; ++trial) {
      const int pivot = 1 + static_cast<int>(rng() % (dim - 1));
      Matrix rows = uniform_matrix(2, dim, rng, -2, 2);
      const int c = pivot - 1;
      rows(1, c + 1) = (1.0 + rows(0, c + 1) * rows(1, c)) / rows(0, c);
      if (std::abs(rows(0, c)) < 0.05) continue;
      const auto p = AdjacentShear::make(pivot, rows, 1e-8);
      for (auto order : {ShearOrder::kSFirst, ShearOrder::kTFirst}) {
        EXPECT_LE(max_abs(product(factor_adjacent_shear(p, order)) - assemble(p)), 1e-9);
      }
    }
  }
}

TEST(SlBlock, IdentityIsExact) {
  const auto f = factor_sl_block(Matrix::Identity(3, 3), Matrix::Zero(3, 1), 1e-6);
  EXPECT_EQ(f.shears.size(), 2u);
  EXPECT_EQ(f.perturbed_pivots, 0);
  EXPECT_EQ(f.max_error(), 0.0);
}

TEST(SlBlock, RandomSl3NonzeroPivots) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix a1 = random_unit_determinant(3, rng);
    const Matrix a2 = uniform_matrix(3, 1, rng);
    const auto f = factor_sl_block(a1, a2, 1e-6);
    EXPECT_EQ(f.perturbed_pivots, 0);
    EXPECT_LE(f.max_error(), 1e-9);
    for (const auto& p : f.shears) EXPECT_NEAR(assemble(p).determinant(), 1.0, 1e-10);
  }
}

TEST(SlBlock, ZeroPivotPerturbation) {
  const Matrix a1{{1, 0, 0}, {0, 0, -1}, {0, 1, 0}};
  const double eps = 1e-4;
  const auto f = factor_sl_block(a1, Matrix::Zero(3, 0), eps);
  EXPECT_GE(f.perturbed_pivots, 1);
  EXPECT_GT(f.max_error(), 0.0);
  EXPECT_LT(f.max_error(), eps);
  EXPECT_EQ(f.shears.size(), 2u);
  EXPECT_NEAR(f.product().determinant(), 1.0, 1e-10);
}

TEST(SlBlock, ZeroPivotExactStrategy) {
  const Matrix a1{{1, 0, 0}, {0, 0, -1}, {0, 1, 0}};
  const auto f = factor_sl_block(a1, Matrix{{1}, {2}, {3}}, 1e-4, PivotStrategy::kExact);
  EXPECT_EQ(f.perturbed_pivots, 0);
  EXPECT_FALSE(f.corrections.empty());
  EXPECT_LE(f.max_error(), 1e-12);
}

TEST(SlBlock, PerturbationErrorTracksEps) {
  const Matrix a1{{2, 1, 0, 0}, {1, 1, 0, 0}, {0, 0, 0, -1}, {0, 0, 1, 0}};
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    const auto f = factor_sl_block(a1, Matrix::Zero(4, 0), eps);
    EXPECT_GT(f.perturbed_pivots, 0);
    EXPECT_LT(f.max_error(), eps);
  }
}

TEST(SlBlock, RejectsBadInput) {
  EXPECT_THROW(factor_sl_block(Matrix::Identity(3, 3) * 2, Matrix::Zero(3, 0), 1e-4),
               std::invalid_argument);
  EXPECT_THROW(factor_sl_block(Matrix::Identity(3, 3), Matrix::Zero(3, 0), 0.0),
               std::invalid_argument);
  EXPECT_THROW(factor_sl_block(Matrix::Identity(3, 3), Matrix::Zero(2, 1), 1e-4), ShapeError);
}

TEST(VolumePreservingLinear, IdentityGivesIdentityMap) {
  const auto lin = factor_volume_preserving(Matrix::Identity(3, 3), Vector::Zero(3), 1e-8);
  EXPECT_LE(max_abs(assemble(lin) - Matrix::Identity(3, 3)), 1e-15);
}

TEST(VolumePreservingLinear, RandomUnitDeterminant) {
  std::mt19937_64 rng(4);
  for (int dim = 2; dim <= 4; ++dim) {
    for (int trial = 0; trial < 100; ++trial) {
      const Matrix a = random_unit_determinant(dim, rng);
      const Vector bias = uniform_vector(dim, rng);
      const auto lin = factor_volume_preserving(a, bias, 1e-8);
      EXPECT_LE(max_abs(assemble(lin) - a), 1e-8);
      EXPECT_LE(lin.factors.size(), static_cast<std::size_t>(4 * (dim - 1)));
      for (const auto& s : lin.factors) EXPECT_TRUE(single_row(s));
      EXPECT_NEAR(assemble(lin).determinant(), 1.0, 1e-10);
      const Vector x = uniform_vector(dim, rng, -5, 5);
      EXPECT_LE((linear_forward(lin, x) - (a * x + bias)).norm(), 1e-8 * x.norm());
    }
  }
}

TEST(VolumePreservingLinear, RejectsWrongDeterminant) {
  EXPECT_THROW(factor_volume_preserving(Matrix::Identity(3, 3) * 1.01, Vector::Zero(3), 1e-6),
               std::invalid_argument);
}

TEST(RandomUnitDeterminant, DeterminantIsOne) {
  std::mt19937_64 rng(5);
  for (int dim = 2; dim <= 6; ++dim) {
    EXPECT_NEAR(Eigen::PartialPivLU<Matrix>(random_unit_determinant(dim, rng)).determinant(), 1.0,
                1e-10);
  }
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

TEST(Embedding, ZeroUpdateGivesIdentity) {
  std::mt19937_64 rng(6);
  ResidualModule p{IndexRange::make(1, 2, 3), uniform_matrix(4, 2, rng), uniform_vector(4, rng),
                   Matrix::Zero(1, 4)};
  p.K.topRows(2) += 2 * Matrix::Identity(2, 2);
  p.K.bottomRows(2) += 2 * Matrix::Identity(2, 2);
  const auto emb = embed_residual_in_la(p, 1e-10);
  EXPECT_LE(emb.max_error, 1e-10);
  const Network net = emb.network(3);
  EXPECT_NO_THROW(validate(net));
  const Vector x = uniform_vector(3, rng);
  EXPECT_LE((network_forward(net, x) - x).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Embedding, TwoDimensionalSingleBlock) {
  ResidualModule p{IndexRange::make(1, 2, 2), Matrix::Constant(1, 1, 2.0), Vector::Constant(1, 0.3),
                   Matrix::Constant(1, 1, 0.7)};
  const auto emb = embed_residual_in_la(p, 1e-8);
  EXPECT_EQ(emb.blocks, 1);
  EXPECT_LE(emb.max_error, 1e-8);
  // independent grid evaluation of the original map
  const Network net = emb.network(2);
  double worst = 0.0;
  for (int i = 0; i <= 10; ++i) {
    for (int j = 0; j <= 10; ++j) {
      const Vector x{{-2.0 + 0.4 * i, -2.0 + 0.4 * j}};
      const Vector expect{{x[0] + 0.7 * sigmoid(2.0 * x[1] + 0.3), x[1]}};
      worst = std::max(worst, (network_forward(net, x) - expect).cwiseAbs().maxCoeff());
    }
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(Embedding, ThreeDimensionalTwoBlocks) {
  std::mt19937_64 rng(7);
  ResidualModule p{IndexRange::make(2, 3, 3), uniform_matrix(4, 2, rng), uniform_vector(4, rng, -1, 1),
                   uniform_matrix(1, 4, rng)};
  p.K.topRows(2) += 1.5 * Matrix::Identity(2, 2);
  p.K.bottomRows(2) += 1.5 * Matrix::Identity(2, 2);
  const auto emb = embed_residual_in_la(p, 1e-6);
  EXPECT_EQ(emb.blocks, 2);
  EXPECT_LE(emb.max_error, 1e-6);
  const Network net = emb.network(3);
  for (int t = 0; t < 50; ++t) {
    const Vector x = uniform_vector(3, rng);
    EXPECT_LE((network_forward(net, x) - residual_forward(p, x)).cwiseAbs().maxCoeff(), 1e-6);
  }
  const auto vol = check_volume(net, {.points = 100});
  EXPECT_TRUE(vol.passed) << vol.max_deviation;
}

TEST(Embedding, RejectsSingularOrMisSizedK) {
  ResidualModule singular{IndexRange::make(1, 2, 3), Matrix{{1, 2}, {2, 4}}, Vector::Zero(2),
                          Matrix::Ones(1, 2)};
  EXPECT_THROW(embed_residual_in_la(singular, 1e-6), NotEmbeddableError);
  ResidualModule odd{IndexRange::make(1, 2, 3), Matrix::Ones(3, 2), Vector::Zero(3),
                     Matrix::Ones(1, 3)};
  EXPECT_THROW(embed_residual_in_la(odd, 1e-6), NotEmbeddableError);
}

}  // namespace
}  // namespace vpnet
