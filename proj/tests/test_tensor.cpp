#include <gtest/gtest.h>

#include <random>

#include "symgcp/tensor.hpp"
#include "test_util.hpp"

namespace symgcp {
namespace {

using testing::brute_entry;
using testing::random_dense;
using testing::random_model;

DenseTensor two_by_two() { return DenseTensor({2, 2}, std::vector<double>{1, 3, 2, 4}); }

TEST(Vectorize, FirstIndexFastest) {
  DenseTensor t({2, 2});
  t.at({0, 0}) = 1;
  t.at({0, 1}) = 2;
  t.at({1, 0}) = 3;
  t.at({1, 1}) = 4;
  EXPECT_EQ(vectorize(t), (std::vector<double>{1, 3, 2, 4}));
}

TEST(Vectorize, Singleton) {
  DenseTensor t({1, 1, 1}, 5.0);
  EXPECT_EQ(vectorize(t), std::vector<double>{5.0});
}

TEST(Vectorize, RoundTripMatchesNestedLoops) {
  std::mt19937_64 rng(1);
  const DenseTensor t = random_dense({3, 4, 2}, rng);
  const auto v = vectorize(t);
  Index lin = 0;
  for (Index k = 0; k < 2; ++k)
    for (Index j = 0; j < 4; ++j)
      for (Index i = 0; i < 3; ++i) EXPECT_EQ(v[lin++], t.at({i, j, k}));
  EXPECT_EQ(reshape(v, t.dims()), t);
}

TEST(Matricize, TwoByTwo) {
  const DenseTensor t = two_by_two();
  Matrix m1(2, 2), m2(2, 2);
  m1 << 1, 2, 3, 4;
  m2 << 1, 3, 2, 4;
  EXPECT_EQ(matricize(t, 0), m1);
  EXPECT_EQ(matricize(t, 1), m2);
}

TEST(Matricize, MatchesFiberEnumeration) {
  std::mt19937_64 rng(2);
  const DenseTensor t = random_dense({2, 3, 2}, rng);
  const Matrix m = matricize(t, 1);
  ASSERT_EQ(m.rows(), 3);
  ASSERT_EQ(m.cols(), 4);
  for (Index j = 0; j < 3; ++j)
    for (Index k = 0; k < 2; ++k)
      for (Index i = 0; i < 2; ++i)
        EXPECT_EQ(m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i + 2 * k)),
                  t.at({i, j, k}));
  EXPECT_EQ(unmatricize(m, t.dims(), 1), t);
  EXPECT_THROW(matricize(t, 3), ShapeError);
}

TEST(PermuteModes, IdentityAndTranspose) {
  const DenseTensor t = two_by_two();
  EXPECT_EQ(permute_modes(t, {0, 1}), t);
  const DenseTensor s = permute_modes(t, {1, 0});
  EXPECT_EQ(vectorize(s), (std::vector<double>{1, 2, 3, 4}));
}

TEST(PermuteModes, InverseRestoresOriginal) {
  std::mt19937_64 rng(3);
  const DenseTensor t = random_dense({2, 3, 4}, rng);
  const std::vector<Index> pi{1, 2, 0};
  const DenseTensor p = permute_modes(t, pi);
  EXPECT_EQ(p.dims(), (Dims{3, 4, 2}));
  EXPECT_EQ(permute_modes(p, inverse_permutation(pi)), t);
  EXPECT_THROW(permute_modes(t, {0, 0, 1}), ValidationError);
}

TEST(Partition, ParseSortsCellsAndBuildsSigma) {
  const auto p = ModePartition::parse("[[2,4],[3],[1]]");
  EXPECT_EQ(p.ncells(), 3u);
  EXPECT_EQ(p.cell(0), std::vector<Index>{0});
  EXPECT_EQ(p.cell(1), (std::vector<Index>{1, 3}));
  EXPECT_EQ(p.sigma(), (std::vector<Index>{0, 1, 2, 1}));
  EXPECT_EQ(p.to_string(), "[[1],[2,4],[3]]");
}

TEST(Partition, RejectsDuplicatesAndGaps) {
  try {
    ModePartition::parse("[[1],[1,2]]");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("mode 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ModePartition::parse("[[1],[3]]"), ValidationError);
  EXPECT_THROW(ModePartition::parse("[[0,1]]"), ValidationError);
  EXPECT_THROW(ModePartition::parse("[[1,2]"), ValidationError);
  EXPECT_THROW(ModePartition::parse("[]"), ValidationError);
}

TEST(Partition, CheckDimsReportsMismatch) {
  const auto p = ModePartition::full(2);
  EXPECT_NO_THROW(p.check_dims({3, 3}));
  EXPECT_THROW(p.check_dims({3, 4}), ShapeError);
  EXPECT_THROW(p.check_dims({3, 3, 3}), ShapeError);
}

TEST(IsSymmetric, SingletonsAlwaysTrue) {
  std::mt19937_64 rng(4);
  const DenseTensor t = random_dense({2, 3, 4}, rng);
  EXPECT_TRUE(is_symmetric(t, ModePartition::singletons(3)));
}

TEST(IsSymmetric, Matrices) {
  const DenseTensor sym({2, 2}, std::vector<double>{1, 2, 2, 4});
  EXPECT_TRUE(is_symmetric(sym, ModePartition::full(2)));
  EXPECT_FALSE(is_symmetric(two_by_two(), ModePartition::full(2)));
  EXPECT_DOUBLE_EQ(symmetry_deviation(two_by_two(), ModePartition::full(2)), 1.0);
  EXPECT_THROW(is_symmetric(DenseTensor({2, 3}), ModePartition::full(2)), ShapeError);
}

TEST(Reconstruct, RankOneOuterProduct) {
  Matrix a(2, 1);
  a << 1, 2;
  const SymKruskal m(Vector::Ones(1), {a}, ModePartition::full(2));
  const DenseTensor t = reconstruct(m);
  EXPECT_EQ(vectorize(t), (std::vector<double>{1, 2, 2, 4}));
  EXPECT_EQ(model_entry(m, MultiIndex{0, 1}), 2.0);
  EXPECT_EQ(model_entry(m, MultiIndex{1, 1}), 4.0);
}

TEST(Reconstruct, ZeroWeightsGiveZeroTensor) {
  std::mt19937_64 rng(5);
  const auto p = ModePartition::full(3);
  SymKruskal m = random_model(p, {4, 4, 4}, 3, rng);
  m.lambda.setZero();
  const DenseTensor t = reconstruct(m);
  for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(Reconstruct, MatchesTripleLoop) {
  std::mt19937_64 rng(6);
  const auto p = ModePartition::parse("[[1,3],[2]]");
  const Dims dims{4, 3, 4};
  const SymKruskal m = random_model(p, dims, 3, rng);
  const DenseTensor t = reconstruct(m);
  double worst = 0.0;
  for (Index lin = 0; lin < t.size(); ++lin) {
    const double ref = brute_entry(m, unravel(lin, dims));
    worst = std::max(worst, std::abs(t[lin] - ref) / std::max(1e-300, std::abs(ref)));
  }
  EXPECT_LT(worst, 1e-13);
  EXPECT_LE(symmetry_deviation(t, p), 1e-12);
}

TEST(ModelEntry, AgreesWithReconstruct) {
  std::mt19937_64 rng(7);
  const auto p = ModePartition::parse("[[1,2],[3,4]]");
  const Dims dims{3, 3, 4, 4};
  const SymKruskal m = random_model(p, dims, 4, rng);
  const DenseTensor t = reconstruct(m);
  std::uniform_int_distribution<Index> pick(0, t.size() - 1);
  for (int trial = 0; trial < 100; ++trial) {
    const Index lin = pick(rng);
    EXPECT_NEAR(model_entry(m, unravel(lin, dims)), t[lin], 1e-13);
  }
  EXPECT_THROW(model_entry(m, MultiIndex{0, 0, 0}), ShapeError);
  EXPECT_THROW(model_entry(m, MultiIndex{0, 0, 0, 4}), ShapeError);
}

TEST(SymKruskal, ValidateCatchesShapeErrors) {
  EXPECT_THROW(SymKruskal(Vector::Ones(2), {Matrix::Ones(3, 2)}, ModePartition::singletons(2)),
               ShapeError);
  EXPECT_THROW(SymKruskal(Vector::Ones(2), {Matrix::Ones(3, 3)}, ModePartition::full(2)),
               ShapeError);
}

TEST(Sparse, DensifyEmptyAndSingle) {
  const SparseTensor empty(Dims{2, 2, 2});
  const DenseTensor z = densify(empty);
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
  const SparseTensor one(Dims{2, 2, 2}, {MultiIndex{0, 0, 0}}, {3.0});
  const DenseTensor d = densify(one);
  EXPECT_EQ(d.at({0, 0, 0}), 3.0);
  double total = 0.0;
  for (double v : d.values()) total += std::abs(v);
  EXPECT_EQ(total, 3.0);
}

TEST(Sparse, SparsifyDensifyRoundTrip) {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution keep(0.2);
  DenseTensor d = random_dense({4, 3, 5}, rng);
  for (Index i = 0; i < d.size(); ++i)
    if (!keep(rng)) d[i] = 0.0;
  const SparseTensor s = sparsify(d);
  EXPECT_EQ(densify(s), d);
  EXPECT_EQ(sparsify(densify(s)), s);
}

TEST(Sparse, StrictConstructorAndCoalesce) {
  const Dims dims{2, 2};
  EXPECT_THROW(SparseTensor(dims, {MultiIndex{0, 0}, MultiIndex{0, 0}}, {1.0, 2.0}),
               ValidationError);
  EXPECT_THROW(SparseTensor(dims, {MultiIndex{0, 0}}, {0.0}), ValidationError);
  EXPECT_THROW(SparseTensor(dims, {MultiIndex{0, 2}}, {1.0}), ShapeError);
  Index merged = 0;
  const auto s = SparseTensor::coalesce(
      dims, {MultiIndex{1, 1}, MultiIndex{0, 0}, MultiIndex{1, 1}, MultiIndex{0, 1}, MultiIndex{0, 1}},
      {1.0, 2.0, 3.0, 1.0, -1.0}, &merged);
  EXPECT_EQ(merged, 2u);
  ASSERT_EQ(s.nnz(), 2u);
  EXPECT_EQ(*s.find(ravel({1, 1}, dims)), 4.0);
  EXPECT_EQ(*s.find(ravel({0, 0}, dims)), 2.0);
  EXPECT_FALSE(s.find(ravel({0, 1}, dims)).has_value());
}

}  // namespace
}  // namespace symgcp
