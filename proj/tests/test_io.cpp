#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "symgcp/io.hpp"
#include "test_util.hpp"

namespace symgcp {
namespace {

namespace fs = std::filesystem;
using testing::random_dense;
using testing::random_matrix;

std::size_t error_line(const std::string& text, bool sparse) {
  std::istringstream is(text);
  try {
    if (sparse)
      io::read_sparse(is);
    else
      io::read_dense(is);
  } catch (const IoError& e) {
    return e.line();
  }
  ADD_FAILURE() << "no IoError for:\n" << text;
  return 0;
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("symgcp_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST(SparseFormat, ParsesOneBasedEntriesAndComments) {
  std::istringstream is(
      "# a comment\n"
      "dims: 2 3 2\n"
      "1 1 1 1.5\n"
      "\n"
      "2 3 2 -4   # trailing comment\n");
  const SparseTensor t = io::read_sparse(is);
  EXPECT_EQ(t.dims(), (Dims{2, 3, 2}));
  ASSERT_EQ(t.nnz(), 2u);
  EXPECT_EQ(densify(t).at({0, 0, 0}), 1.5);
  EXPECT_EQ(densify(t).at({1, 2, 1}), -4.0);
}

TEST(SparseFormat, SumsDuplicatesWithWarning) {
  std::vector<std::string> warnings;
  auto saved = warning_handler();
  warning_handler() = [&](const std::string& w) { warnings.push_back(w); };
  std::istringstream is("dims: 2 2\n1 2 1\n1 2 2\n");
  const SparseTensor t = io::read_sparse(is);
  warning_handler() = saved;
  ASSERT_EQ(t.nnz(), 1u);
  EXPECT_EQ(t.value(0), 3.0);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(SparseFormat, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line("size: 2 2\n", true), 1u);
  EXPECT_EQ(error_line("dims: 2 0\n", true), 1u);
  EXPECT_EQ(error_line("dims: 2 2\n1 1 1\n1 x 1\n", true), 3u);
  EXPECT_EQ(error_line("dims: 2 2\n1 1 1\n\n3 1 1\n", true), 4u);
  EXPECT_EQ(error_line("dims: 2 2\n0 1 1\n", true), 2u);
  EXPECT_EQ(error_line("dims: 2 2\n1 1\n", true), 2u);
  EXPECT_EQ(error_line("# only\ndims: 2 2\n1 1 abc\n", true), 3u);
}

TEST(DenseFormat, ParsesAnyWhitespace) {
  std::istringstream is("dims: 2 2\n1 3\n2\n 4\n");
  const DenseTensor t = io::read_dense(is);
  EXPECT_EQ(vectorize(t), (std::vector<double>{1, 3, 2, 4}));
}

TEST(DenseFormat, CountMismatchIsAnError) {
  std::istringstream too_few("dims: 2 2\n1 2 3\n");
  EXPECT_THROW(io::read_dense(too_few), IoError);
  std::istringstream too_many("dims: 2 2\n1 2 3 4 5\n");
  EXPECT_THROW(io::read_dense(too_many), IoError);
  EXPECT_EQ(error_line("dims: 2 2\n1 2\n3 q\n", false), 3u);
}

TEST_F(TempDir, TensorRoundTripsAreLossless) {
  std::mt19937_64 rng(1);
  DenseTensor d = random_dense({3, 4, 2}, rng);
  io::write_dense(dir_ / "x.dns", d);
  EXPECT_EQ(io::read_dense(dir_ / "x.dns"), d);
  for (Index i = 0; i < d.size(); i += 2) d[i] = 0.0;
  const SparseTensor s = sparsify(d);
  io::write_sparse(dir_ / "x.tns", s);
  EXPECT_EQ(io::read_sparse(dir_ / "x.tns"), s);
  EXPECT_THROW(io::read_sparse(dir_ / "missing.tns"), IoError);
}

TEST_F(TempDir, CsvRoundTrip) {
  std::mt19937_64 rng(2);
  const Matrix m = random_matrix(5, 3, rng);
  io::write_csv(dir_ / "m.csv", m);
  EXPECT_EQ(io::read_csv(dir_ / "m.csv"), m);
  const Vector v = m.col(1);
  io::write_vector(dir_ / "v.csv", v);
  EXPECT_EQ(io::read_vector(dir_ / "v.csv"), v);
  EXPECT_THROW(io::read_vector(dir_ / "m.csv"), IoError);
}

TEST(Csv, RaggedRowsReportLine) {
  std::istringstream is("1,2\n3,4\n5\n");
  try {
    io::read_csv(is);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Format, ExtensionAndName) {
  EXPECT_EQ(io::format_from_extension("a.dns"), io::TensorFormat::dense);
  EXPECT_EQ(io::format_from_extension("a.tns"), io::TensorFormat::sparse);
  EXPECT_EQ(io::parse_format("dense"), io::TensorFormat::dense);
  EXPECT_THROW(io::parse_format("hdf5"), ValidationError);
}

}  // namespace
}  // namespace symgcp
