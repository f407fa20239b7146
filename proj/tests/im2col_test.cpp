#include <gtest/gtest.h>

#include "oracles.hpp"
#include "slide/error.hpp"
#include "slide/im2col.hpp"
#include "slide/ops.hpp"
#include "slide/random.hpp"
#include "slide/shift.hpp"

using namespace slide;

namespace {

Im2ColMatrix<double> keys_2x2() { return im2col(TensorD(Shape{1, 2, 2, 1}, {1, 2, 3, 4}), 3); }

}  // namespace

TEST(Im2ColTest, TopLeftQueryOfTwoByTwoMap) {
  const auto m = keys_2x2();
  ASSERT_EQ(m.rows(), 9u);
  ASSERT_EQ(m.cols(), 4u);
  int nonzero = 0;
  int zeros = 0;
  for (std::size_t row = 0; row < 9; ++row) (*m.entry(row, query_index(0, 0, 2)) == 0.0 ? zeros : nonzero) += 1;
  EXPECT_EQ(nonzero, 4);
  EXPECT_EQ(zeros, 5);
  // The in-bounds part of the window is the whole map, in order.
  EXPECT_EQ(column_window(m, 0, 0), TensorD(Shape{3, 3, 1}, {0, 0, 0, 0, 1, 2, 0, 3, 4}));
}

TEST(Im2ColTest, UnitWindowIsFlattenedFeature) {
  Rng rng(31);
  const TensorD f = random_uniform<double>(Shape{1, 3, 5, 2}, rng);
  const auto m = im2col(f, 1);
  EXPECT_EQ(m.rows(), 1u);
  EXPECT_EQ(m.data.values(), f.values());
}

TEST(Im2ColTest, RowsAreShiftedMaps) {
  Rng rng(32);
  const TensorD f = random_uniform<double>(Shape{1, 4, 4, 2}, rng);
  const auto m = im2col(f, 3);
  for (std::size_t row = 0; row < 9; ++row) {
    const Offset o = direction_offset(row, 3);
    EXPECT_EQ(row_as_feature(m, row), shift_feature(f, o.u, o.v)) << "row " << row;
  }
}

TEST(Im2ColTest, ColumnsArePaddedWindows) {
  Rng rng(33);
  const TensorD f = random_uniform<double>(Shape{1, 3, 4, 2}, rng);
  const std::size_t k = 5;
  const auto m = im2col(f, k);
  const TensorD padded = pad_zero(f, 2, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const TensorD w = column_window(m, i, j);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t q = 0; q < k; ++q)
          for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(w[(p * k + q) * 2 + c], padded.at(0, i + p, j + q, c));
    }
}

TEST(Im2ColTest, RejectsBatchesAndEvenWindows) {
  EXPECT_THROW(im2col(TensorD(Shape{2, 3, 3, 1}), 3), ShapeError);
  EXPECT_THROW(im2col(TensorD(Shape{1, 3, 3, 1}), 2), ConfigError);
}

TEST(ReferenceAttentionTest, IdenticalKeysGiveWindowMean) {
  // All keys equal, so every logit is equal and the interior query averages
  // its nine values.
  Rng rng(34);
  const TensorD q = random_uniform<double>(Shape{1, 3, 3, 2}, rng);
  const TensorD keys = TensorD::filled(Shape{1, 3, 3, 2}, 0.0);
  const TensorD values = random_uniform<double>(Shape{1, 3, 3, 2}, rng);
  const TensorD z = local_attention_reference(q, im2col(keys, 3), im2col(values, 3), 2, false);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) mean += values.at(0, i, j, c) / 9.0;
    EXPECT_NEAR(z.at(0, 1, 1, c), mean, 1e-15);
  }
}

TEST(ReferenceAttentionTest, UnitWindowReturnsValues) {
  Rng rng(35);
  const TensorD q = random_uniform<double>(Shape{1, 3, 4, 4}, rng);
  const TensorD k = random_uniform<double>(Shape{1, 3, 4, 4}, rng);
  const TensorD v = random_uniform<double>(Shape{1, 3, 4, 4}, rng);
  for (bool mask : {false, true}) EXPECT_EQ(local_attention_reference(q, im2col(k, 1), im2col(v, 1), 2, mask), v);
}

TEST(ReferenceAttentionTest, MatchesScalarLoopsBothMasks) {
  Rng rng(36);
  for (int trial = 0; trial < 4; ++trial) {
    const TensorD q = random_uniform<double>(Shape{1, 4, 4, 8}, rng);
    const TensorD k = random_uniform<double>(Shape{1, 4, 4, 8}, rng);
    const TensorD v = random_uniform<double>(Shape{1, 4, 4, 8}, rng);
    for (bool mask : {false, true}) {
      const TensorD got = local_attention_reference(q, im2col(k, 3), im2col(v, 3), 4, mask);
      EXPECT_LE(max_abs_diff(got, oracle::local_attention_loops(q, k, v, 3, 4, mask)), 1e-14) << "mask=" << mask;
    }
  }
}

TEST(ReferenceAttentionTest, ConstantMapGivesConstantInterior) {
  const TensorD f = TensorD::filled(Shape{1, 7, 6, 2}, 0.75);
  const std::size_t k = 5;
  const TensorD z = local_attention_reference(f, im2col(f, k), im2col(f, k), 2, false);
  const double centre = z.at(0, 3, 2, 0);
  for (std::size_t i = 2; i + 2 < 7; ++i)
    for (std::size_t j = 2; j + 2 < 6; ++j)
      for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(z.at(0, i, j, c), centre);
  EXPECT_NEAR(centre, 0.75, 1e-15);
}

TEST(ReferenceAttentionTest, MaskedWindowsNormaliseOverValidKeys) {
  // With masking, a corner query of a constant map sees only in-bounds keys,
  // so the output is that constant everywhere.
  const TensorD f = TensorD::filled(Shape{1, 3, 3, 2}, 2.0);
  const TensorD z = local_attention_reference(f, im2col(f, 3), im2col(f, 3), 1, true);
  for (double x : z.values()) EXPECT_NEAR(x, 2.0, 1e-15);
}

TEST(ReferenceAttentionTest, HeadDimMustDivideChannels) {
  const TensorD f(Shape{1, 2, 2, 6});
  EXPECT_THROW(local_attention_reference(f, im2col(f, 3), im2col(f, 3), 4, false), ShapeError);
}
