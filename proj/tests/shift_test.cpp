#include <gtest/gtest.h>

#include <algorithm>

#include "slide/error.hpp"
#include "slide/im2col.hpp"
#include "slide/ops.hpp"
#include "slide/random.hpp"
#include "slide/shift.hpp"

using namespace slide;

TEST(ShiftFeatureTest, ZeroShiftIsIdentity) {
  Rng rng(41);
  const TensorD f = random_uniform<double>(Shape{1, 3, 4, 2}, rng);
  EXPECT_EQ(shift_feature(f, 0, 0), f);
}

TEST(ShiftFeatureTest, UpLeftOnTwoByTwo) {
  const TensorD f(Shape{1, 2, 2, 1}, {1, 2, 3, 4});
  EXPECT_EQ(shift_feature(f, -1, -1), TensorD(Shape{1, 2, 2, 1}, {0, 0, 0, 1}));
}

TEST(ShiftFeatureTest, InverseShiftRestoresInterior) {
  Rng rng(42);
  const TensorD f = random_uniform<double>(Shape{1, 7, 8, 3}, rng);
  for (int u = -2; u <= 2; ++u)
    for (int v = -2; v <= 2; ++v) {
      const TensorD back = shift_feature(shift_feature(f, u, v), -u, -v);
      const std::size_t m = static_cast<std::size_t>(std::max(std::abs(u), std::abs(v)));
      for (std::size_t i = m; i + m < 7; ++i)
        for (std::size_t j = m; j + m < 8; ++j)
          for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(back.at(0, i, j, c), f.at(0, i, j, c));
    }
}

TEST(ShiftFeatureTest, FarShiftIsAllZero) {
  Rng rng(43);
  const TensorD f = random_uniform<double>(Shape{1, 2, 3, 1}, rng);
  EXPECT_EQ(shift_feature(f, 5, 0), TensorD(f.shape()));
}

TEST(ShiftBankTest, UpLeftSliceIsTopLeftDelta) {
  const auto bank = build_shift_kernel_bank<double>(3, 1);
  EXPECT_EQ(bank.directions(), 9u);
  EXPECT_EQ(bank.slice(direction_index(-1, -1, 3)), TensorD(Shape{3, 3, 1}, {1, 0, 0, 0, 0, 0, 0, 0, 0}));
}

TEST(ShiftBankTest, UnitWindowIsIdentityKernel) {
  const auto bank = build_shift_kernel_bank<double>(1, 2);
  EXPECT_EQ(bank.kernels, TensorD(Shape{1, 1, 2, 1}, {1, 1}));
}

TEST(ShiftBankTest, DownRightSliceMatchesShift) {
  const auto bank = build_shift_kernel_bank<double>(3, 2);
  const TensorD slice = bank.slice(direction_index(1, 1, 3));
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t q = 0; q < 3; ++q)
      for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(slice[(p * 3 + q) * 2 + c], (p == 2 && q == 2) ? 1.0 : 0.0);
  Rng rng(44);
  const TensorD f = random_uniform<double>(Shape{1, 4, 5, 2}, rng);
  EXPECT_EQ(depthwise_conv2d(f, slice, 1), shift_feature(f, 1, 1));
}

TEST(ShiftBankTest, SlicesPreserveInteriorValues) {
  // A shift moves interior values without changing them: the multiset of
  // values that stay inside the map is unchanged.
  Rng rng(45);
  const TensorD f = random_uniform<double>(Shape{1, 6, 6, 1}, rng);
  const auto bank = build_shift_kernel_bank<double>(3, 1);
  for (std::size_t d = 0; d < 9; ++d) {
    const Offset o = direction_offset(d, 3);
    const TensorD s = depthwise_conv2d(f, bank.slice(d), 1);
    std::vector<double> moved;
    std::vector<double> source;
    for (std::size_t i = 1; i < 5; ++i)
      for (std::size_t j = 1; j < 5; ++j) {
        moved.push_back(s.at(0, i, j, 0));
        source.push_back(f.at(0, static_cast<std::size_t>(static_cast<int>(i) + o.u),
                              static_cast<std::size_t>(static_cast<int>(j) + o.v), 0));
      }
    std::sort(moved.begin(), moved.end());
    std::sort(source.begin(), source.end());
    EXPECT_EQ(moved, source);
  }
}

TEST(ShiftBankTest, RejectsEvenWindow) { EXPECT_THROW(build_shift_kernel_bank<double>(4, 1), ConfigError); }

TEST(Im2ColViaShiftsTest, UnitWindowIsFeature) {
  Rng rng(46);
  const TensorD f = random_uniform<double>(Shape{1, 3, 2, 4}, rng);
  EXPECT_EQ(im2col_via_shifts(f, 1).data.values(), f.values());
}

TEST(Im2ColViaShiftsTest, MatchesColumnGather) {
  const TensorD small(Shape{1, 2, 2, 1}, {1, 2, 3, 4});
  EXPECT_EQ(im2col_via_shifts(small, 3), im2col(small, 3));
  Rng rng(47);
  const TensorD f = random_uniform<double>(Shape{1, 5, 7, 3}, rng);
  EXPECT_EQ(im2col_via_shifts(f, 5), im2col(f, 5));
}

TEST(Im2ColViaDwconvTest, UnitBankIsIdentity) {
  Rng rng(48);
  const TensorD f = random_uniform<double>(Shape{1, 3, 3, 2}, rng);
  EXPECT_EQ(im2col_via_dwconv(f, build_shift_kernel_bank<double>(1, 2)).data.values(), f.values());
}

TEST(Im2ColViaDwconvTest, FusedAndUnfusedMatchShifts) {
  Rng rng(49);
  for (std::size_t k : {1u, 3u, 5u, 7u}) {
    const TensorD f = random_uniform<double>(Shape{1, 4, 6, 3}, rng);
    const auto bank = build_shift_kernel_bank<double>(k, 3);
    const auto fused = im2col_via_dwconv(f, bank, true);
    const auto unfused = im2col_via_dwconv(f, bank, false);
    EXPECT_EQ(fused, unfused) << "k=" << k;
    EXPECT_EQ(fused, im2col_via_shifts(f, k)) << "k=" << k;
    EXPECT_EQ(fused, im2col(f, k)) << "k=" << k;
  }
}

TEST(Im2ColViaDwconvTest, BankMustMatchChannels) {
  const TensorD f(Shape{1, 3, 3, 2});
  EXPECT_THROW(im2col_via_dwconv(f, build_shift_kernel_bank<double>(3, 3)), ShapeError);
}
