#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "slide/error.hpp"
#include "slide/ops.hpp"
#include "slide/random.hpp"
#include "slide/shift.hpp"

using namespace slide;

TEST(TensorTest, ShapeAndRowMajorAddressing) {
  TensorD t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  t.at(1, 2, 3, 4) = 7.0;
  EXPECT_EQ(t[((1 * 3 + 2) * 4 + 3) * 5 + 4], 7.0);
  EXPECT_EQ(t.dims4().index(1, 2, 3, 4), 119u);
}

TEST(TensorTest, DataLengthMustMatchShape) {
  EXPECT_THROW(TensorD(Shape{2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(TensorD(Shape{2, 2}).dims4(), ShapeError);
}

TEST(TensorTest, ReshapeKeepsData) {
  const TensorD t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  const TensorD r = t.reshaped(Shape{3, 2});
  EXPECT_EQ(r.values(), t.values());
  EXPECT_THROW(t.reshaped(Shape{4, 2}), ShapeError);
}

TEST(PadZeroTest, TwoByTwoWithUnitPadding) {
  const TensorD t(Shape{1, 2, 2, 1}, {1, 2, 3, 4});
  const TensorD p = pad_zero(t, 1, 1);
  ASSERT_EQ(p.shape(), (Shape{1, 4, 4, 1}));
  const TensorD want(Shape{1, 4, 4, 1}, {0, 0, 0, 0,  //
                                         0, 1, 2, 0,  //
                                         0, 3, 4, 0,  //
                                         0, 0, 0, 0});
  EXPECT_EQ(p, want);
}

TEST(PadZeroTest, ZeroPaddingIsIdentity) {
  Rng rng(11);
  const TensorD t = random_uniform<double>(Shape{2, 3, 5, 4}, rng);
  EXPECT_EQ(pad_zero(t, 0, 0), t);
}

TEST(PadZeroTest, SinglePixelThreeChannels) {
  const TensorD t(Shape{1, 1, 1, 3}, {5, 6, 7});
  const TensorD p = pad_zero(t, 1, 1);
  ASSERT_EQ(p.shape(), (Shape{1, 3, 3, 3}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t c = 0; c < 3; ++c) {
        const double want = (i == 1 && j == 1) ? 5.0 + static_cast<double>(c) : 0.0;
        EXPECT_EQ(p.at(0, i, j, c), want) << i << "," << j << "," << c;
      }
}

TEST(PadZeroTest, CropUndoesPad) {
  Rng rng(12);
  for (std::size_t ph = 0; ph < 3; ++ph)
    for (std::size_t pw = 0; pw < 3; ++pw) {
      const TensorD t = random_uniform<double>(Shape{1, 4, 3, 2}, rng);
      EXPECT_EQ(center_crop(pad_zero(t, ph, pw), ph, pw), t);
    }
  EXPECT_THROW(center_crop(TensorD(Shape{1, 2, 2, 1}), 2, 0), ShapeError);
}

TEST(SoftmaxTest, UniformForEqualInputs) {
  const TensorD y = softmax_lastdim(TensorD(Shape{3}, {0, 0, 0}));
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(SoftmaxTest, LargeInputsDoNotOverflow) {
  const TensorD y = softmax_lastdim(TensorD(Shape{2}, {1000, 1000}));
  EXPECT_EQ(y[0], 0.5);
  EXPECT_EQ(y[1], 0.5);
  const TensorF yf = softmax_lastdim(TensorF(Shape{2}, {1000.0f, 1000.0f}));
  EXPECT_EQ(yf[0], 0.5f);
}

TEST(SoftmaxTest, MatchesExtendedPrecisionFormula) {
  const TensorD y = softmax_lastdim(TensorD(Shape{3}, {1, 2, 3}));
  long double total = 0;
  for (int i = 1; i <= 3; ++i) total += std::exp(static_cast<long double>(i));
  for (int i = 1; i <= 3; ++i) {
    EXPECT_NEAR(y[static_cast<std::size_t>(i - 1)], static_cast<double>(std::exp(static_cast<long double>(i)) / total),
                1e-15);
  }
}

TEST(SoftmaxTest, RowsSumToOneAndIgnoreOffsets) {
  Rng rng(13);
  const TensorD x = random_uniform<double>(Shape{6, 9}, rng, -5, 5);
  TensorD shifted = x;
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 9; ++c) shifted[r * 9 + c] += 3.0 * static_cast<double>(r) - 4.0;
  const TensorD y = softmax_lastdim(x);
  const TensorD ys = softmax_lastdim(shifted);
  for (std::size_t r = 0; r < 6; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 9; ++c) total += y[r * 9 + c];
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
  EXPECT_LE(max_abs_diff(y, ys), 1e-12);
}

TEST(SoftmaxTest, EmptyLastDimThrows) { EXPECT_THROW(softmax_lastdim(TensorD(Shape{2, 0})), ShapeError); }

TEST(DepthwiseConvTest, CenterDeltaIsIdentity) {
  Rng rng(14);
  const TensorD t = random_uniform<double>(Shape{2, 5, 4, 3}, rng);
  for (std::size_t k : {1u, 3u, 5u}) {
    TensorD kernel(Shape{k, k, 3});
    for (std::size_t c = 0; c < 3; ++c) kernel[((k / 2) * k + k / 2) * 3 + c] = 1.0;
    EXPECT_EQ(depthwise_conv2d(t, kernel, k / 2), t) << "k=" << k;
  }
}

TEST(DepthwiseConvTest, TopLeftDeltaShiftsDownRight) {
  const TensorD t(Shape{1, 2, 2, 1}, {1, 2, 3, 4});
  TensorD kernel(Shape{3, 3, 1});
  kernel[0] = 1.0;
  const TensorD out = depthwise_conv2d(t, kernel, 1);
  EXPECT_EQ(out, TensorD(Shape{1, 2, 2, 1}, {0, 0, 0, 1}));
}

TEST(DepthwiseConvTest, MatchesLoopOracle) {
  Rng rng(15);
  for (int trial = 0; trial < 5; ++trial) {
    const TensorD t = random_uniform<double>(Shape{1, 4, 4, 2}, rng);
    const TensorD kernel = random_uniform<double>(Shape{3, 3, 2}, rng);
    const TensorD want = oracle::conv_loops(t, kernel.reshaped(Shape{3, 3, 2, 1}));
    EXPECT_LE(max_abs_diff(depthwise_conv2d(t, kernel, 1), want), 1e-14);
  }
}

TEST(DepthwiseConvTest, EveryShiftKernelMatchesShiftFeature) {
  Rng rng(16);
  const TensorD t = random_uniform<double>(Shape{1, 5, 6, 3}, rng);
  const auto bank = build_shift_kernel_bank<double>(5, 3);
  for (std::size_t d = 0; d < bank.directions(); ++d) {
    const Offset o = direction_offset(d, 5);
    EXPECT_EQ(depthwise_conv2d(t, bank.slice(d), 2), shift_feature(t, o.u, o.v)) << "direction " << d;
  }
}

TEST(DepthwiseConvTest, RejectsBadGeometry) {
  const TensorD t(Shape{1, 3, 3, 2});
  EXPECT_THROW(depthwise_conv2d(t, TensorD(Shape{2, 2, 2}), 1), ConfigError);
  EXPECT_THROW(depthwise_conv2d(t, TensorD(Shape{3, 3, 2}), 0), ConfigError);
  EXPECT_THROW(depthwise_conv2d(t, TensorD(Shape{3, 3, 4}), 1), ShapeError);
  EXPECT_THROW(depthwise_conv2d(t, TensorD(Shape{3, 3, 2, 1}), 1), ShapeError);
}

TEST(GroupedConvTest, SingleGroupIsDepthwise) {
  Rng rng(17);
  const TensorD t = random_uniform<double>(Shape{1, 4, 5, 3}, rng);
  const TensorD kernel = random_uniform<double>(Shape{3, 3, 3}, rng);
  EXPECT_EQ(grouped_conv2d(t, kernel.reshaped(Shape{3, 3, 3, 1}), 1), depthwise_conv2d(t, kernel, 1));
}

TEST(GroupedConvTest, ShiftBankGivesNineShiftedCopies) {
  Rng rng(18);
  const TensorD t = random_uniform<double>(Shape{1, 4, 4, 2}, rng);
  const auto bank = build_shift_kernel_bank<double>(3, 2);
  const TensorD out = grouped_conv2d(t, bank.kernels, 1);
  ASSERT_EQ(out.shape(), (Shape{1, 4, 4, 18}));
  for (std::size_t g = 0; g < 9; ++g) {
    const Offset o = direction_offset(g, 3);
    const TensorD shifted = shift_feature(t, o.u, o.v);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t c = 0; c < 2; ++c)
          EXPECT_EQ(out.at(0, i, j, grouped_channel(c, g, 2)), shifted.at(0, i, j, c));
  }
}

TEST(GroupedConvTest, EqualsConcatenatedDepthwiseCalls) {
  Rng rng(19);
  for (std::size_t groups : {2u, 4u, 9u}) {
    const TensorD t = random_uniform<double>(Shape{2, 5, 3, 3}, rng);
    const TensorD kernels = random_uniform<double>(Shape{3, 3, 3, groups}, rng);
    const TensorD out = grouped_conv2d(t, kernels, 1);
    for (std::size_t g = 0; g < groups; ++g) {
      TensorD slice(Shape{3, 3, 3});
      for (std::size_t tap = 0; tap < 9; ++tap)
        for (std::size_t c = 0; c < 3; ++c) slice[tap * 3 + c] = kernels[(tap * 3 + c) * groups + g];
      const TensorD dw = depthwise_conv2d(t, slice, 1);
      for (std::size_t px = 0; px < 2 * 5 * 3; ++px)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out[px * 3 * groups + g * 3 + c], dw[px * 3 + c]);
    }
    EXPECT_LE(max_abs_diff(out, oracle::conv_loops(t, kernels)), 1e-14);
  }
}

TEST(GroupedConvTest, PlanRowsReassembleFullOutput) {
  Rng rng(20);
  const TensorD t = random_uniform<double>(Shape{2, 7, 4, 3}, rng);
  const TensorD kernels = random_uniform<double>(Shape{5, 5, 3, 2}, rng);
  const TensorD full = grouped_conv2d(t, kernels, 2);
  const GroupedConvPlan<double> plan(kernels, 2);
  const std::size_t row = 4 * 6;
  std::vector<double> buf;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t h0 = 0; h0 < 7; h0 += 3) {
      const std::size_t h1 = std::min<std::size_t>(7, h0 + 3);
      buf.assign((h1 - h0) * row, -1.0);
      plan.rows(t, n, h0, h1, buf);
      for (std::size_t i = 0; i < buf.size(); ++i) EXPECT_EQ(buf[i], full[(n * 7 + h0) * row + i]);
    }
  EXPECT_THROW(plan.rows(t, 0, 5, 8, buf), ShapeError);
  buf.resize(row + 1);
  EXPECT_THROW(plan.rows(t, 0, 0, 1, buf), ShapeError);
}

TEST(GroupedConvTest, OneHotKernelsMatchOracle) {
  // Each group picks at most one unit tap, so the plan can copy instead of
  // accumulate. Group 2 has no tap and must come out as zeros.
  Rng rng(21);
  const TensorD t = random_uniform<double>(Shape{2, 4, 6, 3}, rng);
  TensorD kernels(Shape{3, 3, 3, 4});
  const std::size_t taps[] = {0, 8, 9, 4};
  for (std::size_t g = 0; g < 4; ++g)
    if (taps[g] < 9)
      for (std::size_t c = 0; c < 3; ++c) kernels[(taps[g] * 3 + c) * 4 + g] = 1.0;
  const TensorD out = grouped_conv2d(t, kernels, 1);
  EXPECT_EQ(out, oracle::conv_loops(t, kernels));
  for (std::size_t px = 0; px < 2 * 4 * 6; ++px)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out[px * 12 + 2 * 3 + c], 0.0);

  // A second unit tap for group 0 needs the accumulating path.
  for (std::size_t c = 0; c < 3; ++c) kernels[(1 * 3 + c) * 4 + 0] = 1.0;
  EXPECT_LE(max_abs_diff(grouped_conv2d(t, kernels, 1), oracle::conv_loops(t, kernels)), 1e-15);
}

TEST(MatmulTest, IdentityAndDotProduct) {
  Rng rng(21);
  const TensorD a = random_uniform<double>(Shape{3, 3}, rng);
  TensorD eye(Shape{3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  EXPECT_EQ(matmul(eye, a), a);
  const TensorD row(Shape{1, 3}, {1, 2, 3});
  const TensorD col(Shape{3, 1}, {4, 5, 6});
  EXPECT_EQ(matmul(row, col)[0], 32.0);
}

TEST(MatmulTest, MatchesLoopOracle) {
  Rng rng(22);
  const TensorD a = random_uniform<double>(Shape{3, 4}, rng);
  const TensorD b = random_uniform<double>(Shape{4, 5}, rng);
  EXPECT_LE(max_abs_diff(matmul(a, b), oracle::matmul_loops(a, b)), 1e-6);
  const TensorF af = a.cast<float>();
  const TensorF bf = b.cast<float>();
  EXPECT_LE(max_abs_diff(matmul(af, bf).cast<double>(), oracle::matmul_loops(a, b)), 1e-6);
}

TEST(MatmulTest, BatchedMatchesPerBatch) {
  Rng rng(23);
  const TensorD a = random_uniform<double>(Shape{3, 2, 4}, rng);
  const TensorD b = random_uniform<double>(Shape{3, 4, 5}, rng);
  const TensorD out = batched_matmul(a, b);
  ASSERT_EQ(out.shape(), (Shape{3, 2, 5}));
  for (std::size_t n = 0; n < 3; ++n) {
    const TensorD an(Shape{2, 4}, std::vector<double>(a.values().begin() + static_cast<long>(n * 8),
                                                      a.values().begin() + static_cast<long>((n + 1) * 8)));
    const TensorD bn(Shape{4, 5}, std::vector<double>(b.values().begin() + static_cast<long>(n * 20),
                                                      b.values().begin() + static_cast<long>((n + 1) * 20)));
    const TensorD want = matmul(an, bn);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(out[n * 10 + i], want[i]);
  }
}

TEST(MatmulTest, InnerDimensionMismatchThrows) {
  EXPECT_THROW(matmul(TensorD(Shape{2, 3}), TensorD(Shape{4, 2})), ShapeError);
}

TEST(OpsTest, FinitenessAndSums) {
  TensorD t(Shape{3}, {1, 2, 3});
  EXPECT_TRUE(all_finite(t));
  EXPECT_EQ(sum(t), 6.0);
  t[1] = std::nan("");
  EXPECT_FALSE(all_finite(t));
}
