#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "slide/attention.hpp"
#include "slide/deformed.hpp"
#include "slide/error.hpp"
#include "slide/gradcheck.hpp"
#include "slide/ops.hpp"
#include "slide/random.hpp"

using namespace slide;
using namespace slide::gradcheck;

namespace {

NamedTensors scale_all(NamedTensors grads, double factor) {
  for (auto& [name, t] : grads)
    for (auto& v : t.data()) v *= factor;
  return grads;
}

}  // namespace

TEST(NumericGradientTest, SumHasUnitGradient) {
  Rng rng(81);
  const TensorD x = random_uniform<double>(Shape{2, 3}, rng);
  const TensorD g = numeric_gradient([](const TensorD& t) { return sum(t); }, x);
  for (double v : g.values()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(NumericGradientTest, QuadraticIsExactUnderCentralDifferences) {
  Rng rng(82);
  const TensorD x = random_uniform<double>(Shape{5}, rng);
  const TensorD g = numeric_gradient(
      [](const TensorD& t) {
        double s = 0;
        for (double v : t.values()) s += v * v / 2;
        return s;
      },
      x);
  EXPECT_LE(max_abs_diff(g, x), 1e-9);
}

TEST(NumericGradientTest, NonFiniteValueThrows) {
  const TensorD x(Shape{1}, {0.0});
  // sqrt is undefined just left of zero.
  EXPECT_THROW(numeric_gradient([](const TensorD& t) { return std::sqrt(t[0]); }, x), NumericError);
}

TEST(CompareGradientsTest, RelativeErrorWithAbsoluteFloor) {
  const TensorD a(Shape{3}, {1.0, 1e-10, 2.0});
  const TensorD n(Shape{3}, {1.0 + 1e-6, 3e-10, 2.0});
  const GradReport r = compare_gradients("p", a, n);
  EXPECT_TRUE(r.passed);
  EXPECT_NEAR(r.max_rel_error, 1e-6, 1e-9);
  EXPECT_EQ(r.num_elements_checked, 3u);
  EXPECT_FALSE(compare_gradients("p", a, TensorD(Shape{3}, {1.1, 0.0, 2.0})).passed);
  EXPECT_FALSE(compare_gradients("p", a, TensorD(Shape{2})).passed);
}

TEST(CheckGradientsTest, ZeroBackwardIsCaught) {
  Rng rng(83);
  const NamedTensors params{{"x", random_uniform<double>(Shape{4}, rng)}};
  const auto forward = [](const NamedTensors& p) { return sum(p[0].second) * 2.0; };
  const auto backward = [](const NamedTensors& p) { return NamedTensors{{"x", TensorD(p[0].second.shape())}}; };
  const auto reports = check_gradients(forward, backward, params);
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_FALSE(reports[0].passed);
  EXPECT_FALSE(all_passed(reports));
}

TEST(CheckGradientsTest, MissingGradientFails) {
  const NamedTensors params{{"x", TensorD(Shape{2}, {1, 2})}, {"y", TensorD(Shape{2}, {3, 4})}};
  const auto forward = [](const NamedTensors& p) { return sum(p[0].second) + sum(p[1].second); };
  const auto backward = [](const NamedTensors&) { return NamedTensors{{"x", TensorD::filled(Shape{2}, 1.0)}}; };
  const auto reports = check_gradients(forward, backward, params);
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_TRUE(reports[0].passed);
  EXPECT_FALSE(reports[1].passed);
}

TEST(CheckGradientsTest, DepthwiseBackwardAndNegativeControl) {
  Rng rng(84);
  const TensorD weights = random_uniform<double>(Shape{1, 4, 5, 2}, rng);
  const NamedTensors params{{"x", random_uniform<double>(Shape{1, 4, 5, 2}, rng)},
                            {"kernel", random_uniform<double>(Shape{3, 3, 2}, rng)}};
  const auto forward = [&](const NamedTensors& p) {
    return scalarize(depthwise_conv2d(*find(p, "x"), *find(p, "kernel"), 1), weights);
  };
  const auto backward = [&](const NamedTensors& p) {
    auto g = depthwise_conv2d_backward(*find(p, "x"), *find(p, "kernel"), weights, 1);
    return NamedTensors{{"x", g.input}, {"kernel", g.kernel}};
  };
  EXPECT_TRUE(all_passed(check_gradients(forward, backward, params, 1e-5, 1e-4)));
  const auto off = [&](const NamedTensors& p) { return scale_all(backward(p), 1.01); };
  EXPECT_FALSE(all_passed(check_gradients(forward, off, params, 1e-5, 1e-4)));
}

TEST(CheckGradientsTest, DeformedTwoPathHasNoFixedBankGradient) {
  Rng rng(85);
  const auto base = init_deformed<double>(3, 2, 21, 0.2);
  const TensorD weights = random_uniform<double>(Shape{1, 3, 4, 18}, rng);
  const NamedTensors params{{"x", random_uniform<double>(Shape{1, 3, 4, 2}, rng)}, {"learnable", base.learnable}};
  const auto forward = [&](const NamedTensors& p) {
    return scalarize(forward_two_path(*find(p, "x"), deformed_from_parts(base.fixed_bank, *find(p, "learnable"))),
                     weights);
  };
  const auto backward = [&](const NamedTensors& p) {
    auto g = forward_two_path_backward(*find(p, "x"), deformed_from_parts(base.fixed_bank, *find(p, "learnable")),
                                       weights);
    return NamedTensors{{"x", g.input}, {"learnable", g.learnable}};
  };
  EXPECT_TRUE(all_passed(check_gradients(forward, backward, params)));
  // Asking for the fixed bank as a parameter finds no gradient for it.
  NamedTensors with_fixed = params;
  with_fixed.emplace_back("fixed", base.fixed_bank.kernels);
  const auto reports = check_gradients(forward, backward, with_fixed);
  EXPECT_FALSE(reports.back().passed);
  EXPECT_EQ(reports.back().parameter_name, "fixed");
}

TEST(CheckGradientsTest, SlideAttentionSmallInstance) {
  Rng rng(86);
  for (bool deformed : {false, true}) {
    const auto cfg = AttentionConfig::make(4, 2, 3, false, deformed);
    const auto base = init_attention_params<double>(cfg, 22);
    const TensorD weights = random_uniform<double>(Shape{1, 3, 3, 4}, rng);
    NamedTensors params{{"x", random_uniform<double>(Shape{1, 3, 3, 4}, rng)},
                        {"w_q", base.w_q},
                        {"w_k", base.w_k},
                        {"w_v", base.w_v},
                        {"w_o", base.w_o}};
    if (deformed) {
      params.emplace_back("deformed_k", base.deformed_k.learnable);
      params.emplace_back("deformed_v", base.deformed_v.learnable);
    }
    const auto unpack = [&](const NamedTensors& p) {
      AttentionParams<double> a = base;
      a.w_q = *find(p, "w_q");
      a.w_k = *find(p, "w_k");
      a.w_v = *find(p, "w_v");
      a.w_o = *find(p, "w_o");
      if (deformed) {
        a.deformed_k.learnable = *find(p, "deformed_k");
        a.deformed_v.learnable = *find(p, "deformed_v");
      }
      return a;
    };
    const auto forward = [&](const NamedTensors& p) {
      return scalarize(slide_attention_forward(*find(p, "x"), cfg, unpack(p)), weights);
    };
    const auto backward = [&](const NamedTensors& p) {
      auto g = slide_attention_backward(*find(p, "x"), cfg, unpack(p), weights);
      NamedTensors out{{"x", g.x}, {"w_q", g.w_q}, {"w_k", g.w_k}, {"w_v", g.w_v}, {"w_o", g.w_o}};
      if (g.deformed_k) out.emplace_back("deformed_k", *g.deformed_k);
      if (g.deformed_v) out.emplace_back("deformed_v", *g.deformed_v);
      return out;
    };
    const auto reports = check_gradients(forward, backward, params, 1e-5, 1e-4);
    EXPECT_EQ(reports.size(), params.size());
    for (const auto& r : reports) EXPECT_TRUE(r.passed) << r.parameter_name << " rel " << r.max_rel_error;
  }
}

TEST(GradReportJsonTest, RoundTrip) {
  std::vector<GradReport> reports{{"x", 1e-7, 2e-9, 12, 1e-4, true}, {"w", 0.5, 0.25, 3, 1e-4, false}};
  const auto back = reports_from_json(reports_to_json(reports));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].parameter_name, "x");
  EXPECT_EQ(back[0].max_rel_error, 1e-7);
  EXPECT_EQ(back[1].num_elements_checked, 3u);
  EXPECT_FALSE(back[1].passed);
}

TEST(GradReportJsonTest, NonFiniteErrorsSurviveAsNull) {
  std::vector<GradReport> reports{{"x", std::numeric_limits<double>::infinity(), 0.0, 1, 1e-4, false}};
  const std::string text = reports_to_json(reports);
  EXPECT_NE(text.find("null"), std::string::npos);
  EXPECT_FALSE(reports_from_json(text)[0].passed);
  EXPECT_THROW(reports_from_json("{not json"), ConfigError);
}
