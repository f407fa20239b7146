#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "slide/bench.hpp"
#include "slide/gradcheck.hpp"
#include "slide/im2col.hpp"
#include "slide/tensor.hpp"

namespace slide::verify {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::size_t cases = 0;
  std::string detail;
  double seconds = 0.0;
};

/// "[PASS] 3 attention oracle equivalence (50 cases, 0.12 s): ..." style line.
std::string format_line(const CriterionResult& r);

/// im2col == im2col_via_shifts == im2col_via_dwconv (fused and unfused),
/// element-exact, over random k in {1,3,5,7}, H,W in [1,9], C in [1,8].
CriterionResult im2col_equivalence(std::size_t cases = 200, std::uint64_t seed = 1);

/// depthwise_conv2d with every bank slice equals shift_feature.
CriterionResult shift_kernel_identity(std::size_t cases = 100, std::uint64_t seed = 2);

/// Fixed-bank slide attention vs projections + im2col + reference attention,
/// both mask settings, |diff| <= 1e-10 at f64.
CriterionResult attention_oracle(std::size_t configs = 50, std::uint64_t seed = 3);

/// forward_merged(reparameterize(p)) vs forward_two_path(p): 1e-12 at f64,
/// 1e-6 at f32; merged path runs one grouped convolution, two-path runs two.
CriterionResult reparam_exactness(std::size_t cases = 100, std::uint64_t seed = 4);

/// Central-difference checks of every analytic backward, plus the negative
/// controls. Reports of the last seed of each op are appended to `reports`
/// when non-null.
CriterionResult gradient_checks(std::size_t seeds = 20, std::uint64_t seed = 5,
                                std::vector<gradcheck::GradReport>* reports = nullptr);

/// Interior-restricted translation equivariance, exact at f64.
CriterionResult translation_equivariance(std::size_t cases = 50, std::uint64_t seed = 6);

/// dwconv_fused strictly faster than im2col in every cell, checksums agreeing.
CriterionResult efficiency_ordering(const bench::BenchConfig& cfg = bench::default_sweep());

/// 2x2 map, [1,1] zero padding, k = 3: the key matrix, its shifted rows and
/// its per-query windows.
struct Fig2Demo {
  TensorD feature;
  TensorD padded;
  Im2ColMatrix<double> keys;
  std::vector<TensorD> shifted;  // indexed by direction_index(u, v, 3)
};

Fig2Demo make_fig2_demo();
std::string render_fig2_demo(const Fig2Demo& demo);

/// Rows equal the (u,v)-shifted maps and columns equal the padded windows.
CriterionResult demo_structure();

/// Criteria 1-6 and 8; the timing criterion is run only when include_bench.
std::vector<CriterionResult> run_suite(bool include_bench, std::vector<gradcheck::GradReport>* reports = nullptr);

}  // namespace slide::verify
