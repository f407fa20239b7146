#include "slide/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <iomanip>
#include <limits>
#include <sstream>

#include "slide/attention.hpp"
#include "slide/deformed.hpp"
#include "slide/op_counter.hpp"
#include "slide/ops.hpp"
#include "slide/random.hpp"
#include "slide/shift.hpp"

namespace slide::verify {

using gradcheck::GradReport;
using gradcheck::NamedTensors;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::size_t pick_odd(Rng& rng, std::initializer_list<std::size_t> ks) {
  const std::vector<std::size_t> v(ks);
  return v[pick(rng, 0, v.size() - 1)];
}

CriterionResult finish(CriterionResult r, const Stopwatch& sw, const std::string& failure) {
  r.seconds = sw.seconds();
  r.passed = failure.empty();
  if (!failure.empty()) r.detail = failure;
  return r;
}

}  // namespace

std::string format_line(const CriterionResult& r) {
  std::ostringstream os;
  os << (r.passed ? "[PASS] " : "[FAIL] ") << r.id << ' ' << r.name << " (" << r.cases << " cases, " << std::fixed
     << std::setprecision(2) << r.seconds << " s)";
  if (!r.detail.empty()) os << ": " << r.detail;
  return os.str();
}

CriterionResult im2col_equivalence(std::size_t cases, std::uint64_t seed) {
  Stopwatch sw;
  CriterionResult r{1, "im2col equivalence", false, cases, {}, 0.0};
  Rng rng(seed);
  const std::size_t ks[] = {1, 3, 5, 7};
  std::string failure;
  for (std::size_t i = 0; i < cases && failure.empty(); ++i) {
    const std::size_t k = ks[i % 4];
    const std::size_t h = pick(rng, 1, 9);
    const std::size_t w = pick(rng, 1, 9);
    const std::size_t c = pick(rng, 1, 8);
    const TensorD f = random_uniform<double>(Shape{1, h, w, c}, rng);
    const auto oracle = im2col(f, k);
    const auto bank = build_shift_kernel_bank<double>(k, c);
    if (!(im2col_via_shifts(f, k) == oracle)) failure = "shift path differs";
    else if (!(im2col_via_dwconv(f, bank, true) == oracle)) failure = "fused dwconv path differs";
    else if (!(im2col_via_dwconv(f, bank, false) == oracle)) failure = "unfused dwconv path differs";
    if (!failure.empty()) {
      failure += " at case " + std::to_string(i) + " (" + std::to_string(h) + "x" + std::to_string(w) + "x" +
                 std::to_string(c) + ", k=" + std::to_string(k) + ")";
    }
  }
  r.detail = "element-exact, k in {1,3,5,7}";
  return finish(r, sw, failure);
}

CriterionResult shift_kernel_identity(std::size_t cases, std::uint64_t seed) {
  Stopwatch sw;
  CriterionResult r{2, "shift-kernel identity", false, cases, {}, 0.0};
  Rng rng(seed);
  std::string failure;
  std::size_t directions = 0;
  for (std::size_t i = 0; i < cases && failure.empty(); ++i) {
    const std::size_t k = pick_odd(rng, {1, 3, 5, 7});
    const TensorD f = random_uniform<double>(Shape{pick(rng, 1, 2), pick(rng, 1, 9), pick(rng, 1, 9), pick(rng, 1, 8)}, rng);
    const auto bank = build_shift_kernel_bank<double>(k, f.dim(3));
    for (std::size_t d = 0; d < k * k; ++d) {
      const Offset o = direction_offset(d, k);
      ++directions;
      if (!(depthwise_conv2d(f, bank.slice(d), k / 2) == shift_feature(f, o.u, o.v))) {
        failure = "direction (" + std::to_string(o.u) + "," + std::to_string(o.v) + ") differs at case " +
                  std::to_string(i);
        break;
      }
    }
  }
  r.detail = std::to_string(directions) + " directions, element-exact";
  return finish(r, sw, failure);
}

CriterionResult attention_oracle(std::size_t configs, std::uint64_t seed) {
  Stopwatch sw;
  CriterionResult r{3, "attention oracle equivalence", false, configs, {}, 0.0};
  constexpr double kTol = 1e-10;
  Rng rng(seed);
  double worst = 0.0;
  std::string failure;
  for (std::size_t i = 0; i < configs && failure.empty(); ++i) {
    const std::size_t heads = pick(rng, 1, 3);
    const std::size_t hd = pick(rng, 1, 4);
    const std::size_t k = pick_odd(rng, {1, 3, 5, 7});
    const std::size_t h = pick(rng, 1, 8);
    const std::size_t w = pick(rng, 1, 8);
    const TensorD x = random_uniform<double>(Shape{1, h, w, heads * hd}, rng);
    for (const bool mask : {false, true}) {
      const auto cfg = AttentionConfig::make(heads * hd, heads, k, mask, false);
      const auto p = init_attention_params<double>(cfg, rng());
      const TensorD fast = slide_attention_forward(x, cfg, p);
      const Qkv<double> qkv = project_qkv(x, p);
      const TensorD z = local_attention_reference(qkv.q, im2col(qkv.k, k), im2col(qkv.v, k), hd, mask);
      const TensorD ref = project_pixels(z, p.w_o);
      const double diff = max_abs_diff(fast, ref);
      worst = std::max(worst, diff);
      if (!(diff <= kTol)) {
        failure = "max |diff| " + std::to_string(diff) + " > 1e-10 at config " + std::to_string(i) +
                  (mask ? " (masked)" : " (unmasked)");
        break;
      }
    }
  }
  std::ostringstream os;
  os << "both mask settings, worst |diff| = " << std::scientific << std::setprecision(2) << worst;
  r.detail = os.str();
  return finish(r, sw, failure);
}

CriterionResult reparam_exactness(std::size_t cases, std::uint64_t seed) {
  Stopwatch sw;
  CriterionResult r{4, "re-parameterization exactness", false, cases, {}, 0.0};
  Rng rng(seed);
  double worst64 = 0.0;
  double worst32 = 0.0;
  std::string failure;
  for (std::size_t i = 0; i < cases && failure.empty(); ++i) {
    const std::size_t k = pick_odd(rng, {1, 3, 5, 7});
    const std::size_t c = pick(rng, 1, 8);
    const Shape shape{1, pick(rng, 1, 9), pick(rng, 1, 9), c};
    const std::uint64_t pseed = rng();

    const auto p64 = init_deformed<double>(k, c, pseed);
    const TensorD f64 = random_uniform<double>(shape, rng);
    OpCountScope two_scope;
    const TensorD two = forward_two_path(f64, p64);
    const OpCounts two_counts = two_scope.counts();
    const auto m64 = reparameterize(p64);
    OpCountScope merged_scope;
    const TensorD merged = forward_merged(f64, m64);
    const OpCounts merged_counts = merged_scope.counts();
    worst64 = std::max(worst64, max_abs_diff(two, merged));
    if (!(max_abs_diff(two, merged) <= 1e-12)) {
      failure = "f64 mismatch at case " + std::to_string(i);
      break;
    }
    if (two_counts.grouped_convs != 2 || merged_counts.grouped_convs != 1 ||
        2 * merged_counts.multiply_adds != two_counts.multiply_adds) {
      failure = "operation count: two-path ran " + std::to_string(two_counts.grouped_convs) +
                " grouped convs, merged ran " + std::to_string(merged_counts.grouped_convs);
      break;
    }

    const auto p32 = init_deformed<float>(k, c, pseed);
    const TensorF f32 = f64.cast<float>();
    const double d32 = max_abs_diff(forward_two_path(f32, p32), forward_merged(f32, reparameterize(p32)));
    worst32 = std::max(worst32, d32);
    if (!(d32 <= 1e-6)) failure = "f32 mismatch " + std::to_string(d32) + " at case " + std::to_string(i);
  }
  std::ostringstream os;
  os << "worst |diff| f64 " << std::scientific << std::setprecision(2) << worst64 << ", f32 " << worst32
     << "; grouped convs merged 1 vs two-path 2";
  r.detail = os.str();
  return finish(r, sw, failure);
}

namespace {

using OpCase = std::function<std::pair<gradcheck::ForwardFn, gradcheck::BackwardFn>(Rng&, NamedTensors&)>;

struct GradOp {
  std::string name;
  OpCase make;
};

TensorD rand_t(Shape s, Rng& rng) { return random_uniform<double>(std::move(s), rng); }

std::vector<GradOp> gradient_ops() {
  std::vector<GradOp> ops;
  ops.push_back({"matmul", [](Rng& rng, NamedTensors& params) {
                   const std::size_t m = pick(rng, 1, 5), k = pick(rng, 1, 5), n = pick(rng, 1, 5);
                   params = {{"a", rand_t({m, k}, rng)}, {"b", rand_t({k, n}, rng)}};
                   auto weights = std::make_shared<TensorD>(rand_t({m, n}, rng));
                   gradcheck::ForwardFn fwd = [weights](const NamedTensors& p) {
                     return gradcheck::scalarize(matmul(p[0].second, p[1].second), *weights);
                   };
                   gradcheck::BackwardFn bwd = [weights](const NamedTensors& p) {
                     auto g = matmul_backward(p[0].second, p[1].second, *weights);
                     return NamedTensors{{"a", g.a}, {"b", g.b}};
                   };
                   return std::make_pair(fwd, bwd);
                 }});
  ops.push_back({"softmax", [](Rng& rng, NamedTensors& params) {
                   const Shape s{pick(rng, 1, 5), pick(rng, 1, 5)};
                   params = {{"x", rand_t(s, rng)}};
                   auto weights = std::make_shared<TensorD>(rand_t(s, rng));
                   gradcheck::ForwardFn fwd = [weights](const NamedTensors& p) {
                     return gradcheck::scalarize(softmax_lastdim(p[0].second), *weights);
                   };
                   gradcheck::BackwardFn bwd = [weights](const NamedTensors& p) {
                     return NamedTensors{{"x", softmax_lastdim_backward(softmax_lastdim(p[0].second), *weights)}};
                   };
                   return std::make_pair(fwd, bwd);
                 }});
  ops.push_back({"depthwise_conv2d", [](Rng& rng, NamedTensors& params) {
                   const std::size_t k = pick_odd(rng, {1, 3, 5});
                   const std::size_t c = pick(rng, 1, 4);
                   const Shape s{1, pick(rng, 1, 5), pick(rng, 1, 5), c};
                   params = {{"input", rand_t(s, rng)}, {"kernel", rand_t({k, k, c}, rng)}};
                   auto weights = std::make_shared<TensorD>(rand_t(s, rng));
                   gradcheck::ForwardFn fwd = [weights, k](const NamedTensors& p) {
                     return gradcheck::scalarize(depthwise_conv2d(p[0].second, p[1].second, k / 2), *weights);
                   };
                   gradcheck::BackwardFn bwd = [weights, k](const NamedTensors& p) {
                     auto g = depthwise_conv2d_backward(p[0].second, p[1].second, *weights, k / 2);
                     return NamedTensors{{"input", g.input}, {"kernel", g.kernel}};
                   };
                   return std::make_pair(fwd, bwd);
                 }});
  ops.push_back({"grouped_conv2d", [](Rng& rng, NamedTensors& params) {
                   const std::size_t k = pick_odd(rng, {1, 3});
                   const std::size_t c = pick(rng, 1, 3);
                   const std::size_t g = pick(rng, 1, 5);
                   const std::size_t h = pick(rng, 1, 5), w = pick(rng, 1, 5);
                   params = {{"input", rand_t({1, h, w, c}, rng)}, {"kernels", rand_t({k, k, c, g}, rng)}};
                   auto weights = std::make_shared<TensorD>(rand_t({1, h, w, c * g}, rng));
                   gradcheck::ForwardFn fwd = [weights, k](const NamedTensors& p) {
                     return gradcheck::scalarize(grouped_conv2d(p[0].second, p[1].second, k / 2), *weights);
                   };
                   gradcheck::BackwardFn bwd = [weights, k](const NamedTensors& p) {
                     auto gr = grouped_conv2d_backward(p[0].second, p[1].second, *weights, k / 2);
                     return NamedTensors{{"input", gr.input}, {"kernels", gr.kernel}};
                   };
                   return std::make_pair(fwd, bwd);
                 }});
  ops.push_back({"deformed_two_path", [](Rng& rng, NamedTensors& params) {
                   const std::size_t k = pick_odd(rng, {1, 3});
                   const std::size_t c = pick(rng, 1, 3);
                   const std::size_t h = pick(rng, 1, 5), w = pick(rng, 1, 5);
                   const auto base = init_deformed<double>(k, c, rng(), 0.5);
                   params = {{"input", rand_t({1, h, w, c}, rng)}, {"learnable", base.learnable}};
                   auto weights = std::make_shared<TensorD>(rand_t({1, h, w, c * k * k}, rng));
                   auto fixed = std::make_shared<ShiftKernelBank<double>>(base.fixed_bank);
                   gradcheck::ForwardFn fwd = [weights, fixed](const NamedTensors& p) {
                     return gradcheck::scalarize(forward_two_path(p[0].second, deformed_from_parts(*fixed, p[1].second)),
                                                 *weights);
                   };
                   gradcheck::BackwardFn bwd = [weights, fixed](const NamedTensors& p) {
                     auto g = forward_two_path_backward(p[0].second, deformed_from_parts(*fixed, p[1].second), *weights);
                     return NamedTensors{{"input", g.input}, {"learnable", g.learnable}};
                   };
                   return std::make_pair(fwd, bwd);
                 }});
  for (const bool deformed : {false, true}) {
    ops.push_back({deformed ? "slide_attention_deformed" : "slide_attention", [deformed](Rng& rng, NamedTensors& params) {
                     const std::size_t heads = pick(rng, 1, 2);
                     const std::size_t hd = pick(rng, 1, 2);
                     const std::size_t k = pick_odd(rng, {1, 3});
                     const std::size_t h = pick(rng, 1, 4), w = pick(rng, 1, 4);
                     const bool mask = pick(rng, 0, 1) == 1;
                     const auto cfg = AttentionConfig::make(heads * hd, heads, k, mask, deformed);
                     auto base = std::make_shared<AttentionParams<double>>(init_attention_params<double>(cfg, rng()));
                     // Larger weights than the default init so softmax is far from uniform.
                     for (TensorD* wt : {&base->w_q, &base->w_k, &base->w_v, &base->w_o}) *wt = rand_t(wt->shape(), rng);
                     params = {{"x", rand_t({1, h, w, heads * hd}, rng)},
                               {"w_q", base->w_q},
                               {"w_k", base->w_k},
                               {"w_v", base->w_v},
                               {"w_o", base->w_o}};
                     if (deformed) {
                       base->deformed_k.learnable = rand_t(base->deformed_k.learnable.shape(), rng);
                       base->deformed_v.learnable = rand_t(base->deformed_v.learnable.shape(), rng);
                       params.push_back({"deformed_k", base->deformed_k.learnable});
                       params.push_back({"deformed_v", base->deformed_v.learnable});
                     }
                     auto weights = std::make_shared<TensorD>(rand_t({1, h, w, heads * hd}, rng));
                     auto unpack = [base, deformed](const NamedTensors& p) {
                       AttentionParams<double> ap = *base;
                       ap.w_q = p[1].second;
                       ap.w_k = p[2].second;
                       ap.w_v = p[3].second;
                       ap.w_o = p[4].second;
                       if (deformed) {
                         ap.deformed_k.learnable = p[5].second;
                         ap.deformed_v.learnable = p[6].second;
                       }
                       return ap;
                     };
                     gradcheck::ForwardFn fwd = [=](const NamedTensors& p) {
                       return gradcheck::scalarize(slide_attention_forward(p[0].second, cfg, unpack(p)), *weights);
                     };
                     gradcheck::BackwardFn bwd = [=](const NamedTensors& p) {
                       auto g = slide_attention_backward(p[0].second, cfg, unpack(p), *weights);
                       NamedTensors out{{"x", g.x}, {"w_q", g.w_q}, {"w_k", g.w_k}, {"w_v", g.w_v}, {"w_o", g.w_o}};
                       if (g.deformed_k) out.push_back({"deformed_k", *g.deformed_k});
                       if (g.deformed_v) out.push_back({"deformed_v", *g.deformed_v});
                       return out;
                     };
                     return std::make_pair(fwd, bwd);
                   }});
  }
  return ops;
}

}  // namespace

CriterionResult gradient_checks(std::size_t seeds, std::uint64_t seed, std::vector<GradReport>* reports) {
  Stopwatch sw;
  const auto ops = gradient_ops();
  CriterionResult r{5, "gradient checks", false, seeds * ops.size(), {}, 0.0};
  std::string failure;
  double worst = 0.0;
  for (std::size_t oi = 0; oi < ops.size() && failure.empty(); ++oi) {
    for (std::size_t s = 0; s < seeds && failure.empty(); ++s) {
      Rng rng(seed * 1000003ULL + oi * 7919ULL + s);
      NamedTensors params;
      auto [fwd, bwd] = ops[oi].make(rng, params);
      const auto reps = gradcheck::check_gradients(fwd, bwd, params);
      for (const auto& rep : reps) {
        worst = std::max(worst, rep.max_rel_error);
        if (!rep.passed) {
          failure = ops[oi].name + " seed " + std::to_string(s) + ": " + rep.parameter_name + " rel error " +
                    std::to_string(rep.max_rel_error);
        }
      }
      if (reports != nullptr && s + 1 == seeds) {
        for (auto rep : reps) {
          rep.parameter_name = ops[oi].name + "." + rep.parameter_name;
          reports->push_back(rep);
        }
      }
    }
    if (!failure.empty()) break;
    // Negative control: a 1% error in the analytic gradient must be caught.
    Rng rng(seed + 99 + oi);
    NamedTensors params;
    auto [fwd, bwd] = ops[oi].make(rng, params);
    auto perturbed = [bwd = bwd](const NamedTensors& p) {
      NamedTensors g = bwd(p);
      for (auto& [name, t] : g)
        for (auto& v : t.data()) v *= 1.01;
      return g;
    };
    if (gradcheck::all_passed(gradcheck::check_gradients(fwd, perturbed, params))) {
      failure = ops[oi].name + ": 1% perturbed gradient was not detected";
    }
  }
  std::ostringstream os;
  os << ops.size() << " ops x " << seeds << " seeds, worst rel error " << std::scientific << std::setprecision(2)
     << worst << " (tol 1e-4, eps 1e-5); negative controls detected";
  r.detail = os.str();
  return finish(r, sw, failure);
}

CriterionResult translation_equivariance(std::size_t cases, std::uint64_t seed) {
  Stopwatch sw;
  CriterionResult r{6, "translation equivariance", false, cases, {}, 0.0};
  Rng rng(seed);
  std::string failure;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < cases && failure.empty(); ++i) {
    const std::size_t k = pick_odd(rng, {1, 3, 5});
    const int s = static_cast<int>(pick(rng, 0, 4)) - 2;
    const int t = static_cast<int>(pick(rng, 0, 4)) - 2;
    const std::size_t margin = k / 2 + static_cast<std::size_t>(std::max(std::abs(s), std::abs(t)));
    const std::size_t h = 2 * margin + pick(rng, 1, 4);
    const std::size_t w = 2 * margin + pick(rng, 1, 4);
    const std::size_t heads = pick(rng, 1, 2);
    const auto cfg = AttentionConfig::make(heads * pick(rng, 1, 3), heads, k, pick(rng, 0, 1) == 1, false);
    const auto p = init_attention_params<double>(cfg, rng());
    const TensorD x = random_uniform<double>(Shape{1, h, w, cfg.embed_dim}, rng);
    const TensorD lhs = slide_attention_forward(shift_feature(x, s, t), cfg, p);
    const TensorD rhs = shift_feature(slide_attention_forward(x, cfg, p), s, t);
    for (std::size_t y = margin; y + margin < h && failure.empty(); ++y) {
      for (std::size_t xx = margin; xx + margin < w; ++xx) {
        for (std::size_t c = 0; c < cfg.embed_dim; ++c) {
          ++checked;
          if (lhs.at(0, y, xx, c) != rhs.at(0, y, xx, c)) {
            failure = "case " + std::to_string(i) + " differs at (" + std::to_string(y) + "," + std::to_string(xx) + ")";
            break;
          }
        }
        if (!failure.empty()) break;
      }
    }
  }
  r.detail = std::to_string(checked) + " interior elements compared exactly";
  return finish(r, sw, failure);
}

CriterionResult efficiency_ordering(const bench::BenchConfig& cfg) {
  Stopwatch sw;
  CriterionResult r{7, "efficiency ordering", false, cfg.sizes.size() * cfg.window_sizes.size(), {}, 0.0};
  const auto report = bench::run_bench(cfg);
  const auto order = bench::ordering_violations(report, Implementation::im2col, Implementation::dwconv_fused);
  const auto sums = bench::checksum_disagreements(report);
  // Slowest-to-fastest ratio per cell; the narrowest margin is the one to watch.
  double worst = std::numeric_limits<double>::infinity();
  std::string worst_cell;
  for (const auto& slow : report.rows) {
    if (slow.impl != Implementation::im2col) continue;
    for (const auto& fast : report.rows) {
      if (fast.impl != Implementation::dwconv_fused || fast.h != slow.h || fast.w != slow.w || fast.c != slow.c ||
          fast.k != slow.k)
        continue;
      const double ratio = slow.median_ns / fast.median_ns;
      if (ratio < worst) {
        worst = ratio;
        worst_cell = std::to_string(slow.h) + "x" + std::to_string(slow.w) + "x" + std::to_string(slow.c) +
                     " k=" + std::to_string(slow.k);
      }
    }
  }
  std::ostringstream os;
  os << "im2col/dwconv_fused median ratio >= " << std::fixed << std::setprecision(2) << worst << " (" << worst_cell
     << "), checksums agree";
  r.detail = os.str();
  std::string failure;
  if (!order.empty()) failure = "ordering: " + order.front();
  else if (!sums.empty()) failure = "checksum: " + sums.front();
  return finish(r, sw, failure.empty() ? failure : failure + " | " + r.detail);
}

Fig2Demo make_fig2_demo() {
  Fig2Demo d;
  d.feature = TensorD(Shape{1, 2, 2, 1}, {1, 2, 3, 4});
  d.padded = pad_zero(d.feature, 1, 1);
  d.keys = im2col(d.feature, 3);
  for (std::size_t g = 0; g < 9; ++g) {
    const Offset o = direction_offset(g, 3);
    d.shifted.push_back(shift_feature(d.feature, o.u, o.v));
  }
  return d;
}

namespace {

void print_map(std::ostringstream& os, const TensorD& t, const std::string& indent) {
  const Nhwc d = t.dims4();
  for (std::size_t i = 0; i < d.h; ++i) {
    os << indent;
    for (std::size_t j = 0; j < d.w; ++j) os << std::setw(3) << t.at(0, i, j, 0);
    os << '\n';
  }
}

}  // namespace

std::string render_fig2_demo(const Fig2Demo& demo) {
  std::ostringstream os;
  const auto& m = demo.keys;
  os << "Feature map (2x2, one channel):\n";
  print_map(os, demo.feature, "  ");
  os << "With [1,1] zero padding:\n";
  print_map(os, demo.padded, "  ");
  os << "\nKey matrix from im2col, k=3 (" << m.rows() << " rows = shift directions (u,v), " << m.cols()
     << " columns = queries (i,j)):\n";
  os << "  (u,v)  ";
  for (std::size_t i = 0; i < m.height; ++i)
    for (std::size_t j = 0; j < m.width; ++j) os << " (" << i << ',' << j << ')';
  os << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const Offset o = direction_offset(r, m.k);
    os << "  (" << std::setw(2) << o.u << ',' << std::setw(2) << o.v << ")";
    for (std::size_t q = 0; q < m.cols(); ++q) os << std::setw(6) << m.entry(r, q)[0];
    os << '\n';
  }
  os << "\nRow view: row (u,v) is the map shifted by (u,v):\n";
  for (std::size_t r = 0; r < demo.shifted.size(); ++r) {
    const Offset o = direction_offset(r, 3);
    const auto& s = demo.shifted[r];
    os << "  (" << std::setw(2) << o.u << ',' << std::setw(2) << o.v << ") -> [[" << s[0] << ' ' << s[1] << "] ["
       << s[2] << ' ' << s[3] << "]]\n";
  }
  os << "\nColumn view: column (i,j) is the 3x3 window around query (i,j):\n";
  for (std::size_t i = 0; i < m.height; ++i) {
    for (std::size_t j = 0; j < m.width; ++j) {
      const TensorD win = column_window(m, i, j);
      os << "  query (" << i << ',' << j << "):";
      for (std::size_t p = 0; p < 3; ++p) {
        os << " [";
        for (std::size_t q = 0; q < 3; ++q) os << (q ? " " : "") << win[p * 3 + q];
        os << ']';
      }
      os << '\n';
    }
  }
  return os.str();
}

CriterionResult demo_structure() {
  Stopwatch sw;
  CriterionResult r{8, "demo structure", false, 1, {}, 0.0};
  const Fig2Demo d = make_fig2_demo();
  std::string failure;
  if (d.keys.rows() != 9 || d.keys.cols() != 4) failure = "key matrix is not 9x4";
  for (std::size_t g = 0; g < 9 && failure.empty(); ++g) {
    if (!(row_as_feature(d.keys, g) == d.shifted[g])) failure = "row " + std::to_string(g) + " is not the shifted map";
  }
  for (std::size_t i = 0; i < 2 && failure.empty(); ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      const TensorD win = column_window(d.keys, i, j);
      for (std::size_t p = 0; p < 3; ++p)
        for (std::size_t q = 0; q < 3; ++q)
          if (win[p * 3 + q] != d.padded.at(0, i + p, j + q, 0)) failure = "column window mismatch";
    }
  }
  const std::string text = render_fig2_demo(d);
  if (failure.empty() && text.find("9 rows") == std::string::npos) failure = "rendered demo lacks the key matrix";
  r.detail = "9 rows = shifted maps, 4 columns = padded windows";
  return finish(r, sw, failure);
}

std::vector<CriterionResult> run_suite(bool include_bench, std::vector<GradReport>* reports) {
  std::vector<CriterionResult> out;
  out.push_back(im2col_equivalence());
  out.push_back(shift_kernel_identity());
  out.push_back(attention_oracle());
  out.push_back(reparam_exactness());
  out.push_back(gradient_checks(20, 5, reports));
  out.push_back(translation_equivariance());
  if (include_bench) out.push_back(efficiency_ordering());
  out.push_back(demo_structure());
  return out;
}

}  // namespace slide::verify
