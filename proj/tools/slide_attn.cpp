// slide_attn: benchmark, verification and demo front-end for the local
// attention library.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slide/bench.hpp"
#include "slide/error.hpp"
#include "slide/gradcheck.hpp"
#include "slide/verify.hpp"

namespace {

using slide::bench::BenchConfig;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw slide::IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct BenchArgs {
  std::string config_path;
  std::vector<std::string> impls;
  std::vector<std::string> sizes;
  std::vector<std::size_t> window_sizes;
  std::size_t heads = 0;
  std::size_t repeats = 0;
  std::size_t warmup = 0;
  std::string dtype;
  std::uint64_t seed = 0;
  bool mask_padding = false;
  bool deformed = false;
  bool parallel = false;
  std::string out;
  std::string format = "csv";
};

BenchConfig build_config(const BenchArgs& a, const CLI::App& cmd) {
  BenchConfig cfg;
  if (!a.config_path.empty()) slide::bench::apply_json_config(cfg, read_file(a.config_path));
  if (cmd.count("--impls")) {
    cfg.implementations.clear();
    for (const auto& name : a.impls) {
      const auto impl = slide::parse_implementation(name);
      if (!impl) throw slide::ConfigError("implementations: unknown implementation '" + name + "'");
      cfg.implementations.push_back(*impl);
    }
  }
  if (cmd.count("--sizes")) {
    cfg.sizes.clear();
    for (const auto& s : a.sizes) {
      const auto ms = slide::bench::parse_map_size(s);
      if (!ms) throw slide::ConfigError("sizes: cannot parse '" + s + "' as HxWxC");
      cfg.sizes.push_back(*ms);
    }
  }
  if (cmd.count("--k")) cfg.window_sizes = a.window_sizes;
  if (cmd.count("--heads")) cfg.heads = a.heads;
  if (cmd.count("--repeats")) cfg.repeats = a.repeats;
  if (cmd.count("--warmup")) cfg.warmup = a.warmup;
  if (cmd.count("--dtype")) {
    const auto dt = slide::bench::parse_dtype(a.dtype);
    if (!dt) throw slide::ConfigError("dtype: must be f32 or f64, got '" + a.dtype + "'");
    cfg.dtype = *dt;
  }
  if (cmd.count("--seed")) cfg.seed = a.seed;
  if (cmd.count("--mask-padding")) cfg.mask_padding = a.mask_padding;
  if (cmd.count("--deformed")) cfg.use_deformed = a.deformed;
  if (cmd.count("--parallel")) cfg.parallel = a.parallel;
  return cfg;
}

void print_table(const slide::bench::BenchReport& r) {
  std::cout << std::left << std::setw(14) << "impl" << std::setw(12) << "HxWxC" << std::setw(4) << "k" << std::right
            << std::setw(14) << "median_ms" << std::setw(12) << "p10_ms" << std::setw(12) << "p90_ms" << std::setw(20)
            << "checksum" << '\n';
  for (const auto& row : r.rows) {
    std::ostringstream size;
    size << row.h << 'x' << row.w << 'x' << row.c;
    std::cout << std::left << std::setw(14) << slide::to_string(row.impl) << std::setw(12) << size.str() << std::setw(4)
              << row.k << std::right << std::fixed << std::setprecision(3) << std::setw(14) << row.median_ns / 1e6
              << std::setw(12) << row.p10_ns / 1e6 << std::setw(12) << row.p90_ns / 1e6 << std::setprecision(6)
              << std::setw(20) << row.checksum << '\n';
  }
  std::cout.unsetf(std::ios::fixed);
}

int run_bench_cmd(const BenchArgs& a, const CLI::App& cmd) {
  const BenchConfig cfg = build_config(a, cmd);
  const auto fmt = slide::bench::parse_format(a.format);
  if (!fmt) throw slide::ConfigError("format: must be json or csv, got '" + a.format + "'");
  const auto report = slide::bench::run_bench(cfg);
  // An explicit --format with no --out sends the report itself to stdout.
  const bool report_to_stdout = a.out.empty() && cmd.count("--format") > 0;
  if (report_to_stdout) {
    std::cout << (*fmt == slide::bench::Format::csv ? slide::bench::report_to_csv(report)
                                                    : slide::bench::report_to_json(report) + "\n");
  } else {
    print_table(report);
  }
  for (const auto& msg : slide::bench::checksum_disagreements(report)) {
    if (!cfg.use_deformed) std::cerr << "warning: checksum disagreement " << msg << '\n';
  }
  if (!a.out.empty()) {
    slide::bench::emit_report(report, *fmt, a.out);
    std::cout << "wrote " << a.out << '\n';
  }
  return 0;
}

int run_verify_cmd(bool with_bench, const std::string& reports_path) {
  std::vector<slide::gradcheck::GradReport> reports;
  const auto results = slide::verify::run_suite(with_bench, &reports);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << slide::verify::format_line(r) << '\n';
    ok = ok && r.passed;
  }
  if (!reports_path.empty()) {
    std::ofstream out(reports_path);
    if (!out) throw slide::IoError("cannot open '" + reports_path + "' for writing");
    out << slide::gradcheck::reports_to_json(reports) << '\n';
  }
  std::cout << (ok ? "verify: all checks passed" : "verify: FAILED") << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local self-attention via Im2Col, feature shifts and depthwise convolution"};
  app.require_subcommand(1);

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Time the local-attention implementations");
  bench->add_option("--config", bench_args.config_path, "JSON BenchConfig file; flags override its values");
  bench->add_option("--impls", bench_args.impls, "Implementations: im2col, shift, dwconv_fused")->delimiter(',');
  bench->add_option("--sizes", bench_args.sizes, "Map sizes as HxWxC triples")->delimiter(',');
  bench->add_option("--k", bench_args.window_sizes, "Odd window sizes")->delimiter(',');
  bench->add_option("--heads", bench_args.heads, "Attention heads");
  bench->add_option("--repeats", bench_args.repeats, "Timed repetitions per cell (>= 3)");
  bench->add_option("--warmup", bench_args.warmup, "Untimed warmup runs per cell (>= 1)");
  bench->add_option("--dtype", bench_args.dtype, "f32 or f64");
  bench->add_option("--seed", bench_args.seed, "Input/parameter seed");
  bench->add_flag("--mask-padding,!--no-mask-padding", bench_args.mask_padding, "Exclude padded keys from softmax");
  bench->add_flag("--deformed,!--no-deformed", bench_args.deformed, "Use the reparameterized deformed module");
  bench->add_flag("--parallel", bench_args.parallel, "Run cells concurrently (SLIDE_ATTN_THREADS caps threads)");
  bench->add_option("--out", bench_args.out, "Report output path");
  bench->add_option("--format", bench_args.format, "Report format: json or csv");

  bool verify_with_bench = false;
  std::string reports_path;
  auto* verify = app.add_subcommand("verify", "Run the equivalence and gradient suite");
  verify->add_flag("--with-bench", verify_with_bench, "Also run the efficiency-ordering sweep");
  verify->add_option("--grad-reports", reports_path, "Write gradient reports as JSON");

  app.add_subcommand("demo", "Print the 2x2 / k=3 Im2Col worked example");

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench->parsed()) return run_bench_cmd(bench_args, *bench);
    if (verify->parsed()) return run_verify_cmd(verify_with_bench, reports_path);
    std::cout << slide::verify::render_fig2_demo(slide::verify::make_fig2_demo());
    return 0;
  } catch (const slide::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
