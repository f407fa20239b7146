#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slide/attention.hpp"

namespace slide::bench {

enum class DType { f32, f64 };
enum class Format { json, csv };

std::string_view to_string(DType dtype);
std::optional<DType> parse_dtype(std::string_view name);
std::optional<Format> parse_format(std::string_view name);

/// One feature-map geometry: height x width x channels.
struct MapSize {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;

  friend bool operator==(const MapSize&, const MapSize&) = default;
};

/// Parses "HxWxC", e.g. "56x56x96".
std::optional<MapSize> parse_map_size(std::string_view text);
std::string to_string(const MapSize& s);

struct BenchConfig {
  std::vector<Implementation> implementations{Implementation::im2col, Implementation::shift,
                                              Implementation::dwconv_fused};
  std::vector<MapSize> sizes{{28, 28, 64}, {28, 28, 96}, {56, 56, 64}, {56, 56, 96}};
  std::vector<std::size_t> window_sizes{3, 5, 7};
  std::size_t heads = 2;
  std::size_t repeats = 15;
  std::size_t warmup = 2;
  DType dtype = DType::f32;
  std::uint64_t seed = 0;
  bool mask_padding = false;
  bool use_deformed = false;
  /// Runs cells concurrently (capped by thread_cap()); voids the
  /// monotone-in-k check since cells then compete for cores.
  bool parallel = false;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  friend bool operator==(const BenchConfig&, const BenchConfig&) = default;
};

/// The sweep used for the efficiency-ordering check:
/// H = W in {28, 56}, C in {64, 96}, k in {3, 5, 7}, f32.
BenchConfig default_sweep();

struct BenchRow {
  Implementation impl = Implementation::dwconv_fused;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;
  std::size_t k = 0;
  std::size_t heads = 0;
  DType dtype = DType::f32;
  double median_ns = 0.0;
  double p10_ns = 0.0;
  double p90_ns = 0.0;
  double checksum = 0.0;

  friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

struct BenchEnvironment {
  std::string dtype;
  std::string build_profile;
  std::string compiler;
  std::size_t threads = 1;

  friend bool operator==(const BenchEnvironment&, const BenchEnvironment&) = default;
};

struct BenchReport {
  BenchConfig config;
  BenchEnvironment environment;
  std::vector<BenchRow> rows;

  friend bool operator==(const BenchReport&, const BenchReport&) = default;
};

/// Thread cap from SLIDE_ATTN_THREADS; defaults to the hardware concurrency.
std::size_t thread_cap();

/// Times every (size, k, implementation) cell. Inputs are generated from
/// cfg.seed; warmup runs are discarded; statistics are over cfg.repeats runs.
/// With use_deformed, dwconv_fused runs the reparameterized deformed module
/// while im2col and shift run the fixed-window attention they implement.
BenchReport run_bench(const BenchConfig& cfg);

/// Linear-interpolated percentile (0..100) of unsorted samples.
double percentile(std::vector<double> samples, double pct);

inline constexpr std::string_view kCsvHeader = "impl,H,W,C,k,heads,dtype,median_ns,p10_ns,p90_ns,checksum";

std::string report_to_csv(const BenchReport& r);
std::string report_to_json(const BenchReport& r);
BenchReport report_from_json(const std::string& text);

/// Writes the report; throws IoError naming the path on failure.
void emit_report(const BenchReport& r, Format format, const std::string& path);

/// Overlays fields present in a JSON config onto cfg. Accepts "sizes" as
/// "HxWxC" strings or [H,W,C] arrays.
void apply_json_config(BenchConfig& cfg, const std::string& text);
std::string config_to_json(const BenchConfig& cfg);

/// Cells whose checksums differ by more than rel_tol (relative to the larger
/// magnitude, floored at 1). Returns human-readable descriptions.
std::vector<std::string> checksum_disagreements(const BenchReport& r, double rel_tol = 1e-3);

/// Cells where `fast` is not strictly faster (median) than `slow`.
std::vector<std::string> ordering_violations(const BenchReport& r, Implementation slow, Implementation fast);

/// Number of adjacent window sizes (per implementation and map size) where
/// the median time decreases as k grows.
std::size_t count_k_inversions(const BenchReport& r);

}  // namespace slide::bench
