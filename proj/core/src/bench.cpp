#include "slide/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "slide/ops.hpp"
#include "slide/random.hpp"

#ifndef SLIDE_BUILD_PROFILE
#define SLIDE_BUILD_PROFILE "unknown"
#endif

namespace slide::bench {

using ojson = nlohmann::ordered_json;

std::string_view to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

std::optional<DType> parse_dtype(std::string_view name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  return std::nullopt;
}

std::optional<Format> parse_format(std::string_view name) {
  if (name == "json") return Format::json;
  if (name == "csv") return Format::csv;
  return std::nullopt;
}

std::optional<MapSize> parse_map_size(std::string_view text) {
  std::size_t vals[3] = {0, 0, 0};
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int i = 0; i < 3; ++i) {
    auto [next, ec] = std::from_chars(p, end, vals[i]);
    if (ec != std::errc{} || next == p) return std::nullopt;
    p = next;
    if (i < 2) {
      if (p == end || (*p != 'x' && *p != 'X')) return std::nullopt;
      ++p;
    }
  }
  if (p != end) return std::nullopt;
  return MapSize{vals[0], vals[1], vals[2]};
}

std::string to_string(const MapSize& s) {
  return std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c);
}

void BenchConfig::validate() const {
  if (implementations.empty()) throw ConfigError("implementations: at least one implementation is required");
  if (sizes.empty()) throw ConfigError("sizes: at least one HxWxC size is required");
  if (window_sizes.empty()) throw ConfigError("window_sizes: at least one window size is required");
  if (repeats < 3) throw ConfigError("repeats: must be >= 3, got " + std::to_string(repeats));
  if (warmup < 1) throw ConfigError("warmup: must be >= 1, got " + std::to_string(warmup));
  if (heads == 0) throw ConfigError("heads: must be positive");
  for (const auto k : window_sizes) {
    if (k == 0 || k % 2 == 0) throw ConfigError("window_sizes: " + std::to_string(k) + " is not odd");
  }
  for (const auto& s : sizes) {
    if (s.h == 0 || s.w == 0 || s.c == 0) throw ConfigError("sizes: zero extent in " + to_string(s));
    if (s.c % heads != 0) {
      throw ConfigError("heads: " + std::to_string(heads) + " does not divide channels " + std::to_string(s.c));
    }
  }
}

BenchConfig default_sweep() { return BenchConfig{}; }

std::size_t thread_cap() {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SLIDE_ATTN_THREADS")) {
    std::size_t v = 0;
    const std::string_view s(env);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc{} && ptr == s.data() + s.size() && v > 0) return v;
  }
  return hw;
}

double percentile(std::vector<double> samples, double pct) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(samples.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, samples.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return samples[lo] + (samples[hi] - samples[lo]) * frac;
}

namespace {

struct Cell {
  MapSize size;
  std::size_t k;
};

template <typename T>
std::vector<BenchRow> time_cell(const BenchConfig& cfg, const Cell& cell, std::uint64_t cell_seed) {
  const auto acfg = AttentionConfig::make(cell.size.c, cfg.heads, cell.k, cfg.mask_padding, cfg.use_deformed);
  Rng rng(cell_seed);
  const Tensor<T> x = random_uniform<T>(Shape{1, cell.size.h, cell.size.w, cell.size.c}, rng);
  AttentionParams<T> params = init_attention_params<T>(acfg, rng());
  if (cfg.use_deformed) {
    params.deformed_k = reparameterize(params.deformed_k);
    params.deformed_v = reparameterize(params.deformed_v);
  }
  AttentionConfig fixed_cfg = acfg;
  fixed_cfg.use_deformed = false;

  const Qkv<T> qkv = project_qkv(x, params);

  const std::size_t n_impl = cfg.implementations.size();
  auto config_for = [&](Implementation impl) -> const AttentionConfig& {
    return impl == Implementation::dwconv_fused ? acfg : fixed_cfg;
  };
  std::vector<double> checksums(n_impl, 0.0);
  for (std::size_t i = 0; i < cfg.warmup; ++i)
    for (std::size_t m = 0; m < n_impl; ++m) {
      const Implementation impl = cfg.implementations[m];
      checksums[m] = sum(local_attention(impl, qkv, config_for(impl), params));
    }

  // Implementations take turns within each repeat, so slow drift in machine
  // speed lands on all of them alike instead of on whichever ran last.
  std::vector<std::vector<double>> samples(n_impl);
  for (auto& v : samples) v.reserve(cfg.repeats);
  for (std::size_t i = 0; i < cfg.repeats; ++i) {
    for (std::size_t m = 0; m < n_impl; ++m) {
      const Implementation impl = cfg.implementations[m];
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor<T> out = local_attention(impl, qkv, config_for(impl), params);
      const auto t1 = std::chrono::steady_clock::now();
      checksums[m] = sum(out);
      samples[m].push_back(static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
    }
  }

  std::vector<BenchRow> rows;
  for (std::size_t m = 0; m < n_impl; ++m) {
    BenchRow row;
    row.impl = cfg.implementations[m];
    row.h = cell.size.h;
    row.w = cell.size.w;
    row.c = cell.size.c;
    row.k = cell.k;
    row.heads = cfg.heads;
    row.dtype = cfg.dtype;
    row.median_ns = percentile(samples[m], 50.0);
    row.p10_ns = percentile(samples[m], 10.0);
    row.p90_ns = percentile(samples[m], 90.0);
    row.checksum = checksums[m];
    rows.push_back(row);
  }
  return rows;
}

std::uint64_t mix_seed(std::uint64_t seed, std::size_t cell_index) {
  // splitmix64 step so neighbouring cells get unrelated streams.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (cell_index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

BenchReport run_bench(const BenchConfig& cfg) {
  cfg.validate();
#if defined(__GLIBC__)
  // Keep large freed blocks in the heap. Otherwise every multi-megabyte
  // intermediate is a fresh mmap and the timings measure first-touch page
  // faults instead of the kernels.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  std::vector<Cell> cells;
  for (const auto& s : cfg.sizes)
    for (const auto k : cfg.window_sizes) cells.push_back({s, k});

  std::vector<std::vector<BenchRow>> results(cells.size());
  auto run_one = [&](std::size_t i) {
    const std::uint64_t seed = mix_seed(cfg.seed, i);
    results[i] = cfg.dtype == DType::f32 ? time_cell<float>(cfg, cells[i], seed) : time_cell<double>(cfg, cells[i], seed);
  };

  const std::size_t workers = cfg.parallel ? std::min(thread_cap(), cells.size()) : 1;
  if (workers <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_one(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < cells.size(); i += workers) run_one(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  BenchReport report;
  report.config = cfg;
  report.environment.dtype = std::string(to_string(cfg.dtype));
  report.environment.build_profile = SLIDE_BUILD_PROFILE;
#if defined(__VERSION__)
  report.environment.compiler = __VERSION__;
#endif
  report.environment.threads = workers;
  for (auto& rows : results) report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  return report;
}

namespace {

std::string format_number(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

ojson config_json(const BenchConfig& cfg) {
  ojson j;
  ojson impls = ojson::array();
  for (auto impl : cfg.implementations) impls.push_back(std::string(to_string(impl)));
  j["implementations"] = impls;
  ojson sizes = ojson::array();
  for (const auto& s : cfg.sizes) sizes.push_back(to_string(s));
  j["sizes"] = sizes;
  j["window_sizes"] = cfg.window_sizes;
  j["heads"] = cfg.heads;
  j["repeats"] = cfg.repeats;
  j["warmup"] = cfg.warmup;
  j["dtype"] = std::string(to_string(cfg.dtype));
  j["seed"] = cfg.seed;
  j["mask_padding"] = cfg.mask_padding;
  j["use_deformed"] = cfg.use_deformed;
  j["parallel"] = cfg.parallel;
  return j;
}

void overlay_config(BenchConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("bench config must be a JSON object");
  if (j.contains("implementations")) {
    cfg.implementations.clear();
    for (const auto& name : j.at("implementations")) {
      const auto impl = parse_implementation(name.get<std::string>());
      if (!impl) throw ConfigError("implementations: unknown implementation '" + name.get<std::string>() + "'");
      cfg.implementations.push_back(*impl);
    }
  }
  if (j.contains("sizes")) {
    cfg.sizes.clear();
    for (const auto& s : j.at("sizes")) {
      if (s.is_string()) {
        const auto ms = parse_map_size(s.get<std::string>());
        if (!ms) throw ConfigError("sizes: cannot parse '" + s.get<std::string>() + "' as HxWxC");
        cfg.sizes.push_back(*ms);
      } else if (s.is_array() && s.size() == 3) {
        cfg.sizes.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>(), s[2].get<std::size_t>()});
      } else {
        throw ConfigError("sizes: entries must be \"HxWxC\" strings or [H,W,C] arrays");
      }
    }
  }
  // Separate lists: heights and widths pair up, channels cross with each pair.
  if (j.contains("heights") || j.contains("widths") || j.contains("channels")) {
    if (j.contains("sizes")) throw ConfigError("sizes: give either sizes or heights/widths/channels, not both");
    if (!j.contains("heights") || !j.contains("channels")) {
      throw ConfigError("heights: heights and channels are both required when sizes is absent");
    }
    const auto hs = j.at("heights").get<std::vector<std::size_t>>();
    const auto ws = j.contains("widths") ? j.at("widths").get<std::vector<std::size_t>>() : hs;
    const auto cs = j.at("channels").get<std::vector<std::size_t>>();
    if (ws.size() != hs.size()) throw ConfigError("widths: must have as many entries as heights");
    cfg.sizes.clear();
    for (std::size_t i = 0; i < hs.size(); ++i)
      for (std::size_t c : cs) cfg.sizes.push_back({hs[i], ws[i], c});
  }
  if (j.contains("window_sizes")) cfg.window_sizes = j.at("window_sizes").get<std::vector<std::size_t>>();
  if (j.contains("heads")) cfg.heads = j.at("heads").get<std::size_t>();
  if (j.contains("repeats")) cfg.repeats = j.at("repeats").get<std::size_t>();
  if (j.contains("warmup")) cfg.warmup = j.at("warmup").get<std::size_t>();
  if (j.contains("dtype")) {
    const auto dt = parse_dtype(j.at("dtype").get<std::string>());
    if (!dt) throw ConfigError("dtype: must be f32 or f64");
    cfg.dtype = *dt;
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("mask_padding")) cfg.mask_padding = j.at("mask_padding").get<bool>();
  if (j.contains("use_deformed")) cfg.use_deformed = j.at("use_deformed").get<bool>();
  if (j.contains("parallel")) cfg.parallel = j.at("parallel").get<bool>();
}

}  // namespace

std::string report_to_csv(const BenchReport& r) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& row : r.rows) {
    os << to_string(row.impl) << ',' << row.h << ',' << row.w << ',' << row.c << ',' << row.k << ',' << row.heads
       << ',' << to_string(row.dtype) << ',' << format_number(row.median_ns) << ',' << format_number(row.p10_ns)
       << ',' << format_number(row.p90_ns) << ',' << format_number(row.checksum) << '\n';
  }
  return os.str();
}

std::string report_to_json(const BenchReport& r) {
  ojson j;
  j["config"] = config_json(r.config);
  ojson env;
  env["dtype"] = r.environment.dtype;
  env["build_profile"] = r.environment.build_profile;
  env["compiler"] = r.environment.compiler;
  env["threads"] = r.environment.threads;
  j["environment"] = env;
  ojson rows = ojson::array();
  for (const auto& row : r.rows) {
    ojson o;
    o["impl"] = std::string(to_string(row.impl));
    o["H"] = row.h;
    o["W"] = row.w;
    o["C"] = row.c;
    o["k"] = row.k;
    o["heads"] = row.heads;
    o["dtype"] = std::string(to_string(row.dtype));
    o["median_ns"] = row.median_ns;
    o["p10_ns"] = row.p10_ns;
    o["p90_ns"] = row.p90_ns;
    o["checksum"] = row.checksum;
    rows.push_back(std::move(o));
  }
  j["rows"] = rows;
  return j.dump(2);
}

BenchReport report_from_json(const std::string& text) {
  BenchReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    overlay_config(r.config, j.at("config"));
    const auto& env = j.at("environment");
    r.environment.dtype = env.at("dtype").get<std::string>();
    r.environment.build_profile = env.at("build_profile").get<std::string>();
    r.environment.compiler = env.at("compiler").get<std::string>();
    r.environment.threads = env.at("threads").get<std::size_t>();
    for (const auto& o : j.at("rows")) {
      BenchRow row;
      const auto impl = parse_implementation(o.at("impl").get<std::string>());
      const auto dt = parse_dtype(o.at("dtype").get<std::string>());
      if (!impl || !dt) throw ConfigError("bench report row has unknown impl or dtype");
      row.impl = *impl;
      row.dtype = *dt;
      row.h = o.at("H").get<std::size_t>();
      row.w = o.at("W").get<std::size_t>();
      row.c = o.at("C").get<std::size_t>();
      row.k = o.at("k").get<std::size_t>();
      row.heads = o.at("heads").get<std::size_t>();
      row.median_ns = o.at("median_ns").get<double>();
      row.p10_ns = o.at("p10_ns").get<double>();
      row.p90_ns = o.at("p90_ns").get<double>();
      row.checksum = o.at("checksum").get<double>();
      r.rows.push_back(row);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed bench report JSON: ") + e.what());
  }
  return r;
}

void emit_report(const BenchReport& r, Format format, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << (format == Format::csv ? report_to_csv(r) : report_to_json(r) + "\n");
  out.flush();
  if (!out) throw IoError("failed writing report to '" + path + "'");
}

void apply_json_config(BenchConfig& cfg, const std::string& text) {
  try {
    overlay_config(cfg, nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed bench config JSON: ") + e.what());
  }
}

std::string config_to_json(const BenchConfig& cfg) { return config_json(cfg).dump(2); }

namespace {

using CellKey = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>;

std::string describe(const CellKey& key) {
  const auto [h, w, c, k] = key;
  return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c) + " k=" + std::to_string(k);
}

std::map<CellKey, std::vector<const BenchRow*>> group_cells(const BenchReport& r) {
  std::map<CellKey, std::vector<const BenchRow*>> cells;
  for (const auto& row : r.rows) cells[{row.h, row.w, row.c, row.k}].push_back(&row);
  return cells;
}

}  // namespace

std::vector<std::string> checksum_disagreements(const BenchReport& r, double rel_tol) {
  std::vector<std::string> bad;
  for (const auto& [key, rows] : group_cells(r)) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = i + 1; j < rows.size(); ++j) {
        const BenchRow* a = rows[i];
        const BenchRow* b = rows[j];
        const double denom = std::max({std::abs(a->checksum), std::abs(b->checksum), 1.0});
        if (std::abs(a->checksum - b->checksum) > rel_tol * denom) {
          bad.push_back(describe(key) + ": " + std::string(to_string(a->impl)) + "=" + format_number(a->checksum) +
                        " vs " + std::string(to_string(b->impl)) + "=" + format_number(b->checksum));
        }
      }
    }
  }
  return bad;
}

std::vector<std::string> ordering_violations(const BenchReport& r, Implementation slow, Implementation fast) {
  std::vector<std::string> bad;
  for (const auto& [key, rows] : group_cells(r)) {
    const BenchRow* s = nullptr;
    const BenchRow* f = nullptr;
    for (const BenchRow* row : rows) {
      if (row->impl == slow) s = row;
      if (row->impl == fast) f = row;
    }
    if (s == nullptr || f == nullptr) {
      bad.push_back(describe(key) + ": missing " + std::string(to_string(s == nullptr ? slow : fast)) + " row");
    } else if (!(f->median_ns < s->median_ns)) {
      bad.push_back(describe(key) + ": " + std::string(to_string(fast)) + " " + format_number(f->median_ns) +
                    " ns >= " + std::string(to_string(slow)) + " " + format_number(s->median_ns) + " ns");
    }
  }
  return bad;
}

std::size_t count_k_inversions(const BenchReport& r) {
  std::map<std::tuple<int, std::size_t, std::size_t, std::size_t>, std::map<std::size_t, double>> series;
  for (const auto& row : r.rows) series[{static_cast<int>(row.impl), row.h, row.w, row.c}][row.k] = row.median_ns;
  std::size_t inversions = 0;
  for (const auto& [key, by_k] : series) {
    double prev = -1.0;
    for (const auto& [k, t] : by_k) {
      if (prev >= 0.0 && t < prev) ++inversions;
      prev = t;
    }
  }
  return inversions;
}

}  // namespace slide::bench
