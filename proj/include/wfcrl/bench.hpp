#pragma once

// Timing and quality benchmark over methods x biomes x square grid sizes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wfcrl/baselines.hpp"
#include "wfcrl/engine.hpp"
#include "wfcrl/metrics.hpp"
#include "wfcrl/rl/artifact.hpp"
#include "wfcrl/rl/trainer.hpp"

namespace wfcrl {

enum class BenchMethod : std::uint8_t { Wfc, WfcRl, Perlin, Ca };

constexpr std::string_view to_string(BenchMethod m) noexcept {
  switch (m) {
    case BenchMethod::Wfc: return "wfc";
    case BenchMethod::WfcRl: return "wfc_rl";
    case BenchMethod::Perlin: return "perlin";
    case BenchMethod::Ca: return "ca";
  }
  return "?";
}

inline std::optional<BenchMethod> parse_bench_method(std::string_view s) {
  if (s == "wfc") return BenchMethod::Wfc;
  if (s == "wfc_rl") return BenchMethod::WfcRl;
  if (s == "perlin") return BenchMethod::Perlin;
  if (s == "ca") return BenchMethod::Ca;
  return std::nullopt;
}

struct BenchConfig {
  std::vector<BenchMethod> methods{BenchMethod::Wfc, BenchMethod::WfcRl, BenchMethod::Perlin, BenchMethod::Ca};
  std::vector<int> sizes{5, 10, 15};
  std::vector<Biome> biomes{Biome::City, Biome::Desert, Biome::Forest};
  int trials = 10;
  std::uint64_t seed_base = 0;
  PerlinConfig perlin;
  CellularAutomataConfig ca;

  [[nodiscard]] std::optional<std::string> invalid_reason() const {
    if (methods.empty() || sizes.empty() || biomes.empty()) return "methods, sizes and biomes must be non-empty";
    if (trials < 1) return "trials must be at least 1";
    for (int s : sizes)
      if (s < 1 || s > kMaxGridSide) return "grid sizes must lie in [1, 15]";
    return std::nullopt;
  }
};

struct BenchRow {
  BenchMethod method = BenchMethod::Wfc;
  Biome biome = Biome::City;
  int grid_size = 0;
  double time_mean_s = 0.0;
  double time_stddev_s = 0.0;
  double steps_mean = 0.0;
  double backtracks_mean = 0.0;
  double step_latency_p95_ms = 0.0;
  double coherence_mean = 0.0;
  double path_components_mean = 0.0;
  double impassable_fraction_mean = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<std::string> notices;  // skipped cells, one line each
};

inline constexpr const char* kBenchCsvHeader =
    "method,biome,grid_size,time_mean_s,time_stddev_s,steps_mean,backtracks_mean,step_latency_p95_ms,"
    "coherence_mean,path_components_mean,impassable_fraction_mean";

/// Nearest-rank percentile; 0 for an empty sample.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

inline std::string policy_file_name(Biome b, int size) {
  return std::string(to_string(b)) + "_" + std::to_string(size) + "x" + std::to_string(size) + ".wfcp";
}

/// `configs` maps each requested biome to its loaded tileset. wfc_rl looks
/// for `<policy_dir>/<biome>_<N>x<N>.wfcp`; a missing file skips that cell
/// with a notice.
inline BenchReport run_benchmark(const BenchConfig& bc, const std::map<Biome, BiomeConfig>& configs,
                                 const std::filesystem::path& policy_dir) {
  if (auto why = bc.invalid_reason()) throw std::invalid_argument("invalid benchmark configuration: " + *why);
  using clock = std::chrono::steady_clock;
  BenchReport report;
  for (BenchMethod method : bc.methods)
    for (Biome biome : bc.biomes) {
      auto cfg_it = configs.find(biome);
      if (cfg_it == configs.end()) throw std::invalid_argument("no tileset loaded for " + std::string(to_string(biome)));
      const BiomeConfig& config = cfg_it->second;
      for (int size : bc.sizes) {
        std::optional<rl::PolicyParams> policy;
        if (method == BenchMethod::WfcRl) {
          const auto path = policy_dir / policy_file_name(biome, size);
          if (!std::filesystem::exists(path)) {
            report.notices.push_back("notice: skipped wfc_rl " + std::string(to_string(biome)) + " " +
                                     std::to_string(size) + "x" + std::to_string(size) + ": no policy at " +
                                     path.string());
            continue;
          }
          try {
            policy = rl::load_policy(path.string());
          } catch (const std::exception& e) {
            report.notices.push_back("notice: skipped wfc_rl " + std::string(to_string(biome)) + " " +
                                     std::to_string(size) + "x" + std::to_string(size) + ": " + e.what());
            continue;
          }
        }
        auto run = [&](std::uint64_t seed) {
          switch (method) {
            case BenchMethod::Wfc: {
              GenerateOptions opt;
              opt.record_step_latency = true;
              return generate(config, size, size, seed, opt);
            }
            case BenchMethod::WfcRl: {
              GenerateOptions opt;
              opt.record_step_latency = true;
              return rl::generate(config, size, size, seed, &*policy, opt);
            }
            case BenchMethod::Perlin: {
              PerlinConfig pc = bc.perlin;
              pc.seed = seed;
              return perlin_generate(config, pc, size, size, true);
            }
            case BenchMethod::Ca: {
              CellularAutomataConfig cc = bc.ca;
              cc.seed = seed;
              return cellular_automata_generate(config, cc, size, size, true);
            }
          }
          throw std::logic_error("unknown method");
        };

        (void)run(bc.seed_base);  // warm-up, not recorded
        std::vector<double> times, latencies;
        BenchRow row{method, biome, size};
        for (int t = 0; t < bc.trials; ++t) {
          const auto start = clock::now();
          const MapResult m = run(bc.seed_base + static_cast<std::uint64_t>(t));
          times.push_back(std::chrono::duration<double>(clock::now() - start).count());
          latencies.insert(latencies.end(), m.trace.step_latency_ms.begin(), m.trace.step_latency_ms.end());
          const auto q = coherence_metrics(m, config);
          row.steps_mean += m.trace.steps_used;
          row.backtracks_mean += m.trace.backtrack_count;
          row.coherence_mean += q.coherence;
          row.path_components_mean += q.path_components;
          row.impassable_fraction_mean += q.impassable_fraction;
        }
        const double n = bc.trials;
        row.steps_mean /= n;
        row.backtracks_mean /= n;
        row.coherence_mean /= n;
        row.path_components_mean /= n;
        row.impassable_fraction_mean /= n;
        for (double t : times) row.time_mean_s += t / n;
        double var = 0.0;
        for (double t : times) var += (t - row.time_mean_s) * (t - row.time_mean_s);
        row.time_stddev_s = bc.trials > 1 ? std::sqrt(var / (n - 1)) : 0.0;
        row.step_latency_p95_ms = percentile(latencies, 0.95);
        report.rows.push_back(row);
      }
    }
  return report;
}

/// CSV with the fixed column set. `hash_mode` writes the timing columns as
/// zero so the text depends only on the configuration.
inline std::string bench_csv(const BenchReport& r, bool hash_mode = false) {
  std::ostringstream out;
  out << kBenchCsvHeader << '\n';
  out << std::setprecision(10);
  for (const auto& row : r.rows) {
    out << to_string(row.method) << ',' << to_string(row.biome) << ',' << row.grid_size << ','
        << (hash_mode ? 0.0 : row.time_mean_s) << ',' << (hash_mode ? 0.0 : row.time_stddev_s) << ','
        << row.steps_mean << ',' << row.backtracks_mean << ',' << (hash_mode ? 0.0 : row.step_latency_p95_ms) << ','
        << row.coherence_mean << ',' << row.path_components_mean << ',' << row.impassable_fraction_mean << '\n';
  }
  return out.str();
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

/// Aligned table for terminals. step_latency_p95 is the per-step
/// responsiveness proxy for headless runs.
inline std::string bench_table(const BenchReport& r) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "method" << std::setw(8) << "biome" << std::right << std::setw(6) << "size"
      << std::setw(12) << "time_s" << std::setw(12) << "stddev_s" << std::setw(9) << "steps" << std::setw(11)
      << "backtracks" << std::setw(12) << "p95_step_ms" << std::setw(10) << "coherence" << std::setw(11)
      << "components" << std::setw(12) << "impassable" << '\n';
  for (const auto& row : r.rows) {
    out << std::left << std::setw(8) << to_string(row.method) << std::setw(8) << to_string(row.biome) << std::right
        << std::setw(6) << (std::to_string(row.grid_size) + "x" + std::to_string(row.grid_size)) << std::scientific
        << std::setprecision(3) << std::setw(12) << row.time_mean_s << std::setw(12) << row.time_stddev_s
        << std::fixed << std::setprecision(1) << std::setw(9) << row.steps_mean << std::setw(11)
        << row.backtracks_mean << std::setprecision(4) << std::setw(12) << row.step_latency_p95_ms
        << std::setprecision(3) << std::setw(10) << row.coherence_mean << std::setprecision(2) << std::setw(11)
        << row.path_components_mean << std::setprecision(3) << std::setw(12) << row.impassable_fraction_mean
        << '\n';
  }
  for (const auto& n : r.notices) out << n << '\n';
  return out.str();
}

}  // namespace wfcrl
