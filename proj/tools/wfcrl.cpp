// wfcrl command-line front end: generate, train, bench, validate, serve.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "wfcrl/bench.hpp"
#include "wfcrl/fixtures.hpp"
#include "wfcrl/map_document.hpp"
#include "wfcrl/rl/artifact.hpp"
#include "wfcrl/rl/trainer.hpp"
#include "wfcrl/service.hpp"

namespace fs = std::filesystem;
using namespace wfcrl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string shell_word(const std::string& s) {
  if (!s.empty() && s.find_first_of(" \t'\"\\$") == std::string::npos) return s;
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

/// The full command line with every option value, defaults included.
void append_options(std::ostringstream& out, const CLI::App& app) {
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_name() == "--help") continue;
    if (opt->get_expected_max() == 0) {
      if (opt->count() > 0) out << ' ' << opt->get_name();
      continue;
    }
    auto values = opt->results();
    if (values.empty()) {
      const auto def = opt->get_default_str();
      if (def.empty()) continue;
      values = {def};
    }
    if (opt->get_positional()) {
      for (const auto& v : values) out << ' ' << shell_word(v);
      continue;
    }
    out << ' ' << opt->get_name();
    for (const auto& v : values) out << ' ' << shell_word(v);
  }
}

std::string invocation(const CLI::App& sub) {
  std::ostringstream out;
  out << "wfcrl";
  if (const CLI::App* parent = sub.get_parent()) append_options(out, *parent);
  out << ' ' << sub.get_name();
  append_options(out, sub);
  return out.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

BiomeConfig biome_config(const std::string& biome, const std::string& layout, const fs::path& tilesets) {
  auto b = parse_biome(biome);
  if (!b) throw UsageError("unknown biome '" + biome + "'");
  BiomeConfig cfg = load_biome(*b, tilesets);
  if (!layout.empty()) {
    auto l = parse_layout(layout);
    if (!l) throw UsageError("unknown layout '" + layout + "'");
    cfg.layout = *l;
  }
  return cfg;
}

const std::vector<std::string> kBiomeNames{"city", "desert", "forest"};

struct GenerateArgs {
  std::string biome;
  int width = 10, height = 10;
  std::uint64_t seed = 0;
  std::string layout;
  std::string policy;
  std::string out;
  std::string render = "text";
  bool keep_timing = false;
};

int cmd_generate(const CLI::App& sub, const GenerateArgs& a, const fs::path& tilesets) {
  std::cout << "# " << invocation(sub) << '\n';
  const auto cfg = biome_config(a.biome, a.layout, tilesets);
  std::optional<rl::PolicyParams> policy;
  if (!a.policy.empty()) {
    try {
      policy = rl::load_policy(a.policy);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    if (policy->meta.biome != cfg.biome) throw UsageError("policy was trained for biome '" + std::string(to_string(policy->meta.biome)) + "'");
  }
  MapResult m;
  try {
    m = rl::generate(cfg, a.width, a.height, a.seed, policy ? &*policy : nullptr);
  } catch (const std::out_of_range& e) {
    throw UsageError(e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!a.out.empty()) write_file(a.out, map_to_json(m, cfg.tileset, a.keep_timing).dump(2) + "\n");
  if (a.render == "text") std::cout << render_text(m, cfg.tileset);
  std::cout << std::fixed << std::setprecision(3) << "steps " << m.trace.steps_used << "/" << m.trace.max_steps
            << ", backtracks " << m.trace.backtrack_count << ", fallbacks " << m.trace.deadlock_fallbacks
            << ", budget fills " << m.trace.budget_fills << ", time " << m.trace.wall_time_ms << " ms\n";
  return kExitOk;
}

struct TrainArgs {
  std::string biome;
  int width = 10, height = 10;
  std::uint64_t seed = 0;
  std::string layout;
  std::string out = "policies";
  rl::TrainConfig tc;
};

int cmd_train(const CLI::App& sub, TrainArgs a, const fs::path& tilesets) {
  std::cout << "# " << invocation(sub) << '\n';
  if (auto why = a.tc.invalid_reason()) throw UsageError("invalid hyperparameters: " + *why);
  const auto cfg = biome_config(a.biome, a.layout, tilesets);
  const std::string stem = std::string(to_string(cfg.biome)) + "_" + std::to_string(a.width) + "x" + std::to_string(a.height);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::ofstream log(dir / (stem + ".log.jsonl"));
  rl::PolicyArtifact art;
  try {
    art = rl::train(cfg, a.width, a.height, a.tc, a.seed, [&](const std::string& line) {
      std::cout << line << '\n';
      log << line << '\n';
    });
  } catch (const std::out_of_range& e) {
    throw UsageError(e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  rl::save_policy((dir / (stem + ".wfcp")).string(), art.params);
  write_file(dir / (stem + ".curve.csv"), rl::curve_to_csv(art.curve));
  std::cout << "wrote " << (dir / (stem + ".wfcp")).string() << " and " << (dir / (stem + ".curve.csv")).string() << '\n';
  if (!art.discarded.empty()) std::cout << "discarded episodes: " << art.discarded.size() << '\n';
  const std::size_t n = art.curve.size();
  std::cout << std::setprecision(6) << std::fixed;
  if (n > 0) {
    std::cout << "first 100-episode mean R: " << rl::window_mean(art.curve, 0, 100) << '\n';
    std::cout << "final 100-episode mean R: " << rl::window_mean(art.curve, n > 100 ? n - 100 : 0, 100) << '\n';
  } else {
    std::cout << "no episodes run; wrote initial parameters\n";
  }
  return kExitOk;
}

struct BenchArgs {
  std::vector<std::string> methods{"wfc", "wfc_rl", "perlin", "ca"};
  std::vector<int> sizes{5, 10, 15};
  std::vector<std::string> biomes{"city", "desert", "forest"};
  int trials = 10;
  std::uint64_t seed_base = 0;
  std::string policy_dir = "policies";
  std::string out;
  bool hash = false;
  bool table = false;
};

int cmd_bench(const CLI::App& sub, const BenchArgs& a, const fs::path& tilesets) {
  std::cout << "# " << invocation(sub) << '\n';
  BenchConfig bc;
  bc.methods.clear();
  for (const auto& m : a.methods) {
    auto method = parse_bench_method(m);
    if (!method) throw UsageError("unknown method '" + m + "'");
    bc.methods.push_back(*method);
  }
  bc.biomes.clear();
  for (const auto& b : a.biomes) {
    auto biome = parse_biome(b);
    if (!biome) throw UsageError("unknown biome '" + b + "'");
    bc.biomes.push_back(*biome);
  }
  bc.sizes = a.sizes;
  bc.trials = a.trials;
  bc.seed_base = a.seed_base;
  if (auto why = bc.invalid_reason()) throw UsageError(*why);
  std::map<Biome, BiomeConfig> configs;
  for (Biome b : bc.biomes) configs.emplace(b, load_biome(b, tilesets));
  const auto report = run_benchmark(bc, configs, a.policy_dir);
  for (const auto& n : report.notices) std::cout << n << '\n';
  const auto csv = bench_csv(report, a.hash);
  if (!a.out.empty()) write_file(a.out, csv);
  if (a.table)
    std::cout << bench_table(report);
  else if (a.out.empty())
    std::cout << csv;
  if (a.hash) std::cout << "digest " << hex64(fnv1a64(csv)) << '\n';
  return kExitOk;
}

int cmd_validate(const std::string& file) {
  BiomeConfig cfg;
  try {
    cfg = load_tileset_file(file);
  } catch (const TilesetParseError& e) {
    std::cout << "parse error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TilesetValidationError& e) {
    std::cout << "invalid: " << e.what() << '\n';
    return kExitUsage;
  }
  const auto report = check_symmetry(cfg.tileset);
  for (const auto& e : report.errors) std::cout << "error: " << e.tile << " " << to_string(e.direction) << ": " << e.message << '\n';
  for (const auto& w : report.warnings) std::cout << "warning: " << w << '\n';
  std::cout << file << ": " << cfg.tileset.size() << " tiles, " << report.errors.size() << " errors, "
            << report.warnings.size() << " warnings\n";
  return report.ok() ? kExitOk : kExitUsage;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const CLI::App& sub, const std::string& host, int port, const std::string& data, const fs::path& tilesets) {
  std::cout << "# " << invocation(sub) << '\n';
  ServiceOptions opt;
  opt.data_dir = data;
  MapService svc(load_all_biomes(tilesets), opt);
  httplib::Server server;
  mount_routes(server, svc);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  if (!server.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  std::cout << "listening on http://" << host << ":" << port << std::endl;
  server.listen_after_bind();
  svc.shutdown();
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Biome-aware wave function collapse with a PPO weight policy"};
  app.require_subcommand(1);
  std::string tilesets = default_tileset_dir().string();
  app.add_option("--tilesets", tilesets, "Tileset directory (env WFCRL_TILESETS)")->capture_default_str();

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Generate one map");
  gen->add_option("--biome", ga.biome, "city, desert or forest")->required()->check(CLI::IsMember(kBiomeNames));
  gen->add_option("--width", ga.width, "Grid width (1-15)")->capture_default_str()->check(CLI::Range(1, kMaxGridSide));
  gen->add_option("--height", ga.height, "Grid height (1-15)")->capture_default_str()->check(CLI::Range(1, kMaxGridSide));
  gen->add_option("--seed", ga.seed, "Random seed")->capture_default_str();
  gen->add_option("--layout", ga.layout, "Override the biome layout (continuous or sparse)")
      ->check(CLI::IsMember({"continuous", "sparse"}));
  gen->add_option("--policy", ga.policy, "Trained policy file (.wfcp)")->check(CLI::ExistingFile);
  gen->add_option("--out", ga.out, "Write the map document here");
  gen->add_option("--render", ga.render, "text or none")->capture_default_str()->check(CLI::IsMember({"text", "none"}));
  gen->add_flag("--keep-timing", ga.keep_timing, "Keep wall time in the written document");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a weight-adjustment policy with PPO");
  train->add_option("--biome", ta.biome, "city, desert or forest")->required()->check(CLI::IsMember(kBiomeNames));
  train->add_option("--width", ta.width, "Grid width (1-15)")->capture_default_str()->check(CLI::Range(1, kMaxGridSide));
  train->add_option("--height", ta.height, "Grid height (1-15)")->capture_default_str()->check(CLI::Range(1, kMaxGridSide));
  train->add_option("--episodes", ta.tc.episodes, "Training episodes")->capture_default_str();
  train->add_option("--seed", ta.seed, "Random seed")->capture_default_str();
  train->add_option("--layout", ta.layout, "Override the biome layout")->check(CLI::IsMember({"continuous", "sparse"}));
  train->add_option("--out", ta.out, "Output directory")->capture_default_str();
  train->add_option("--lr", ta.tc.learning_rate, "Adam learning rate")->capture_default_str();
  train->add_option("--batch-size", ta.tc.batch_size, "Minibatch size")->capture_default_str();
  train->add_option("--buffer-size", ta.tc.buffer_size, "Timesteps per update")->capture_default_str();
  train->add_option("--gamma", ta.tc.gamma, "Discount factor")->capture_default_str();
  train->add_option("--clip", ta.tc.clip_epsilon, "PPO clip epsilon")->capture_default_str();
  train->add_option("--gae-lambda", ta.tc.gae_lambda, "GAE lambda")->capture_default_str();
  train->add_option("--epochs", ta.tc.epochs_per_update, "Passes over the buffer per update")->capture_default_str();
  train->add_option("--k1", ta.tc.k1, "Efficiency reward per unused step")->capture_default_str();
  train->add_option("--k2", ta.tc.k2, "Efficiency penalty per backtrack")->capture_default_str();
  train->add_option("--entropy-coef", ta.tc.entropy_coef, "Entropy bonus")->capture_default_str();
  train->add_option("--value-coef", ta.tc.value_coef, "Value loss weight")->capture_default_str();
  train->add_option("--max-grad-norm", ta.tc.max_grad_norm, "Gradient norm clip (0 disables)")->capture_default_str();
  train->add_flag("--normalized-efficiency", ta.tc.normalized_efficiency, "Divide the efficiency term by the step budget");
  train->add_option("--workers", ta.tc.workers, "Parallel rollout workers")->capture_default_str();

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Benchmark generators over biomes and grid sizes");
  bench->add_option("--methods", ba.methods, "wfc, wfc_rl, perlin, ca")->delimiter(',')->capture_default_str();
  bench->add_option("--sizes", ba.sizes, "Square grid sizes")->delimiter(',')->capture_default_str();
  bench->add_option("--biomes", ba.biomes, "Biomes")->delimiter(',')->capture_default_str();
  bench->add_option("--trials", ba.trials, "Trials per cell")->capture_default_str();
  bench->add_option("--seed-base", ba.seed_base, "Seed of trial 0")->capture_default_str();
  bench->add_option("--policy-dir", ba.policy_dir, "Directory with <biome>_<N>x<N>.wfcp files")->capture_default_str();
  bench->add_option("--out", ba.out, "CSV output file");
  bench->add_flag("--hash", ba.hash, "Zero timing columns and print a digest of the CSV");
  bench->add_flag("--table", ba.table, "Print an aligned table");

  std::string validate_file;
  auto* validate = app.add_subcommand("validate", "Check a tileset document");
  validate->add_option("file", validate_file, "Tileset file")->required()->check(CLI::ExistingFile);

  std::string host = "127.0.0.1", data = "wfcrl-data";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--data", data, "Session and policy directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_generate(*gen, ga, tilesets);
    if (*train) return cmd_train(*train, ta, tilesets);
    if (*bench) return cmd_bench(*bench, ba, tilesets);
    if (*validate) return cmd_validate(validate_file);
    if (*serve) return cmd_serve(*serve, host, port, data, tilesets);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TilesetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
