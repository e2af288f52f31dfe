#pragma once

// Command-line front end. Kept in a header so the test suite can drive it
// in-process through run_cli().

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lindyn/lindyn.hpp"

namespace lindyn::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2 };

/// A resolved instance plus, for factored instances, its two factors.
struct Instance {
  MarkovProcess proc;
  std::string kind;
  std::optional<DistractionPair> factors;
  std::optional<ChainRecipe> chain;
};

inline fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    fail(Errc::parse_error, std::string("config key '") + key + "' has the wrong type");
  }
}

inline ChainRecipe chain_recipe(const Json& j) {
  ChainRecipe r;
  r.n = get_or<Eigen::Index>(j, "n", r.n);
  r.beta = get_or<double>(j, "beta", r.beta);
  r.num_permutations = get_or<int>(j, "num_permutations", r.num_permutations);
  r.seed = get_or<std::uint64_t>(j, "seed", r.seed);
  r.gamma = get_or<double>(j, "gamma", r.gamma);
  return r;
}

inline RewardRecipe reward_recipe(const Json& j) {
  RewardRecipe r;
  r.eig_indices = get_or<std::vector<int>>(j, "eig_indices", {});
  r.coefficients = get_or<std::vector<double>>(j, "coefficients", {});
  return r;
}

inline Instance build_instance(const Json& j, const fs::path& base) {
  if (!j.is_object()) fail(Errc::parse_error, "instance must be an object");
  const std::string kind = get_or<std::string>(j, "kind", "chain");
  std::optional<Instance> out;
  if (kind == "chain") {
    const ChainRecipe recipe = chain_recipe(j);
    out = Instance{make_positive_chain(recipe), kind, std::nullopt, recipe};
  } else if (kind == "spectrum") {
    const auto ev = get_or<std::vector<double>>(j, "eigenvalues", {});
    out = Instance{make_chain_with_spectrum(ev, get_or<double>(j, "gamma", 0.9)), kind, std::nullopt, std::nullopt};
  } else if (kind == "file") {
    const std::string path = get_or<std::string>(j, "path", "");
    if (path.empty()) fail(Errc::parse_error, "file instance needs a 'path'");
    out = Instance{process_from_json(read_json_file(resolve(base, path))), kind, std::nullopt, std::nullopt};
  } else if (kind == "factored") {
    if (!j.contains("foreground") || !j.contains("background"))
      fail(Errc::parse_error, "factored instance needs 'foreground' and 'background'");
    const Instance fg = build_instance(j.at("foreground"), base);
    const Instance bg = build_instance(j.at("background"), base);
    const bool zeroed = get_or<bool>(j, "background_reward_zeroed", true);
    out = Instance{kron_compose({fg.proc, bg.proc, zeroed}), kind, DistractionPair{fg.proc, bg.proc}, std::nullopt};
  } else {
    fail(Errc::parse_error, "unknown instance kind '" + kind + "'");
  }
  if (j.contains("r")) {
    const auto r = get_or<std::vector<double>>(j, "r", {});
    out->proc = out->proc.with_reward(Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size())));
  }
  return *out;
}

/// Observation map from config; empty for kind "identity" or when absent.
inline std::optional<ObservationMap> build_observation(const Json& config, Eigen::Index n, const fs::path& base) {
  if (!config.contains("observation")) return std::nullopt;
  const Json& j = config.at("observation");
  const std::string kind = get_or<std::string>(j, "kind", "gaussian");
  if (kind == "identity") return std::nullopt;
  if (kind == "file") {
    ObservationMap o = observation_from_json(read_json_file(resolve(base, get_or<std::string>(j, "path", ""))));
    if (o.n() != n) fail(Errc::shape_mismatch, "observation map size differs from state count");
    return o;
  }
  ObservationParams p;
  p.bernoulli_p = get_or<double>(j, "bernoulli_p", p.bernoulli_p);
  p.max_condition = get_or<double>(j, "max_condition", p.max_condition);
  const auto seed = get_or<std::uint64_t>(j, "seed", 0);
  if (kind == "gaussian") return make_observation(n, ObservationKind::gaussian, p, seed);
  if (kind == "binary") return make_observation(n, ObservationKind::binary, p, seed);
  fail(Errc::parse_error, "unknown observation kind '" + kind + "'");
}

struct FlowSection {
  FlowConfig cfg;
  Eigen::Index k = 2;
};

inline FlowSection build_flow(const Json& config) {
  FlowSection f;
  if (!config.contains("flow")) return f;
  const Json& j = config.at("flow");
  f.cfg.loss = loss_from_string(get_or<std::string>(j, "loss", to_string(f.cfg.loss)));
  f.cfg.two_timescale = get_or<bool>(j, "two_timescale", f.cfg.two_timescale);
  f.cfg.step_size = get_or<double>(j, "step_size", f.cfg.step_size);
  f.cfg.rate_ratio = get_or<double>(j, "rate_ratio", f.cfg.rate_ratio);
  f.cfg.max_steps = get_or<int>(j, "max_steps", f.cfg.max_steps);
  f.cfg.stationarity_tol = get_or<double>(j, "stationarity_tol", f.cfg.stationarity_tol);
  f.cfg.record_every = get_or<int>(j, "record_every", f.cfg.record_every);
  f.k = get_or<Eigen::Index>(j, "k", f.k);
  f.cfg.validate();
  return f;
}

struct Options {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  std::string checks;
};

class Runner {
 public:
  Runner(const Options& opts, std::ostream& out) : opts_(opts), out_(out) {
    if (opts.config_path.empty()) {
      config_ = Json::object();
    } else {
      config_ = read_json_file(opts.config_path);
      base_ = fs::path(opts.config_path).parent_path();
    }
    if (!config_.is_object()) fail(Errc::parse_error, "config must be a JSON object");
    std::string dir = opts.output_dir;
    if (dir.empty()) dir = get_or<std::string>(config_, "output_dir", ".");
    out_dir_ = opts.output_dir.empty() ? resolve(base_, dir) : fs::path(dir);
    seeds_ = opts.seeds;
    if (seeds_.empty()) seeds_ = get_or<std::vector<std::uint64_t>>(config_, "seeds", {0});
  }

  int generate() {
    const Instance inst = instance();
    prepare_dir();
    write_json_file(out_dir_ / "mdp.json", to_json(inst.proc));
    out_ << "wrote " << (out_dir_ / "mdp.json").string() << "\n";
    if (auto obs = build_observation(config_, inst.proc.n(), base_)) {
      write_json_file(out_dir_ / "obs.json", to_json(*obs));
      out_ << "wrote " << (out_dir_ / "obs.json").string() << "\n";
    }
    return kOk;
  }

  int simulate_cmd() {
    const Instance inst = instance();
    FlowSection flow = build_flow(config_);
    flow.cfg.observation = build_observation(config_, inst.proc.n(), base_);
    prepare_dir();
    out_ << "seed, final_loss, final_dist_top_eig, final_dist_top_sv, final_value_error\n";
    for (std::uint64_t seed : seeds_) {
      const SimulationResult res = simulate(inst.proc, init_representation(inst.proc.n(), flow.k, seed), flow.cfg);
      const std::string tag = std::to_string(seed);
      write_text_file(out_dir_ / ("traj_" + tag + ".csv"), trajectory_csv(res.trajectory));
      write_json_file(out_dir_ / ("final_rep_" + tag + ".json"), to_json(res.final_rep));
      const auto& last = res.trajectory.records.back();
      out_ << seed << ", " << format_double(last.loss) << ", " << format_double(last.dist_top_eig) << ", "
           << format_double(last.dist_top_sv) << ", " << format_double(last.value_error)
           << (res.trajectory.converged ? "" : "  (not converged)") << "\n";
    }
    return kOk;
  }

  int spectral() {
    const Instance inst = instance();
    prepare_dir();
    write_json_file(out_dir_ / "spectral.json", to_json(decompose(inst.proc.P())));
    out_ << "wrote " << (out_dir_ / "spectral.json").string() << "\n";
    return kOk;
  }

  int verify() {
    std::set<std::string> only;
    std::string list = opts_.checks;
    if (list.empty() && config_.contains("checks"))
      for (const auto& c : get_or<std::vector<std::string>>(config_, "checks", {})) list += (list.empty() ? "" : ",") + c;
    std::stringstream ss(list);
    for (std::string id; std::getline(ss, id, ',');)
      if (!id.empty()) only.insert(id);

    SuiteConfig suite;
    const Json vj = config_.contains("verify") ? config_.at("verify") : Json::object();
    suite.k = get_or<Eigen::Index>(vj, "k", suite.k);
    suite.prop6_k = get_or<Eigen::Index>(vj, "prop6_k", suite.prop6_k);
    suite.prop7_k = get_or<Eigen::Index>(vj, "prop7_k", suite.prop7_k);
    suite.prop2_seeds = get_or<int>(vj, "prop2_seeds", suite.prop2_seeds);
    suite.prop6_seeds = get_or<int>(vj, "prop6_seeds", suite.prop6_seeds);
    if (config_.contains("reward")) suite.reward = reward_recipe(config_.at("reward"));
    Eigen::Index n = 0;
    if (config_.contains("instance")) {
      const Json& ij = config_.at("instance");
      if (get_or<std::string>(ij, "kind", "chain") == "chain") {
        suite.chain = chain_recipe(ij);
        n = suite.chain.n;
      } else {
        Instance inst = build_instance(ij, base_);
        if (config_.contains("reward")) inst.proc = make_low_rank_reward(inst.proc, suite.reward);
        suite.instance = inst.proc;
        suite.prop6_instance = inst.proc;
        if (inst.factors) suite.distraction = inst.factors;
        n = inst.proc.n();
      }
    } else {
      n = suite.chain.n;
    }
    if (config_.contains("observation")) {
      const auto obs = build_observation(config_, n, base_);
      suite.observation = obs ? *obs : ObservationMap::identity(n);
    }

    std::vector<CheckReport> all;
    for (std::uint64_t seed : seeds_) {
      suite.seed = seed;
      for (auto& r : run_suite(suite, only)) {
        r.hypothesis_params["suite_seed"] = std::to_string(seed);
        all.push_back(std::move(r));
      }
    }
    prepare_dir();
    std::string lines;
    for (const auto& r : all) lines += to_json(r).dump() + "\n";
    write_text_file(out_dir_ / "report.jsonl", lines);

    int failed = 0, passed = 0, skipped = 0;
    char row[256];
    std::snprintf(row, sizeof row, "%-32s %-15s %10s  %s\n", "check", "status", "ms", "params");
    out_ << row;
    for (const auto& r : all) {
      std::string params;
      for (const auto& [key, value] : r.hypothesis_params) params += key + "=" + value + " ";
      std::snprintf(row, sizeof row, "%-32s %-15s %10lld  ", r.check_id.c_str(), to_string(r.status), r.runtime_ms);
      out_ << row << params << (r.note.empty() ? "" : "[" + r.note + "]") << "\n";
      if (r.status == CheckStatus::failed) ++failed;
      else if (r.status == CheckStatus::passed) ++passed;
      else ++skipped;
    }
    out_ << passed << " passed, " << failed << " failed, " << skipped << " not applicable\n";
    return failed ? kCheckFailed : kOk;
  }

 private:
  Instance instance() {
    if (!config_.contains("instance")) fail(Errc::parse_error, "config has no 'instance'");
    Instance inst = build_instance(config_.at("instance"), base_);
    if (config_.contains("reward")) inst.proc = make_low_rank_reward(inst.proc, reward_recipe(config_.at("reward")));
    return inst;
  }

  void prepare_dir() {
    std::error_code ec;
    fs::create_directories(out_dir_, ec);
    if (ec) fail(Errc::io_error, "cannot create " + out_dir_.string() + ": " + ec.message());
  }

  Options opts_;
  std::ostream& out_;
  Json config_;
  fs::path base_;
  fs::path out_dir_;
  std::vector<std::uint64_t> seeds_;
};

/// Exit codes: 0 success, 1 a check failed, 2 usage, I/O or validation error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Linear representation dynamics on finite Markov processes"};
  app.require_subcommand(1);
  Options opts;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", opts.config_path, "JSON run configuration");
    if (config_required) c->required();
    sub->add_option("--seed", opts.seeds, "seed or comma-separated seeds")->delimiter(',');
    sub->add_option("--output-dir", opts.output_dir, "directory for output files");
  };
  auto* gen = app.add_subcommand("generate", "write mdp.json (and obs.json) for the configured instance");
  auto* sim = app.add_subcommand("simulate", "integrate the configured flow for each seed");
  auto* spec = app.add_subcommand("spectral", "dump the eigen and singular decomposition as JSON");
  auto* ver = app.add_subcommand("verify", "run the verification suite and write report.jsonl");
  add_common(gen, true);
  add_common(sim, true);
  add_common(spec, true);
  add_common(ver, false);
  ver->add_option("--checks", opts.checks, "comma-separated subset of checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    Runner runner(opts, out);
    if (gen->parsed()) return runner.generate();
    if (sim->parsed()) return runner.simulate_cmd();
    if (spec->parsed()) return runner.spectral();
    return runner.verify();
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
  } catch (const Json::exception& e) {
    err << "error: ParseError: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return kUsage;
}

}  // namespace lindyn::cli
