#pragma once

// Experiment plumbing: flat key-value config, the DQN routing training loop,
// run artifacts (episodes.csv, summary.json, best.solution), A* baseline
// runs, and the per-trial comparison table.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnroute/astar.hpp"
#include "qnroute/dqn.hpp"
#include "qnroute/generator.hpp"
#include "qnroute/optim.hpp"
#include "qnroute/route_env.hpp"
#include "qnroute/route_solution.hpp"

namespace qnroute {

namespace fs = std::filesystem;

class HarnessError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Config

class Config {
public:
  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "optimizer.name",   "optimizer.alpha",   "optimizer.mu_min",     "optimizer.mu_max",
        "optimizer.phi",    "optimizer.L",       "optimizer.m_L",        "optimizer.m_F",
        "optimizer.sigma",  "optimizer.eta",     "optimizer.epsilon_h0", "optimizer.beta1",
        "optimizer.beta2",  "optimizer.rho",     "optimizer.epsilon",    "agent.gamma",
        "agent.tau",        "agent.batch_size",  "agent.epsilon_start",  "agent.epsilon_end",
        "agent.epsilon_decay", "agent.replay_capacity", "agent.min_replay", "agent.seed",
        "env.max_steps",
    };
    return keys;
  }

  // `key = value` per line; `#` starts a comment.
  static Config parse(std::istream& is) {
    Config c;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
  }

  static Config load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw HarnessError("cannot open config file " + path.string());
    return parse(in);
  }

  void set(const std::string& key, const std::string& value) {
    if (!known_keys().count(key)) throw ParseError("unknown config key '" + key + "'");
    if (value.empty()) throw ParseError("config key '" + key + "' has no value");
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  template <class T>
  T get(const std::string& key, T fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::istringstream ss(it->second);
    T out{};
    std::string extra;
    if (!(ss >> out) || (ss >> extra)) throw ParseError("config key '" + key + "' has a malformed value");
    return out;
  }

private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

inline AsnaqConfig asnaq_config(const Config& c) {
  AsnaqConfig a;
  a.alpha = c.get("optimizer.alpha", a.alpha);
  a.mu_min = c.get("optimizer.mu_min", a.mu_min);
  a.mu_max = c.get("optimizer.mu_max", a.mu_max);
  a.phi = c.get("optimizer.phi", a.phi);
  a.L = c.get("optimizer.L", a.L);
  a.m_L = c.get("optimizer.m_L", a.m_L);
  a.m_F = c.get("optimizer.m_F", a.m_F);
  a.sigma = c.get("optimizer.sigma", a.sigma);
  a.eta = c.get("optimizer.eta", a.eta);
  a.epsilon_h0 = c.get("optimizer.epsilon_h0", a.epsilon_h0);
  a.validate();
  return a;
}

inline AgentConfig agent_config(const Config& c) {
  AgentConfig a;
  a.gamma = c.get("agent.gamma", a.gamma);
  a.tau = c.get("agent.tau", a.tau);
  a.batch_size = c.get("agent.batch_size", a.batch_size);
  a.epsilon_start = c.get("agent.epsilon_start", a.epsilon_start);
  a.epsilon_end = c.get("agent.epsilon_end", a.epsilon_end);
  a.epsilon_decay = c.get("agent.epsilon_decay", a.epsilon_decay);
  a.replay_capacity = c.get("agent.replay_capacity", a.replay_capacity);
  a.min_replay = c.get("agent.min_replay", a.min_replay);
  a.seed = c.get("agent.seed", a.seed);
  a.validate();
  return a;
}

inline const std::vector<std::string>& optimizer_names() {
  static const std::vector<std::string> names = {"adam", "rmsprop", "asnaq"};
  return names;
}

inline std::unique_ptr<Optimizer> make_optimizer(const std::string& name, const Config& c) {
  if (name == "asnaq") return std::make_unique<AsnaqOptimizer>(asnaq_config(c));
  if (name == "adam") {
    AdamConfig a;
    a.alpha = c.get("optimizer.alpha", a.alpha);
    a.beta1 = c.get("optimizer.beta1", a.beta1);
    a.beta2 = c.get("optimizer.beta2", a.beta2);
    a.epsilon = c.get("optimizer.epsilon", a.epsilon);
    return std::make_unique<AdamOptimizer>(a);
  }
  if (name == "rmsprop") {
    RmspropConfig r;
    r.alpha = c.get("optimizer.alpha", r.alpha);
    r.rho = c.get("optimizer.rho", r.rho);
    r.epsilon = c.get("optimizer.epsilon", r.epsilon);
    return std::make_unique<RmspropOptimizer>(r);
  }
  throw HarnessError("unknown optimizer '" + name + "' (expected asnaq, adam or rmsprop)");
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw HarnessError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write to a sibling temp file, then rename over the destination.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw HarnessError("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw HarnessError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw HarnessError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline RoutingProblem load_problem(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw HarnessError("cannot open problem file " + path.string());
  try {
    return read_problem(in);
  } catch (const ParseError& e) {
    throw HarnessError(path.string() + ": " + e.what());
  }
}

inline std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Training

struct TrainSettings {
  std::string optimizer = "asnaq";
  std::size_t episodes = 500;
  int max_steps = 50;
  std::uint64_t seed = 1;
  Config config;
};

struct EpisodeRecord {
  std::size_t episode = 0;  // 1-based
  std::optional<double> avg_loss;
  double cumulative_reward = 0.0;
  int pins_routed = 0;
  std::optional<long> wirelength;  // only when every pair was routed
};

struct TrainSummary {
  std::string optimizer;
  std::string problem_hash;
  std::uint64_t seed = 0;
  std::size_t episodes_run = 0;
  int total_pins = 0;
  std::optional<long> wirelength;
  std::optional<long> overflow;
  double r_best = 0.0;
  std::size_t best_episode = 0;
  int pins = 0;
  bool aborted = false;
  std::string diagnostic;
};

struct TrainResult {
  std::vector<EpisodeRecord> episodes;
  TrainSummary summary;
  RouteSolution best_solution;
};

inline const char* kEpisodeCsvHeader = "episode,avg_loss,cumulative_reward,pins_routed,wirelength";

inline RouteSolution solution_from_trace(const RoutingProblem& problem, const EpisodeTrace& trace) {
  RouteSolution sol;
  for (std::size_t i = 0; i < trace.pairs.size(); ++i) {
    const auto& pair = trace.pairs[i];
    if (pair.reached)
      sol.nets.push_back(route_from_path(problem.nets[i].name, pair.path));
    else
      sol.unrouted.push_back(problem.nets[i].name);
  }
  return sol;
}

using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

inline TrainResult run_training(const RoutingProblem& problem, const TrainSettings& settings,
                                const EpisodeCallback& on_episode = {}) {
  AgentConfig agent_cfg = agent_config(settings.config);
  agent_cfg.seed = settings.seed;
  const int max_steps = settings.config.get("env.max_steps", settings.max_steps);

  RouteEnv env(problem, max_steps);
  DqnAgent agent(NetworkSpec::routing_default(), agent_cfg, make_optimizer(settings.optimizer, settings.config));

  TrainResult result;
  TrainSummary& sum = result.summary;
  sum.optimizer = settings.optimizer;
  sum.problem_hash = hash_hex(problem_hash(problem));
  sum.seed = settings.seed;
  sum.total_pins = static_cast<int>(problem.nets.size());
  std::optional<double> best_reward;

  for (std::size_t ep = 0; ep < settings.episodes; ++ep) {
    const double epsilon = agent_cfg.epsilon(ep);
    env.reset_episode();
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    try {
      while (env.episode_active()) {
        Eigen::VectorXd s = env.encode_state();
        const int a = agent.act(s, epsilon);
        StepResult r = env.step(a);
        agent.remember({std::move(s), a, r.reward, r.state, r.terminal, -1});
        if (auto loss = agent.train_step()) {
          if (!std::isfinite(*loss)) throw NumericError("training loss became non-finite");
          loss_sum += *loss;
          ++loss_count;
        }
        if (env.pair_finished()) env.finish_pair();
      }
    } catch (const NumericError& e) {
      sum.aborted = true;
      sum.diagnostic = "episode " + std::to_string(ep + 1) + ": " + e.what();
      break;
    }

    EpisodeRecord rec;
    rec.episode = ep + 1;
    if (loss_count > 0) rec.avg_loss = loss_sum / static_cast<double>(loss_count);
    rec.cumulative_reward = env.trace().cumulative_reward;
    rec.pins_routed = env.trace().pins_routed;
    if (rec.pins_routed == sum.total_pins) {
      long wl = 0;
      for (const auto& p : env.trace().pairs) wl += static_cast<long>(p.path.size()) - 1;
      rec.wirelength = wl;
    }
    if (!best_reward || rec.cumulative_reward > *best_reward) {
      best_reward = rec.cumulative_reward;
      sum.r_best = rec.cumulative_reward;
      sum.best_episode = rec.episode;
      sum.pins = rec.pins_routed;
      result.best_solution = solution_from_trace(problem, env.trace());
    }
    result.episodes.push_back(rec);
    sum.episodes_run = rec.episode;
    if (on_episode) on_episode(rec);
  }

  if (sum.best_episode > 0) {
    const RouteMetrics m = evaluate(problem, result.best_solution);
    sum.overflow = m.overflow;
    if (sum.pins == sum.total_pins) sum.wirelength = m.wirelength;
  }
  return result;
}

inline std::string episodes_csv(const std::vector<EpisodeRecord>& records) {
  std::ostringstream os;
  os << kEpisodeCsvHeader << '\n';
  for (const auto& r : records) {
    os << r.episode << ',' << (r.avg_loss ? format_real(*r.avg_loss) : "") << ',' << format_real(r.cumulative_reward)
       << ',' << r.pins_routed << ',' << (r.wirelength ? std::to_string(*r.wirelength) : "") << '\n';
  }
  return os.str();
}

inline nlohmann::json summary_json(const TrainSummary& s) {
  nlohmann::json j;
  j["optimizer"] = s.optimizer;
  j["problem_hash"] = s.problem_hash;
  j["seed"] = s.seed;
  j["episodes"] = s.episodes_run;
  j["total_pins"] = s.total_pins;
  j["WL"] = s.wirelength ? nlohmann::json(*s.wirelength) : nlohmann::json(nullptr);
  j["overflow"] = s.overflow ? nlohmann::json(*s.overflow) : nlohmann::json(nullptr);
  j["R_best"] = s.r_best;
  j["E"] = s.best_episode;
  j["Pins"] = s.pins;
  j["aborted"] = s.aborted;
  if (s.aborted) j["diagnostic"] = s.diagnostic;
  return j;
}

inline TrainSummary summary_from_json(const nlohmann::json& j) {
  TrainSummary s;
  s.optimizer = j.at("optimizer").get<std::string>();
  s.problem_hash = j.at("problem_hash").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.episodes_run = j.at("episodes").get<std::size_t>();
  s.total_pins = j.at("total_pins").get<int>();
  if (!j.at("WL").is_null()) s.wirelength = j.at("WL").get<long>();
  if (!j.at("overflow").is_null()) s.overflow = j.at("overflow").get<long>();
  s.r_best = j.at("R_best").get<double>();
  s.best_episode = j.at("E").get<std::size_t>();
  s.pins = j.at("Pins").get<int>();
  s.aborted = j.value("aborted", false);
  s.diagnostic = j.value("diagnostic", std::string());
  return s;
}

// ---------------------------------------------------------------------------
// Commands

inline std::vector<fs::path> cmd_gen(std::size_t count, std::uint64_t master_seed, const fs::path& out_dir,
                                     GenSpec spec = {}) {
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (std::size_t i = 1; i <= count; ++i) {
    spec.seed = mix_seed(master_seed, i);
    const fs::path path = out_dir / ("trial_" + std::to_string(i) + ".problem");
    write_file_atomic(path, problem_to_string(generate(spec)));
    written.push_back(path);
  }
  return written;
}

struct AstarRun {
  RouteSolution solution;
  RouteMetrics metrics;
};

inline AstarRun cmd_route_astar(const fs::path& problem_path, const fs::path& out_dir) {
  const RoutingProblem problem = load_problem(problem_path);
  AstarRun run{route_all(problem), {}};
  run.metrics = evaluate(problem, run.solution);
  nlohmann::json j;
  j["problem_hash"] = hash_hex(problem_hash(problem));
  j["WL"] = run.metrics.wirelength;
  j["overflow"] = run.metrics.overflow;
  j["nets_routed"] = run.metrics.nets_routed;
  j["unrouted"] = run.solution.unrouted;
  write_file_atomic(out_dir / "astar.solution", solution_to_string(run.solution));
  write_file_atomic(out_dir / "astar.json", j.dump(2) + "\n");
  return run;
}

// Writes <out_root>/<problem stem>/<optimizer>/{episodes.csv,summary.json,best.solution}.
inline TrainResult cmd_train(const fs::path& problem_path, const TrainSettings& settings, const fs::path& out_root) {
  const RoutingProblem problem = load_problem(problem_path);
  const fs::path dir = out_root / problem_path.stem() / settings.optimizer;
  fs::create_directories(dir);
  std::vector<EpisodeRecord> so_far;
  auto checkpoint = [&](const EpisodeRecord& rec) {
    so_far.push_back(rec);
    // Keeps a partial log on disk in case the run is killed.
    if (so_far.size() % 50 == 0) write_file_atomic(dir / "episodes.csv", episodes_csv(so_far));
  };
  TrainResult result = run_training(problem, settings, checkpoint);
  write_file_atomic(dir / "episodes.csv", episodes_csv(result.episodes));
  write_file_atomic(dir / "best.solution", solution_to_string(result.best_solution));
  write_file_atomic(dir / "summary.json", summary_json(result.summary).dump(2) + "\n");
  return result;
}

struct CompareCell {
  std::optional<long> wl;
  std::optional<long> diff;
  double r_best = 0.0;
  std::size_t e = 0;
  int pins = 0;
};

struct CompareRow {
  std::string trial;
  long astar_wl = 0;
  std::map<std::string, CompareCell> cells;  // by optimizer name
};

inline CompareRow compare_trial(const RoutingProblem& problem, const fs::path& trial_dir) {
  const std::string hash = hash_hex(problem_hash(problem));
  CompareRow row;
  row.trial = trial_dir.filename().string();
  if (row.trial.empty()) row.trial = trial_dir.parent_path().filename().string();
  row.astar_wl = evaluate(problem, route_all(problem)).wirelength;
  bool any = false;
  for (const auto& name : optimizer_names()) {
    const fs::path summary_path = trial_dir / name / "summary.json";
    if (!fs::exists(summary_path)) continue;
    const TrainSummary s = summary_from_json(nlohmann::json::parse(read_file(summary_path)));
    if (s.problem_hash != hash)
      throw HarnessError(summary_path.string() + " was produced from problem " + s.problem_hash +
                         ", but the comparison problem hashes to " + hash);
    CompareCell c;
    if (s.wirelength && s.pins == s.total_pins) {
      c.wl = *s.wirelength;
      c.diff = *s.wirelength - row.astar_wl;
    }
    c.r_best = s.r_best;
    c.e = s.best_episode;
    c.pins = s.pins;
    row.cells[name] = c;
    any = true;
  }
  if (!any) throw HarnessError("no run summaries found under " + trial_dir.string());
  return row;
}

inline std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << "trial,astar_wl";
  for (const auto& n : optimizer_names()) os << ',' << n << "_wl," << n << "_diff," << n << "_r_best," << n << "_e," << n << "_pins";
  os << '\n';
  for (const auto& r : rows) {
    os << r.trial << ',' << r.astar_wl;
    for (const auto& n : optimizer_names()) {
      auto it = r.cells.find(n);
      if (it == r.cells.end()) {
        os << ",,,,,";
        continue;
      }
      const CompareCell& c = it->second;
      os << ',' << (c.wl ? std::to_string(*c.wl) : "") << ',' << (c.diff ? std::to_string(*c.diff) : "") << ','
         << format_real(c.r_best) << ',' << c.e << ',' << c.pins;
    }
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json compare_json(const std::vector<CompareRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j;
    j["trial"] = r.trial;
    j["astar_wl"] = r.astar_wl;
    for (const auto& [name, c] : r.cells) {
      j[name] = {{"WL", c.wl ? nlohmann::json(*c.wl) : nlohmann::json(nullptr)},
                 {"diff", c.diff ? nlohmann::json(*c.diff) : nlohmann::json(nullptr)},
                 {"R_best", c.r_best},
                 {"E", c.e},
                 {"Pins", c.pins}};
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

// One problem for all trials, or one problem per trial directory (paired by position).
inline std::vector<CompareRow> cmd_compare(const std::vector<fs::path>& problems, const std::vector<fs::path>& runs,
                                           const fs::path& out_csv) {
  if (problems.empty() || runs.empty()) throw HarnessError("compare needs at least one problem and one run directory");
  if (problems.size() != 1 && problems.size() != runs.size())
    throw HarnessError("compare needs one problem, or one problem per run directory");
  std::vector<CompareRow> rows;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RoutingProblem problem = load_problem(problems.size() == 1 ? problems[0] : problems[i]);
    rows.push_back(compare_trial(problem, runs[i]));
  }
  write_file_atomic(out_csv, compare_csv(rows));
  fs::path json_path = out_csv;
  json_path.replace_extension(".json");
  write_file_atomic(json_path, compare_json(rows).dump(2) + "\n");
  return rows;
}

}  // namespace qnroute
