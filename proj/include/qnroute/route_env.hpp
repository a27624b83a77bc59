#pragma once

// Capacitated 3-D routing grid (x, y, layer), the problem file format, and
// the two-pin routing MDP the Q-network is trained on.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "qnroute/nn.hpp"

namespace qnroute {

struct Node {
  int x = 0;
  int y = 0;
  int layer = 0;

  friend bool operator==(const Node&, const Node&) = default;
  friend auto operator<=>(const Node&, const Node&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const Node& n) {
  return os << '(' << n.x << ',' << n.y << ',' << n.layer << ')';
}

inline int manhattan(const Node& a, const Node& b) {
  return std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.layer - b.layer);
}

// Action order is fixed: +x, -x, +y, -y, +layer, -layer.
enum class Move : int { plus_x = 0, minus_x, plus_y, minus_y, plus_layer, minus_layer };
inline constexpr int kActionCount = 6;
inline constexpr int kStateDim = 12;

inline Node shifted(Node n, int action) {
  switch (action) {
    case 0: ++n.x; break;
    case 1: --n.x; break;
    case 2: ++n.y; break;
    case 3: --n.y; break;
    case 4: ++n.layer; break;
    case 5: --n.layer; break;
    default: throw ContractError("action index out of range: " + std::to_string(action));
  }
  return n;
}

class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Column {
  int x = 0;
  int y = 0;
  friend bool operator==(const Column&, const Column&) = default;
  friend auto operator<=>(const Column&, const Column&) = default;
};

struct Net {
  std::string name;
  std::vector<Node> pins;
};

struct RoutingProblem {
  int size_x = 8;
  int size_y = 8;
  int layers = 2;
  int capacity = 5;
  std::vector<Column> blockages;  // blocks the column on every layer
  std::vector<Net> nets;

  bool in_bounds(const Node& n) const {
    return n.x >= 0 && n.x < size_x && n.y >= 0 && n.y < size_y && n.layer >= 0 && n.layer < layers;
  }
  bool blocked(const Node& n) const {
    for (const auto& b : blockages)
      if (b.x == n.x && b.y == n.y) return true;
    return false;
  }

  void validate() const {
    if (size_x < 1 || size_y < 1 || layers < 1) throw ContractError("grid dimensions must be positive");
    if (capacity < 0) throw ContractError("capacity must be nonnegative");
    for (const auto& b : blockages)
      if (b.x < 0 || b.x >= size_x || b.y < 0 || b.y >= size_y) throw ContractError("blockage outside the grid");
    for (const auto& net : nets) {
      if (net.pins.size() != 2) throw ContractError("net " + net.name + " must have exactly two pins");
      for (const auto& p : net.pins) {
        if (!in_bounds(p)) throw ContractError("net " + net.name + " has a pin outside the grid");
        if (blocked(p)) throw ContractError("net " + net.name + " has a pin on a blockage");
      }
      if (net.pins[0] == net.pins[1]) throw ContractError("net " + net.name + " has coincident pins");
    }
  }
};

inline void write_problem(std::ostream& os, const RoutingProblem& p) {
  os << "grid " << p.size_x << ' ' << p.size_y << ' ' << p.layers << '\n';
  os << "capacity " << p.capacity << '\n';
  os << "blockages " << p.blockages.size() << '\n';
  for (const auto& b : p.blockages) os << b.x << ' ' << b.y << '\n';
  os << "nets " << p.nets.size() << '\n';
  for (const auto& net : p.nets) {
    os << "net " << net.name << ' ' << net.pins.size() << '\n';
    for (const auto& pin : net.pins) os << pin.x << ' ' << pin.y << ' ' << pin.layer << '\n';
  }
}

inline std::string problem_to_string(const RoutingProblem& p) {
  std::ostringstream os;
  write_problem(os, p);
  return os.str();
}

namespace detail {

class LineReader {
public:
  explicit LineReader(std::istream& is) : is_(is) {}

  std::istringstream next(const char* what) {
    std::string line;
    while (std::getline(is_, line)) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return std::istringstream(line);
    }
    throw ParseError("unexpected end of file while reading " + std::string(what));
  }

  template <class... Ts>
  void expect(std::istringstream& ss, const char* what, Ts&... out) {
    if (!((ss >> out) && ...)) fail(std::string("malformed ") + what);
    std::string extra;
    if (ss >> extra) fail(std::string("trailing data after ") + what);
  }

  void keyword(std::istringstream& ss, const char* kw) {
    std::string word;
    if (!(ss >> word) || word != kw) fail(std::string("expected '") + kw + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("line " + std::to_string(line_no_) + ": " + msg);
  }

private:
  std::istream& is_;
  int line_no_ = 0;
};

}  // namespace detail

inline RoutingProblem read_problem(std::istream& is) {
  detail::LineReader in(is);
  RoutingProblem p;
  auto ss = in.next("grid");
  in.keyword(ss, "grid");
  in.expect(ss, "grid line", p.size_x, p.size_y, p.layers);
  ss = in.next("capacity");
  in.keyword(ss, "capacity");
  in.expect(ss, "capacity line", p.capacity);
  ss = in.next("blockages");
  in.keyword(ss, "blockages");
  int nb = 0;
  in.expect(ss, "blockages line", nb);
  if (nb < 0) in.fail("negative blockage count");
  for (int i = 0; i < nb; ++i) {
    ss = in.next("blockage");
    Column c;
    in.expect(ss, "blockage", c.x, c.y);
    p.blockages.push_back(c);
  }
  ss = in.next("nets");
  in.keyword(ss, "nets");
  int nn = 0;
  in.expect(ss, "nets line", nn);
  if (nn < 0) in.fail("negative net count");
  for (int i = 0; i < nn; ++i) {
    ss = in.next("net");
    in.keyword(ss, "net");
    Net net;
    int np = 0;
    in.expect(ss, "net header", net.name, np);
    if (np < 0) in.fail("negative pin count");
    for (int j = 0; j < np; ++j) {
      ss = in.next("pin");
      Node pin;
      in.expect(ss, "pin", pin.x, pin.y, pin.layer);
      net.pins.push_back(pin);
    }
    p.nets.push_back(std::move(net));
  }
  try {
    p.validate();
  } catch (const ContractError& e) {
    throw ParseError(e.what());
  }
  return p;
}

inline RoutingProblem problem_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_problem(is);
}

// FNV-1a over the canonical problem text; identifies which instance a run used.
inline std::uint64_t problem_hash(const RoutingProblem& p) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : problem_to_string(p)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Undirected edge between adjacent nodes, stored with a < b.
struct Edge {
  Node a;
  Node b;

  static Edge between(Node u, Node v) { return u < v ? Edge{u, v} : Edge{v, u}; }
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

class GridGraph {
public:
  GridGraph() = default;

  GridGraph(int size_x, int size_y, int layers, int capacity)
      : size_x_(size_x), size_y_(size_y), layers_(layers),
        initial_(static_cast<std::size_t>(size_x * size_y * layers * 3), capacity),
        usage_(initial_.size(), 0) {}

  static GridGraph from_problem(const RoutingProblem& p) {
    GridGraph g(p.size_x, p.size_y, p.layers, p.capacity);
    for (const auto& b : p.blockages)
      for (int l = 0; l < p.layers; ++l) {
        const Node n{b.x, b.y, l};
        for (int a = 0; a < kActionCount; ++a) {
          const Node m = shifted(n, a);
          if (g.in_bounds(m)) g.initial_[g.slot(Edge::between(n, m))] = 0;
        }
      }
    return g;
  }

  int size_x() const { return size_x_; }
  int size_y() const { return size_y_; }
  int layers() const { return layers_; }
  std::size_t node_count() const { return static_cast<std::size_t>(size_x_ * size_y_ * layers_); }

  bool in_bounds(const Node& n) const {
    return n.x >= 0 && n.x < size_x_ && n.y >= 0 && n.y < size_y_ && n.layer >= 0 && n.layer < layers_;
  }

  std::size_t node_index(const Node& n) const {
    return static_cast<std::size_t>((n.layer * size_y_ + n.y) * size_x_ + n.x);
  }
  Node node_at(std::size_t i) const {
    const int idx = static_cast<int>(i);
    return {idx % size_x_, (idx / size_x_) % size_y_, idx / (size_x_ * size_y_)};
  }

  bool is_edge(const Edge& e) const {
    return in_bounds(e.a) && in_bounds(e.b) && manhattan(e.a, e.b) == 1;
  }

  int initial_capacity(const Edge& e) const { return initial_[checked_slot(e)]; }
  int usage(const Edge& e) const { return usage_[checked_slot(e)]; }
  int remaining(const Edge& e) const {
    const auto s = checked_slot(e);
    return initial_[s] - usage_[s];
  }

  // Remaining capacity when moving from n by action; 0 off the grid.
  int remaining_toward(const Node& n, int action) const {
    const Node m = shifted(n, action);
    if (!in_bounds(n) || !in_bounds(m)) return 0;
    return remaining(Edge::between(n, m));
  }

  void add_usage(const Edge& e, int amount = 1) { usage_[checked_slot(e)] += amount; }

  void clear_usage() { std::fill(usage_.begin(), usage_.end(), 0); }

  // Edges, each exactly once, in slot order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t i = 0; i < node_count(); ++i) {
      const Node n = node_at(i);
      for (int a : {0, 2, 4}) {
        const Node m = shifted(n, a);
        if (in_bounds(m)) out.push_back({n, m});
      }
    }
    return out;
  }

private:
  // Each edge is owned by its lower endpoint and indexed by axis.
  std::size_t slot(Edge e) const {
    e = Edge::between(e.a, e.b);
    const int axis = e.b.x != e.a.x ? 0 : (e.b.y != e.a.y ? 1 : 2);
    return node_index(e.a) * 3 + static_cast<std::size_t>(axis);
  }
  std::size_t checked_slot(const Edge& e) const {
    if (!is_edge(e)) {
      std::ostringstream os;
      os << "not a grid edge: " << e.a << "-" << e.b;
      throw ContractError(os.str());
    }
    return slot(e);
  }

  int size_x_ = 0;
  int size_y_ = 0;
  int layers_ = 0;
  std::vector<int> initial_;
  std::vector<int> usage_;
};

// Splices out every revisit so the result is a simple path with the same endpoints.
inline std::vector<Node> remove_loops(const std::vector<Node>& walk) {
  std::vector<Node> path;
  for (const Node& n : walk) {
    auto it = std::find(path.begin(), path.end(), n);
    if (it != path.end())
      path.erase(it + 1, path.end());
    else
      path.push_back(n);
  }
  return path;
}

inline std::vector<Edge> path_edges(const std::vector<Node>& path) {
  std::vector<Edge> out;
  for (std::size_t i = 1; i < path.size(); ++i) out.push_back(Edge::between(path[i - 1], path[i]));
  return out;
}

struct StepResult {
  Eigen::VectorXd state;  // s' of the transition
  double reward = 0.0;
  bool terminal = false;  // reached the target pin
  bool truncated = false;  // step limit hit without reaching it
};

struct PairOutcome {
  bool reached = false;
  int steps = 0;
  std::vector<Node> walk;  // every position occupied, starting at the source pin
  std::vector<Node> path;  // walk with loops removed; what gets committed
};

struct EpisodeTrace {
  std::vector<PairOutcome> pairs;  // one per net, in net order
  double cumulative_reward = 0.0;
  int pins_routed = 0;
  int penalty_steps = 0;
};

class RouteEnv {
public:
  static constexpr double kGoalReward = 100.0;
  static constexpr double kStepReward = -1.0;

  explicit RouteEnv(RoutingProblem problem, int max_steps = 50)
      : problem_(validated(std::move(problem))), max_steps_(max_steps), grid_(GridGraph::from_problem(problem_)) {
    if (max_steps_ < 1) throw ContractError("max steps must be at least 1");
  }

  const RoutingProblem& problem() const { return problem_; }
  const GridGraph& grid() const { return grid_; }
  const EpisodeTrace& trace() const { return trace_; }
  int max_steps() const { return max_steps_; }
  std::size_t pair_count() const { return problem_.nets.size(); }
  std::size_t current_pair() const { return pair_; }

  // True while a two-pin problem is armed and has not finished.
  bool in_pair() const { return pair_ < problem_.nets.size() && !pair_done_; }
  // True until every pair of the episode has been finished.
  bool episode_active() const { return pair_ < problem_.nets.size(); }
  bool pair_finished() const { return pair_done_; }

  const Node& agent() const { return agent_; }
  const Node& target() const { return target_; }

  Eigen::VectorXd reset_episode() {
    grid_.clear_usage();
    trace_ = {};
    pair_ = 0;
    arm();
    return encode_state();
  }

  Eigen::VectorXd encode_state() const {
    Eigen::VectorXd s(kStateDim);
    s << agent_.x, agent_.y, agent_.layer, target_.x - agent_.x, target_.y - agent_.y, target_.layer - agent_.layer,
        0, 0, 0, 0, 0, 0;
    for (int a = 0; a < kActionCount; ++a) s(6 + a) = grid_.remaining_toward(agent_, a);
    return s;
  }

  StepResult step(int action) {
    if (!in_pair()) throw ContractError("step called with no active two-pin problem");
    if (action < 0 || action >= kActionCount) throw ContractError("action index out of range");
    if (grid_.remaining_toward(agent_, action) > 0) {
      agent_ = shifted(agent_, action);
      current_.walk.push_back(agent_);
    }
    ++current_.steps;
    StepResult r;
    if (agent_ == target_) {
      r.reward = kGoalReward;
      r.terminal = true;
      current_.reached = true;
      pair_done_ = true;
      ++trace_.pins_routed;
    } else {
      r.reward = kStepReward;
      ++trace_.penalty_steps;
      if (current_.steps >= max_steps_) {
        r.truncated = true;
        pair_done_ = true;
      }
    }
    trace_.cumulative_reward += r.reward;
    r.state = encode_state();
    return r;
  }

  // Commits the finished pair's simplified path and arms the next pair.
  void commit_route() {
    if (!pair_done_ || !current_.reached) throw ContractError("commit_route needs a pair that reached its target");
    current_.path = remove_loops(current_.walk);
    for (const Edge& e : path_edges(current_.path)) grid_.add_usage(e);
    advance();
  }

  // Finishes a pair that ran out of steps; the grid is left untouched.
  void skip_pair() {
    if (!pair_done_ || current_.reached) throw ContractError("skip_pair needs a pair that failed");
    advance();
  }

  void finish_pair() {
    if (current_.reached)
      commit_route();
    else
      skip_pair();
  }

private:
  static RoutingProblem validated(RoutingProblem p) {
    p.validate();
    return p;
  }

  void arm() {
    pair_done_ = false;
    current_ = {};
    if (pair_ < problem_.nets.size()) {
      agent_ = problem_.nets[pair_].pins[0];
      target_ = problem_.nets[pair_].pins[1];
      current_.walk.push_back(agent_);
    }
  }

  void advance() {
    trace_.pairs.push_back(std::move(current_));
    ++pair_;
    arm();
  }

  RoutingProblem problem_;
  int max_steps_;
  GridGraph grid_;
  EpisodeTrace trace_;
  std::size_t pair_ = 0;
  bool pair_done_ = true;
  PairOutcome current_;
  Node agent_;
  Node target_;
};

}  // namespace qnroute
