#pragma once

// Routed-net solutions, their text format, and the wirelength / overflow
// evaluator.

#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qnroute/route_env.hpp"

namespace qnroute {

class ValidationError : public std::runtime_error {
public:
  ValidationError(std::string net, const std::string& msg)
      : std::runtime_error("net " + net + ": " + msg), net_(std::move(net)) {}
  const std::string& net() const { return net_; }

private:
  std::string net_;
};

struct NetRoute {
  std::string name;
  std::vector<Edge> edges;  // in path order; each edge keeps its walking direction (a -> b)
};

struct RouteSolution {
  std::vector<NetRoute> nets;
  std::vector<std::string> unrouted;
};

struct RouteMetrics {
  long wirelength = 0;
  long overflow = 0;
  int nets_routed = 0;
};

// Path edges oriented along the walk, unlike Edge::between.
inline NetRoute route_from_path(const std::string& name, const std::vector<Node>& path) {
  NetRoute r{name, {}};
  for (std::size_t i = 1; i < path.size(); ++i) r.edges.push_back({path[i - 1], path[i]});
  return r;
}

inline void write_solution(std::ostream& os, const RouteSolution& sol) {
  for (const auto& net : sol.nets) {
    os << "net " << net.name << '\n';
    for (const auto& e : net.edges)
      os << e.a.x << ' ' << e.a.y << ' ' << e.a.layer << ' ' << e.b.x << ' ' << e.b.y << ' ' << e.b.layer << '\n';
  }
}

inline std::string solution_to_string(const RouteSolution& sol) {
  std::ostringstream os;
  write_solution(os, sol);
  return os.str();
}

inline RouteSolution read_solution(std::istream& is) {
  RouteSolution sol;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string first;
    if (!(ss >> first)) continue;
    if (first == "net") {
      NetRoute r;
      if (!(ss >> r.name)) throw ParseError("line " + std::to_string(line_no) + ": net without a name");
      sol.nets.push_back(std::move(r));
      continue;
    }
    if (sol.nets.empty()) throw ParseError("line " + std::to_string(line_no) + ": edge before any net header");
    std::istringstream es(line);
    Edge e;
    std::string extra;
    if (!(es >> e.a.x >> e.a.y >> e.a.layer >> e.b.x >> e.b.y >> e.b.layer) || (es >> extra))
      throw ParseError("line " + std::to_string(line_no) + ": malformed edge");
    sol.nets.back().edges.push_back(e);
  }
  return sol;
}

inline RouteSolution solution_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_solution(is);
}

namespace detail {

// Walks the edge list from one pin and checks it ends on the other.
inline bool walks_between(const std::vector<Edge>& edges, const Node& from, const Node& to) {
  Node at = from;
  for (const auto& e : edges) {
    if (e.a == at)
      at = e.b;
    else if (e.b == at)
      at = e.a;
    else
      return false;
  }
  return at == to;
}

}  // namespace detail

inline void validate_route(const GridGraph& grid, const Net& net, const NetRoute& r) {
  if (r.edges.empty()) throw ValidationError(net.name, "empty path");
  for (const auto& e : r.edges)
    if (!grid.is_edge(Edge::between(e.a, e.b))) {
      std::ostringstream os;
      os << "invalid grid edge " << e.a << "-" << e.b;
      throw ValidationError(net.name, os.str());
    }
  const Node& p0 = net.pins[0];
  const Node& p1 = net.pins[1];
  if (!detail::walks_between(r.edges, p0, p1) && !detail::walks_between(r.edges, p1, p0))
    throw ValidationError(net.name, "path is not contiguous between the pins");
}

inline RouteMetrics evaluate(const RoutingProblem& problem, const RouteSolution& sol) {
  const GridGraph grid = GridGraph::from_problem(problem);
  std::map<std::string, const Net*> by_name;
  for (const auto& net : problem.nets) by_name.emplace(net.name, &net);

  RouteMetrics m;
  std::map<Edge, int> usage;
  std::set<std::string> seen;
  for (const auto& r : sol.nets) {
    auto it = by_name.find(r.name);
    if (it == by_name.end()) throw ValidationError(r.name, "not in the problem");
    if (!seen.insert(r.name).second) throw ValidationError(r.name, "routed more than once");
    validate_route(grid, *it->second, r);
    m.wirelength += static_cast<long>(r.edges.size());
    ++m.nets_routed;
    std::set<Edge> mine;
    for (const auto& e : r.edges) mine.insert(Edge::between(e.a, e.b));
    for (const auto& e : mine) ++usage[e];
  }
  for (const auto& [e, used] : usage) m.overflow += std::max(0, used - grid.initial_capacity(e));
  return m;
}

}  // namespace qnroute
