#pragma once

// Sequential A* baseline router on the capacitated grid.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <tuple>
#include <vector>

#include "qnroute/route_env.hpp"
#include "qnroute/route_solution.hpp"

namespace qnroute {

// Shortest path over edges with remaining capacity >= 1, unit costs,
// Manhattan heuristic (layer included). Open-list ties break on g, then on
// node index, so the result is fully deterministic.
inline std::optional<std::vector<Node>> astar_route_pin_pair(const GridGraph& grid, const Node& start,
                                                             const Node& goal) {
  if (!grid.in_bounds(start) || !grid.in_bounds(goal)) throw ContractError("A*: endpoint outside the grid");
  if (start == goal) return std::vector<Node>{start};

  const std::size_t n = grid.node_count();
  constexpr int kInf = std::numeric_limits<int>::max();
  std::vector<int> g(n, kInf);
  std::vector<std::size_t> parent(n, n);
  std::vector<char> closed(n, 0);

  using Entry = std::tuple<int, int, std::size_t>;  // f, g, node
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  const std::size_t s = grid.node_index(start);
  const std::size_t t = grid.node_index(goal);
  g[s] = 0;
  open.emplace(manhattan(start, goal), 0, s);

  while (!open.empty()) {
    const auto [f, gc, u] = open.top();
    open.pop();
    if (closed[u]) continue;
    closed[u] = 1;
    if (u == t) break;
    const Node un = grid.node_at(u);
    for (int a = 0; a < kActionCount; ++a) {
      if (grid.remaining_toward(un, a) < 1) continue;
      const Node vn = shifted(un, a);
      const std::size_t v = grid.node_index(vn);
      if (closed[v] || gc + 1 >= g[v]) continue;
      g[v] = gc + 1;
      parent[v] = u;
      open.emplace(g[v] + manhattan(vn, goal), g[v], v);
    }
  }
  if (!closed[t]) return std::nullopt;

  std::vector<Node> path;
  for (std::size_t v = t; v != n; v = parent[v]) path.push_back(grid.node_at(v));
  std::reverse(path.begin(), path.end());
  return path;
}

// Nets in file order; each routed net consumes one unit on every edge it uses.
inline RouteSolution route_all(const RoutingProblem& problem) {
  problem.validate();
  GridGraph grid = GridGraph::from_problem(problem);
  RouteSolution sol;
  for (const auto& net : problem.nets) {
    auto path = astar_route_pin_pair(grid, net.pins[0], net.pins[1]);
    if (!path) {
      sol.unrouted.push_back(net.name);
      continue;
    }
    for (const Edge& e : path_edges(*path)) grid.add_usage(e);
    sol.nets.push_back(route_from_path(net.name, *path));
  }
  return sol;
}

}  // namespace qnroute
