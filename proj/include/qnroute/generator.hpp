#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "qnroute/route_env.hpp"

namespace qnroute {

struct GenSpec {
  int size_x = 8;
  int size_y = 8;
  int layers = 2;
  int nets = 50;
  int pins_per_net = 2;
  int capacity = 5;
  int blockages = 3;
  std::uint64_t seed = 0;
};

class GenerationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// SplitMix64 finalizer; used to derive independent per-trial seeds from one
// master seed and a counter.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t counter) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Blockages first (distinct columns), then two distinct free pins per net.
inline RoutingProblem generate(const GenSpec& spec) {
  if (spec.size_x < 1 || spec.size_y < 1 || spec.layers < 1) throw GenerationError("grid dimensions must be positive");
  if (spec.nets < 0 || spec.blockages < 0 || spec.capacity < 0) throw GenerationError("counts must be nonnegative");
  if (spec.pins_per_net != 2) throw GenerationError("only two-pin nets are supported");
  const int columns = spec.size_x * spec.size_y;
  if (spec.blockages >= columns) throw GenerationError("too many blockages for the grid");
  const int free_nodes = (columns - spec.blockages) * spec.layers;
  if (spec.nets > 0 && free_nodes < spec.pins_per_net) throw GenerationError("not enough free nodes for a net");

  std::mt19937_64 rng(spec.seed);
  RoutingProblem p;
  p.size_x = spec.size_x;
  p.size_y = spec.size_y;
  p.layers = spec.layers;
  p.capacity = spec.capacity;

  std::vector<int> cols(static_cast<std::size_t>(columns));
  for (int i = 0; i < columns; ++i) cols[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < spec.blockages; ++i) {
    std::uniform_int_distribution<int> pick(i, columns - 1);
    std::swap(cols[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(pick(rng))]);
    const int c = cols[static_cast<std::size_t>(i)];
    p.blockages.push_back({c % spec.size_x, c / spec.size_x});
  }

  std::uniform_int_distribution<int> ux(0, spec.size_x - 1), uy(0, spec.size_y - 1), ul(0, spec.layers - 1);
  auto free_pin = [&] {
    for (;;) {
      const Node n{ux(rng), uy(rng), ul(rng)};
      if (!p.blocked(n)) return n;
    }
  };
  for (int i = 0; i < spec.nets; ++i) {
    Net net{"n" + std::to_string(i), {}};
    const Node a = free_pin();
    Node b = free_pin();
    while (b == a) b = free_pin();
    net.pins = {a, b};
    p.nets.push_back(std::move(net));
  }
  return p;
}

}  // namespace qnroute
