#pragma once

#include <cstddef>
#include <vector>

#include "luna/core.hpp"

namespace luna::transport {

/// Discrete transport between `supply` (rows) and `demand` (columns); both sum
/// to 1. `cost` is row-major, supply.size() x demand.size().
struct Problem {
  std::vector<double> supply;
  std::vector<double> demand;
  std::vector<double> cost;

  std::size_t rows() const noexcept { return supply.size(); }
  std::size_t cols() const noexcept { return demand.size(); }
  double at(std::size_t i, std::size_t j) const { return cost[i * demand.size() + j]; }
};

struct SinkhornOptions {
  double epsilon = 0.1;
  int max_iter = 10'000;
  double tol = 1e-9;
};

struct Solution {
  std::vector<double> plan;  // row-major, same shape as the cost matrix
  double cost = 0.0;
  bool exact = true;
  int iterations = 0;
};

/// Checks shapes, non-negativity and finiteness. Weight sums off by more than
/// 1e-9 are a ConfigError; smaller drift is renormalised (with a warning when
/// it exceeds 1e-12).
Problem validated(Problem p, WarningSink* sink = nullptr);

/// Minimum-cost flow by successive shortest augmenting paths with reduced-cost
/// potentials.
Solution solve_exact(const Problem& p);

/// Entropic-regularised scaling in the log domain.
Solution solve_sinkhorn(const Problem& p, const SinkhornOptions& options = {});

/// Exact when max(rows, cols) <= exact_cap, Sinkhorn otherwise.
Solution solve_transport(const Problem& p, std::size_t exact_cap = 64, const SinkhornOptions& options = {},
                         WarningSink* sink = nullptr);

}  // namespace luna::transport
