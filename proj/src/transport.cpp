#include "luna/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace luna::transport {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Residual masses below this are treated as exhausted.
constexpr double kMassEps = 1e-14;

[[noreturn]] void bad_problem(const std::string& why) {
  throw MetricError(ErrorKind::ConfigError, "transport", why);
}

void normalize_weights(std::vector<double>& w, const char* side, WarningSink* sink) {
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) bad_problem(std::string(side) + " weights must be finite and >= 0");
    sum += x;
  }
  const double drift = std::abs(sum - 1.0);
  if (drift > 1e-9) bad_problem(std::string(side) + " weights sum to " + std::to_string(sum) + ", expected 1");
  if (drift > 1e-12 && sink) sink->warn("transport", std::string(side) + " weights renormalised");
  for (double& x : w) x /= sum;
}

double plan_cost(const Problem& p, const std::vector<double>& plan) {
  double c = 0.0;
  for (std::size_t k = 0; k < plan.size(); ++k) c += plan[k] * p.cost[k];
  return c;
}

// Projects a near-feasible plan onto the exact marginals: shrink overfull rows
// and columns, then spread the missing mass as a rank-one correction.
void round_to_marginals(const Problem& p, std::vector<double>& plan) {
  const std::size_t m = p.rows();
  const std::size_t n = p.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += plan[i * n + j];
    if (row > p.supply[i]) {
      const double k = p.supply[i] / row;
      for (std::size_t j = 0; j < n; ++j) plan[i * n + j] *= k;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < m; ++i) col += plan[i * n + j];
    if (col > p.demand[j]) {
      const double k = p.demand[j] / col;
      for (std::size_t i = 0; i < m; ++i) plan[i * n + j] *= k;
    }
  }
  std::vector<double> row_gap(m), col_gap(n);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += plan[i * n + j];
    row_gap[i] = std::max(0.0, p.supply[i] - row);
    total += row_gap[i];
  }
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < m; ++i) col += plan[i * n + j];
    col_gap[j] = std::max(0.0, p.demand[j] - col);
  }
  if (!(total > 0.0)) return;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) plan[i * n + j] += row_gap[i] * col_gap[j] / total;
  }
}

}  // namespace

Problem validated(Problem p, WarningSink* sink) {
  if (p.supply.empty() || p.demand.empty()) bad_problem("empty supply or demand");
  if (p.cost.size() != p.supply.size() * p.demand.size()) bad_problem("cost matrix shape does not match weights");
  for (double c : p.cost) {
    if (!std::isfinite(c)) bad_problem("cost matrix has a non-finite entry");
  }
  normalize_weights(p.supply, "supply", sink);
  normalize_weights(p.demand, "demand", sink);
  return p;
}

Solution solve_exact(const Problem& p) {
  const std::size_t m = p.rows();
  const std::size_t n = p.cols();
  const std::size_t nodes = m + n;  // sources 0..m-1, sinks m..m+n-1

  // Shift so every cost is >= 0; zero potentials are then feasible.
  const double shift = std::min(0.0, *std::min_element(p.cost.begin(), p.cost.end()));
  auto cost = [&](std::size_t i, std::size_t j) { return p.at(i, j) - shift; };

  std::vector<double> supply = p.supply, demand = p.demand;
  std::vector<double> flow(m * n, 0.0);
  std::vector<double> pi(nodes, 0.0);
  std::vector<double> dist(nodes);
  std::vector<std::size_t> pred(nodes);
  std::vector<bool> done(nodes);
  constexpr std::size_t kNoPred = std::numeric_limits<std::size_t>::max();

  double remaining = 0.0;
  for (double s : supply) remaining += s;

  const std::size_t max_rounds = 8 * (nodes + 1) * (nodes + 1);
  int rounds = 0;
  while (remaining > kMassEps && static_cast<std::size_t>(rounds) < max_rounds) {
    ++rounds;
    // Multi-source Dijkstra on reduced costs; the offset keeps the virtual
    // source edges non-negative.
    double offset = -kInf;
    for (std::size_t i = 0; i < m; ++i) {
      if (supply[i] > kMassEps) offset = std::max(offset, pi[i]);
    }
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(pred.begin(), pred.end(), kNoPred);
    std::fill(done.begin(), done.end(), false);
    for (std::size_t i = 0; i < m; ++i) {
      if (supply[i] > kMassEps) dist[i] = offset - pi[i];
    }

    for (std::size_t step = 0; step < nodes; ++step) {
      std::size_t u = kNoPred;
      for (std::size_t v = 0; v < nodes; ++v) {
        if (!done[v] && dist[v] < kInf && (u == kNoPred || dist[v] < dist[u])) u = v;
      }
      if (u == kNoPred) break;
      done[u] = true;
      if (u < m) {
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t v = m + j;
          if (done[v]) continue;
          const double rc = std::max(0.0, cost(u, j) + pi[u] - pi[v]);
          if (dist[u] + rc < dist[v]) {
            dist[v] = dist[u] + rc;
            pred[v] = u;
          }
        }
      } else {
        const std::size_t j = u - m;
        for (std::size_t i = 0; i < m; ++i) {
          if (done[i] || flow[i * n + j] <= kMassEps) continue;
          const double rc = std::max(0.0, -cost(i, j) + pi[u] - pi[i]);
          if (dist[u] + rc < dist[i]) {
            dist[i] = dist[u] + rc;
            pred[i] = u;
          }
        }
      }
    }

    // Cheapest sink with demand left, compared on true path cost.
    std::size_t target = kNoPred;
    double best = kInf;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t v = m + j;
      if (demand[j] <= kMassEps || dist[v] == kInf) continue;
      const double real = dist[v] - offset + pi[v];
      if (real < best) {
        best = real;
        target = v;
      }
    }
    if (target == kNoPred) break;

    double max_dist = 0.0;
    for (double d : dist) {
      if (d < kInf) max_dist = std::max(max_dist, d);
    }
    for (std::size_t v = 0; v < nodes; ++v) pi[v] += dist[v] < kInf ? dist[v] : max_dist;

    double delta = demand[target - m];
    std::size_t v = target;
    while (pred[v] != kNoPred) {
      const std::size_t u = pred[v];
      if (u >= m) delta = std::min(delta, flow[v * n + (u - m)]);  // sink u -> source v undoes flow
      v = u;
    }
    const std::size_t origin = v;
    delta = std::min(delta, supply[origin]);

    v = target;
    while (pred[v] != kNoPred) {
      const std::size_t u = pred[v];
      if (u < m) {
        flow[u * n + (v - m)] += delta;
      } else {
        double& f = flow[v * n + (u - m)];
        f -= delta;
        if (f < kMassEps) f = 0.0;
      }
      v = u;
    }
    supply[origin] -= delta;
    demand[target - m] -= delta;
    remaining -= delta;
  }

  Solution s;
  s.plan = std::move(flow);
  s.cost = plan_cost(p, s.plan);
  s.exact = true;
  s.iterations = rounds;
  return s;
}

Solution solve_sinkhorn(const Problem& p, const SinkhornOptions& options) {
  const std::size_t m = p.rows();
  const std::size_t n = p.cols();
  const double eps = options.epsilon;
  if (!(eps > 0.0)) bad_problem("sinkhorn epsilon must be positive");

  std::vector<double> log_a(m), log_b(n);
  for (std::size_t i = 0; i < m; ++i) log_a[i] = p.supply[i] > 0.0 ? std::log(p.supply[i]) : -kInf;
  for (std::size_t j = 0; j < n; ++j) log_b[j] = p.demand[j] > 0.0 ? std::log(p.demand[j]) : -kInf;

  std::vector<double> f(m, 0.0), g(n, 0.0);
  std::vector<double> buf(std::max(m, n));

  auto lse = [](std::span<const double> xs) {
    double mx = -kInf;
    for (double x : xs) mx = std::max(mx, x);
    if (mx == -kInf) return -kInf;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - mx);
    return mx + std::log(s);
  };

  auto update_rows = [&] {
    for (std::size_t i = 0; i < m; ++i) {
      if (log_a[i] == -kInf) {
        f[i] = -kInf;
        continue;
      }
      for (std::size_t j = 0; j < n; ++j) buf[j] = (g[j] - p.at(i, j)) / eps;
      f[i] = eps * (log_a[i] - lse({buf.data(), n}));
    }
  };
  auto update_cols = [&] {
    for (std::size_t j = 0; j < n; ++j) {
      if (log_b[j] == -kInf) {
        g[j] = -kInf;
        continue;
      }
      for (std::size_t i = 0; i < m; ++i) buf[i] = (f[i] - p.at(i, j)) / eps;
      g[j] = eps * (log_b[j] - lse({buf.data(), m}));
    }
  };
  auto entry = [&](std::size_t i, std::size_t j) {
    if (f[i] == -kInf || g[j] == -kInf) return 0.0;
    return std::exp((f[i] + g[j] - p.at(i, j)) / eps);
  };

  int it = 0;
  for (; it < options.max_iter; ++it) {
    update_rows();
    update_cols();
    // Columns are exact after the column update; measure the row violation.
    double err = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) row += entry(i, j);
      err += std::abs(row - p.supply[i]);
    }
    if (err < options.tol) {
      ++it;
      break;
    }
  }

  Solution s;
  s.plan.resize(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) s.plan[i * n + j] = entry(i, j);
  }
  round_to_marginals(p, s.plan);
  s.cost = plan_cost(p, s.plan);
  s.exact = false;
  s.iterations = it;
  return s;
}

Solution solve_transport(const Problem& p, std::size_t exact_cap, const SinkhornOptions& options,
                         WarningSink* sink) {
  const Problem q = validated(p, sink);
  if (std::max(q.rows(), q.cols()) <= exact_cap) return solve_exact(q);
  return solve_sinkhorn(q, options);
}

}  // namespace luna::transport
