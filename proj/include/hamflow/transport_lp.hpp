#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hamflow {

/// Internal failure of a numerical solver (e.g. the transportation simplex did not terminate).
class SolverError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar> struct TransportationSolution
{
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> flow;
  Scalar cost = 0;
  Eigen::Index pivots = 0;
};

/**
 * Exact solver for the balanced transportation LP
 *
 *   min sum_ij c_ij g_ij   s.t.  sum_j g_ij = a_i,  sum_i g_ij = b_j,  g >= 0.
 *
 * Primal transportation simplex on a spanning-tree basis (n + m - 1 cells, degenerate zeros kept),
 * started from the north-west corner rule. Pivoting follows Bland's rule with cells ordered
 * row-major: the entering cell is the first one with negative reduced cost, the leaving cell is the
 * first minimal cell on the cycle. This terminates under degeneracy and makes the returned vertex a
 * deterministic function of the input.
 */
template <typename Scalar>
TransportationSolution<Scalar> solve_transportation(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> &cost,
                                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> &supply,
                                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> &demand)
{
  using Index = Eigen::Index;
  const Index n = cost.rows();
  const Index m = cost.cols();
  if (supply.size() != n || demand.size() != m || n == 0 || m == 0) {
    throw std::invalid_argument("solve_transportation: marginal sizes do not match cost matrix");
  }

  TransportationSolution<Scalar> out;
  out.flow.setZero(n, m);
  std::vector<char> basic(static_cast<std::size_t>(n * m), 0);
  auto cell = [m](Index i, Index j) { return static_cast<std::size_t>(i * m + j); };

  // North-west corner: exactly n + m - 1 basic cells forming a staircase tree.
  {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> a = supply;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> b = demand;
    Index i = 0;
    Index j = 0;
    while (true) {
      const Scalar x = std::max(Scalar(0), std::min(a(i), b(j)));
      out.flow(i, j) = x;
      basic[cell(i, j)] = 1;
      a(i) -= x;
      b(j) -= x;
      if (i == n - 1 && j == m - 1) {
        break;
      }
      if (i == n - 1) {
        ++j;
      } else if (j == m - 1) {
        ++i;
      } else if (a(i) <= b(j)) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  const Scalar cmax = std::max(Scalar(1), cost.cwiseAbs().maxCoeff());
  const Scalar rc_tol = Scalar(256) * std::numeric_limits<Scalar>::epsilon() * cmax;
  const Index max_pivots = 64 * n * m + 1024;

  // Tree nodes: rows are 0..n-1, columns are n..n+m-1.
  std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n + m));
  std::vector<Scalar> potential(static_cast<std::size_t>(n + m));
  std::vector<Index> parent(static_cast<std::size_t>(n + m));
  std::vector<Index> queue;
  queue.reserve(static_cast<std::size_t>(n + m));

  auto rebuild_adjacency = [&]() {
    for (auto &a : adj) {
      a.clear();
    }
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < m; ++j) {
        if (basic[cell(i, j)]) {
          adj[static_cast<std::size_t>(i)].push_back(n + j);
          adj[static_cast<std::size_t>(n + j)].push_back(i);
        }
      }
    }
  };

  // BFS over the basis tree from `root`; fills parent[] (and potentials when requested).
  auto traverse = [&](Index root, bool with_potentials) {
    std::fill(parent.begin(), parent.end(), Index(-1));
    parent[static_cast<std::size_t>(root)] = root;
    if (with_potentials) {
      potential[static_cast<std::size_t>(root)] = 0;
    }
    queue.clear();
    queue.push_back(root);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const Index u = queue[head];
      for (Index v : adj[static_cast<std::size_t>(u)]) {
        if (parent[static_cast<std::size_t>(v)] != -1) {
          continue;
        }
        parent[static_cast<std::size_t>(v)] = u;
        if (with_potentials) {
          // u_i + v_j = c_ij on basic cells.
          const Index i = u < n ? u : v;
          const Index j = (u < n ? v : u) - n;
          potential[static_cast<std::size_t>(v)] = cost(i, j) - potential[static_cast<std::size_t>(u)];
        }
        queue.push_back(v);
      }
    }
    if (static_cast<Index>(queue.size()) != n + m) {
      throw SolverError("solve_transportation: basis is not a spanning tree");
    }
  };

  rebuild_adjacency();
  std::vector<std::pair<Index, Index>> cycle;
  for (;;) {
    traverse(0, true);

    Index enter_i = -1;
    Index enter_j = -1;
    for (Index i = 0; i < n && enter_i < 0; ++i) {
      for (Index j = 0; j < m; ++j) {
        if (basic[cell(i, j)]) {
          continue;
        }
        const Scalar reduced =
            cost(i, j) - potential[static_cast<std::size_t>(i)] - potential[static_cast<std::size_t>(n + j)];
        if (reduced < -rc_tol) {
          enter_i = i;
          enter_j = j;
          break;
        }
      }
    }
    if (enter_i < 0) {
      break;
    }
    if (++out.pivots > max_pivots) {
      throw SolverError("solve_transportation: pivot limit exceeded (" + std::to_string(max_pivots) + ")");
    }

    // Tree path from column node enter_j back to row node enter_i.
    traverse(enter_i, false);
    cycle.clear();
    for (Index node = n + enter_j; node != enter_i;) {
      const Index up = parent[static_cast<std::size_t>(node)];
      const Index i = node < n ? node : up;
      const Index j = (node < n ? up : node) - n;
      cycle.emplace_back(i, j);
      node = up;
    }
    // Walking from column enter_j, the first path cell loses mass, then signs alternate.
    Scalar theta = std::numeric_limits<Scalar>::infinity();
    std::size_t leave = 0;
    bool have_leave = false;
    for (std::size_t k = 0; k < cycle.size(); k += 2) {
      const auto [i, j] = cycle[k];
      const Scalar x = out.flow(i, j);
      if (x < theta || (x == theta && have_leave && cell(i, j) < cell(cycle[leave].first, cycle[leave].second))) {
        theta = x;
        leave = k;
        have_leave = true;
      }
    }
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      const auto [i, j] = cycle[k];
      if (k % 2 == 0) {
        out.flow(i, j) -= theta;
      } else {
        out.flow(i, j) += theta;
      }
    }
    out.flow(enter_i, enter_j) += theta;
    const auto [li, lj] = cycle[leave];
    out.flow(li, lj) = 0;
    basic[cell(li, lj)] = 0;
    basic[cell(enter_i, enter_j)] = 1;
    rebuild_adjacency();
  }

  out.flow = out.flow.cwiseMax(Scalar(0));
  out.cost = out.flow.cwiseProduct(cost).sum();
  return out;
}

} // namespace hamflow
