// Copyright 2026 The hlspot Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <limits>

#include "hlspot/matching.hpp"

namespace hlspot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Solution {
  double cost = 0.0;
  std::vector<int> assignment;  // row -> column (indices into the subproblem)
  std::vector<double> u, v;     // optimal duals, rows / columns
};

// Shortest augmenting path Hungarian algorithm (potentials), rows <= cols.
// Column duals stay <= 0 and are negative only on assigned columns, so the
// returned (u, v) is an optimal dual of the rectangular assignment LP.
Solution solve(const std::vector<int>& rows, const std::vector<int>& cols, const CostMatrix& c) {
  const int n = static_cast<int>(rows.size()), m = static_cast<int>(cols.size());
  Solution s;
  s.assignment.assign(n, -1);
  if (n == 0) {
    s.v.assign(m, 0.0);
    return s;
  }
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      const auto& row = c[rows[i0 - 1]];
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = row[cols[j - 1]] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) s.assignment[p[j] - 1] = j - 1;
  for (int i = 0; i < n; ++i) s.cost += c[rows[i]][cols[s.assignment[i]]];
  s.u.assign(u.begin() + 1, u.end());
  s.v.assign(v.begin() + 1, v.end());
  return s;
}

}  // namespace

MatchResult hungarian(const CostMatrix& cost) {
  const int g = static_cast<int>(cost.size());
  const int q = g == 0 ? 0 : static_cast<int>(cost[0].size());
  if (g > q)
    throw ContractError("hungarian: " + std::to_string(g) + " ground truths but only " +
                        std::to_string(q) + " predictions");
  double scale = 1.0;
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != q) throw DimensionError("hungarian: ragged cost matrix");
    for (double x : row) {
      if (!std::isfinite(x)) throw ContractError("hungarian: non-finite cost");
      scale = std::max(scale, std::abs(x));
    }
  }

  std::vector<int> rows(g), cols(q);
  for (int i = 0; i < g; ++i) rows[i] = i;
  for (int j = 0; j < q; ++j) cols[j] = j;
  const Solution best = solve(rows, cols, cost);
  const double tol = 1e-9 * scale * (g + 1);

  // Lexicographic tie-break. An edge can appear in an optimal assignment
  // only if it is tight under the optimal duals, so only tight candidates
  // are re-verified by solving the remaining subproblem.
  MatchResult result;
  std::vector<char> taken(q, 0);
  double fixed = 0.0;
  bool on_best = true;  // every row so far kept its column from `best`
  for (int i = 0; i < g; ++i) {
    const std::vector<int> rest_rows(rows.begin() + i + 1, rows.end());
    auto completes = [&](int j) {
      if (on_best && j == best.assignment[i]) return true;
      std::vector<int> rest_cols;
      for (int k = 0; k < q; ++k)
        if (!taken[k] && k != j) rest_cols.push_back(k);
      return fixed + cost[i][j] + solve(rest_rows, rest_cols, cost).cost <= best.cost + tol;
    };
    int chosen = -1;
    for (int j = 0; j < q && chosen < 0; ++j) {
      if (taken[j] || std::abs(cost[i][j] - best.u[i] - best.v[j]) > tol) continue;
      if (completes(j)) chosen = j;
    }
    if (chosen < 0) {
      // Rounding pushed every candidate past the tolerance; keep whatever
      // the remaining subproblem prefers.
      std::vector<int> rest_cols;
      for (int k = 0; k < q; ++k)
        if (!taken[k]) rest_cols.push_back(k);
      const std::vector<int> sub_rows(rows.begin() + i, rows.end());
      chosen = rest_cols[solve(sub_rows, rest_cols, cost).assignment[0]];
    }
    on_best = on_best && chosen == best.assignment[i];
    taken[chosen] = 1;
    fixed += cost[i][chosen];
    result.pairs.emplace_back(i, chosen);
  }
  result.cost = fixed;
  for (int j = 0; j < q; ++j)
    if (!taken[j]) result.unmatched.push_back(j);
  return result;
}

}  // namespace hlspot
