#pragma once

// Independent re-implementations of environment queries, written without
// calling the library's own search or geometry helpers.

#include <algorithm>
#include <climits>
#include <cstdlib>
#include <vector>

#include "savn/env/scene.hpp"

namespace savn::oracle {

/// Walkable-cell count reached by a queue flood fill from the first walkable cell.
inline bool flood_fill_connected(const env::Scene& s) {
  const int W = s.width(), H = s.height();
  auto open = [&](int r, int c) {
    return r >= 0 && c >= 0 && r < H && c < W && !s.is_wall({r, c}) && s.object_at({r, c}) < 0;
  };
  int total = 0, sr = -1, sc = -1;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      if (open(r, c)) {
        ++total;
        if (sr < 0) sr = r, sc = c;
      }
  if (total == 0) return false;
  std::vector<char> seen(static_cast<std::size_t>(W * H), 0);
  std::vector<std::pair<int, int>> q{{sr, sc}};
  seen[static_cast<std::size_t>(sr * W + sc)] = 1;
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        const int r = q[i].first + dr, c = q[i].second + dc;
        if ((dr || dc) && open(r, c) && !seen[static_cast<std::size_t>(r * W + c)]) {
          seen[static_cast<std::size_t>(r * W + c)] = 1;
          q.push_back({r, c});
        }
      }
  }
  return static_cast<int>(q.size()) == total;
}

/// Compass sector (0..7, clockwise from north) of a neighbouring offset.
inline int sector_of(int dr, int dc) {
  static const int table[3][3] = {{7, 0, 1}, {6, -1, 2}, {5, 4, 3}};
  return table[dr + 1][dc + 1];
}

/// Default geometry only: Chebyshev radius 1 and a 90 degree cone, i.e. the
/// object sits in the heading's sector or one of its two neighbours.
inline bool brute_force_success(const env::Scene& s, const env::Pose& p, int target) {
  for (const auto& o : s.objects()) {
    if (o.object_class != target) continue;
    const int dr = o.cell.row - p.cell.row, dc = o.cell.col - p.cell.col;
    if (std::max(std::abs(dr), std::abs(dc)) != 1) continue;
    const int diff = (sector_of(dr, dc) - p.heading + 8) % 8;
    if (diff == 0 || diff == 1 || diff == 7) return true;
  }
  return false;
}

/// Bellman-Ford style relaxation over all (cell, heading) states until fixed point.
inline int relaxation_shortest_path(const env::Scene& s, const env::Pose& start, int target) {
  const int W = s.width(), H = s.height();
  auto id = [&](int r, int c, int h) { return (r * W + c) * 8 + h; };
  std::vector<int> dist(static_cast<std::size_t>(W * H * 8), INT_MAX);
  dist[static_cast<std::size_t>(id(start.cell.row, start.cell.col, start.heading))] = 0;
  static const int dr[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
  static const int dc[8] = {0, 1, 1, 1, 0, -1, -1, -1};
  bool changed = true;
  while (changed) {
    changed = false;
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c)
        for (int h = 0; h < 8; ++h) {
          const int d = dist[static_cast<std::size_t>(id(r, c, h))];
          if (d == INT_MAX) continue;
          auto relax = [&](int r2, int c2, int h2) {
            auto& nd = dist[static_cast<std::size_t>(id(r2, c2, h2))];
            if (d + 1 < nd) nd = d + 1, changed = true;
          };
          relax(r, c, (h + 1) % 8);
          relax(r, c, (h + 7) % 8);
          const int r2 = r + dr[h], c2 = c + dc[h];
          if (r2 >= 0 && c2 >= 0 && r2 < H && c2 < W && !s.is_wall({r2, c2}) && s.object_at({r2, c2}) < 0) relax(r2, c2, h);
        }
  }
  int best = INT_MAX;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      for (int h = 0; h < 8; ++h) {
        const int d = dist[static_cast<std::size_t>(id(r, c, h))];
        if (d != INT_MAX && brute_force_success(s, {{r, c}, h}, target)) best = std::min(best, d);
      }
  return best == INT_MAX ? -1 : best;
}

}  // namespace savn::oracle
