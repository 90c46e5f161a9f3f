#include "ltdl/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace ltdl {

std::vector<std::size_t> window_anchors(std::size_t extent, std::size_t win, std::size_t step) {
  if (win == 0 || step == 0)
    throw std::invalid_argument("window and step sizes must be positive");
  if (win > extent)
    throw std::invalid_argument("window size " + std::to_string(win) + " exceeds image extent " +
                                std::to_string(extent));
  std::vector<std::size_t> anchors;
  const std::size_t last = extent - win;
  for (std::size_t a = 0; a <= last; a += step)
    anchors.push_back(a);
  if (anchors.back() != last)
    anchors.push_back(last);
  return anchors;
}

BlockGrid extract_blocks(const Msi &msi, std::size_t win_rows, std::size_t win_cols,
                         std::size_t step_rows, std::size_t step_cols) {
  const auto [nr, nc, nb] = msi.cube.dims();
  BlockGrid grid;
  grid.win_rows = win_rows;
  grid.win_cols = win_cols;
  grid.step_rows = step_rows;
  grid.step_cols = step_cols;
  grid.image_dims = msi.cube.dims();
  const auto row_anchors = window_anchors(nr, win_rows, step_rows);
  const auto col_anchors = window_anchors(nc, win_cols, step_cols);
  for (std::size_t c : col_anchors)
    for (std::size_t r : row_anchors)
      grid.positions.push_back({r, c});

  grid.blocks.reserve(grid.positions.size());
  for (const auto &p : grid.positions) {
    Matrix b(Eigen::Index(win_rows * win_cols), Eigen::Index(nb));
    for (std::size_t band = 0; band < nb; ++band)
      for (std::size_t j = 0; j < win_cols; ++j)
        for (std::size_t i = 0; i < win_rows; ++i)
          b(Eigen::Index(i + win_rows * j), Eigen::Index(band)) =
              msi.cube(p.row + i, p.col + j, band);
    grid.blocks.push_back(std::move(b));
  }
  return grid;
}

std::size_t default_cluster_count(std::size_t num_blocks) {
  return std::max<std::size_t>(1, std::size_t(std::llround(double(num_blocks) / 50.0)));
}

std::vector<std::size_t> kmeans_pp(const Matrix &points, std::size_t k,
                                   const KMeansOptions &opts) {
  const auto n = std::size_t(points.cols());
  if (k < 1 || k > n)
    throw std::invalid_argument("cluster count " + std::to_string(k) + " must lie in [1, " +
                                std::to_string(n) + "]");
  std::mt19937_64 rng(opts.seed);
  const Eigen::Index dim = points.rows();

  auto sqdist = [&](std::size_t i, const Matrix &centers, std::size_t c) {
    return (points.col(Eigen::Index(i)) - centers.col(Eigen::Index(c))).squaredNorm();
  };

  // k-means++ seeding
  Matrix centers(dim, Eigen::Index(k));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centers.col(0) = points.col(Eigen::Index(pick(rng)));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i)
    d2[i] = sqdist(i, centers, 0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2)
      total += v;
    std::size_t chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target <= 0.0 && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centers.col(Eigen::Index(c)) = points.col(Eigen::Index(chosen));
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], sqdist(i, centers, c));
  }

  std::vector<std::size_t> labels(n, 0);
  std::vector<double> best(n);
  for (int it = 0; it < std::max(1, opts.max_iter); ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sqdist(i, centers, c);
        if (d < bd) {
          bd = d;
          arg = c;
        }
      }
      if (labels[i] != arg)
        changed = true;
      labels[i] = arg;
      best[i] = bd;
    }

    // Empty clusters take the point farthest from its current center.
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t l : labels)
      ++counts[l];
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0)
        continue;
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i)
        if (counts[labels[i]] > 1 && best[i] > fd) {
          fd = best[i];
          far = i;
        }
      --counts[labels[far]];
      labels[far] = c;
      best[far] = 0.0;
      counts[c] = 1;
      changed = true;
    }

    centers.setZero();
    for (std::size_t i = 0; i < n; ++i)
      centers.col(Eigen::Index(labels[i])) += points.col(Eigen::Index(i));
    for (std::size_t c = 0; c < k; ++c)
      centers.col(Eigen::Index(c)) /= double(counts[c]);
    if (!changed)
      break;
  }
  return labels;
}

std::vector<std::size_t> cluster_blocks(const BlockGrid &grid, std::size_t k,
                                        const KMeansOptions &opts) {
  if (grid.blocks.empty())
    throw std::invalid_argument("cluster_blocks: grid has no blocks");
  const Eigen::Index dim = grid.blocks.front().size();
  Matrix points(dim, Eigen::Index(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i)
    points.col(Eigen::Index(i)) = grid.blocks[i].reshaped();
  return kmeans_pp(points, k, opts);
}

std::vector<TensorGroup> form_groups(const BlockGrid &grid,
                                     const std::vector<std::size_t> &assignments) {
  if (assignments.size() != grid.size())
    throw std::invalid_argument("form_groups: one label per block required");
  std::size_t k = 0;
  for (std::size_t l : assignments)
    k = std::max(k, l + 1);
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < assignments.size(); ++i)
    members[assignments[i]].push_back(i);

  const std::size_t pix = grid.pixels_per_block();
  const std::size_t bands = grid.image_dims[2];
  std::vector<TensorGroup> groups;
  for (std::size_t g = 0; g < k; ++g) {
    if (members[g].empty())
      throw std::invalid_argument("form_groups: label " + std::to_string(g) + " has no members");
    TensorGroup tg;
    tg.member_ids = members[g];
    tg.x = Tensor3({pix, bands, members[g].size()});
    for (std::size_t j = 0; j < members[g].size(); ++j)
      tg.x.slice(j) = grid.blocks[members[g][j]];
    groups.push_back(std::move(tg));
  }
  return groups;
}

Msi aggregate(const std::vector<TensorGroup> &groups, const BlockGrid &grid) {
  const auto [nr, nc, nb] = grid.image_dims;
  Tensor3 sum(grid.image_dims);
  std::vector<double> weight(nr * nc, 0.0);
  const std::size_t wr = grid.win_rows, wc = grid.win_cols;
  for (const auto &g : groups) {
    if (g.x.dims()[0] != wr * wc || g.x.dims()[1] != nb)
      throw std::invalid_argument("aggregate: group block shape does not match grid");
    for (std::size_t j = 0; j < g.member_ids.size(); ++j) {
      const auto &p = grid.positions.at(g.member_ids[j]);
      const auto blk = g.x.slice(j);
      for (std::size_t cc = 0; cc < wc; ++cc)
        for (std::size_t rr = 0; rr < wr; ++rr) {
          weight[(p.row + rr) + nr * (p.col + cc)] += 1.0;
          for (std::size_t band = 0; band < nb; ++band)
            sum(p.row + rr, p.col + cc, band) += blk(Eigen::Index(rr + wr * cc), Eigen::Index(band));
        }
    }
  }
  for (std::size_t band = 0; band < nb; ++band)
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t r = 0; r < nr; ++r) {
        const double w = weight[r + nr * c];
        if (w <= 0.0)
          throw std::logic_error("aggregate: pixel (" + std::to_string(r) + ", " +
                                 std::to_string(c) + ") not covered by any block");
        sum(r, c, band) /= w;
      }
  return Msi{std::move(sum)};
}

} // namespace ltdl
