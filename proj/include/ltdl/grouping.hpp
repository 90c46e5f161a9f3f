#pragma once

#include <cstdint>
#include <vector>

#include "ltdl/tensor.hpp"

namespace ltdl {

// Multi-spectral image: L x W spatial, H bands.
struct Msi {
  Tensor3 cube;

  std::size_t rows() const { return cube.dims()[0]; }
  std::size_t cols() const { return cube.dims()[1]; }
  std::size_t bands() const { return cube.dims()[2]; }
};

struct BlockPos {
  std::size_t row = 0;
  std::size_t col = 0;
};

struct BlockGrid {
  std::size_t win_rows = 0, win_cols = 0;
  std::size_t step_rows = 0, step_cols = 0;
  Dims3 image_dims{0, 0, 0};
  std::vector<BlockPos> positions;
  // Each block is (win_rows * win_cols) x bands, window row index fastest.
  std::vector<Matrix> blocks;

  std::size_t size() const { return positions.size(); }
  std::size_t pixels_per_block() const { return win_rows * win_cols; }
};

struct TensorGroup {
  Tensor3 x; // (win_rows * win_cols) x bands x s_k
  std::vector<std::size_t> member_ids;
};

/// Anchors 0, step, 2*step, ... plus the edge-snapped last position extent - win.
std::vector<std::size_t> window_anchors(std::size_t extent, std::size_t win, std::size_t step);

BlockGrid extract_blocks(const Msi &msi, std::size_t win_rows, std::size_t win_cols,
                         std::size_t step_rows, std::size_t step_cols);

struct KMeansOptions {
  std::uint64_t seed = 0;
  int max_iter = 30;
};

/// k-means++ seeding followed by Lloyd iterations on flattened blocks.
/// Returns one label in [0, k) per block; every label is used.
std::vector<std::size_t> cluster_blocks(const BlockGrid &grid, std::size_t k,
                                        const KMeansOptions &opts = {});

/// Same algorithm on raw feature vectors (one column per point).
std::vector<std::size_t> kmeans_pp(const Matrix &points, std::size_t k,
                                   const KMeansOptions &opts = {});

std::vector<TensorGroup> form_groups(const BlockGrid &grid,
                                     const std::vector<std::size_t> &assignments);

/// Uniform-weight average of every block contribution per pixel and band.
Msi aggregate(const std::vector<TensorGroup> &groups, const BlockGrid &grid);

/// Default cluster count: max(1, round(S / 50)).
std::size_t default_cluster_count(std::size_t num_blocks);

} // namespace ltdl
