#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "ltdl/grouping.hpp"
#include "support.hpp"

using namespace ltdl;
using testing_support::random_tensor;

namespace {

Msi random_msi(std::size_t r, std::size_t c, std::size_t b, std::uint64_t seed) {
  return Msi{random_tensor({r, c, b}, seed)};
}

double max_abs_diff(const Tensor3 &a, const Tensor3 &b) {
  return (a.flat() - b.flat()).cwiseAbs().maxCoeff();
}

// Same partition up to relabelling.
bool same_partition(const std::vector<std::size_t> &a, const std::vector<std::size_t> &b) {
  std::map<std::size_t, std::size_t> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (ab.count(a[i]) && ab[a[i]] != b[i])
      return false;
    if (ba.count(b[i]) && ba[b[i]] != a[i])
      return false;
    ab[a[i]] = b[i];
    ba[b[i]] = a[i];
  }
  return true;
}

} // namespace

TEST_CASE("window anchors snap to the far edge") {
  CHECK(window_anchors(7, 7, 3) == std::vector<std::size_t>{0});
  CHECK(window_anchors(10, 7, 3) == std::vector<std::size_t>{0, 3});
  CHECK(window_anchors(11, 7, 3) == std::vector<std::size_t>{0, 3, 4});
  CHECK(window_anchors(13, 7, 3) == std::vector<std::size_t>{0, 3, 6});
}

TEST_CASE("block extraction examples") {
  CHECK(extract_blocks(random_msi(7, 7, 3, 1), 7, 7, 3, 3).size() == 1);
  const BlockGrid g = extract_blocks(random_msi(10, 10, 3, 2), 7, 7, 3, 3);
  CHECK(g.size() == 4);
  CHECK_THROWS_AS(extract_blocks(random_msi(5, 10, 2, 3), 7, 7, 3, 3), std::invalid_argument);
  CHECK_THROWS_AS(extract_blocks(random_msi(10, 10, 2, 3), 7, 7, 0, 3), std::invalid_argument);
}

TEST_CASE("blocks hold the window pixels with the spatial index fastest") {
  const Msi msi = random_msi(9, 8, 4, 3);
  const BlockGrid g = extract_blocks(msi, 3, 2, 2, 3);
  for (std::size_t s = 0; s < g.size(); ++s) {
    const auto &b = g.blocks[s];
    REQUIRE(b.rows() == 6);
    REQUIRE(b.cols() == 4);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t h = 0; h < 4; ++h)
          CHECK(b(Eigen::Index(r + 3 * c), Eigen::Index(h)) ==
                msi.cube(g.positions[s].row + r, g.positions[s].col + c, h));
  }
}

TEST_CASE("every pixel is covered") {
  const Msi msi = random_msi(17, 12, 2, 4);
  const BlockGrid g = extract_blocks(msi, 7, 5, 3, 4);
  std::vector<int> cover(17 * 12, 0);
  for (const auto &p : g.positions) {
    CHECK(p.row + 7 <= 17);
    CHECK(p.col + 5 <= 12);
    for (std::size_t c = 0; c < 5; ++c)
      for (std::size_t r = 0; r < 7; ++r)
        ++cover[(p.row + r) + 17 * (p.col + c)];
  }
  CHECK(*std::min_element(cover.begin(), cover.end()) >= 1);
}

TEST_CASE("clustering extremes") {
  const BlockGrid g = extract_blocks(random_msi(13, 13, 3, 5), 7, 7, 3, 3);
  auto all = cluster_blocks(g, g.size(), {1});
  std::set<std::size_t> distinct(all.begin(), all.end());
  CHECK(distinct.size() == g.size());
  auto one = cluster_blocks(g, 1, {1});
  CHECK(std::all_of(one.begin(), one.end(), [](std::size_t l) { return l == 0; }));
  CHECK_THROWS_AS(cluster_blocks(g, g.size() + 1, {1}), std::invalid_argument);
  CHECK_THROWS_AS(cluster_blocks(g, 0, {1}), std::invalid_argument);
}

TEST_CASE("k-means separates two well-separated populations") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.01);
  const Eigen::Index dim = 12, n = 40;
  Matrix pts(dim, n);
  std::vector<std::size_t> truth(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    truth[std::size_t(j)] = (j * 7) % 3 == 0 ? 1 : 0;
    for (Eigen::Index i = 0; i < dim; ++i)
      pts(i, j) = (truth[std::size_t(j)] ? 10.0 : 0.0) + noise(rng);
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    CHECK(same_partition(kmeans_pp(pts, 2, {seed}), truth));
}

TEST_CASE("clustering is deterministic and order invariant") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  Matrix pts(5, 60);
  for (Eigen::Index j = 0; j < 60; ++j)
    for (Eigen::Index i = 0; i < 5; ++i)
      pts(i, j) = double(j % 4) * 5.0 + n01(rng) * 0.3;
  const auto a = kmeans_pp(pts, 4, {42});
  CHECK(a == kmeans_pp(pts, 4, {42}));
  std::set<std::size_t> used(a.begin(), a.end());
  CHECK(used.size() == 4);

  std::vector<Eigen::Index> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix shuffled(5, 60);
  for (Eigen::Index j = 0; j < 60; ++j)
    shuffled.col(j) = pts.col(perm[std::size_t(j)]);
  const auto b = kmeans_pp(shuffled, 4, {42});
  std::vector<std::size_t> back(60);
  for (Eigen::Index j = 0; j < 60; ++j)
    back[std::size_t(perm[std::size_t(j)])] = b[std::size_t(j)];
  CHECK(same_partition(a, back));
}

TEST_CASE("empty clusters are reseeded") {
  // Duplicate points make k-means++ unable to spread the seeds.
  Matrix pts = Matrix::Zero(3, 10);
  pts.col(9).setConstant(1.0);
  const auto labels = kmeans_pp(pts, 3, {0});
  std::set<std::size_t> used(labels.begin(), labels.end());
  CHECK(used.size() == 3);
}

TEST_CASE("group formation") {
  const Msi msi = random_msi(13, 10, 3, 6);
  const BlockGrid g = extract_blocks(msi, 4, 4, 3, 3);
  std::mt19937_64 rng(9);
  std::vector<std::size_t> labels(g.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = i < 3 ? i : rng() % 3;
  const auto groups = form_groups(g, labels);
  REQUIRE(groups.size() == 3);
  std::size_t total = 0;
  std::vector<int> seen(g.size(), 0);
  for (const auto &grp : groups) {
    total += grp.member_ids.size();
    CHECK(grp.x.dims() == Dims3{16, 3, grp.member_ids.size()});
    CHECK(std::is_sorted(grp.member_ids.begin(), grp.member_ids.end()));
    for (std::size_t j = 0; j < grp.member_ids.size(); ++j) {
      ++seen[grp.member_ids[j]];
      CHECK(Matrix(grp.x.slice(j)) == g.blocks[grp.member_ids[j]]);
    }
  }
  CHECK(total == g.size());
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));

  const BlockGrid single = extract_blocks(random_msi(4, 4, 2, 1), 4, 4, 2, 2);
  const auto sg = form_groups(single, {0});
  REQUIRE(sg.size() == 1);
  CHECK(sg[0].x.dims() == Dims3{16, 2, 1});

  labels[0] = 7;
  CHECK_THROWS_AS(form_groups(g, labels), std::invalid_argument);
}

TEST_CASE("aggregation") {
  SUBCASE("unmodified blocks give back the image") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Msi msi = random_msi(15 + seed, 11, 4, seed);
      const BlockGrid g = extract_blocks(msi, 5, 4, 2, 3);
      const auto labels = cluster_blocks(g, 3, {seed});
      CHECK(max_abs_diff(aggregate(form_groups(g, labels), g).cube, msi.cube) < 1e-12);
    }
  }
  SUBCASE("non-overlapping blocks copy back") {
    const Msi msi = random_msi(8, 8, 2, 3);
    const BlockGrid g = extract_blocks(msi, 4, 4, 4, 4);
    CHECK(g.size() == 4);
    std::vector<std::size_t> labels(4);
    std::iota(labels.begin(), labels.end(), 0);
    CHECK(aggregate(form_groups(g, labels), g).cube == msi.cube);
  }
  SUBCASE("overlap of constant 0 and 1 blocks averages to one half") {
    const Msi msi = random_msi(1, 5, 1, 4);
    const BlockGrid g = extract_blocks(msi, 1, 3, 1, 2);
    REQUIRE(g.size() == 2);
    auto groups = form_groups(g, {0, 1});
    groups[0].x.flat().setConstant(0.0);
    groups[1].x.flat().setConstant(1.0);
    const Msi out = aggregate(groups, g);
    CHECK(out.cube(0, 0, 0) == 0.0);
    CHECK(out.cube(0, 1, 0) == 0.0);
    CHECK(out.cube(0, 2, 0) == 0.5);
    CHECK(out.cube(0, 3, 0) == 1.0);
    CHECK(out.cube(0, 4, 0) == 1.0);
  }
  SUBCASE("missing blocks are an internal error") {
    const Msi msi = random_msi(8, 8, 2, 3);
    const BlockGrid g = extract_blocks(msi, 4, 4, 4, 4);
    auto groups = form_groups(g, {0, 1, 2, 3});
    groups.pop_back();
    CHECK_THROWS_AS(aggregate(groups, g), std::logic_error);
  }
}

TEST_CASE("default cluster count") {
  CHECK(default_cluster_count(0) == 1);
  CHECK(default_cluster_count(24) == 1);
  CHECK(default_cluster_count(75) == 2);
  CHECK(default_cluster_count(400) == 8);
}
