#include <doctest.h>

#include <limits>
#include <random>
#include <sstream>

#include "formeq/alignment.hpp"

using namespace formeq;

namespace {

// Minimum over every monotone path, summing distances in path order.
double brute_force_cost(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::Index n = a.cols(), m = b.cols();
  double best = std::numeric_limits<double>::infinity();
  auto walk = [&](auto&& self, Eigen::Index i, Eigen::Index j, double acc) -> void {
    acc += cepstral_distance(a.col(i), b.col(j));
    if (i == n - 1 && j == m - 1) {
      best = std::min(best, acc);
      return;
    }
    if (i + 1 < n && j + 1 < m) self(self, i + 1, j + 1, acc);
    if (i + 1 < n) self(self, i + 1, j, acc);
    if (j + 1 < m) self(self, i, j + 1, acc);
  };
  walk(walk, 0, 0, 0.0);
  return best;
}

double path_cost(const AlignmentPath& p, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double acc = 0.0;
  for (const auto& s : p.steps) acc += cepstral_distance(a.col(s.src), b.col(s.tgt));
  return acc;
}

}  // namespace

TEST_CASE("dtw equals brute-force enumeration on small instances") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> len(1, 8);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = len(rng), m = len(rng);
    Eigen::MatrixXd a(4, n), b(4, m);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
    const AlignmentPath p = dtw_align(a, b);
    REQUIRE(p.valid_for(n, m));
    CHECK(p.cost == brute_force_cost(a, b));
    CHECK(path_cost(p, a, b) == p.cost);
  }
}

TEST_CASE("dtw ignores c0") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(5, 6);
  Eigen::MatrixXd b = a;
  b.row(0).array() += 50.0;
  const AlignmentPath p = dtw_align(a, b);
  CHECK(p.cost == 0.0);
  CHECK(p.size() == 6);
  for (std::size_t k = 0; k < p.size(); ++k) CHECK(p.steps[k] == PathStep{Eigen::Index(k), Eigen::Index(k)});
}

TEST_CASE("dtw path shapes for degenerate lengths") {
  const Eigen::MatrixXd one = Eigen::MatrixXd::Random(3, 1);
  const Eigen::MatrixXd five = Eigen::MatrixXd::Random(3, 5);
  const AlignmentPath row = dtw_align(one, five);
  CHECK(row.size() == 5);
  for (Eigen::Index j = 0; j < 5; ++j) CHECK(row.steps[j] == PathStep{0, j});
  const AlignmentPath col = dtw_align(five, one);
  CHECK(col.size() == 5);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(col.steps[i] == PathStep{i, 0});
}

TEST_CASE("dtw ties prefer the diagonal, then the source step") {
  // All frames identical: every path costs zero.
  const Eigen::MatrixXd same = Eigen::MatrixXd::Ones(3, 4);
  const Eigen::MatrixXd tgt = Eigen::MatrixXd::Ones(3, 2);
  const AlignmentPath p = dtw_align(same, tgt);
  REQUIRE(p.valid_for(4, 2));
  // Backtracking from (3,1): diagonal to (2,0), then source steps down to (0,0).
  const std::vector<PathStep> want{{0, 0}, {1, 0}, {2, 0}, {3, 1}};
  CHECK(p.steps == want);
}

TEST_CASE("dtw cost is symmetric") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd a(5, 3 + trial % 7), b(5, 2 + trial % 5);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = g(rng);
    CHECK(dtw_align(a, b).cost == doctest::Approx(dtw_align(b, a).cost).epsilon(1e-12));
  }
}

TEST_CASE("dtw rejects bad input") {
  CHECK_THROWS_AS(dtw_align(Eigen::MatrixXd(3, 0), Eigen::MatrixXd::Ones(3, 2)), InputError);
  CHECK_THROWS_AS(dtw_align(Eigen::MatrixXd::Ones(3, 2), Eigen::MatrixXd::Ones(4, 2)), InputError);
}

TEST_CASE("alignment csv") {
  AlignmentPath p;
  p.steps = {{0, 0}, {1, 0}, {1, 1}};
  std::ostringstream out;
  write_alignment_csv(out, p);
  CHECK(out.str() == "src_index,tgt_index\n0,0\n1,0\n1,1\n");
}

TEST_CASE("pair_frames carries frames and flags invalid formants") {
  UtteranceFeatures src, tgt;
  src.mcep = Eigen::MatrixXd::Random(4, 3);
  src.logspec = Eigen::MatrixXd::Random(9, 3);
  tgt.mcep = Eigen::MatrixXd::Random(4, 2);
  tgt.logspec = Eigen::MatrixXd::Random(9, 2);
  FormantFrame good;
  good.valid = true;
  good.formants = {{500, 60}, {1500, 90}, {2500, 120}, {3500, 150}};
  src.formants = {good, good, good};
  tgt.formants = {good, FormantFrame{}};

  AlignmentPath path;
  path.steps = {{0, 0}, {1, 1}, {2, 1}};
  const auto pairs = pair_frames(path, src, tgt);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].src_mcep == src.mcep.col(0));
  CHECK(pairs[2].tgt_logspec == tgt.logspec.col(1));
  CHECK_FALSE(pairs[0].skip_warp);
  CHECK(pairs[1].skip_warp);
  CHECK(pairs[2].skip_warp);

  AlignmentPath broken;
  broken.steps = {{0, 0}, {2, 1}};
  CHECK_THROWS_AS(pair_frames(broken, src, tgt), InputError);
}
