#include <algorithm>
#include <doctest.h>

#include <cmath>

#include "decorr/envs.hpp"
#include "decorr/errors.hpp"
#include "support.hpp"

using namespace decorr;
using namespace decorr::envs;

namespace {

struct Moments {
  double xx = 0, xy = 0, yy = 0, mx = 0, my = 0;
};

Moments sample_moments(const Matrix& sigma, std::size_t draws, std::uint64_t seed) {
  Rng rng(seed);
  Moments m;
  for (std::size_t k = 0; k < draws; ++k) {
    const SlrSample s = slr_sample(rng, sigma);
    m.xx += s.x[0] * s.x[0];
    m.xy += s.x[0] * s.x[1];
    m.yy += s.x[1] * s.x[1];
    m.mx += s.x[0];
    m.my += s.x[1];
  }
  const double n = static_cast<double>(draws);
  m.xx /= n, m.xy /= n, m.yy /= n, m.mx /= n, m.my /= n;
  return m;
}

double correlation(const Moments& m) {
  const double cxx = m.xx - m.mx * m.mx, cyy = m.yy - m.my * m.my, cxy = m.xy - m.mx * m.my;
  return cxy / std::sqrt(cxx * cyy);
}

}  // namespace

TEST_CASE("slr labels are noiseless") {
  const double x[2] = {1.0, 1.0};
  CHECK(slr_label(x) == 3.0);
  Rng rng(81);
  for (int k = 0; k < 100; ++k) {
    const SlrSample s = slr_sample(rng, slr_covariance(0.5));
    CHECK(s.y == s.x[0] + 2.0 * s.x[1]);
  }
}

TEST_CASE("slr sample correlation") {
  const double uncorrelated = correlation(sample_moments(slr_covariance(0.0), 100000, 1));
  CHECK(uncorrelated > -0.02);
  CHECK(uncorrelated < 0.02);
  const double correlated = correlation(sample_moments(slr_covariance(0.99), 100000, 2));
  CHECK(correlated > 0.98);
  CHECK(correlated < 1.0);
}

TEST_CASE("slr empirical covariance matches sigma over 1e6 draws") {
  const Matrix sigma{{1.5, 0.4}, {0.4, 0.8}};
  const Moments m = sample_moments(sigma, 1000000, 3);
  CHECK(std::abs(m.xx - 1.5) < 1e-2);
  CHECK(std::abs(m.xy - 0.4) < 1e-2);
  CHECK(std::abs(m.yy - 0.8) < 1e-2);
}

TEST_CASE("cholesky rejects non-PSD input and accepts singular PSD input") {
  Rng rng(82);
  CHECK_THROWS_AS(slr_sample(rng, Matrix{{1, 2}, {2, 1}}), DomainError);
  CHECK_THROWS_AS(cholesky(Matrix{{1, 0.5}, {0.4, 1}}), DomainError);
  const Matrix l = cholesky(Matrix{{1, 1}, {1, 1}});
  CHECK(l(1, 0) == doctest::Approx(1.0));
  CHECK(l(1, 1) == doctest::Approx(0.0));
  const Matrix c = cholesky(Matrix{{4, 2}, {2, 3}});
  CHECK(testing::max_abs_entry(testing::naive_product(c, c.transpose()) - Matrix{{4, 2}, {2, 3}}) < 1e-14);
}

TEST_CASE("mountain car dynamics") {
  // Coasting from rest: only the gravity term acts.
  const MountainCarStep coast = mountain_car_step({-0.5, 0.0}, 1);
  CHECK(coast.state.velocity == doctest::Approx(-0.0025 * std::cos(-1.5)).epsilon(1e-14));
  CHECK(coast.state.position == doctest::Approx(-0.5 + coast.state.velocity));
  CHECK(coast.reward == -1.0);
  CHECK(!coast.done);

  const MountainCarStep wall = mountain_car_step({-1.2, -0.01}, 0);
  CHECK(wall.state.position == -1.2);
  CHECK(wall.state.velocity == 0.0);

  const MountainCarStep goal = mountain_car_step({0.45, 0.07}, 2);
  CHECK(goal.state.position >= 0.5);
  CHECK(goal.done);

  CHECK_THROWS_AS(mountain_car_step({-0.5, 0.0}, 3), DomainError);
  CHECK_THROWS_AS(mountain_car_step({-0.5, 0.0}, -1), DomainError);
}

TEST_CASE("mountain car random policy terminates and stays in bounds") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    MountainCarState s = mountain_car_reset(rng);
    CHECK(s.position >= -0.6);
    CHECK(s.position < -0.4);
    bool done = false;
    std::size_t steps = 0;
    while (!done && steps < 100000) {
      const MountainCarStep st = mountain_car_step(s, static_cast<int>(uniform_index(rng, 3)));
      s = st.state;
      done = st.done;
      ++steps;
      REQUIRE(s.position >= kMinPosition);
      REQUIRE(s.position <= kMaxPosition);
      REQUIRE(std::abs(s.velocity) <= kMaxSpeed);
    }
    CHECK(done);
  }
}

TEST_CASE("tile features: one active cell per tiling") {
  const TileCoderSpec spec = TileCoderSpec::mountain_car(2, 8);
  CHECK(spec.dim() == 2 * 81);
  Rng rng(83);
  for (int k = 0; k < 1000; ++k) {
    const double state[2] = {testing::uniform(rng, kMinPosition, kMaxPosition),
                             testing::uniform(rng, -kMaxSpeed, kMaxSpeed)};
    const Vector phi = tile_features(spec, state);
    double ones = 0.0;
    for (double e : phi) {
      CHECK((e == 0.0 || e == 1.0));
      ones += e;
    }
    CHECK(ones == 2.0);
    CHECK(tile_features(spec, state) == phi);
  }
  // The corners of the box are inside the domain.
  const double lo[2] = {kMinPosition, -kMaxSpeed}, hi[2] = {kMaxPosition, kMaxSpeed};
  CHECK_NOTHROW(tile_features(spec, lo));
  CHECK_NOTHROW(tile_features(spec, hi));
  const double out[2] = {0.7, 0.0};
  CHECK_THROWS_AS(tile_features(spec, out), DomainError);
}

TEST_CASE("duplicated tile features are exact copies") {
  const TileCoderSpec base = TileCoderSpec::mountain_car(2, 8);
  const TileCoderSpec dup = TileCoderSpec::mountain_car(2, 8, {0});
  CHECK(dup.dim() == base.dim() + 1);
  const double corner[2] = {kMinPosition, -kMaxSpeed};
  const Vector phi = tile_features(dup, corner);
  CHECK(phi[0] == 1.0);
  CHECK(phi.back() == phi[0]);

  // Covariance over a batch: the copy is perfectly correlated with its source.
  const TileCoderSpec two = TileCoderSpec::mountain_car(2, 8, spread_duplication_indices(base, 2));
  Rng rng(84);
  Matrix batch(400, two.dim());
  for (std::size_t n = 0; n < 400; ++n) {
    const double s[2] = {testing::uniform(rng, kMinPosition, kMaxPosition), testing::uniform(rng, -kMaxSpeed, kMaxSpeed)};
    const Vector f = tile_features(two, s);
    std::copy(f.begin(), f.end(), batch.row(n).begin());
  }
  const Matrix c = covariance(batch, Vector(400, 1.0 / 400));
  for (std::size_t k = 0; k < 2; ++k) {
    const std::size_t src = two.duplication_indices[k], copy = base.dim() + k;
    CHECK(c(src, copy) == c(src, src));
    CHECK(c(copy, copy) == c(src, src));
  }
  CHECK_THROWS_AS(TileCoderSpec::mountain_car(2, 8, {base.dim()}), ConfigError);
}

TEST_CASE("nearby states share an active tile") {
  // Two states that differ along one coordinate by less than width/tilings
  // can cross at most one tiling's boundary.
  const TileCoderSpec spec = TileCoderSpec::mountain_car(2, 8);
  Rng rng(85);
  for (int k = 0; k < 2000; ++k) {
    const std::size_t dim = k % 2;
    const double width = (spec.highs[dim] - spec.lows[dim]) / 8.0;
    double a[2] = {testing::uniform(rng, kMinPosition, kMaxPosition), testing::uniform(rng, -kMaxSpeed, kMaxSpeed)};
    double b[2] = {a[0], a[1]};
    b[dim] = std::clamp(a[dim] + testing::uniform(rng, -0.499, 0.499) * width, spec.lows[dim], spec.highs[dim]);
    const auto fa = active_features(spec, a), fb = active_features(spec, b);
    bool shared = false;
    for (std::size_t i : fa)
      for (std::size_t j : fb) shared = shared || i == j;
    CHECK(shared);
  }
}

TEST_CASE("chain mdp fixtures") {
  const MdpSpec tab = chain_mdp(5, 0.9, FeatureMode::tabular);
  CHECK(tab.features == Matrix::identity(5));
  for (std::size_t s = 0; s < 5; ++s) {
    double total = 0.0;
    for (double p : tab.transition.row(s)) total += p;
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
  CHECK(tab.terminal[4]);
  CHECK_NOTHROW(tab.validate());

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MdpSpec r = chain_mdp(6, 0.9, FeatureMode::random_full_rank, seed, 4);
    CHECK(svd(r.features).singular_values.back() > 1e-6);
    const MdpSpec c = chain_mdp(6, 0.9, FeatureMode::correlated, seed, 3);
    const Matrix cov = covariance(c.features, c.mu);
    double diag = 0.0;
    for (double v : cov.diag()) diag += v * v;
    CHECK(off_diagonal_sq_sum(cov) > 0.1 * diag);
  }
  CHECK(chain_mdp(5, 0.9, FeatureMode::random_full_rank, 7).features == chain_mdp(5, 0.9, FeatureMode::random_full_rank, 7).features);
  CHECK_THROWS_AS(chain_mdp(1, 0.9, FeatureMode::tabular), ConfigError);
  CHECK_THROWS_AS(chain_mdp(3, 0.9, FeatureMode::random_full_rank, 0, 4), ConfigError);
}

TEST_CASE("gridworld") {
  const GridWorld g(4, 4);
  CHECK(g.step(0, 0).cell == 0);
  CHECK(g.step(0, 3).cell == 0);
  CHECK(g.step(0, 1).cell == 1);
  CHECK(g.step(0, 2).cell == 4);
  const GridStep last = g.step(14, 1);
  CHECK(last.cell == 15);
  CHECK(last.done);
  CHECK(last.reward == 1.0);
  CHECK(g.input_dim() == 16);
  const Vector e = g.encode(5);
  CHECK(e.size() == 16);
  CHECK(e[5] == 1.0);
  CHECK(std::count(e.begin(), e.end(), 0.0) == 15);
  CHECK(GridWorld(4, 4, GridEncoding::coordinates).encode(15) == Vector{1.0, 1.0});
  CHECK(GridWorld(4, 4, GridEncoding::coordinates).input_dim() == 2);
  CHECK(g.evaluation_states().rows() == 15);
  CHECK(g.evaluation_states().cols() == 16);
  const ControlProblem p = g.control_problem();
  CHECK(p.next.size() == 16 * 4);
  CHECK_THROWS_AS(g.step(16, 0), DomainError);
}
