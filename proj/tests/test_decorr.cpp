#include <doctest.h>

#include <cmath>

#include "decorr/decorrelation.hpp"
#include "decorr/envs.hpp"
#include "decorr/errors.hpp"
#include "decorr/oracle.hpp"
#include "support.hpp"

using namespace decorr;
using testing::max_abs_entry;

namespace {

/// Loss with the bootstrap target evaluated at a fixed weight vector, so
/// finite differences see only the φᵀA𝟙 path.
double frozen_loss(const Matrix& a, const WeightedTransitionSet& data, const Vector& target_weights,
                   double lambda, const Vector& theta) {
  std::vector<oracle::Sample> samples;
  for (std::size_t k = 0; k < data.transitions.size(); ++k) {
    const Transition& t = data.transitions[k];
    samples.push_back({t.phi, t.reward, t.phi_next, t.terminal, data.weights[k]});
  }
  return oracle::frozen_target_loss(a, theta, samples, data.gamma, target_weights, lambda);
}

Vector times(const Matrix& a, const Vector& theta) {
  Vector out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[i] += a(i, j) * theta[j];
  return out;
}

WeightedTransitionSet single(double phi, double reward, bool terminal, double phi_next = 0.0) {
  WeightedTransitionSet data;
  data.transitions.push_back({{phi}, reward, {phi_next}, terminal});
  data.weights = {1.0};
  data.gamma = 0.9;
  return data;
}

}  // namespace

TEST_CASE("selector_matrices enumerates pairs lexicographically") {
  const SelectorPair s3 = selector_matrices(3);
  CHECK(s3.e1 == Matrix{{1, 0, 0}, {1, 0, 0}, {0, 1, 0}});
  CHECK(s3.e2 == Matrix{{0, 1, 0}, {0, 0, 1}, {0, 0, 1}});
  const SelectorPair s1 = selector_matrices(1);
  CHECK(s1.e1.rows() == 0);
  CHECK(s1.e1.cols() == 1);
  CHECK(s1.e2.rows() == 0);
  const SelectorPair s2 = selector_matrices(2);
  CHECK(s2.e1 == Matrix{{1, 0}});
  CHECK(s2.e2 == Matrix{{0, 1}});
  for (std::size_t d = 1; d <= 8; ++d) {
    const SelectorPair s = selector_matrices(d);
    CHECK(s.pairs.size() == d * (d - 1) / 2);
    for (std::size_t k = 1; k < s.pairs.size(); ++k) CHECK(s.pairs[k - 1] < s.pairs[k]);
    for (auto [i, j] : s.pairs) CHECK(i < j);
  }
}

TEST_CASE("tilde_d examples") {
  const auto id2 = TransformMatrix::identity(2);
  CHECK(max_abs_entry(tilde_d(id2, Matrix{{3, 0}, {0, 4}})) == 0.0);
  CHECK(tilde_d(id2, Matrix{{10, 14}, {14, 20}}) == Matrix{{14}});
  const Matrix cov{{1, 0.2, 0.3}, {0.2, 1, 0.4}, {0.3, 0.4, 1}};
  const Matrix td = tilde_d(TransformMatrix::identity(3), cov);
  CHECK(td.diag() == Vector{0.2, 0.3, 0.4});
  CHECK(off_diagonal_sq_sum(td) == 0.0);
  CHECK_THROWS_AS(tilde_d(id2, Matrix::identity(3)), DimensionError);
}

TEST_CASE("loss_reg examples") {
  // Deterministic one-state episode with value exactly matching the return.
  CHECK(loss_reg(TransformMatrix(Matrix{{1.0}}), single(1.0, 1.0, true), 0.0).total() == 0.0);
  const RegularizedLoss l = loss_reg(TransformMatrix(Matrix{{0.5}}), single(1.0, 1.0, true), 3.0);
  CHECK(l.td == doctest::Approx(0.125));
  CHECK(l.regularizer == 0.0);
  CHECK(l.total() == doctest::Approx(0.125));
}

TEST_CASE("semi_gradient scalar example") {
  const Matrix g = semi_gradient(TransformMatrix(Matrix{{0.5}}), single(1.0, 1.0, true), 0.0);
  CHECK(g(0, 0) == doctest::Approx(-0.5));
}

TEST_CASE("regularizer gradient equals the direct pair summation") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + uniform_index(rng, 8);
    const Matrix a = testing::random_matrix(rng, d, d);
    const Matrix cov = testing::random_symmetric_psd(rng, d);
    const double lambda = testing::uniform(rng, 0.0, 2.0);
    const Matrix fast = regularizer_gradient(TransformMatrix(a), cov, lambda);
    const Matrix slow = oracle::brute_reg_gradient(a, cov, lambda);
    CHECK(max_abs_diff(fast, slow) <= 1e-12 * std::max(1.0, max_abs(slow)));
  }
}

TEST_CASE("semi_gradient regularizer part matches brute_reg_gradient") {
  Rng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + uniform_index(rng, 5);
    const auto data = testing::random_transitions(rng, d, 1 + uniform_index(rng, 10));
    const TransformMatrix a(testing::random_matrix(rng, d, d));
    const double lambda = testing::uniform(rng, 0.0, 1.0);
    const Matrix reg = semi_gradient(a, data, lambda) - semi_gradient(a, data, 0.0);
    CHECK(max_abs_diff(reg, oracle::brute_reg_gradient(a.matrix(), data.second_moment(), lambda)) < 1e-10);
  }
}

TEST_CASE("semi_gradient matches finite differences with the target frozen") {
  Rng rng(33);
  const std::size_t dims[] = {2, 3, 5};
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = dims[trial % 3];
    const auto data = testing::random_transitions(rng, d, 1 + uniform_index(rng, 10));
    const TransformMatrix a(testing::random_matrix(rng, d, d));
    const double lambda = testing::uniform(rng, 0.0, 1.0);
    const Vector w = a.weights();
    const Vector ones(d, 1.0);
    const Matrix numeric = oracle::fd_gradient(
        [&](const Matrix& m) { return frozen_loss(m, data, w, lambda, ones); }, a.matrix());
    worst = std::max(worst, oracle::relative_error(semi_gradient(a, data, lambda), numeric));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("stochastic_gradient reduces to the per-sample TD semi-gradient at lambda 0") {
  Rng rng(34);
  const std::size_t d = 4;
  const TransformMatrix a(testing::random_matrix(rng, d, d));
  Transition t{testing::random_vector(rng, d), 0.7, testing::random_vector(rng, d), false};
  const double delta = td_error(a, t, 0.9);
  const Matrix expected = outer(t.phi, Vector(d, -delta));
  CHECK(max_abs_diff(stochastic_gradient(a, t, 0.0, 0.9), expected) < 1e-15);

  // Terminal: bootstrap dropped, so the next features are irrelevant.
  t.terminal = true;
  Transition t2 = t;
  t2.phi_next = testing::random_vector(rng, d);
  CHECK(stochastic_gradient(a, t, 0.3, 0.9) == stochastic_gradient(a, t2, 0.3, 0.9));
  CHECK(td_error(a, t, 0.9) == doctest::Approx(0.7 - a.value(t.phi)));
}

TEST_CASE("stochastic_gradient rank-one factors agree with the dense form") {
  Rng rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + uniform_index(rng, 6);
    const TransformMatrix a(testing::random_matrix(rng, d, d));
    const Transition t{testing::random_vector(rng, d), 0.1, testing::random_vector(rng, d), trial % 2 == 0};
    const double lambda = testing::uniform(rng, 0.0, 1.0);
    const Matrix dense = stochastic_gradient(a, t, lambda, 0.8);
    CHECK(max_abs_diff(stochastic_gradient_factors(a, t, lambda, 0.8).dense(), dense) < 1e-12);
    // The per-sample regularizer is the λ=… semi-gradient on a one-point set.
    WeightedTransitionSet one{{t}, {1.0}, 0.8};
    CHECK(max_abs_diff(semi_gradient(a, one, lambda), dense) < 1e-12);
  }
}

TEST_CASE("mu-weighted average of stochastic gradients equals semi_gradient at lambda 0") {
  Rng rng(36);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 5), d = 1 + uniform_index(rng, 4);
    const MdpSpec mdp = testing::random_mdp(rng, n, d);
    const auto data = WeightedTransitionSet::from_mdp(mdp);
    const TransformMatrix a(testing::random_matrix(rng, d, d));
    Matrix avg(d, d);
    for (std::size_t k = 0; k < data.transitions.size(); ++k)
      avg += stochastic_gradient(a, data.transitions[k], 0.0, data.gamma) * data.weights[k];
    CHECK(max_abs_diff(avg, semi_gradient(a, data, 0.0)) < 1e-12);
  }
}

TEST_CASE("the per-sample regularizer is a biased estimate of the population one") {
  // E[(Aᵀφφᵀ A)_ij²] differs from ((AᵀE[φφᵀ]A)_ij)², so averaging sample
  // gradients at λ > 0 does not give the population gradient.
  Rng rng(37);
  const MdpSpec mdp = testing::random_mdp(rng, 4, 3);
  const auto data = WeightedTransitionSet::from_mdp(mdp);
  const TransformMatrix a = TransformMatrix::identity(3);
  Matrix avg(3, 3);
  for (std::size_t k = 0; k < data.transitions.size(); ++k)
    avg += stochastic_gradient(a, data.transitions[k], 1.0, data.gamma) * data.weights[k];
  CHECK(max_abs_diff(avg, semi_gradient(a, data, 1.0)) > 1e-3);
}

TEST_CASE("full_gradients with theta = 1 equals semi_gradient") {
  Rng rng(38);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + uniform_index(rng, 5);
    const auto data = testing::random_transitions(rng, d, 1 + uniform_index(rng, 10));
    const TransformMatrix a(testing::random_matrix(rng, d, d));
    const double lambda = testing::uniform(rng, 0.0, 1.0);
    const FullGradients g = full_gradients(Vector(d, 1.0), a, data, lambda);
    CHECK(max_abs_diff(g.a, semi_gradient(a, data, lambda)) <= 1e-12);
  }
}

TEST_CASE("full_gradients at A = I and lambda 0 is classic linear TD(0)") {
  Rng rng(39);
  const std::size_t d = 4;
  const auto data = testing::random_transitions(rng, d, 6);
  const Vector theta = testing::random_vector(rng, d);
  const FullGradients g = full_gradients(theta, TransformMatrix::identity(d), data, 0.0);
  Vector classic(d, 0.0);
  for (std::size_t k = 0; k < data.transitions.size(); ++k) {
    const Transition& t = data.transitions[k];
    double v = 0.0, vn = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      v += t.phi[i] * theta[i];
      vn += t.phi_next[i] * theta[i];
    }
    const double delta = t.reward + (t.terminal ? 0.0 : data.gamma * vn) - v;
    for (std::size_t i = 0; i < d; ++i) classic[i] -= data.weights[k] * delta * t.phi[i];
  }
  for (std::size_t i = 0; i < d; ++i) CHECK(g.theta[i] == doctest::Approx(classic[i]).epsilon(1e-12));
}

TEST_CASE("full_gradients match finite differences of the two-parameter loss") {
  Rng rng(40);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + uniform_index(rng, 3);
    const auto data = testing::random_transitions(rng, d, 1 + uniform_index(rng, 8));
    const Matrix am = testing::random_matrix(rng, d, d);
    const TransformMatrix a(am);
    const Vector theta = testing::random_vector(rng, d);
    const double lambda = testing::uniform(rng, 0.0, 1.0);
    const Vector frozen = times(am, theta);
    const FullGradients g = full_gradients(theta, a, data, lambda);
    const Matrix num_a = oracle::fd_gradient(
        [&](const Matrix& m) { return frozen_loss(m, data, frozen, lambda, theta); }, am);
    const Matrix num_theta = oracle::fd_gradient(
        [&](const Matrix& col) { return frozen_loss(am, data, frozen, lambda, col.col(0)); },
        Matrix::column(theta));
    CHECK(oracle::relative_error(g.a, num_a) < 1e-5);
    CHECK(oracle::relative_error(Matrix::column(g.theta), num_theta) < 1e-5);
  }
}

TEST_CASE("project_orthogonal examples") {
  const Matrix rot{{0, -1}, {1, 0}};
  CHECK(max_abs_diff(project_orthogonal(TransformMatrix(rot)).matrix(), rot) < 1e-12);
  CHECK(max_abs_diff(project_orthogonal(TransformMatrix(Matrix{{2, 0}, {0, 5}})).matrix(), Matrix::identity(2)) < 1e-12);
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(max_abs_diff(project_orthogonal(TransformMatrix(Matrix{{1, 1}, {-1, 1}})).matrix(),
                     Matrix{{r, r}, {-r, r}}) < 1e-12);
}

TEST_CASE("project_orthogonal is orthogonal, idempotent and nearest among samples") {
  Rng rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = 1 + uniform_index(rng, 5);
    const TransformMatrix a(testing::random_matrix(rng, d, d, 2.0));
    const TransformMatrix q = project_orthogonal(a);
    CHECK(max_abs_entry(testing::orthogonality_gap(q.matrix())) < 1e-9);
    CHECK(max_abs_diff(project_orthogonal(q).matrix(), q.matrix()) < 1e-9);
    CHECK(q.orthogonality_defect() < 1e-9);
    const double best = frobenius_norm(a.matrix() - q.matrix());
    for (int k = 0; k < 100; ++k)
      CHECK(best <= frobenius_norm(a.matrix() - testing::random_orthogonal(rng, d)) + 1e-9);
  }
}

TEST_CASE("construct_minimizer on a tabular chain predicts the TD fixed point") {
  const MdpSpec mdp = envs::chain_mdp(4, 0.9, envs::FeatureMode::tabular);
  const TransformMatrix a = construct_minimizer(mdp);
  const Vector theta = oracle::td_fixed_point(mdp);
  for (std::size_t s = 0; s < 4; ++s) CHECK(a.value(mdp.features.row(s)) == doctest::Approx(theta[s]).epsilon(1e-10));
}

TEST_CASE("construct_minimizer reaches the TD loss level with zero regularizer") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MdpSpec mdp = envs::chain_mdp(3, 0.9, envs::FeatureMode::random_full_rank, seed);
    const TransformMatrix a = construct_minimizer(mdp);
    const auto data = WeightedTransitionSet::from_mdp(mdp);
    const RegularizedLoss l = loss_reg(a, data, 0.5);
    const Vector theta = oracle::td_fixed_point(mdp);
    CHECK(std::abs(l.total() - oracle::msve(mdp, theta)) < 1e-9);
    CHECK(l.regularizer < 1e-9);
    CHECK(l.off_diagonal < 1e-9);
    const Matrix reg = semi_gradient(a, data, 0.5) - semi_gradient(a, data, 0.0);
    CHECK(frobenius_norm(reg) < 1e-8);
  }
}

TEST_CASE("construct_minimizer rejects rank-deficient features") {
  MdpSpec mdp = envs::chain_mdp(3, 0.9, envs::FeatureMode::tabular);
  mdp.features = Matrix{{1, 1}, {2, 2}, {3, 3}};
  try {
    (void)construct_minimizer(mdp);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("singular value") != std::string::npos);
  }
}

TEST_CASE("from_mdp weights form a distribution and respect terminal states") {
  Rng rng(42);
  const MdpSpec mdp = testing::random_mdp(rng, 5, 3);
  const auto data = WeightedTransitionSet::from_mdp(mdp);
  double total = 0.0;
  for (double w : data.weights) total += w;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  std::size_t terminal = 0;
  for (const auto& t : data.transitions) terminal += t.terminal ? 1 : 0;
  CHECK(terminal == 5);  // every successor of the single terminal state
}

TEST_CASE("fault scopes perturb exactly the targeted computation") {
  Rng rng(43);
  const std::size_t d = 3;
  const auto data = testing::random_transitions(rng, d, 6);
  const TransformMatrix a(testing::random_matrix(rng, d, d));
  const Matrix clean = semi_gradient(a, data, 0.5);
  CHECK(active_fault() == Fault::none);
  {
    FaultScope scope(Fault::regularizer_sign_flip);
    CHECK(max_abs_diff(semi_gradient(a, data, 0.5), clean) > 1e-6);
    CHECK(max_abs_diff(semi_gradient(a, data, 0.0), semi_gradient(a, data, 0.0)) == 0.0);
  }
  {
    FaultScope scope(Fault::pair_offset);
    CHECK(selector_matrices(3).pairs.size() != 3);
  }
  CHECK(active_fault() == Fault::none);
  CHECK(semi_gradient(a, data, 0.5) == clean);
}
