#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>

#include "decorr/errors.hpp"
#include "decorr/harness.hpp"
#include "decorr/mlp.hpp"
#include "decorr/oracle.hpp"

namespace decorr::harness {

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& e : m.entries()) e = uniform(rng, -scale, scale);
  return m;
}

Vector random_vector(Rng& rng, std::size_t n) {
  Vector v(n);
  for (double& e : v) e = uniform(rng, -1.0, 1.0);
  return v;
}

/// Weighted transitions with at least one terminal and one non-terminal.
WeightedTransitionSet random_transitions(Rng& rng, std::size_t d, std::size_t n) {
  WeightedTransitionSet data;
  data.gamma = uniform(rng, 0.5, 0.99);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    Transition t;
    t.phi = random_vector(rng, d);
    t.phi_next = random_vector(rng, d);
    t.reward = uniform(rng, -1.0, 1.0);
    t.terminal = k == 0 || (k > 1 && uniform01(rng) < 0.3);
    data.transitions.push_back(t);
    data.weights.push_back(uniform(rng, 0.05, 1.0));
    total += data.weights.back();
  }
  for (double& w : data.weights) w /= total;
  return data;
}

std::vector<oracle::Sample> as_samples(const WeightedTransitionSet& data) {
  std::vector<oracle::Sample> out;
  for (std::size_t k = 0; k < data.transitions.size(); ++k) {
    const Transition& t = data.transitions[k];
    out.push_back({t.phi, t.reward, t.phi_next, t.terminal, data.weights[k]});
  }
  return out;
}

Matrix random_orthogonal(Rng& rng, std::size_t d) {
  Matrix q(d, d);
  for (double& e : q.entries()) e = standard_normal(rng);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double proj = 0.0;
      for (std::size_t i = 0; i < d; ++i) proj += q(i, j) * q(i, k);
      for (std::size_t i = 0; i < d; ++i) q(i, j) -= proj * q(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < d; ++i) q(i, j) /= norm;
  }
  return q;
}

PropertyResult finish(std::string name, double max_error, double tolerance, std::string detail) {
  PropertyResult r;
  r.name = std::move(name);
  r.max_error = max_error;
  r.tolerance = tolerance;
  r.passed = std::isfinite(max_error) && max_error < tolerance;
  r.detail = std::move(detail);
  return r;
}

// Each check runs on the calling thread so an installed FaultScope applies.

PropertyResult semi_gradient_fd(std::uint64_t seed) {
  double worst = 0.0;
  const std::size_t dims[] = {2, 3, 5};
  for (std::size_t k = 0; k < 200; ++k) {
    Rng rng(derive_seed(seed, k));
    const std::size_t d = dims[k % 3];
    const std::size_t n = 2 + uniform_index(rng, 9);
    const WeightedTransitionSet data = random_transitions(rng, d, n);
    const TransformMatrix a(random_matrix(rng, d, d));
    const double lambda = uniform(rng, 0.1, 1.0);
    const auto samples = as_samples(data);
    const Vector ones(d, 1.0), frozen = a.weights();
    const Matrix numeric = oracle::fd_gradient(
        [&](const Matrix& m) { return oracle::frozen_target_loss(m, ones, samples, data.gamma, frozen, lambda); },
        a.matrix());
    worst = std::max(worst, oracle::relative_error(semi_gradient(a, data, lambda), numeric));
  }
  return finish("semi_gradient_vs_finite_differences", worst, 1e-5, "200 instances, d in {2,3,5}, n <= 10");
}

PropertyResult full_gradient_reduction(std::uint64_t seed) {
  double worst = 0.0;
  for (std::size_t k = 0; k < 100; ++k) {
    Rng rng(derive_seed(seed, k));
    const std::size_t d = 2 + uniform_index(rng, 4);
    const WeightedTransitionSet data = random_transitions(rng, d, 2 + uniform_index(rng, 9));
    const TransformMatrix a(random_matrix(rng, d, d));
    const double lambda = uniform(rng, 0.0, 1.0);
    const Matrix semi = semi_gradient(a, data, lambda);
    const Matrix full = full_gradients(Vector(d, 1.0), a, data, lambda).a;
    worst = std::max(worst, max_abs_diff(full, semi) / std::max(1.0, max_abs(semi)));
  }
  return finish("full_gradient_reduces_to_semi_gradient", worst, 1e-12, "100 instances at theta = 1");
}

PropertyResult regularizer_vs_brute(std::uint64_t seed) {
  double worst = 0.0;
  for (std::size_t k = 0; k < 100; ++k) {
    Rng rng(derive_seed(seed, k));
    const std::size_t d = 2 + uniform_index(rng, 5);
    const Matrix b = random_matrix(rng, d + 2, d);
    const Matrix cov = matmul_tn(b, b);
    const Matrix a = random_matrix(rng, d, d);
    const double lambda = uniform(rng, 0.1, 2.0);
    const Matrix fast = regularizer_gradient(TransformMatrix(a), cov, lambda);
    const Matrix brute = oracle::brute_reg_gradient(a, cov, lambda);
    worst = std::max(worst, max_abs_diff(fast, brute) / std::max(1.0, max_abs(brute)));
  }
  return finish("regularizer_gradient_vs_pairwise_sum", worst, 1e-10, "100 instances, d in 2..6");
}

PropertyResult stochastic_average(std::uint64_t seed) {
  double worst = 0.0;
  for (std::size_t k = 0; k < 50; ++k) {
    Rng rng(derive_seed(seed, k));
    const std::size_t d = 2 + uniform_index(rng, 4);
    const WeightedTransitionSet data = random_transitions(rng, d, 2 + uniform_index(rng, 9));
    const TransformMatrix a(random_matrix(rng, d, d));
    Matrix average(d, d);
    for (std::size_t i = 0; i < data.transitions.size(); ++i)
      average += stochastic_gradient(a, data.transitions[i], 0.0, data.gamma) * data.weights[i];
    const Matrix semi = semi_gradient(a, data, 0.0);
    worst = std::max(worst, max_abs_diff(average, semi) / std::max(1.0, max_abs(semi)));
  }
  return finish("stochastic_gradient_average_at_lambda_0", worst, 1e-12, "50 instances");
}

PropertyResult terminal_mask(std::uint64_t seed) {
  double worst = 0.0;
  for (std::size_t k = 0; k < 50; ++k) {
    Rng rng(derive_seed(seed, k));
    const std::size_t d = 2 + uniform_index(rng, 4);
    const TransformMatrix a(random_matrix(rng, d, d));
    Transition t;
    t.phi = random_vector(rng, d);
    t.phi_next = random_vector(rng, d);
    t.reward = uniform(rng, -1.0, 1.0);
    t.terminal = true;
    double value = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) value += t.phi[i] * a.matrix()(i, j);
    const double expected = t.reward - value;
    worst = std::max(worst, std::abs(td_error(a, t, 0.9) - expected));
  }
  return finish("terminal_transitions_do_not_bootstrap", worst, 1e-12, "50 terminal transitions");
}

PropertyResult selector_completeness(std::uint64_t) {
  double mismatches = 0.0;
  for (std::size_t d = 1; d <= 8; ++d) {
    const SelectorPair sel = selector_matrices(d);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& [i, j] : sel.pairs) {
      if (!(i < j && j < d) || !seen.insert({i, j}).second) mismatches += 1.0;
    }
    const std::size_t expected = d * (d - 1) / 2;
    mismatches += std::abs(static_cast<double>(seen.size()) - static_cast<double>(expected));
    if (sel.e1.rows() != sel.pairs.size() || sel.e2.rows() != sel.pairs.size()) mismatches += 1.0;
  }
  return finish("selector_pairs_enumerate_i_less_than_j_once", mismatches, 0.5, "d = 1..8");
}

PropertyResult projection_optimality(std::uint64_t seed) {
  double worst_excess = 0.0, worst_orth = 0.0;
  for (std::size_t k = 0; k < 100; ++k) {
    Rng rng(derive_seed(seed, k));
    const Matrix a = random_matrix(rng, 3, 3, 2.0);
    const Matrix q = project_orthogonal(TransformMatrix(a)).matrix();
    worst_orth = std::max(worst_orth, max_abs_diff(matmul_tn(q, q), Matrix::identity(3)));
    const double best = frobenius_norm(a - q);
    for (std::size_t c = 0; c < 1000; ++c) {
      const double other = frobenius_norm(a - random_orthogonal(rng, 3));
      worst_excess = std::max(worst_excess, best - other);
    }
  }
  char detail[128];
  std::snprintf(detail, sizeof detail, "100 matrices x 1000 comparators; max QtQ-I %.3g", worst_orth);
  return finish("projection_is_nearest_orthogonal", std::max(worst_excess, worst_orth), 1e-9, detail);
}

PropertyResult gram_identity(std::uint64_t seed) {
  double worst = 0.0;
  for (std::size_t k = 0; k < 500; ++k) {
    Rng rng(derive_seed(seed, k));
    const std::size_t n = 1 + uniform_index(rng, 16), d = 1 + uniform_index(rng, 12);
    const Matrix phi = random_matrix(rng, n, d);
    double brute = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        if (i == j) continue;
        double c = 0.0;
        for (std::size_t m = 0; m < n; ++m) c += phi(m, i) * phi(m, j);
        brute += c * c;
      }
    const double penalty = gram_penalty(phi).penalty;
    worst = std::max(worst, std::abs(penalty - brute) / std::max(1.0, std::abs(brute)));
  }
  return finish("gram_penalty_equals_covariance_off_diagonal", worst, 1e-9, "500 random batches");
}

PropertyResult minimizer(std::uint64_t seed) {
  double worst_reg = 0.0, worst_loss = 0.0;
  for (std::size_t k = 0; k < 20; ++k) {
    Rng rng(derive_seed(seed, k));
    const std::size_t n = 3 + uniform_index(rng, 6);
    const MdpSpec mdp = envs::chain_mdp(n, uniform(rng, 0.5, 0.95), envs::FeatureMode::random_full_rank,
                                        derive_seed(seed, 1000 + k));
    const TransformMatrix a = construct_minimizer(mdp);
    const RegularizedLoss loss = loss_reg(a, WeightedTransitionSet::from_mdp(mdp), 1.0);
    const double reference = oracle::msve(mdp, oracle::td_fixed_point(mdp));
    worst_reg = std::max(worst_reg, loss.regularizer);
    worst_loss = std::max(worst_loss, std::abs(loss.td - reference) / std::max(1.0, std::abs(reference)));
  }
  char detail[128];
  std::snprintf(detail, sizeof detail, "20 chains; max regularizer %.3g, max loss gap %.3g", worst_reg, worst_loss);
  return finish("minimizer_decorrelates_at_td_fixed_point", std::max(worst_reg, worst_loss), 1e-9, detail);
}

PropertyResult fixed_point_vs_value_iteration(std::uint64_t seed) {
  double worst = 0.0;
  for (std::size_t k = 0; k < 20; ++k) {
    Rng rng(derive_seed(seed, k));
    const std::size_t n = 2 + uniform_index(rng, 8);
    const MdpSpec mdp = envs::chain_mdp(n, uniform(rng, 0.5, 0.95), envs::FeatureMode::tabular);
    const Vector theta = oracle::td_fixed_point(mdp);
    const Vector v = oracle::value_iteration(mdp);
    for (std::size_t s = 0; s < n; ++s) worst = std::max(worst, std::abs(theta[s] - v[s]));
  }
  return finish("tabular_fixed_point_matches_value_iteration", worst, 1e-9, "20 tabular chains");
}

PropertyResult network_gradients(std::uint64_t seed) {
  double worst = 0.0;
  for (std::size_t k = 0; k < 50; ++k) {
    Rng rng(derive_seed(seed, k));
    const std::size_t in = 1 + uniform_index(rng, 4), hidden = 2 + uniform_index(rng, 5);
    const std::size_t feat = 2 + uniform_index(rng, 5), actions = 1 + uniform_index(rng, 3);
    const std::size_t n = 1 + uniform_index(rng, 6);
    const std::size_t widths[] = {in, hidden, feat};
    nn::MlpParams params = nn::MlpParams::init(widths, actions, rng);
    nn::Minibatch batch;
    batch.states = random_matrix(rng, n, in);
    for (std::size_t i = 0; i < n; ++i) {
      batch.actions.push_back(uniform_index(rng, actions));
      batch.targets.push_back(uniform(rng, -1.0, 1.0));
    }
    const double lambda = k % 5 == 0 ? 0.0 : std::pow(10.0, -3.0 * uniform01(rng));

    const nn::BackwardResult analytic = nn::backward(params, batch, lambda);
    nn::GradientTape tape = analytic.tape;
    const auto p = nn::parameter_pointers(params);
    const auto g = nn::parameter_pointers(tape);
    const double h = 1e-6;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double saved = *p[j];
      *p[j] = saved + h;
      const double up = nn::objective(params, batch, lambda);
      *p[j] = saved - h;
      const double down = nn::objective(params, batch, lambda);
      *p[j] = saved;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(*g[j] - fd) / std::max(1.0, std::abs(*g[j])));
    }
  }
  return finish("network_gradients_vs_finite_differences", worst, 1e-4, "50 toy networks");
}

}  // namespace

const std::vector<Property>& property_registry() {
  static const std::vector<Property> registry = {
      {"semi_gradient_vs_finite_differences", semi_gradient_fd},
      {"full_gradient_reduces_to_semi_gradient", full_gradient_reduction},
      {"regularizer_gradient_vs_pairwise_sum", regularizer_vs_brute},
      {"stochastic_gradient_average_at_lambda_0", stochastic_average},
      {"terminal_transitions_do_not_bootstrap", terminal_mask},
      {"selector_pairs_enumerate_i_less_than_j_once", selector_completeness},
      {"projection_is_nearest_orthogonal", projection_optimality},
      {"gram_penalty_equals_covariance_off_diagonal", gram_identity},
      {"minimizer_decorrelates_at_td_fixed_point", minimizer},
      {"tabular_fixed_point_matches_value_iteration", fixed_point_vs_value_iteration},
      {"network_gradients_vs_finite_differences", network_gradients},
  };
  return registry;
}

bool VerifyReport::all_passed() const {
  return std::all_of(results.begin(), results.end(), [](const PropertyResult& r) { return r.passed; });
}

VerifyReport run_verify(const ExperimentConfig& cfg) {
  FaultScope fault(cfg.verify.fault);
  VerifyReport report;
  for (const Property& p : property_registry()) {
    PropertyResult r;
    try {
      r = p.check(cfg.seed);
    } catch (const std::exception& e) {
      r.passed = false;
      r.max_error = std::numeric_limits<double>::infinity();
      r.detail = std::string("threw: ") + e.what();
    }
    r.name = p.name;
    report.results.push_back(std::move(r));
  }
  return report;
}

void print_verify_report(std::ostream& out, const VerifyReport& report) {
  char line[512];
  for (const PropertyResult& r : report.results) {
    std::snprintf(line, sizeof line, "%-4s %-46s max error %-11.4g tol %-8.3g %s\n", r.passed ? "PASS" : "FAIL",
                  r.name.c_str(), r.max_error, r.tolerance, r.detail.c_str());
    out << line;
  }
  const auto passed = std::count_if(report.results.begin(), report.results.end(),
                                    [](const PropertyResult& r) { return r.passed; });
  out << passed << "/" << report.results.size() << " properties passed\n";
}

}  // namespace decorr::harness
