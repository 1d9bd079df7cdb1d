#include "decorr/decorrelation.hpp"

#include <cmath>
#include <sstream>

#include "decorr/errors.hpp"
#include "decorr/oracle.hpp"

namespace decorr {

namespace {

thread_local Fault current_fault = Fault::none;

double bootstrap_mask(const Transition& t) {
  if (current_fault == Fault::dropped_terminal_mask) return 1.0;
  return t.terminal ? 0.0 : 1.0;
}

void require_dim(const TransformMatrix& a, std::size_t d, const char* op) {
  if (a.dim() != d) {
    throw DimensionError(std::string(op) + ": transform is " + a.matrix().shape() +
                         " but features have dimension " + std::to_string(d));
  }
}

}  // namespace

Fault active_fault() noexcept { return current_fault; }

FaultScope::FaultScope(Fault fault) noexcept : previous_(current_fault) { current_fault = fault; }

FaultScope::~FaultScope() { current_fault = previous_; }

TransformMatrix::TransformMatrix(Matrix a) : a_(std::move(a)) {
  if (!a_.is_square()) throw DimensionError("TransformMatrix: non-square " + a_.shape());
}

double TransformMatrix::value(std::span<const double> phi) const {
  if (phi.size() != dim()) {
    throw DimensionError("TransformMatrix::value: feature length " + std::to_string(phi.size()) +
                         " for transform " + a_.shape());
  }
  double v = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    if (phi[i] == 0.0) continue;
    double row = 0.0;
    for (double e : a_.row(i)) row += e;
    v += phi[i] * row;
  }
  return v;
}

double TransformMatrix::orthogonality_defect() const {
  Matrix g = matmul_tn(a_, a_);
  g -= Matrix::identity(dim());
  return frobenius_norm(g);
}

std::size_t WeightedTransitionSet::dim() const {
  return transitions.empty() ? 0 : transitions.front().phi.size();
}

Matrix WeightedTransitionSet::second_moment() const {
  const std::size_t d = dim();
  Matrix phi(transitions.size(), d);
  for (std::size_t k = 0; k < transitions.size(); ++k) {
    std::copy(transitions[k].phi.begin(), transitions[k].phi.end(), phi.row(k).begin());
  }
  return covariance(phi, weights);
}

void WeightedTransitionSet::validate() const {
  if (weights.size() != transitions.size()) {
    throw DimensionError("WeightedTransitionSet: " + std::to_string(weights.size()) +
                         " weights for " + std::to_string(transitions.size()) + " transitions");
  }
  const std::size_t d = dim();
  for (const auto& t : transitions) {
    if (t.phi.size() != d || t.phi_next.size() != d) {
      throw DimensionError("WeightedTransitionSet: inconsistent feature dimensions");
    }
  }
  for (double w : weights)
    if (w < 0.0) throw DomainError("WeightedTransitionSet: negative weight");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("WeightedTransitionSet: gamma not in [0,1)");
}

WeightedTransitionSet WeightedTransitionSet::from_mdp(const MdpSpec& mdp) {
  WeightedTransitionSet out;
  out.gamma = mdp.gamma;
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t t = 0; t < mdp.n_states; ++t) {
      const double p = mdp.transition(s, t);
      if (p == 0.0) continue;
      const auto phi = mdp.features.row(s);
      const auto next = mdp.features.row(t);
      out.transitions.push_back(Transition{Vector(phi.begin(), phi.end()), mdp.rewards[s],
                                           Vector(next.begin(), next.end()),
                                           static_cast<bool>(mdp.terminal[s])});
      out.weights.push_back(mdp.mu[s] * p);
    }
  }
  return out;
}

SelectorPair selector_matrices(std::size_t d) {
  const std::size_t start = current_fault == Fault::pair_offset ? 0 : 1;
  SelectorPair out;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + start; j < d; ++j) out.pairs.emplace_back(i, j);
  const std::size_t k = out.pairs.size();
  out.e1 = Matrix(k, d);
  out.e2 = Matrix(k, d);
  for (std::size_t r = 0; r < k; ++r) {
    out.e1(r, out.pairs[r].first) = 1.0;
    out.e2(r, out.pairs[r].second) = 1.0;
  }
  return out;
}

Matrix tilde_d(const TransformMatrix& a, const Matrix& cov) {
  if (!cov.is_square() || cov.rows() != a.dim()) {
    throw DimensionError("tilde_d: covariance " + cov.shape() + " for transform " +
                         a.matrix().shape());
  }
  const Matrix transformed = matmul_tn(a.matrix(), matmul(cov, a.matrix()));
  const SelectorPair sel = selector_matrices(a.dim());
  Matrix out(sel.pairs.size(), sel.pairs.size());
  for (std::size_t k = 0; k < sel.pairs.size(); ++k)
    out(k, k) = transformed(sel.pairs[k].first, sel.pairs[k].second);
  return out;
}

double td_error(const TransformMatrix& a, const Transition& t, double gamma) {
  return t.reward + gamma * bootstrap_mask(t) * a.value(t.phi_next) - a.value(t.phi);
}

RegularizedLoss loss_reg(const TransformMatrix& a, const WeightedTransitionSet& data,
                         double lambda) {
  data.validate();
  RegularizedLoss out;
  if (data.transitions.empty()) return out;
  require_dim(a, data.dim(), "loss_reg");
  for (std::size_t k = 0; k < data.transitions.size(); ++k) {
    const double delta = td_error(a, data.transitions[k], data.gamma);
    out.td += 0.5 * data.weights[k] * delta * delta;
  }
  const Matrix dt = tilde_d(a, data.second_moment());
  for (std::size_t k = 0; k < dt.rows(); ++k) out.off_diagonal += dt(k, k) * dt(k, k);
  out.regularizer = 0.5 * lambda * out.off_diagonal;
  return out;
}

Matrix regularizer_gradient(const TransformMatrix& a, const Matrix& cov, double lambda) {
  const std::size_t d = a.dim();
  if (lambda == 0.0 || d < 2) return Matrix(d, d);
  const SelectorPair sel = selector_matrices(d);
  const Matrix dt = tilde_d(a, cov);
  const Matrix e1t_d = matmul_tn(sel.e1, dt);  // E₁ᵀD̃
  const Matrix e2t_d = matmul_tn(sel.e2, dt);  // E₂ᵀD̃
  Matrix pairing = matmul(e1t_d, sel.e2);
  pairing += matmul(e2t_d, sel.e1);
  Matrix grad = matmul(matmul(cov, a.matrix()), pairing);
  grad *= lambda;
  if (current_fault == Fault::regularizer_sign_flip) grad *= -1.0;
  return grad;
}

Matrix semi_gradient(const TransformMatrix& a, const WeightedTransitionSet& data, double lambda) {
  data.validate();
  const std::size_t d = a.dim();
  if (data.transitions.empty()) return Matrix(d, d);
  require_dim(a, data.dim(), "semi_gradient");

  // −Σμ φ𝟙ᵀδ: every column of the TD term equals −Σ μδφ.
  Vector td_column(d, 0.0);
  for (std::size_t k = 0; k < data.transitions.size(); ++k) {
    const Transition& t = data.transitions[k];
    const double scaled = data.weights[k] * td_error(a, t, data.gamma);
    for (std::size_t i = 0; i < d; ++i) td_column[i] -= scaled * t.phi[i];
  }
  Matrix grad = regularizer_gradient(a, data.second_moment(), lambda);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) grad(i, j) += td_column[i];
  return grad;
}

Matrix stochastic_gradient(const TransformMatrix& a, const Transition& t, double lambda,
                           double gamma) {
  require_dim(a, t.phi.size(), "stochastic_gradient");
  const double delta = td_error(a, t, gamma);
  Matrix grad = regularizer_gradient(a, outer(t.phi, t.phi), lambda);
  for (std::size_t i = 0; i < a.dim(); ++i)
    for (std::size_t j = 0; j < a.dim(); ++j) grad(i, j) -= delta * t.phi[i];
  return grad;
}

RankOneGradient stochastic_gradient_factors(const TransformMatrix& a, const Transition& t,
                                            double lambda, double gamma) {
  require_dim(a, t.phi.size(), "stochastic_gradient_factors");
  const std::size_t d = a.dim();
  const double delta = td_error(a, t, gamma);
  RankOneGradient out{t.phi, Vector(d, -delta)};
  if (lambda != 0.0) {
    const Vector u = matvec_t(a.matrix(), t.phi);
    const double norm_sq = dot(u, u);
    const double sign = current_fault == Fault::regularizer_sign_flip ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j)
      out.right[j] += sign * lambda * u[j] * (norm_sq - u[j] * u[j]);
  }
  return out;
}

FullGradients full_gradients(const Vector& theta, const TransformMatrix& a,
                             const WeightedTransitionSet& data, double lambda) {
  data.validate();
  const std::size_t d = a.dim();
  FullGradients out{Vector(d, 0.0), Matrix(d, d)};
  if (data.transitions.empty()) return out;
  require_dim(a, data.dim(), "full_gradients");
  if (theta.size() != d) throw DimensionError("full_gradients: theta has wrong length");

  const Vector w = matvec(a.matrix(), theta);  // Aθ
  Vector phi_column(d, 0.0);                   // −Σ μδφ
  for (std::size_t k = 0; k < data.transitions.size(); ++k) {
    const Transition& t = data.transitions[k];
    const double delta = t.reward + data.gamma * bootstrap_mask(t) * dot(t.phi_next, w) -
                         dot(t.phi, w);
    const double scaled = data.weights[k] * delta;
    for (std::size_t i = 0; i < d; ++i) phi_column[i] -= scaled * t.phi[i];
  }
  // ∂/∂θ: Aᵀ(−Σ μδφ).
  out.theta = matvec_t(a.matrix(), phi_column);
  // ∂/∂A: (−Σ μδφ)θᵀ + regularizer.
  out.a = regularizer_gradient(a, data.second_moment(), lambda);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out.a(i, j) += phi_column[i] * theta[j];
  return out;
}

TransformMatrix project_orthogonal(const TransformMatrix& a) {
  const SvdResult s = svd(a.matrix());
  return TransformMatrix(matmul(s.u, s.v.transpose()));
}

TransformMatrix construct_minimizer(const MdpSpec& mdp) {
  mdp.validate();
  const SvdResult phi_svd = svd(mdp.features);
  const double smallest = phi_svd.singular_values.back();
  const double largest = phi_svd.singular_values.front();
  if (mdp.features.rows() < mdp.features.cols() || smallest <= 1e-10 * std::max(1.0, largest)) {
    std::ostringstream msg;
    msg << "construct_minimizer: feature matrix is rank deficient (smallest singular value "
        << smallest << ")";
    throw DomainError(msg.str());
  }
  const Matrix cov = covariance(mdp.features, mdp.mu);
  const Matrix v = sym_eigen(cov).eigenvectors;
  const Vector theta = oracle::td_fixed_point(mdp);
  const Vector scales = matvec_t(v, theta);
  return TransformMatrix(matmul(v, Matrix::diagonal(scales)));
}

}  // namespace decorr
