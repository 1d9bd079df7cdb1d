#include "decorr/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "decorr/errors.hpp"
#include "decorr/gram.hpp"

namespace decorr::nn {

namespace {

constexpr char kMagic[6] = {'D', 'G', 'R', 'A', 'M', '1'};

double uniform_symmetric(Rng& rng, double bound) { return (2.0 * uniform01(rng) - 1.0) * bound; }

template <typename Fn>
void for_each_pair(MlpParams& a, const MlpParams& b, Fn&& fn) {
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    auto wa = a.layers[l].weights.entries();
    auto wb = b.layers[l].weights.entries();
    for (std::size_t k = 0; k < wa.size(); ++k) fn(wa[k], wb[k]);
    for (std::size_t k = 0; k < a.layers[l].biases.size(); ++k)
      fn(a.layers[l].biases[k], b.layers[l].biases[k]);
  }
  auto ha = a.heads.entries();
  auto hb = b.heads.entries();
  for (std::size_t k = 0; k < ha.size(); ++k) fn(ha[k], hb[k]);
}

void require_same_layout(const MlpParams& a, const MlpParams& b) {
  bool ok = a.layers.size() == b.layers.size() && a.heads.rows() == b.heads.rows() &&
            a.heads.cols() == b.heads.cols();
  for (std::size_t l = 0; ok && l < a.layers.size(); ++l) {
    ok = a.layers[l].weights.rows() == b.layers[l].weights.rows() &&
         a.layers[l].weights.cols() == b.layers[l].weights.cols() &&
         a.layers[l].biases.size() == b.layers[l].biases.size();
  }
  if (!ok) throw DimensionError("gradient tape does not match parameter layout");
}

}  // namespace

std::size_t MlpParams::input_dim() const {
  return layers.empty() ? heads.cols() : layers.front().weights.cols();
}

std::size_t MlpParams::feature_dim() const {
  return layers.empty() ? heads.cols() : layers.back().weights.rows();
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = heads.size();
  for (const auto& l : layers) n += l.weights.size() + l.biases.size();
  return n;
}

void MlpParams::validate() const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].biases.size() != layers[l].weights.rows()) {
      throw DimensionError("MlpParams: layer " + std::to_string(l) + " bias length mismatch");
    }
    if (l > 0 && layers[l].weights.cols() != layers[l - 1].weights.rows()) {
      throw DimensionError("MlpParams: layer " + std::to_string(l) + " expects " +
                           std::to_string(layers[l].weights.cols()) + " inputs but receives " +
                           std::to_string(layers[l - 1].weights.rows()));
    }
  }
  if (heads.cols() != feature_dim()) {
    throw DimensionError("MlpParams: heads " + heads.shape() + " do not match feature width " +
                         std::to_string(feature_dim()));
  }
}

MlpParams MlpParams::init(std::span<const std::size_t> widths, std::size_t n_actions, Rng& rng) {
  if (widths.size() < 2) throw DimensionError("MlpParams::init: need input and feature widths");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer layer{Matrix(out, in), Vector(out)};
    for (double& w : layer.weights.entries()) w = uniform_symmetric(rng, bound);
    for (double& b : layer.biases) b = uniform_symmetric(rng, bound);
    p.layers.push_back(std::move(layer));
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(widths.back()));
  p.heads = Matrix(n_actions, widths.back());
  for (double& h : p.heads.entries()) h = uniform_symmetric(rng, bound);
  return p;
}

MlpParams MlpParams::zeros_like(const MlpParams& shape) {
  MlpParams p;
  for (const auto& l : shape.layers) {
    p.layers.push_back({Matrix(l.weights.rows(), l.weights.cols()), Vector(l.biases.size(), 0.0)});
  }
  p.heads = Matrix(shape.heads.rows(), shape.heads.cols());
  return p;
}

std::vector<double*> parameter_pointers(MlpParams& params) {
  std::vector<double*> out;
  out.reserve(params.parameter_count());
  for (auto& l : params.layers) {
    for (double& w : l.weights.entries()) out.push_back(&w);
    for (double& b : l.biases) out.push_back(&b);
  }
  for (double& h : params.heads.entries()) out.push_back(&h);
  return out;
}

double tape_max_abs(const GradientTape& tape) {
  double m = max_abs(tape.heads);
  for (const auto& l : tape.layers) m = std::max({m, max_abs(l.weights), max_abs(l.biases)});
  return m;
}

ForwardResult forward(const MlpParams& params, const Matrix& states) {
  params.validate();
  if (states.cols() != params.input_dim()) {
    throw DimensionError("forward: states " + states.shape() + " but network expects " +
                         std::to_string(params.input_dim()) + " inputs");
  }
  ForwardResult out;
  out.activations.reserve(params.layers.size() + 1);
  out.activations.push_back(states);
  for (const auto& layer : params.layers) {
    const Matrix& in = out.activations.back();
    Matrix z = matmul(in, layer.weights.transpose());
    for (std::size_t n = 0; n < z.rows(); ++n) {
      auto row = z.row(n);
      for (std::size_t k = 0; k < row.size(); ++k) row[k] = std::max(0.0, row[k] + layer.biases[k]);
    }
    out.activations.push_back(std::move(z));
  }
  out.features = out.activations.back();
  out.q = matmul(out.features, params.heads.transpose());
  return out;
}

namespace {

void check_batch(const MlpParams& params, const Minibatch& batch) {
  const std::size_t n = batch.states.rows();
  if (batch.actions.size() != n || batch.targets.size() != n) {
    throw DimensionError("minibatch: states, actions and targets disagree in length");
  }
  for (std::size_t a : batch.actions) {
    if (a >= params.n_actions()) throw DimensionError("minibatch: action index out of range");
  }
}

}  // namespace

double objective(const MlpParams& params, const Minibatch& batch, double lambda) {
  check_batch(params, batch);
  const ForwardResult f = forward(params, batch.states);
  const std::size_t n = batch.states.rows();
  double td = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = f.q(i, batch.actions[i]) - batch.targets[i];
    td += delta * delta;
  }
  td /= static_cast<double>(std::max<std::size_t>(n, 1));
  return lambda == 0.0 ? td : td + lambda * gram_penalty(f.features).penalty;
}

BackwardResult backward(const MlpParams& params, const Minibatch& batch, double lambda) {
  check_batch(params, batch);
  const ForwardResult f = forward(params, batch.states);
  const std::size_t n = batch.states.rows();
  const double inv_n = 1.0 / static_cast<double>(std::max<std::size_t>(n, 1));

  BackwardResult out;
  out.tape = MlpParams::zeros_like(params);

  // dL/dq, nonzero only at the taken action.
  Matrix dq(n, params.n_actions());
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = f.q(i, batch.actions[i]) - batch.targets[i];
    out.td_loss += delta * delta * inv_n;
    dq(i, batch.actions[i]) = 2.0 * delta * inv_n;
  }
  out.tape.heads = matmul_tn(dq, f.features);

  Matrix dfeat = matmul(dq, params.heads);
  if (lambda != 0.0) {
    out.penalty = gram_penalty(f.features).penalty;
    Matrix pg = gram_penalty_gradient(f.features);
    pg *= lambda;
    dfeat += pg;
  }
  out.objective = out.td_loss + lambda * out.penalty;

  Matrix upstream = std::move(dfeat);
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Matrix& post = f.activations[l + 1];
    const Matrix& in = f.activations[l];
    // Rectifier derivative: gradient passes where the output is positive.
    for (std::size_t k = 0; k < upstream.size(); ++k)
      if (post.entries()[k] <= 0.0) upstream.entries()[k] = 0.0;
    out.tape.layers[l].weights = matmul_tn(upstream, in);
    auto& db = out.tape.layers[l].biases;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < db.size(); ++k) db[k] += upstream(i, k);
    if (l > 0) upstream = matmul(upstream, params.layers[l].weights);
  }
  return out;
}

MlpParams sgd_step(const MlpParams& params, const GradientTape& tape, double alpha) {
  require_same_layout(params, tape);
  MlpParams next = params;
  for_each_pair(next, tape, [alpha](double& p, double g) { p -= alpha * g; });
  return next;
}

AdamState AdamState::for_params(const MlpParams& params) {
  AdamState s;
  s.first_moment = MlpParams::zeros_like(params);
  s.second_moment = MlpParams::zeros_like(params);
  return s;
}

MlpParams adam_step(const MlpParams& params, const GradientTape& tape, AdamState& state,
                    double alpha) {
  require_same_layout(params, tape);
  require_same_layout(params, state.first_moment);
  ++state.steps;
  const double b1 = state.beta1, b2 = state.beta2;
  for_each_pair(state.first_moment, tape, [b1](double& m, double g) { m = b1 * m + (1.0 - b1) * g; });
  for_each_pair(state.second_moment, tape,
                [b2](double& v, double g) { v = b2 * v + (1.0 - b2) * g * g; });
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));

  MlpParams next = params;
  auto p = parameter_pointers(next);
  auto m = parameter_pointers(state.first_moment);
  auto v = parameter_pointers(state.second_moment);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double mhat = *m[k] / c1;
    const double vhat = *v[k] / c2;
    *p[k] -= alpha * mhat / (std::sqrt(vhat) + state.epsilon);
  }
  return next;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ConfigError("checkpoint: truncated header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::ifstream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw ConfigError("checkpoint: truncated payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MlpParams& params) {
  params.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_u32(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.weights.rows()));
    put_u32(out, static_cast<std::uint32_t>(l.weights.cols()));
  }
  put_u32(out, static_cast<std::uint32_t>(params.heads.rows()));
  put_u32(out, static_cast<std::uint32_t>(params.heads.cols()));
  for (const auto& l : params.layers) {
    for (double w : l.weights.entries()) put_f64(out, w);
    for (double b : l.biases) put_f64(out, b);
  }
  for (double h : params.heads.entries()) put_f64(out, h);
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ConfigError("checkpoint: bad magic in " + path.string());
  }
  MlpParams p;
  const std::uint32_t n_layers = get_u32(in);
  if (n_layers > 1024) throw ConfigError("checkpoint: implausible layer count");
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const std::uint32_t rows = get_u32(in);
    const std::uint32_t cols = get_u32(in);
    p.layers.push_back({Matrix(rows, cols), Vector(rows, 0.0)});
  }
  const std::uint32_t actions = get_u32(in);
  const std::uint32_t width = get_u32(in);
  p.heads = Matrix(actions, width);
  for (auto& l : p.layers) {
    for (double& w : l.weights.entries()) w = get_f64(in);
    for (double& b : l.biases) b = get_f64(in);
  }
  for (double& h : p.heads.entries()) h = get_f64(in);
  if (in.peek() != std::char_traits<char>::eof()) throw ConfigError("checkpoint: trailing bytes");
  p.validate();
  return p;
}

}  // namespace decorr::nn
