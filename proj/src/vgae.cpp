#include "augmp/vgae.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace augmp {

PropagationMatrix normalize_adjacency(const Matrix& adjacency) {
  if (adjacency.rows() != adjacency.cols())
    throw std::invalid_argument("normalize_adjacency: matrix is not square");
  const std::size_t n = adjacency.rows();
  Matrix tilde(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      tilde(i, j) = (i == j ? 1.0 : 0.0) + std::max(adjacency(i, j), 0.0);
  Vector inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (double v : tilde.row(i)) deg += v;
    if (!(deg > 0.0)) throw std::logic_error("normalize_adjacency: nonpositive degree");
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) tilde(i, j) *= inv_sqrt[i] * inv_sqrt[j];
  // Exact symmetry despite the clamp on an asymmetric input.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (tilde(i, j) + tilde(j, i));
      tilde(i, j) = v;
      tilde(j, i) = v;
    }
  return {std::move(tilde)};
}

VgaeParams VgaeParams::init(std::size_t input_dim, std::size_t hidden, std::size_t latent,
                            SeededRng rng) {
  auto draw = [](std::size_t rows, std::size_t cols, SeededRng stream) {
    Matrix m(rows, cols);
    const double sd = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& x : m.data()) x = stream.normal(0.0, sd);
    return m;
  };
  return {draw(input_dim, hidden, rng.split("w1")), draw(hidden, latent, rng.split("w_mu")),
          draw(hidden, latent, rng.split("w_sigma"))};
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] *= b.data()[i];
  return out;
}

}  // namespace

Encoding encode(const Matrix& x, const PropagationMatrix& prop, const VgaeParams& params,
                const Matrix& noise) {
  if (x.rows() != prop.p.rows()) throw std::invalid_argument("encode: feature rows != node count");
  if (x.cols() != params.w1.rows()) throw std::invalid_argument("encode: feature width != W1 rows");
  if (params.w1.cols() != params.w_mu.rows() || params.w_mu.rows() != params.w_sigma.rows() ||
      params.w_mu.cols() != params.w_sigma.cols())
    throw std::invalid_argument("encode: inconsistent head shapes");
  Encoding e;
  e.px = matmul(prop.p, x);
  e.pre = matmul(e.px, params.w1);
  e.hidden = e.pre;
  for (double& v : e.hidden.data()) v = std::max(v, 0.0);
  e.ph = matmul(prop.p, e.hidden);
  e.mu = matmul(e.ph, params.w_mu);
  e.logsigma = matmul(e.ph, params.w_sigma);
  e.z = e.mu;
  if (noise.empty()) {
    e.noise = Matrix(e.mu.rows(), e.mu.cols());
  } else {
    if (noise.rows() != e.mu.rows() || noise.cols() != e.mu.cols())
      throw std::invalid_argument("encode: noise shape mismatch");
    e.noise = noise;
    for (std::size_t i = 0; i < e.z.data().size(); ++i)
      e.z.data()[i] += std::exp(e.logsigma.data()[i]) * noise.data()[i];
  }
  return e;
}

Encoding encode(const Matrix& x, const PropagationMatrix& prop, const VgaeParams& params,
                SeededRng& rng) {
  Matrix noise(x.rows(), params.w_mu.cols());
  for (double& v : noise.data()) v = rng.normal();
  return encode(x, prop, params, noise);
}

Matrix decode(const Matrix& z) {
  Matrix a = matmul_bt(z, z);
  for (double& v : a.data()) v = sigmoid(v);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) a(j, i) = a(i, j);
  return a;
}

Matrix edge_targets(const Matrix& adjacency) {
  Matrix t = adjacency;
  for (double& v : t.data()) v = std::clamp((v + 1.0) / 2.0, 0.0, 1.0);
  return t;
}

double kl_term(const Matrix& mu, const Matrix& logsigma) {
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.data().size(); ++i) {
    const double m = mu.data()[i];
    const double ls = logsigma.data()[i];
    kl += m * m + std::exp(2.0 * ls) - 2.0 * ls - 1.0;
  }
  return 0.5 * kl;
}

double elbo(const Matrix& a_hat, const Matrix& targets, const Matrix& mu, const Matrix& logsigma) {
  if (a_hat.rows() != a_hat.cols() || targets.rows() != a_hat.rows() ||
      targets.cols() != a_hat.cols() || mu.rows() != a_hat.rows() ||
      logsigma.rows() != mu.rows() || logsigma.cols() != mu.cols())
    throw std::invalid_argument("elbo: shape mismatch");
  constexpr double kEps = 1e-7;
  double recon = 0.0;
  for (std::size_t i = 0; i < a_hat.rows(); ++i) {
    for (std::size_t j = i + 1; j < a_hat.cols(); ++j) {
      const double p = std::clamp(a_hat(i, j), kEps, 1.0 - kEps);
      const double a = targets(i, j);
      recon += a * std::log(p) + (1.0 - a) * std::log(1.0 - p);
    }
  }
  return recon - kl_term(mu, logsigma);
}

ElboGradient elbo_gradient(const Matrix& x, const PropagationMatrix& prop, const VgaeParams& params,
                           const Matrix& targets, const Matrix& noise) {
  const Encoding e = encode(x, prop, params, noise);
  const Matrix a_hat = decode(e.z);
  ElboGradient out;
  out.value = elbo(a_hat, targets, e.mu, e.logsigma);

  const std::size_t n = a_hat.rows();
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) g(i, j) = targets(i, j) - a_hat(i, j);
  const Matrix d_z = matmul(g, e.z);

  Matrix d_mu = d_z - e.mu;
  Matrix d_ls(e.logsigma.rows(), e.logsigma.cols());
  for (std::size_t i = 0; i < d_ls.data().size(); ++i) {
    const double sigma = std::exp(e.logsigma.data()[i]);
    d_ls.data()[i] = d_z.data()[i] * e.noise.data()[i] * sigma - (sigma * sigma - 1.0);
  }

  out.grad.w_mu = matmul_at(e.ph, d_mu);
  out.grad.w_sigma = matmul_at(e.ph, d_ls);
  // P is symmetric, so d/dH of (P H W) is P^T dY W^T = P dY W^T.
  const Matrix d_h = matmul(prop.p, matmul_bt(d_mu, params.w_mu) + matmul_bt(d_ls, params.w_sigma));
  Matrix mask = e.pre;
  for (double& v : mask.data()) v = v > 0.0 ? 1.0 : 0.0;
  out.grad.w1 = matmul_at(e.px, hadamard(d_h, mask));
  return out;
}

Matrix node_features(const CorrelationGraph& graph, bool featureless) {
  if (featureless) return Matrix::identity(graph.adjacency.rows());
  return graph.features.transpose();
}

VgaeState train_vgae(const CorrelationGraph& graph, const VgaeOptions& options, SeededRng rng) {
  if (options.epochs < 0) throw std::invalid_argument("train_vgae: epochs must be >= 0");
  const Matrix x = node_features(graph, options.featureless);
  const PropagationMatrix prop = normalize_adjacency(graph.adjacency);
  const Matrix targets = edge_targets(graph.adjacency);

  VgaeState state;
  state.params = VgaeParams::init(x.cols(), options.hidden, options.latent, rng.split("init"));
  auto noise_for = [&](int epoch) {
    SeededRng stream = rng.split("noise", static_cast<std::uint64_t>(epoch));
    Matrix noise(x.rows(), options.latent);
    for (double& v : noise.data()) v = stream.normal();
    return noise;
  };

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const ElboGradient eg = elbo_gradient(x, prop, state.params, targets, noise_for(epoch));
    if (!std::isfinite(eg.value))
      throw std::runtime_error("train_vgae: non-finite ELBO at epoch " + std::to_string(epoch));
    state.elbo_trace.push_back(eg.value);
    state.params.w1 = state.params.w1 + options.lr * eg.grad.w1;
    state.params.w_mu = state.params.w_mu + options.lr * eg.grad.w_mu;
    state.params.w_sigma = state.params.w_sigma + options.lr * eg.grad.w_sigma;
    if (!all_finite(state.params.w1.data()) || !all_finite(state.params.w_mu.data()) ||
        !all_finite(state.params.w_sigma.data()))
      throw std::runtime_error("train_vgae: non-finite weights after epoch " + std::to_string(epoch));
  }

  const Encoding e = encode(x, prop, state.params, noise_for(options.epochs));
  state.mu = e.mu;
  state.logsigma = e.logsigma;
  state.z = e.z;
  state.a_hat = decode(options.decode_from_mean ? e.mu : e.z);
  return state;
}

}  // namespace augmp
