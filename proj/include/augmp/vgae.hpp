#pragma once

// Variational graph autoencoder over a correlation graph: a two-layer GCN
// encoder with variational heads, an inner-product decoder, and full-batch
// gradient ascent on the evidence lower bound.

#include <vector>

#include "augmp/graphcraft.hpp"

namespace augmp {

/// D^{-1/2} (A+ + I) D^{-1/2}, where A+ clamps negative similarities to 0.
struct PropagationMatrix {
  Matrix p;
};

PropagationMatrix normalize_adjacency(const Matrix& adjacency);

struct VgaeParams {
  Matrix w1;       // input_dim x hidden
  Matrix w_mu;     // hidden x latent
  Matrix w_sigma;  // hidden x latent

  /// N(0, 1/fan_in) entries.
  static VgaeParams init(std::size_t input_dim, std::size_t hidden, std::size_t latent, SeededRng rng);
};

struct Encoding {
  Matrix px;        // P X (cached for gradients)
  Matrix pre;       // P X W1
  Matrix hidden;    // ReLU(pre)
  Matrix ph;        // P H
  Matrix mu;
  Matrix logsigma;
  Matrix noise;     // epsilon
  Matrix z;
};

/// Encodes with the given noise. An empty `noise` means deterministic mode (Z = mu).
Encoding encode(const Matrix& x, const PropagationMatrix& prop, const VgaeParams& params,
                const Matrix& noise);
/// Draws epsilon ~ N(0, 1) from `rng`.
Encoding encode(const Matrix& x, const PropagationMatrix& prop, const VgaeParams& params,
                SeededRng& rng);

/// Sigmoid(Z Z^T).
Matrix decode(const Matrix& z);

/// Soft edge targets (A + 1) / 2.
Matrix edge_targets(const Matrix& adjacency);

/// Sum over node pairs m < m' of the Bernoulli log-likelihood minus
/// KL(N(mu, sigma^2) || N(0, I)). Decoder outputs are clamped to
/// [1e-7, 1 - 1e-7] before the logs.
double elbo(const Matrix& a_hat, const Matrix& targets, const Matrix& mu, const Matrix& logsigma);
double kl_term(const Matrix& mu, const Matrix& logsigma);

struct ElboGradient {
  double value = 0.0;
  VgaeParams grad;
};

/// ELBO and its analytic gradient for a fixed noise draw.
ElboGradient elbo_gradient(const Matrix& x, const PropagationMatrix& prop, const VgaeParams& params,
                           const Matrix& targets, const Matrix& noise);

struct VgaeOptions {
  std::size_t hidden = 64;
  std::size_t latent = 32;
  int epochs = 30;
  double lr = 0.01;
  bool featureless = false;        // node features = I instead of F^T
  bool decode_from_mean = true;    // output A_hat from mu rather than a sampled Z
};

struct VgaeState {
  VgaeParams params;
  Matrix mu;
  Matrix logsigma;
  Matrix z;
  Matrix a_hat;
  std::vector<double> elbo_trace;  // one value per epoch, before that epoch's step
};

Matrix node_features(const CorrelationGraph& graph, bool featureless);

VgaeState train_vgae(const CorrelationGraph& graph, const VgaeOptions& options, SeededRng rng);

}  // namespace augmp
