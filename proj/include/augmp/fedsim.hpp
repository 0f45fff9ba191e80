#pragma once

// Federated fine-tuning of a surrogate classifier: a frozen linear backbone
// with per-layer low-rank adapters, trained by full-batch gradient descent
// and aggregated with size-weighted averaging.

#include <cstdint>
#include <string>
#include <vector>

#include "augmp/mathcore.hpp"
#include "augmp/rng.hpp"

namespace augmp {

struct Dataset {
  Matrix features;  // n x input_dim
  std::vector<int> labels;
  int classes = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::vector<std::size_t> class_counts() const;
};

/// Class means of the synthetic task: a centered regular simplex with edge
/// length `separation`, embedded in the first classes-1 coordinates.
Matrix simplex_means(int classes, std::size_t input_dim, double separation);

/// Gaussian blobs with identity covariance around `simplex_means`; samples
/// are emitted class-major.
Dataset synth_dataset(int classes, std::size_t input_dim, std::size_t per_class,
                      double separation, SeededRng rng, std::string name = "synthetic");

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices, std::string name);

/// Non-IID split: for every class, agent proportions are drawn from
/// Dirichlet(concentration). Draws that leave an agent empty are resampled.
std::vector<std::vector<std::size_t>> dirichlet_partition_indices(const Dataset& ds,
                                                                  std::size_t agents,
                                                                  double concentration,
                                                                  SeededRng rng);
std::vector<Dataset> dirichlet_partition(const Dataset& ds, std::size_t agents,
                                         double concentration, SeededRng rng);

/// Deterministic holdout split; the first return value keeps 1 - fraction.
std::pair<Dataset, Dataset> holdout_split(const Dataset& ds, double fraction, SeededRng rng);

enum class LoraScaling { kAlphaOverR, kNone };

struct LoraConfig {
  std::size_t rank = 2;
  double alpha = 4.0;
  double dropout = 0.0;
  LoraScaling scaling = LoraScaling::kAlphaOverR;

  double scale() const {
    return scaling == LoraScaling::kAlphaOverR ? alpha / static_cast<double>(rank) : 1.0;
  }
};

/// Output x input shape of one adapted layer (d x k).
struct LayerShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
  bool operator==(const LayerShape&) const = default;
};

struct ModelSpec {
  std::size_t input_dim = 20;
  int classes = 4;
  std::size_t layers = 1;
  std::size_t hidden_dim = 16;  // only used when layers > 1
  LoraConfig lora;

  /// Layers in forward order; layer 1 consumes the input features.
  std::vector<LayerShape> shapes() const;
  std::size_t update_dim() const;
};

/// Concatenate row-major vec() of each layer in layer order.
Vector flatten(const std::vector<Matrix>& layers);
std::vector<Matrix> unflatten(std::span<const double> values, const std::vector<LayerShape>& shapes);

/// Frozen pretrained weights W0, drawn once from N(0, 1/fan_in).
class Backbone {
 public:
  Backbone(ModelSpec spec, SeededRng rng);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  std::vector<LayerShape> shapes() const { return spec_.shapes(); }
  std::size_t update_dim() const { return spec_.update_dim(); }

  /// W0 + unflatten(merged_delta) per layer.
  std::vector<Matrix> effective(std::span<const double> merged_delta) const;

 private:
  ModelSpec spec_;
  std::vector<Matrix> weights_;
};

/// Per-agent trainable factors: A is r x k, B is d x r.
struct LoraAdapter {
  std::vector<Matrix> a;
  std::vector<Matrix> b;

  /// A ~ N(0, 0.01^2), B = 0.
  static LoraAdapter init(const ModelSpec& spec, SeededRng rng);
  /// scale * B A per layer.
  std::vector<Matrix> delta(double scale) const;
};

struct LossResult {
  double loss = 0.0;
  std::vector<Matrix> grad;  // d loss / d W per layer; empty if not requested
};

/// Mean softmax cross-entropy of the linear chain h_l = h_{l-1} W_l^T.
LossResult softmax_xent(const std::vector<Matrix>& weights, const Dataset& ds, bool want_grad);
std::vector<int> predict(const std::vector<Matrix>& weights, const Matrix& features);

struct AdapterLoss {
  double loss = 0.0;
  std::vector<Matrix> grad_a;  // d loss / d A per layer
  std::vector<Matrix> grad_b;
};

/// Loss of frozen[l] + scale * diag(mask_l) B_l A_l and its factor gradients.
/// Empty `row_masks` means no dropout.
AdapterLoss adapter_loss(const std::vector<Matrix>& frozen, const LoraAdapter& adapter, double scale,
                         const Dataset& ds, const std::vector<Vector>& row_masks, bool want_grad);

struct UpdateVector {
  Vector values;
  int agent_id = 0;
  int round = 0;
  std::int64_t claimed_size = 1;
  bool is_malicious = false;  // harness bookkeeping; server code never reads it
};

struct GlobalState {
  Vector params;  // merged adapter deltas, flatten() layout
  double server_lr = 1.0;
  int round = 0;
};

struct TrainOptions {
  int epochs = 5;
  double lr = 0.05;
};

struct LocalResult {
  UpdateVector update;
  std::vector<double> epoch_losses;  // loss before each epoch's step, then final
};

/// Full-batch gradient descent on the adapter factors starting from the
/// broadcast global model; the adapter is updated in place.
LocalResult local_train(const Backbone& backbone, const GlobalState& global, LoraAdapter& adapter,
                        const Dataset& local, const TrainOptions& options, SeededRng rng);

/// Size-weighted mean; inputs are reduced in agent_id order.
Vector aggregate(const std::vector<UpdateVector>& updates);
GlobalState apply_global(const GlobalState& g, std::span<const double> delta, double server_lr);
double evaluate(const Backbone& backbone, std::span<const double> merged_delta, const Dataset& ds);

}  // namespace augmp
