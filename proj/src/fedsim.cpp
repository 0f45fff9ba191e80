#include "augmp/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace augmp {

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

Matrix simplex_means(int classes, std::size_t input_dim, double separation) {
  if (classes < 2) throw std::invalid_argument("synth_dataset: need at least 2 classes");
  if (separation < 0.0) throw std::invalid_argument("synth_dataset: separation must be >= 0");
  const auto n = static_cast<std::size_t>(classes - 1);
  if (input_dim < n)
    throw std::invalid_argument("synth_dataset: simplex placement needs input_dim >= classes-1");

  // Vertices e_1..e_n plus a*(1,...,1) form a regular simplex with edge sqrt(2).
  const double a = (1.0 - std::sqrt(static_cast<double>(classes))) / static_cast<double>(n);
  Matrix means(static_cast<std::size_t>(classes), input_dim);
  for (std::size_t c = 0; c < n; ++c) means(c, c) = 1.0;
  for (std::size_t j = 0; j < n; ++j) means(n, j) = a;
  for (std::size_t j = 0; j < n; ++j) {
    double centroid = 0.0;
    for (std::size_t c = 0; c <= n; ++c) centroid += means(c, j);
    centroid /= static_cast<double>(classes);
    for (std::size_t c = 0; c <= n; ++c)
      means(c, j) = (means(c, j) - centroid) * separation / std::sqrt(2.0);
  }
  return means;
}

Dataset synth_dataset(int classes, std::size_t input_dim, std::size_t per_class,
                      double separation, SeededRng rng, std::string name) {
  if (per_class < 1) throw std::invalid_argument("synth_dataset: per_class must be >= 1");
  const Matrix means = simplex_means(classes, input_dim, separation);
  const std::size_t n = per_class * static_cast<std::size_t>(classes);
  Dataset ds{Matrix(n, input_dim), std::vector<int>(n), classes, std::move(name)};
  std::size_t row = 0;
  for (int c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      for (std::size_t j = 0; j < input_dim; ++j)
        ds.features(row, j) = means(static_cast<std::size_t>(c), j) + rng.normal();
      ds.labels[row] = c;
    }
  }
  return ds;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices, std::string name) {
  Dataset out{Matrix(indices.size(), ds.features.cols()), std::vector<int>(indices.size()),
              ds.classes, std::move(name)};
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = ds.features.row(indices[r]);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
    out.labels[r] = ds.labels[indices[r]];
  }
  return out;
}

namespace {

void shuffle(std::vector<std::size_t>& v, SeededRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

std::vector<std::vector<std::size_t>> dirichlet_draw(
    const std::vector<std::vector<std::size_t>>& by_class, std::size_t agents,
    double concentration, SeededRng& rng) {
  std::vector<std::vector<std::size_t>> parts(agents);
  for (const auto& members : by_class) {
    std::vector<double> p(agents);
    double total = 0.0;
    for (double& x : p) total += (x = rng.gamma(concentration));
    if (!(total > 0.0)) {
      std::fill(p.begin(), p.end(), 1.0);
      total = static_cast<double>(agents);
    }
    double cum = 0.0;
    std::size_t begin = 0;
    for (std::size_t k = 0; k < agents; ++k) {
      cum += p[k] / total;
      std::size_t end = k + 1 == agents
                            ? members.size()
                            : static_cast<std::size_t>(std::floor(cum * static_cast<double>(members.size())));
      end = std::clamp(end, begin, members.size());
      parts[k].insert(parts[k].end(), members.begin() + static_cast<std::ptrdiff_t>(begin),
                      members.begin() + static_cast<std::ptrdiff_t>(end));
      begin = end;
    }
  }
  return parts;
}

}  // namespace

std::vector<std::vector<std::size_t>> dirichlet_partition_indices(const Dataset& ds,
                                                                  std::size_t agents,
                                                                  double concentration,
                                                                  SeededRng rng) {
  if (ds.size() == 0) throw std::invalid_argument("dirichlet_partition: empty dataset");
  if (agents < 1) throw std::invalid_argument("dirichlet_partition: need at least one agent");
  if (!(concentration > 0.0))
    throw std::invalid_argument("dirichlet_partition: concentration must be positive");

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.classes));
  for (std::size_t i = 0; i < ds.size(); ++i)
    by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  for (auto& members : by_class) shuffle(members, rng);

  std::vector<std::vector<std::size_t>> parts;
  for (int attempt = 0; attempt < 100; ++attempt) {
    parts = dirichlet_draw(by_class, agents, concentration, rng);
    if (std::none_of(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); })) break;
  }
  // Still empty after resampling: donate from the largest part.
  for (auto& part : parts) {
    if (!part.empty()) continue;
    auto largest = std::max_element(parts.begin(), parts.end(),
                                    [](const auto& x, const auto& y) { return x.size() < y.size(); });
    if (largest->size() < 2) throw std::invalid_argument("dirichlet_partition: fewer samples than agents");
    part.push_back(largest->back());
    largest->pop_back();
  }
  for (auto& part : parts) std::sort(part.begin(), part.end());
  return parts;
}

std::vector<Dataset> dirichlet_partition(const Dataset& ds, std::size_t agents,
                                         double concentration, SeededRng rng) {
  std::vector<Dataset> out;
  const auto parts = dirichlet_partition_indices(ds, agents, concentration, rng);
  for (std::size_t k = 0; k < parts.size(); ++k)
    out.push_back(subset(ds, parts[k], ds.name + "/agent-" + std::to_string(k)));
  return out;
}

std::pair<Dataset, Dataset> holdout_split(const Dataset& ds, double fraction, SeededRng rng) {
  if (ds.size() < 2) throw std::invalid_argument("holdout_split: need at least 2 samples");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  shuffle(idx, rng);
  auto held = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ds.size())));
  held = std::clamp<std::size_t>(held, 1, ds.size() - 1);
  std::vector<std::size_t> hold(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> keep(idx.begin() + static_cast<std::ptrdiff_t>(held), idx.end());
  std::sort(hold.begin(), hold.end());
  std::sort(keep.begin(), keep.end());
  return {subset(ds, keep, ds.name + "/train"), subset(ds, hold, ds.name + "/holdout")};
}

std::vector<LayerShape> ModelSpec::shapes() const {
  if (layers < 1) throw std::invalid_argument("ModelSpec: need at least one layer");
  std::vector<LayerShape> out;
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t out_dim = l + 1 == layers ? static_cast<std::size_t>(classes) : hidden_dim;
    out.push_back({out_dim, in});
    in = out_dim;
  }
  return out;
}

std::size_t ModelSpec::update_dim() const {
  std::size_t total = 0;
  for (const auto& s : shapes()) total += s.size();
  return total;
}

Vector flatten(const std::vector<Matrix>& layers) {
  Vector out;
  for (const auto& m : layers) out.insert(out.end(), m.data().begin(), m.data().end());
  return out;
}

std::vector<Matrix> unflatten(std::span<const double> values, const std::vector<LayerShape>& shapes) {
  std::size_t total = 0;
  for (const auto& s : shapes) total += s.size();
  if (values.size() != total)
    throw std::invalid_argument("unflatten: length " + std::to_string(values.size()) +
                                " does not match layer shapes (" + std::to_string(total) + ")");
  std::vector<Matrix> out;
  std::size_t offset = 0;
  for (const auto& s : shapes) {
    out.emplace_back(s.rows, s.cols,
                     std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(offset),
                                         values.begin() + static_cast<std::ptrdiff_t>(offset + s.size())));
    offset += s.size();
  }
  return out;
}

Backbone::Backbone(ModelSpec spec, SeededRng rng) : spec_(std::move(spec)) {
  for (const auto& s : spec_.shapes()) {
    if (2 * spec_.lora.rank > std::min(s.rows, s.cols) || spec_.lora.rank < 1)
      throw std::invalid_argument("Backbone: LoRA rank must satisfy 1 <= r <= min(d,k)/2");
    Matrix w(s.rows, s.cols);
    const double sd = 1.0 / std::sqrt(static_cast<double>(s.cols));
    for (double& x : w.data()) x = rng.normal(0.0, sd);
    weights_.push_back(std::move(w));
  }
  if (!(spec_.lora.dropout >= 0.0 && spec_.lora.dropout < 1.0))
    throw std::invalid_argument("Backbone: LoRA dropout must be in [0, 1)");
}

std::vector<Matrix> Backbone::effective(std::span<const double> merged_delta) const {
  auto deltas = unflatten(merged_delta, shapes());
  for (std::size_t l = 0; l < deltas.size(); ++l) deltas[l] = weights_[l] + deltas[l];
  return deltas;
}

LoraAdapter LoraAdapter::init(const ModelSpec& spec, SeededRng rng) {
  LoraAdapter out;
  for (const auto& s : spec.shapes()) {
    Matrix a(spec.lora.rank, s.cols);
    for (double& x : a.data()) x = rng.normal(0.0, 0.01);
    out.a.push_back(std::move(a));
    out.b.emplace_back(s.rows, spec.lora.rank);
  }
  return out;
}

std::vector<Matrix> LoraAdapter::delta(double scale) const {
  std::vector<Matrix> out;
  for (std::size_t l = 0; l < a.size(); ++l) out.push_back(scale * matmul(b[l], a[l]));
  return out;
}

namespace {

std::vector<Matrix> forward_chain(const std::vector<Matrix>& weights, const Matrix& x) {
  std::vector<Matrix> h{x};
  for (const auto& w : weights) {
    if (h.back().cols() != w.cols()) throw std::invalid_argument("forward: dimension mismatch");
    h.push_back(matmul_bt(h.back(), w));
  }
  return h;
}

}  // namespace

LossResult softmax_xent(const std::vector<Matrix>& weights, const Dataset& ds, bool want_grad) {
  if (ds.size() == 0) throw std::invalid_argument("softmax_xent: empty dataset");
  const auto h = forward_chain(weights, ds.features);
  const Matrix& logits = h.back();
  const auto n = static_cast<double>(ds.size());
  Matrix delta(logits.rows(), logits.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - zmax);
    const double log_denom = std::log(denom) + zmax;
    const auto y = static_cast<std::size_t>(ds.labels[i]);
    loss += log_denom - z[y];
    for (std::size_t c = 0; c < z.size(); ++c)
      delta(i, c) = (std::exp(z[c] - log_denom) - (c == y ? 1.0 : 0.0)) / n;
  }
  LossResult out{loss / n, {}};
  if (!want_grad) return out;
  out.grad.resize(weights.size());
  for (std::size_t l = weights.size(); l-- > 0;) {
    out.grad[l] = matmul_at(delta, h[l]);
    if (l > 0) delta = matmul(delta, weights[l]);
  }
  return out;
}

std::vector<int> predict(const std::vector<Matrix>& weights, const Matrix& features) {
  const auto h = forward_chain(weights, features);
  const Matrix& logits = h.back();
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    out[i] = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

AdapterLoss adapter_loss(const std::vector<Matrix>& frozen, const LoraAdapter& adapter, double scale,
                         const Dataset& ds, const std::vector<Vector>& row_masks, bool want_grad) {
  if (frozen.size() != adapter.a.size() || adapter.a.size() != adapter.b.size())
    throw std::invalid_argument("adapter_loss: layer count mismatch");
  std::vector<Matrix> w = frozen;
  for (std::size_t l = 0; l < w.size(); ++l) {
    const Matrix ba = matmul(adapter.b[l], adapter.a[l]);
    for (std::size_t r = 0; r < ba.rows(); ++r) {
      const double m = row_masks.empty() ? 1.0 : row_masks[l][r];
      for (std::size_t c = 0; c < ba.cols(); ++c) w[l](r, c) += scale * m * ba(r, c);
    }
  }
  const LossResult lr = softmax_xent(w, ds, want_grad);
  AdapterLoss out;
  out.loss = lr.loss;
  if (!want_grad) return out;
  for (std::size_t l = 0; l < w.size(); ++l) {
    Matrix g = lr.grad[l];
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const double m = row_masks.empty() ? 1.0 : row_masks[l][r];
      for (double& x : g.row(r)) x *= scale * m;
    }
    out.grad_b.push_back(matmul_bt(g, adapter.a[l]));
    out.grad_a.push_back(matmul_at(adapter.b[l], g));
  }
  return out;
}

LocalResult local_train(const Backbone& backbone, const GlobalState& global, LoraAdapter& adapter,
                        const Dataset& local, const TrainOptions& options, SeededRng rng) {
  if (options.epochs < 0) throw std::invalid_argument("local_train: epochs must be >= 0");
  const auto& spec = backbone.spec();
  const double scale = spec.lora.scale();
  const double p = spec.lora.dropout;
  const auto start_delta = adapter.delta(scale);
  // Frozen part for this round: W0 + global - scale * B0 A0.
  auto frozen = backbone.effective(global.params);
  for (std::size_t l = 0; l < frozen.size(); ++l) frozen[l] = frozen[l] - start_delta[l];

  LocalResult result;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<Vector> masks;
    if (p > 0.0) {
      for (const auto& s : backbone.shapes()) {
        Vector m(s.rows);
        for (double& x : m) x = rng.uniform() < p ? 0.0 : 1.0 / (1.0 - p);
        masks.push_back(std::move(m));
      }
    }
    const AdapterLoss al = adapter_loss(frozen, adapter, scale, local, masks, true);
    if (!std::isfinite(al.loss)) {
      throw std::runtime_error("local_train: non-finite loss at epoch " + std::to_string(epoch) +
                               " on " + local.name + " (lr " + std::to_string(options.lr) + ")");
    }
    result.epoch_losses.push_back(al.loss);
    for (std::size_t l = 0; l < adapter.a.size(); ++l) {
      adapter.b[l] = adapter.b[l] - options.lr * al.grad_b[l];
      adapter.a[l] = adapter.a[l] - options.lr * al.grad_a[l];
    }
  }
  const double final_loss = adapter_loss(frozen, adapter, scale, local, {}, false).loss;
  if (!std::isfinite(final_loss))
    throw std::runtime_error("local_train: non-finite final loss on " + local.name);
  result.epoch_losses.push_back(final_loss);

  const auto end_delta = adapter.delta(scale);
  std::vector<Matrix> diff;
  for (std::size_t l = 0; l < end_delta.size(); ++l) diff.push_back(end_delta[l] - start_delta[l]);
  result.update.values = flatten(diff);
  result.update.round = global.round + 1;
  result.update.claimed_size = static_cast<std::int64_t>(local.size());
  return result;
}

Vector aggregate(const std::vector<UpdateVector>& updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate: no updates");
  std::vector<const UpdateVector*> order;
  for (const auto& u : updates) order.push_back(&u);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* x, const auto* y) { return x->agent_id < y->agent_id; });
  const std::size_t dim = order.front()->values.size();
  double total = 0.0;
  for (const auto* u : order) {
    if (u->values.size() != dim) throw std::invalid_argument("aggregate: length mismatch");
    if (u->claimed_size <= 0) throw std::invalid_argument("aggregate: claimed size must be positive");
    total += static_cast<double>(u->claimed_size);
  }
  Vector out(dim, 0.0);
  for (const auto* u : order) {
    const double w = static_cast<double>(u->claimed_size) / total;
    for (std::size_t k = 0; k < dim; ++k) out[k] += w * u->values[k];
  }
  return out;
}

GlobalState apply_global(const GlobalState& g, std::span<const double> delta, double server_lr) {
  if (delta.size() != g.params.size()) throw std::invalid_argument("apply_global: length mismatch");
  GlobalState next = g;
  next.server_lr = server_lr;
  for (std::size_t k = 0; k < delta.size(); ++k) next.params[k] += server_lr * delta[k];
  ++next.round;
  return next;
}

double evaluate(const Backbone& backbone, std::span<const double> merged_delta, const Dataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  const auto pred = predict(backbone.effective(merged_delta), ds.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == ds.labels[i];
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace augmp
