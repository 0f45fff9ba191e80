#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "augmp/fedsim.hpp"
#include "helpers.hpp"

using namespace augmp;

namespace {

ModelSpec small_spec(std::size_t d_in, int classes, std::size_t rank, double alpha) {
  ModelSpec s;
  s.input_dim = d_in;
  s.classes = classes;
  s.lora.rank = rank;
  s.lora.alpha = alpha;
  return s;
}

// Trains one adapter on `train` for many epochs, starting from a zero global.
Vector train_to_convergence(const Backbone& bb, const Dataset& train, int epochs, double lr) {
  GlobalState g;
  g.params.assign(bb.update_dim(), 0.0);
  LoraAdapter ad = LoraAdapter::init(bb.spec(), SeededRng(5));
  const auto res = local_train(bb, g, ad, train, {epochs, lr}, SeededRng(6));
  return res.update.values;
}

}  // namespace

TEST_CASE("simplex means are pairwise separated by exactly s") {
  const Matrix m = simplex_means(4, 20, 4.5);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) CHECK(euclid(m.row(i), m.row(j)) == doctest::Approx(4.5));
  CHECK_THROWS_AS(simplex_means(5, 3, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(synth_dataset(1, 3, 10, 1.0, SeededRng(1)), std::invalid_argument);
}

TEST_CASE("synth_dataset is deterministic per rng") {
  const Dataset a = synth_dataset(3, 5, 20, 2.0, SeededRng(1).split("d"));
  const Dataset b = synth_dataset(3, 5, 20, 2.0, SeededRng(1).split("d"));
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  const auto counts = a.class_counts();
  CHECK(counts == std::vector<std::size_t>{20, 20, 20});
}

TEST_CASE("trained surrogate separates well-separated blobs") {
  const auto spec = small_spec(2, 2, 1, 2.0);
  const Backbone bb(spec, SeededRng(3));
  const Dataset train = synth_dataset(2, 2, 50, 8.0, SeededRng(1).split("train"));
  const Dataset test = synth_dataset(2, 2, 500, 8.0, SeededRng(1).split("test"));
  const Vector delta = train_to_convergence(bb, train, 400, 0.2);
  CHECK(evaluate(bb, delta, test) >= 0.99);
}

TEST_CASE("coincident means leave the surrogate at chance") {
  const auto spec = small_spec(20, 4, 2, 4.0);
  const Backbone bb(spec, SeededRng(3));
  const Dataset train = synth_dataset(4, 20, 250, 0.0, SeededRng(2).split("train"));
  const Dataset test = synth_dataset(4, 20, 1000, 0.0, SeededRng(2).split("test"));
  const Vector delta = train_to_convergence(bb, train, 200, 0.05);
  CHECK(std::abs(evaluate(bb, delta, test) - 0.25) <= 0.05);
}

TEST_CASE("oracle weights: accurate on separable blobs, chance on permuted labels") {
  const auto spec = small_spec(2, 2, 1, 2.0);
  const Backbone bb(spec, SeededRng(3));
  const Dataset test = synth_dataset(2, 2, 2000, 8.0, SeededRng(4));
  // Centered simplex means have equal norms, so argmax x.mu_c is the nearest-mean rule.
  const Matrix means = simplex_means(2, 2, 8.0);
  const Vector delta = flatten({means - bb.weights()[0]});
  CHECK(evaluate(bb, delta, test) >= 0.99);
  CHECK(evaluate(bb, delta, test) == evaluate(bb, delta, test));

  Dataset shuffled = test;
  SeededRng rng(9);
  for (std::size_t i = shuffled.labels.size(); i > 1; --i) std::swap(shuffled.labels[i - 1], shuffled.labels[rng.uniform_index(i)]);
  for (int& y : shuffled.labels) y = static_cast<int>(rng.uniform_index(2));
  CHECK(std::abs(evaluate(bb, delta, shuffled) - 0.5) <= 0.05);
}

TEST_CASE("dirichlet partition is a disjoint cover with nonempty parts") {
  const Dataset ds = synth_dataset(4, 20, 500, 4.5, SeededRng(1));
  const auto parts = dirichlet_partition_indices(ds, 5, 0.3, SeededRng(2));
  REQUIRE(parts.size() == 5);
  std::vector<std::size_t> all;
  for (const auto& p : parts) {
    CHECK(!p.empty());
    all.insert(all.end(), p.begin(), p.end());
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(ds.size());
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);
  CHECK(parts == dirichlet_partition_indices(ds, 5, 0.3, SeededRng(2)));
  CHECK_THROWS_AS(dirichlet_partition_indices(ds, 5, 0.0, SeededRng(2)), std::invalid_argument);
}

TEST_CASE("dirichlet partition approaches the global histogram for huge concentration") {
  const Dataset ds = synth_dataset(4, 20, 2000, 4.5, SeededRng(1));
  const auto parts = dirichlet_partition(ds, 5, 1e6, SeededRng(2));
  for (const auto& p : parts) {
    const auto counts = p.class_counts();
    for (std::size_t c = 0; c < 4; ++c) {
      const double share = static_cast<double>(counts[c]) / static_cast<double>(p.size());
      CHECK(std::abs(share - 0.25) <= 0.05 * 0.25);
    }
  }
}

TEST_CASE("flatten is row-major and layer ordered") {
  const Matrix a(2, 2, {1, 2, 3, 4});
  CHECK(flatten({a}) == Vector{1, 2, 3, 4});
  const Matrix b(1, 3, {5, 6, 7});
  CHECK(flatten({a, b}) == Vector{1, 2, 3, 4, 5, 6, 7});

  SeededRng rng(4);
  const std::vector<LayerShape> shapes{{3, 5}, {4, 3}, {2, 4}};
  std::vector<Matrix> layers;
  for (std::size_t l = 0; l < shapes.size(); ++l)
    layers.push_back(testing::random_matrix(shapes[l].rows, shapes[l].cols, rng.split("l", l)));
  const Vector flat = flatten(layers);
  CHECK(unflatten(flat, shapes) == layers);
  CHECK_THROWS_AS(unflatten(Vector(flat.size() - 1), shapes), std::invalid_argument);
}

TEST_CASE("model spec enforces the rank bound") {
  ModelSpec s = small_spec(20, 4, 2, 4.0);
  CHECK(s.update_dim() == 80);
  s.lora.rank = 3;  // min(4, 20) / 2 = 2
  CHECK_THROWS_AS(Backbone(s, SeededRng(1)), std::invalid_argument);
  s.lora.rank = 2;
  s.layers = 2;
  CHECK(s.shapes() == std::vector<LayerShape>{{16, 20}, {4, 16}});
}

TEST_CASE("lora init: B = 0 so the delta starts at zero") {
  const auto spec = small_spec(20, 4, 2, 4.0);
  const LoraAdapter ad = LoraAdapter::init(spec, SeededRng(1));
  for (const auto& m : ad.delta(spec.lora.scale())) CHECK(m.frobenius() == 0.0);
  CHECK(ad.a[0].frobenius() > 0.0);
}

TEST_CASE("local_train: zero learning rate gives a zero update") {
  const auto spec = small_spec(20, 4, 2, 4.0);
  const Backbone bb(spec, SeededRng(1));
  const Dataset ds = synth_dataset(4, 20, 10, 4.5, SeededRng(2));
  GlobalState g;
  g.params.assign(bb.update_dim(), 0.0);
  LoraAdapter ad = LoraAdapter::init(spec, SeededRng(3));
  const auto res = local_train(bb, g, ad, ds, {5, 0.0}, SeededRng(4));
  for (double v : res.update.values) CHECK(v == 0.0);
  CHECK(res.update.claimed_size == 40);
}

TEST_CASE("local_train: one step matches a finite-difference gradient step") {
  const auto spec = small_spec(20, 4, 2, 4.0);
  const Backbone bb(spec, SeededRng(1));
  Dataset ds = synth_dataset(4, 20, 1, 4.5, SeededRng(2));
  ds = subset(ds, {0, 2}, "pair");
  GlobalState g;
  g.params = testing::random_vector(bb.update_dim(), SeededRng(8), 0.1);
  LoraAdapter ad = LoraAdapter::init(spec, SeededRng(3));
  ad.b[0] = testing::random_matrix(4, 2, SeededRng(7), 0.3);
  const double scale = spec.lora.scale();
  const double lr = 0.05;

  auto frozen = bb.effective(g.params);
  frozen[0] = frozen[0] - ad.delta(scale)[0];
  auto loss_at = [&](const LoraAdapter& x) { return adapter_loss(frozen, x, scale, ds, {}, false).loss; };
  const double h = 1e-5;
  LoraAdapter stepped = ad;
  for (auto which : {&LoraAdapter::a, &LoraAdapter::b}) {
    Matrix& param = (stepped.*which)[0];
    for (std::size_t k = 0; k < param.data().size(); ++k) {
      LoraAdapter up = ad, dn = ad;
      (up.*which)[0].data()[k] += h;
      (dn.*which)[0].data()[k] -= h;
      param.data()[k] -= lr * (loss_at(up) - loss_at(dn)) / (2 * h);
    }
  }
  const Vector expected = flatten({stepped.delta(scale)[0] - ad.delta(scale)[0]});

  LoraAdapter trained = ad;
  const auto res = local_train(bb, g, trained, ds, {1, lr}, SeededRng(4));
  CHECK(norm2(Vector(res.update.values)) > 0.0);
  Vector diff(expected.size());
  for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = res.update.values[k] - expected[k];
  CHECK(norm2(diff) / norm2(expected) <= 1e-4);
}

TEST_CASE("local_train: loss does not increase across epochs on the synthetic task") {
  const auto spec = small_spec(20, 4, 2, 4.0);
  const Backbone bb(spec, SeededRng(1));
  const Dataset ds = synth_dataset(4, 20, 100, 4.5, SeededRng(2));
  GlobalState g;
  g.params.assign(bb.update_dim(), 0.0);
  LoraAdapter ad = LoraAdapter::init(spec, SeededRng(3));
  const auto res = local_train(bb, g, ad, ds, {5, 0.05}, SeededRng(4));
  REQUIRE(res.epoch_losses.size() == 6);
  for (std::size_t e = 1; e < res.epoch_losses.size(); ++e)
    CHECK(res.epoch_losses[e] <= res.epoch_losses[e - 1] * 1.05);
}

TEST_CASE("local_train: divergence is reported") {
  const auto spec = small_spec(20, 4, 2, 4.0);
  const Backbone bb(spec, SeededRng(1));
  const Dataset ds = synth_dataset(4, 20, 10, 4.5, SeededRng(2));
  GlobalState g;
  g.params.assign(bb.update_dim(), 0.0);
  LoraAdapter ad = LoraAdapter::init(spec, SeededRng(3));
  ad.b[0] = testing::random_matrix(4, 2, SeededRng(7));
  CHECK_THROWS_AS(local_train(bb, g, ad, ds, {50, 1e12}, SeededRng(4)), std::runtime_error);
}

TEST_CASE("aggregate: fixed point, brute force, permutation, errors") {
  const Vector v{1.0, -2.0, 0.5};
  CHECK(aggregate({testing::make_update(0, v, 3), testing::make_update(1, v, 9)}) == v);

  SeededRng rng(12);
  std::vector<UpdateVector> ups;
  const std::int64_t sizes[] = {1, 2, 1};
  for (int i = 0; i < 3; ++i) ups.push_back(testing::make_update(i, testing::random_vector(6, rng.split("u", i)), sizes[i]));
  const Vector agg = aggregate(ups);
  for (std::size_t k = 0; k < 6; ++k) {
    const double brute = 0.25 * ups[0].values[k] + 0.5 * ups[1].values[k] + 0.25 * ups[2].values[k];
    CHECK(std::abs(agg[k] - brute) <= 1e-12);
  }
  std::vector<UpdateVector> perm{ups[2], ups[0], ups[1]};
  CHECK(aggregate(perm) == agg);

  CHECK_THROWS_AS(aggregate({testing::make_update(0, v, 1), testing::make_update(1, v, 0)}), std::invalid_argument);
  CHECK_THROWS_AS(aggregate({testing::make_update(0, v, 1), testing::make_update(1, Vector{1.0}, 1)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
}

TEST_CASE("apply_global: step, zero rate, zero delta") {
  GlobalState g;
  g.params = {1.0, 2.0};
  const auto stepped = apply_global(g, Vector{0.5, -1.0}, 1.0);
  CHECK(stepped.params == Vector{1.5, 1.0});
  CHECK(stepped.round == 1);
  CHECK(apply_global(g, Vector{0.5, -1.0}, 0.0).params == g.params);
  CHECK(apply_global(g, Vector{0.0, 0.0}, 1.0).params == g.params);
  CHECK_THROWS_AS(apply_global(g, Vector{1.0}, 1.0), std::invalid_argument);
}

TEST_CASE("evaluate rejects an empty dataset") {
  const auto spec = small_spec(20, 4, 2, 4.0);
  const Backbone bb(spec, SeededRng(1));
  Dataset empty{Matrix(0, 20), {}, 4, "empty"};
  CHECK_THROWS_AS(evaluate(bb, Vector(80, 0.0), empty), std::invalid_argument);
}
