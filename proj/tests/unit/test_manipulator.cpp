#include <doctest.h>

#include <cmath>
#include <limits>

#include "augmp/manipulator.hpp"
#include "augmp/sentinel.hpp"
#include "helpers.hpp"

using namespace augmp;

namespace {

// Central-difference gradient of the Lagrangian value.
Vector fd_gradient(const Vector& m, const DualState& dual, const AttackProblem& p, const LagrangianOptions& o,
                   double h = 1e-6) {
  Vector g(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) {
    Vector up = m, dn = m;
    up[k] += h;
    dn[k] -= h;
    g[k] = (augmented_lagrangian(up, dual, p, o).value - augmented_lagrangian(dn, dual, p, o).value) / (2 * h);
  }
  return g;
}

struct SmallProblem {
  QuadraticObjective objective;
  AttackProblem problem;
  Vector m;
};

SmallProblem small_problem(std::size_t dim, std::uint64_t seed) {
  SeededRng rng(seed);
  Vector curv(dim);
  for (double& c : curv) c = 0.5 + rng.uniform();
  SmallProblem s{QuadraticObjective(testing::random_vector(dim, rng.split("c")), curv), {}, {}};
  for (int i = 0; i < 3; ++i) {
    s.problem.observed.push_back(testing::random_vector(dim, rng.split("obs", i)));
    s.problem.observed_weights.push_back(10.0 + 5.0 * i);
  }
  s.problem.own_weight = 12.0;
  s.problem.global_params = testing::random_vector(dim, rng.split("g"), 0.3);
  s.problem.server_lr = 0.8;
  s.problem.previous_global = testing::random_vector(dim, rng.split("prev"));
  s.m = testing::random_vector(dim, rng.split("m"));
  return s;
}

}  // namespace

TEST_CASE("nearest-rank percentile") {
  // ceil(0.9 * 5) = 5 -> the largest.
  CHECK(nearest_rank_percentile({3.0, 1.0, 5.0, 2.0, 4.0}, 90.0) == 5.0);
  CHECK(nearest_rank_percentile({3.0, 1.0, 5.0, 2.0, 4.0}, 60.0) == 3.0);
  CHECK(nearest_rank_percentile({3.0, 1.0, 5.0, 2.0, 4.0}, 0.0) == 1.0);
  CHECK(nearest_rank_percentile({7.0}, 50.0) == 7.0);
  CHECK_THROWS_AS(nearest_rank_percentile({}, 50.0), std::invalid_argument);
  CHECK_THROWS_AS(nearest_rank_percentile({1.0}, 101.0), std::invalid_argument);
}

TEST_CASE("thresholds: kappa 0 gives the max distance; identical updates give similarity 1") {
  const std::vector<Vector> benign{{1.0, 0.0}, {0.0, 2.0}, {3.0, 4.0}};
  const Thresholds t = estimate_thresholds(benign, Vector{0.0, 0.0}, 0.0, 95.0);
  CHECK(t.distance == doctest::Approx(5.0));
  const Thresholds t2 = estimate_thresholds(benign, Vector{0.0, 0.0}, 0.5, 95.0);
  CHECK(t2.distance == doctest::Approx(7.5));
  // cosines: 0, 0.6, 0.8 -> nearest rank 95% is the max.
  CHECK(t.similarity == doctest::Approx(0.8));

  const std::vector<Vector> same(4, Vector{1.0, -2.0, 0.5});
  CHECK(estimate_thresholds(same, Vector{0.0, 0.0, 0.0}, 0.0, 95.0).similarity == doctest::Approx(1.0));
  CHECK_THROWS_AS(estimate_thresholds({Vector{1.0}}, Vector{0.0}, 0.0, 95.0), std::invalid_argument);
}

TEST_CASE("predict_global matches the server's weighted aggregate") {
  SeededRng rng(11);
  std::vector<UpdateVector> ups;
  std::vector<Vector> observed;
  std::vector<double> weights;
  for (int i = 0; i < 4; ++i) {
    ups.push_back(testing::make_update(i, testing::random_vector(9, rng.split("u", i)), 20 + 7 * i));
    observed.push_back(ups.back().values);
    weights.push_back(static_cast<double>(ups.back().claimed_size));
  }
  const Vector own = testing::random_vector(9, rng.split("own"));
  ups.push_back(testing::make_update(9, own, 31));
  CHECK(testing::max_abs_diff(predict_global(observed, weights, own, 31.0), aggregate(ups)) < 1e-12);
  CHECK_THROWS_AS(predict_global(observed, {1.0}, own, 1.0), std::invalid_argument);
}

TEST_CASE("augmented Lagrangian gradient matches finite differences") {
  auto s = small_problem(10, 5);
  s.problem.objective = &s.objective;
  DualState dual;
  dual.lambda = 0.7;
  dual.theta = 0.4;
  dual.rho_lambda = 2.0;
  dual.rho_theta = 3.0;
  dual.thresholds = {1.5, 0.2};

  for (auto form : {PenaltyForm::kSigned, PenaltyForm::kHinge})
    for (auto agg : {SimilarityAggregate::kMax, SimilarityAggregate::kMean})
      for (auto ref : {DistanceReference::kPredicted, DistanceReference::kPrevious, DistanceReference::kBoth})
        for (bool norm : {false, true}) {
          LagrangianOptions o;
          o.form = form;
          o.aggregate = agg;
          o.reference = ref;
          o.normalize_distance = norm;
          o.objective_scale = norm ? 0.3 : 1.0;
          const auto v = augmented_lagrangian(s.m, dual, s.problem, o);
          const Vector fd = fd_gradient(s.m, dual, s.problem, o);
          double scale = 1.0;
          for (double x : fd) scale = std::max(scale, std::abs(x));
          INFO("form " << to_string(form) << " agg " << to_string(agg) << " ref " << to_string(ref) << " norm " << norm);
          CHECK(testing::max_abs_diff(v.gradient, fd) / scale < 1e-6);
        }
}

TEST_CASE("augmented Lagrangian: constraints off is the bare objective") {
  auto s = small_problem(6, 9);
  s.problem.objective = &s.objective;
  DualState dual;
  dual.lambda = 3.0;
  dual.thresholds = {0.1, -1.0};
  LagrangianOptions o;
  o.constraints_enabled = false;
  const auto v = augmented_lagrangian(s.m, dual, s.problem, o);
  CHECK(v.value == v.objective);
}

TEST_CASE("augmented Lagrangian: hinge terms vanish inside the feasible set") {
  auto s = small_problem(6, 13);
  s.problem.objective = &s.objective;
  LagrangianOptions o;
  o.form = PenaltyForm::kHinge;
  o.constraints_enabled = false;
  const auto bare = augmented_lagrangian(s.m, DualState{}, s.problem, o);

  DualState dual;  // multipliers 0
  dual.rho_lambda = dual.rho_theta = 5.0;
  dual.thresholds = {bare.distance + 1.0, 1.0 + 1e-9};
  o.constraints_enabled = true;
  CHECK(augmented_lagrangian(s.m, dual, s.problem, o).value == doctest::Approx(bare.objective).epsilon(1e-14));

  // Signed form at the boundary with zero multipliers is also zero.
  dual.thresholds = {bare.distance, bare.similarity};
  o.form = PenaltyForm::kSigned;
  CHECK(augmented_lagrangian(s.m, dual, s.problem, o).value == doctest::Approx(bare.objective).epsilon(1e-12));
}

TEST_CASE("augmented Lagrangian: input errors") {
  auto s = small_problem(4, 2);
  LagrangianOptions o;
  CHECK_THROWS_AS(augmented_lagrangian(s.m, DualState{}, s.problem, o), std::invalid_argument);  // no objective
  s.problem.objective = &s.objective;
  CHECK_THROWS_AS(augmented_lagrangian(Vector(3, 0.0), DualState{}, s.problem, o), std::invalid_argument);
  s.problem.previous_global.clear();
  o.reference = DistanceReference::kPrevious;
  CHECK_THROWS_AS(augmented_lagrangian(s.m, DualState{}, s.problem, o), std::invalid_argument);
}

TEST_CASE("inner ascent: zero step returns the initial point") {
  auto s = small_problem(8, 21);
  s.problem.objective = &s.objective;
  InnerOptions inner;
  inner.step_size = 0.0;
  const auto r = inner_maximize(s.m, DualState{}, s.problem, LagrangianOptions{}, inner);
  CHECK(testing::max_abs_diff(r.best, s.m) == 0.0);
  CHECK(r.best_value == r.initial_value);
}

TEST_CASE("inner ascent: best is never worse than the start") {
  auto s = small_problem(10, 4);
  s.problem.objective = &s.objective;
  DualState dual;
  dual.lambda = 0.2;
  dual.rho_lambda = 10.0;
  dual.thresholds = {0.5, 0.1};
  InnerOptions inner;
  inner.step_size = 5.0;  // deliberately too large
  const auto r = inner_maximize(s.m, dual, s.problem, LagrangianOptions{}, inner);
  CHECK(r.best_value >= r.initial_value);
  CHECK(r.trace.size() == static_cast<std::size_t>(inner.steps) + 1);
}

TEST_CASE("inner ascent: unconstrained 2-D quadratic converges to its maximizer") {
  // One observed zero update with equal weight: predicted = m / 2, so the
  // maximizer is m* = 2 (center - global) / lr.
  const QuadraticObjective f(Vector{0.4, -0.2}, Vector{1.0, 2.0});
  AttackProblem p;
  p.observed = {Vector{0.0, 0.0}};
  p.observed_weights = {1.0};
  p.own_weight = 1.0;
  p.global_params = {0.1, 0.1};
  p.server_lr = 1.0;
  p.objective = &f;
  LagrangianOptions o;
  o.constraints_enabled = false;
  InnerOptions inner;
  inner.steps = 200;
  inner.step_size = 1.0;
  const auto r = inner_maximize(Vector{0.0, 0.0}, DualState{}, p, o, inner);
  CHECK(r.best[0] == doctest::Approx(0.6).epsilon(1e-3));
  CHECK(r.best[1] == doctest::Approx(-0.6).epsilon(1e-3));

  // The same in rescaled coordinates.
  inner.step_scale = 0.5;
  inner.step_size = 4.0;
  const auto r2 = inner_maximize(Vector{0.0, 0.0}, DualState{}, p, o, inner);
  CHECK(testing::max_abs_diff(r2.best, r.best) < 1e-3);
}

TEST_CASE("inner ascent: fixed coordinates stay put") {
  auto s = small_problem(6, 8);
  s.problem.objective = &s.objective;
  s.problem.free_coords = {1, 4};
  const auto r = inner_maximize(s.m, DualState{}, s.problem, LagrangianOptions{}, InnerOptions{});
  for (std::size_t k : {0, 2, 3, 5}) CHECK(r.best[k] == s.m[k]);
}

TEST_CASE("dual update: projected step, clamp and slack") {
  DualState d;
  d.lambda = 0.5;
  d.theta = 0.1;
  d.step = 0.1;
  d.thresholds = {1.0, 0.3};
  const DualState up = dual_update(d, 1.2, 0.3);
  CHECK(up.lambda == doctest::Approx(0.52));
  CHECK(up.theta == doctest::Approx(0.1));

  DualState small = d;
  small.lambda = 0.01;
  CHECK(dual_update(small, 0.0, 0.3).lambda == 0.0);
  CHECK(dual_update(d, 1.0, -10.0).theta == 0.0);

  const DualState slack = dual_update(d, 0.6, 0.3);
  CHECK(slack.lambda == doctest::Approx(0.46));

  DualUpdateOptions norm;
  norm.normalize_distance = true;
  d.thresholds.distance = 2.0;
  CHECK(dual_update(d, 2.4, 0.3, norm).lambda == doctest::Approx(0.52));

  DualState inactive;
  inactive.lambda = 0.3;
  CHECK(dual_update(inactive, 100.0, 100.0).lambda == 0.3);
}

TEST_CASE("dual update: adaptive rho grows only on worsening violations") {
  DualState d;
  d.thresholds = {1.0, 0.0};
  DualUpdateOptions o;
  o.adaptive_rho = true;
  const DualState a = dual_update(d, 2.0, -1.0, o);
  CHECK(a.rho_lambda == doctest::Approx(1.5));
  CHECK(a.rho_theta == 1.0);
  const DualState b = dual_update(a, 1.5, -1.0, o);
  CHECK(b.rho_lambda == doctest::Approx(1.5));
}

TEST_CASE("median claimed size and coordinate mean") {
  std::vector<UpdateVector> ups{testing::make_update(0, {1.0, 2.0}, 40), testing::make_update(1, {3.0, 0.0}, 10),
                                testing::make_update(2, {2.0, 1.0}, 25), testing::make_update(3, {2.0, 1.0}, 99)};
  CHECK(median_claimed_size(ups) == 25);
  ups.pop_back();
  CHECK(median_claimed_size(ups) == 25);
  CHECK(testing::max_abs_diff(coordinate_mean(ups), Vector{2.0, 1.0}) < 1e-15);
  CHECK_THROWS_AS(median_claimed_size({}), std::invalid_argument);
}

namespace {

struct AdversaryFixture {
  ModelSpec spec;
  Backbone backbone{spec, SeededRng(1).split("backbone")};
  std::vector<UpdateVector> benign;
  AdversaryRoundInput input;

  AdversaryFixture() {
    SeededRng rng(77);
    for (int i = 0; i < 5; ++i)
      benign.push_back(testing::make_update(i, testing::random_vector(spec.update_dim(), rng.split("b", i), 0.01),
                                            100 + 13 * i));
    input.round = 3;
    input.benign = &benign;
    input.global_params = testing::random_vector(spec.update_dim(), rng.split("g"), 0.05);
    input.previous_global_delta = testing::random_vector(spec.update_dim(), rng.split("prev"), 0.01);
    input.thresholds = {0.08, 0.5};
  }

  AugmpAdversary make(AugmpOptions o, std::uint64_t seed = 5) const {
    Dataset held = synth_dataset(4, spec.input_dim, 5, 4.5, SeededRng(seed).split("held"));
    return AugmpAdversary(5, 0, std::move(o), std::make_unique<HeldoutLoss>(backbone, std::move(held)),
                          SeededRng(seed).split("adv"));
  }
};

AugmpOptions quick_options() {
  AugmpOptions o;
  o.selected_count = 16;
  o.vgae.epochs = 3;
  o.vgae.hidden = 8;
  o.vgae.latent = 4;
  o.inner.steps = 5;
  o.lagrangian.reference = DistanceReference::kPrevious;
  return o;
}

}  // namespace

TEST_CASE("adversary: grl_off without ascent submits the benign mean") {
  AdversaryFixture fx;
  AugmpOptions o = quick_options();
  o.grl_off = true;
  o.inner.step_size = 0.0;
  auto adv = fx.make(o);
  const auto out = adv.run_round(fx.input);
  CHECK(out.failure.empty());
  CHECK(testing::max_abs_diff(out.update.values, coordinate_mean(fx.benign)) < 1e-15);
  CHECK(out.update.claimed_size == 126);
  CHECK(out.update.is_malicious);
  CHECK(out.observed_count == 5);
}

TEST_CASE("adversary: stealth report agrees with the sentinel") {
  AdversaryFixture fx;
  auto adv = fx.make(quick_options());
  const auto out = adv.run_round(fx.input);
  REQUIRE(out.failure.empty());
  const auto screen = distance_filter({out.update}, fx.input.previous_global_delta, fx.input.thresholds.distance);
  CHECK(out.report.distance == doctest::Approx(screen.verdict.agents[0].metric).epsilon(1e-12));
  CHECK(out.report.distance_ok == !screen.verdict.agents[0].flagged);
  double top = -1.0;
  for (const auto& b : fx.benign) top = std::max(top, cosine(out.update.values, b.values));
  CHECK(out.report.similarity == doctest::Approx(top).epsilon(1e-12));
  CHECK(out.report.similarity_ok == (top <= fx.input.thresholds.similarity));
}

TEST_CASE("adversary: stealth margin tightens the thresholds it optimizes against") {
  AdversaryFixture fx;
  AugmpOptions o = quick_options();
  o.stealth_margin = 0.1;
  auto adv = fx.make(o);
  const auto out = adv.run_round(fx.input);
  CHECK(out.dual_used.thresholds.distance == doctest::Approx(0.072));
  CHECK(out.dual_used.thresholds.similarity == doctest::Approx(0.4));
  CHECK(out.report.thresholds.distance == 0.08);
}

TEST_CASE("adversary: same seed, same update; penalty-off keeps multipliers at zero") {
  AdversaryFixture fx;
  auto a = fx.make(quick_options());
  auto b = fx.make(quick_options());
  CHECK(a.run_round(fx.input).update.values == b.run_round(fx.input).update.values);

  AugmpOptions off = quick_options();
  off.al_penalty_off = true;
  auto c = fx.make(off);
  for (int r = 1; r <= 3; ++r) {
    fx.input.round = r;
    c.run_round(fx.input);
  }
  CHECK(c.dual().lambda == 0.0);
  CHECK(c.dual().theta == 0.0);
}

TEST_CASE("adversary: missing benign input throws") {
  AdversaryFixture fx;
  auto adv = fx.make(quick_options());
  fx.input.benign = nullptr;
  CHECK_THROWS_AS(adv.run_round(fx.input), std::invalid_argument);
}

TEST_CASE("enum names round-trip") {
  for (auto f : {PenaltyForm::kSigned, PenaltyForm::kHinge}) CHECK(parse_penalty_form(to_string(f)) == f);
  for (auto r : {DistanceReference::kPredicted, DistanceReference::kPrevious, DistanceReference::kBoth})
    CHECK(parse_distance_reference(to_string(r)) == r);
  for (auto a : {SimilarityAggregate::kMax, SimilarityAggregate::kMean})
    CHECK(parse_similarity_aggregate(to_string(a)) == a);
  CHECK_THROWS_AS(parse_penalty_form("quadratic"), std::invalid_argument);
}
