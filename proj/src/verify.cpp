#include "augmp/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <stdexcept>

#include "augmp/experiment.hpp"
#include "augmp/gst.hpp"
#include "augmp/manipulator.hpp"
#include "augmp/vgae.hpp"

namespace augmp {

namespace {

using Results = std::vector<CheckResult>;

void add(Results& out, std::string module, std::string op, std::string check, double value, double tol) {
  out.push_back({std::move(module), std::move(op), std::move(check), value, tol, value <= tol});
}

Matrix random_symmetric(std::size_t n, SeededRng rng) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) m(i, j) = m(j, i) = rng.normal();
  return m;
}

Matrix random_adjacency(std::size_t n, SeededRng rng) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 2.0 * rng.uniform() - 1.0;
  return a;
}

Matrix random_matrix(std::size_t r, std::size_t c, SeededRng rng, double sd = 1.0) {
  Matrix m(r, c);
  for (double& x : m.data()) x = rng.normal(0.0, sd);
  return m;
}

// ||analytic - numeric||_inf / max(||numeric||_inf, floor)
double relative_gap(const Vector& analytic, const Vector& numeric, double floor = 1e-8) {
  double diff = 0.0, scale = floor;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    diff = std::max(diff, std::abs(analytic[k] - numeric[k]));
    scale = std::max(scale, std::abs(numeric[k]));
  }
  return diff / scale;
}

Vector central_difference(std::function<double(const Vector&)> f, Vector x, double h = 1e-5) {
  Vector g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double keep = x[k];
    x[k] = keep + h;
    const double up = f(x);
    x[k] = keep - h;
    const double down = f(x);
    x[k] = keep;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

void numerics(Results& out) {
  const SeededRng rng(20240611);
  for (std::size_t n : {3u, 8u, 32u, 64u}) {
    const Matrix s = random_symmetric(n, rng.split("sym", n));
    const EigenPair e = sym_eig(s);
    Matrix lambda(n, n);
    for (std::size_t i = 0; i < n; ++i) lambda(i, i) = e.values[i];
    const Matrix recon = matmul_bt(matmul(e.vectors, lambda), e.vectors);
    const std::string tag = std::to_string(n) + "x" + std::to_string(n);
    add(out, "mathcore", "sym_eig", "reconstruction residual, relative, " + tag,
        (s - recon).frobenius() / s.frobenius(), 1e-8);
    add(out, "mathcore", "sym_eig", "orthonormality max|B^T B - I|, " + tag,
        max_abs_diff(matmul_at(e.vectors, e.vectors), Matrix::identity(n)), 1e-10);
    double trace = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      trace += s(i, i);
      sum += e.values[i];
    }
    add(out, "mathcore", "sym_eig", "trace = sum of eigenvalues, relative, " + tag,
        std::abs(trace - sum) / std::max(1.0, std::abs(trace)), 1e-9);
    double order = 0.0;
    for (std::size_t i = 1; i < n; ++i) order = std::max(order, e.values[i - 1] - e.values[i]);
    add(out, "mathcore", "sym_eig", "eigenvalues ascending, " + tag, order, 0.0);
  }
  {
    const Matrix l = laplacian(clamp_nonnegative(random_adjacency(24, rng.split("lap"))));
    const EigenPair e = sym_eig(l);
    add(out, "mathcore", "sym_eig", "Laplacian spectrum >= -1e-9", std::max(0.0, -e.values.front()), 1e-9);
  }
  {
    double sym = 0.0, scale = 0.0, tri = 0.0, eu = 0.0;
    SeededRng r = rng.split("metrics");
    for (int trial = 0; trial < 200; ++trial) {
      Vector u(10), v(10), w(10);
      for (std::size_t k = 0; k < 10; ++k) {
        u[k] = r.normal();
        v[k] = r.normal();
        w[k] = r.normal();
      }
      sym = std::max(sym, std::abs(cosine(u, v) - cosine(v, u)));
      Vector cu = u;
      for (double& x : cu) x *= 3.7;
      scale = std::max(scale, std::abs(cosine(cu, v) - cosine(u, v)));
      tri = std::max(tri, euclid(u, w) - euclid(u, v) - euclid(v, w));
      double ss = 0.0;
      for (std::size_t k = 0; k < 10; ++k) ss += (u[k] - v[k]) * (u[k] - v[k]);
      eu = std::max(eu, std::abs(euclid(u, v) - std::sqrt(ss)));
    }
    add(out, "mathcore", "cosine", "symmetry, exact", sym, 0.0);
    add(out, "mathcore", "cosine", "positive scale invariance", scale, 1e-12);
    add(out, "mathcore", "euclid", "triangle inequality slack", std::max(0.0, tri), 1e-12);
    add(out, "mathcore", "euclid", "sum-of-squares oracle", eu, 1e-12);
  }
  {
    SeededRng r = rng.split("aggregate");
    double gap = 0.0, perm = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<UpdateVector> ups(5);
      double total = 0.0;
      for (int i = 0; i < 5; ++i) {
        ups[static_cast<std::size_t>(i)].agent_id = i;
        ups[static_cast<std::size_t>(i)].claimed_size = 1 + static_cast<std::int64_t>(r.uniform_index(400));
        for (int k = 0; k < 40; ++k) ups[static_cast<std::size_t>(i)].values.push_back(r.normal());
        total += static_cast<double>(ups[static_cast<std::size_t>(i)].claimed_size);
      }
      const Vector agg = aggregate(ups);
      for (std::size_t k = 0; k < 40; ++k) {
        double brute = 0.0;
        for (const auto& u : ups) brute += static_cast<double>(u.claimed_size) / total * u.values[k];
        gap = std::max(gap, std::abs(agg[k] - brute));
      }
      std::reverse(ups.begin(), ups.end());
      const Vector again = aggregate(ups);
      for (std::size_t k = 0; k < 40; ++k) perm = std::max(perm, std::abs(again[k] - agg[k]));
    }
    add(out, "fedsim", "aggregate", "brute-force weighted mean", gap, 1e-12);
    add(out, "fedsim", "aggregate", "permutation invariance", perm, 1e-12);
  }
  {
    ModelSpec spec;
    spec.input_dim = 7;
    spec.classes = 3;
    spec.layers = 3;
    spec.hidden_dim = 5;
    std::vector<Matrix> layers;
    for (const auto& s : spec.shapes()) layers.push_back(random_matrix(s.rows, s.cols, rng.split("flat", s.cols)));
    const auto back = unflatten(flatten(layers), spec.shapes());
    double gap = 0.0;
    for (std::size_t l = 0; l < layers.size(); ++l) gap = std::max(gap, max_abs_diff(layers[l], back[l]));
    add(out, "fedsim", "flatten", "unflatten(flatten(x)) = x", gap, 0.0);
  }
}

Dataset small_dataset(std::size_t input_dim, int classes, SeededRng rng) {
  return synth_dataset(classes, input_dim, 3, 2.0, rng, "probe");
}

void gradients(Results& out) {
  const SeededRng rng(77031);
  {
    // Softmax cross-entropy through a two-layer chain.
    ModelSpec spec;
    spec.input_dim = 6;
    spec.classes = 3;
    spec.layers = 2;
    spec.hidden_dim = 4;
    const auto shapes = spec.shapes();
    std::vector<Matrix> w;
    for (const auto& s : shapes) w.push_back(random_matrix(s.rows, s.cols, rng.split("chain", s.rows), 0.5));
    const Dataset ds = small_dataset(6, 3, rng.split("chain-data"));
    const Vector analytic = flatten(softmax_xent(w, ds, true).grad);
    const Vector numeric = central_difference(
        [&](const Vector& x) { return softmax_xent(unflatten(x, shapes), ds, false).loss; }, flatten(w));
    add(out, "fedsim", "local loss", "dLoss/dW vs central differences", relative_gap(analytic, numeric), 1e-4);
  }
  {
    // Factor gradients of the adapted loss, with a dropout mask.
    ModelSpec spec;
    spec.input_dim = 8;
    spec.classes = 4;
    spec.layers = 2;
    spec.hidden_dim = 6;
    spec.lora.rank = 2;
    const Backbone backbone(spec, rng.split("backbone"));
    LoraAdapter adapter = LoraAdapter::init(spec, rng.split("adapter"));
    for (std::size_t l = 0; l < adapter.b.size(); ++l)
      adapter.b[l] = random_matrix(adapter.b[l].rows(), adapter.b[l].cols(), rng.split("b", l), 0.3);
    for (std::size_t l = 0; l < adapter.a.size(); ++l)
      adapter.a[l] = random_matrix(adapter.a[l].rows(), adapter.a[l].cols(), rng.split("a", l), 0.3);
    const Dataset ds = small_dataset(8, 4, rng.split("adapter-data"));
    std::vector<Vector> masks;
    for (const auto& s : spec.shapes()) {
      Vector m(s.rows, 1.0 / 0.9);
      m[0] = 0.0;
      masks.push_back(m);
    }
    const double scale = spec.lora.scale();
    const AdapterLoss al = adapter_loss(backbone.weights(), adapter, scale, ds, masks, true);
    auto pack = [](const LoraAdapter& a) {
      Vector v = flatten(a.a);
      const Vector b = flatten(a.b);
      v.insert(v.end(), b.begin(), b.end());
      return v;
    };
    auto unpack = [&](const Vector& v) {
      LoraAdapter a = adapter;
      std::size_t pos = 0;
      for (auto* group : {&a.a, &a.b})
        for (auto& m : *group)
          for (double& x : m.data()) x = v[pos++];
      return a;
    };
    Vector analytic = flatten(al.grad_a);
    const Vector gb = flatten(al.grad_b);
    analytic.insert(analytic.end(), gb.begin(), gb.end());
    const Vector numeric = central_difference(
        [&](const Vector& x) { return adapter_loss(backbone.weights(), unpack(x), scale, ds, masks, false).loss; },
        pack(adapter));
    add(out, "fedsim", "local loss", "dLoss/dA, dLoss/dB vs central differences", relative_gap(analytic, numeric),
        1e-4);
  }
  {
    // ELBO with fixed reparameterization noise.
    const std::size_t m = 9, b = 4;
    CorrelationGraph g;
    g.features = random_matrix(b, m, rng.split("features"));
    g.adjacency = random_adjacency(m, rng.split("adjacency"));
    for (std::size_t i = 0; i < m; ++i) g.adjacency(i, i) = 0.0;
    const Matrix x = node_features(g, false);
    const PropagationMatrix prop = normalize_adjacency(g.adjacency);
    const Matrix targets = edge_targets(g.adjacency);
    const VgaeParams params = VgaeParams::init(x.cols(), 6, 3, rng.split("vgae"));
    const Matrix noise = random_matrix(m, 3, rng.split("noise"));
    const ElboGradient eg = elbo_gradient(x, prop, params, targets, noise);
    auto pack = [](const VgaeParams& p) {
      Vector v = p.w1.data();
      v.insert(v.end(), p.w_mu.data().begin(), p.w_mu.data().end());
      v.insert(v.end(), p.w_sigma.data().begin(), p.w_sigma.data().end());
      return v;
    };
    auto unpack = [&](const Vector& v) {
      VgaeParams p = params;
      std::size_t pos = 0;
      for (auto* mat : {&p.w1, &p.w_mu, &p.w_sigma})
        for (double& val : mat->data()) val = v[pos++];
      return p;
    };
    const Vector numeric = central_difference(
        [&](const Vector& v) {
          const Encoding e = encode(x, prop, unpack(v), noise);
          return elbo(decode(e.z), targets, e.mu, e.logsigma);
        },
        pack(params));
    add(out, "vgae", "elbo", "dELBO/dW vs central differences", relative_gap(pack(eg.grad), numeric), 1e-4);
  }
  {
    // Augmented Lagrangian on a 10-dim instance with a held-out loss surrogate.
    ModelSpec spec;
    spec.input_dim = 5;
    spec.classes = 2;
    spec.lora.rank = 1;
    const Backbone backbone(spec, rng.split("al-backbone"));
    HeldoutLoss objective(backbone, small_dataset(5, 2, rng.split("al-data")));
    AttackProblem problem;
    for (int i = 0; i < 4; ++i) {
      Vector v(10);
      SeededRng r = rng.split("al-observed", static_cast<std::uint64_t>(i));
      for (double& x : v) x = r.normal(0.0, 0.3);
      problem.observed.push_back(v);
      problem.observed_weights.push_back(10.0 + i);
    }
    problem.own_weight = 11.0;
    problem.global_params = random_matrix(1, 10, rng.split("al-global"), 0.2).data();
    problem.server_lr = 0.8;
    problem.objective = &objective;
    DualState dual;
    dual.lambda = 0.7;
    dual.theta = 0.4;
    dual.rho_lambda = 2.0;
    dual.rho_theta = 3.0;
    dual.thresholds = {0.35, 0.2};
    const Vector m0 = random_matrix(1, 10, rng.split("al-point"), 0.4).data();
    for (auto form : {PenaltyForm::kSigned, PenaltyForm::kHinge})
      for (auto agg : {SimilarityAggregate::kMax, SimilarityAggregate::kMean}) {
        LagrangianOptions opt;
        opt.form = form;
        opt.aggregate = agg;
        const auto analytic = augmented_lagrangian(m0, dual, problem, opt).gradient;
        const Vector numeric = central_difference(
            [&](const Vector& x) { return augmented_lagrangian(x, dual, problem, opt).value; }, m0);
        add(out, "manipulator", "augmented_lagrangian",
            "gradient vs central differences (" + std::string(to_string(form)) + ", " +
                std::string(to_string(agg)) + ")",
            relative_gap(analytic, numeric), 1e-4);
      }
    problem.previous_global = random_matrix(1, 10, rng.split("al-previous"), 0.3).data();
    for (auto ref : {DistanceReference::kPrevious, DistanceReference::kBoth}) {
      LagrangianOptions opt;
      opt.reference = ref;
      opt.normalize_distance = true;
      opt.objective_scale = 0.4;
      const auto analytic = augmented_lagrangian(m0, dual, problem, opt).gradient;
      const Vector numeric = central_difference(
          [&](const Vector& x) { return augmented_lagrangian(x, dual, problem, opt).value; }, m0);
      add(out, "manipulator", "augmented_lagrangian",
          "gradient vs central differences (" + std::string(to_string(ref)) + " reference, d / d_T)",
          relative_gap(analytic, numeric), 1e-4);
    }
  }
}

void gst_suite(Results& out) {
  const SeededRng rng(5150);
  for (std::size_t m : {6u, 16u, 40u}) {
    const Matrix a = clamp_nonnegative(random_adjacency(m, rng.split("adj", m)));
    const Matrix f = random_matrix(5, m, rng.split("f", m));
    const SpectralBasis basis = gft_basis(laplacian(a));
    const Matrix f_hat = reconstruct_features(spectral_coeffs(f, basis), basis);
    const std::string tag = "M=" + std::to_string(m);
    add(out, "gst", "reconstruct_features", "round trip ||F_hat - F||_F with A_hat = A, " + tag,
        (f_hat - f).frobenius(), 1e-10);
    const Matrix& l = basis.laplacian;
    double rows = 0.0, sym = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        s += l(i, j);
        sym = std::max(sym, std::abs(l(i, j) - l(j, i)));
      }
      rows = std::max(rows, std::abs(s));
    }
    add(out, "gst", "laplacian", "row sums zero, " + tag, rows, 1e-12);
    add(out, "gst", "laplacian", "symmetric, " + tag, sym, 0.0);
    add(out, "gst", "gft_basis", "smallest eigenvalue >= -1e-9, " + tag, std::max(0.0, -basis.eigenvalues.front()),
        1e-9);
    add(out, "gst", "gft_basis", "orthonormal basis, " + tag,
        max_abs_diff(matmul_at(basis.basis, basis.basis), Matrix::identity(m)), 1e-10);
  }
  {
    // Pipeline on real graph-builder output: reconstructed features stay finite
    // and a VGAE-decoded adjacency gives a valid Laplacian.
    std::vector<UpdateVector> observed(5);
    SeededRng r = rng.split("observed");
    for (int i = 0; i < 5; ++i) {
      observed[static_cast<std::size_t>(i)].agent_id = i;
      for (int k = 0; k < 30; ++k) observed[static_cast<std::size_t>(i)].values.push_back(r.normal());
    }
    const auto selected = select_params(observed, 12, SelectionPolicy::kVarianceTop);
    const CorrelationGraph g = build_graph(observed, selected);
    VgaeOptions vo;
    vo.hidden = 16;
    vo.latent = 8;
    const VgaeState st = train_vgae(g, vo, rng.split("vgae"));
    const Matrix f_hat = reconstruct_features(spectral_coeffs(g.features, gft_basis(laplacian(clamp_nonnegative(g.adjacency)))),
                                              gft_basis(laplacian(st.a_hat)));
    add(out, "gst", "reconstruct_features", "finite output on a VGAE reconstruction",
        all_finite(f_hat.data()) ? 0.0 : 1.0, 0.0);
    add(out, "gst", "reconstruct_features", "energy preserved ||F_hat||_F = ||F||_F, relative",
        std::abs(f_hat.frobenius() - g.features.frobenius()) / g.features.frobenius(), 1e-10);
  }
}

void duals(Results& out) {
  SeededRng rng(99);
  std::size_t negatives = 0;
  double worst = 0.0;
  for (int seq = 0; seq < 10000; ++seq) {
    DualState d;
    d.lambda = rng.uniform();
    d.theta = rng.uniform();
    d.step = 0.01 + rng.uniform();
    d.thresholds = {rng.uniform() * 2.0, 2.0 * rng.uniform() - 1.0};
    for (int k = 0; k < 10; ++k) {
      d = dual_update(d, 4.0 * rng.uniform(), 2.0 * rng.uniform() - 1.0);
      if (d.lambda < 0.0 || d.theta < 0.0) ++negatives;
      worst = std::min({worst, d.lambda, d.theta});
    }
  }
  add(out, "manipulator", "dual_update", "negative multipliers over 1e4 random sequences",
      static_cast<double>(negatives), 0.0);
  {
    DualState d;
    d.lambda = 0.5;
    d.step = 0.1;
    d.thresholds = {1.0, std::numeric_limits<double>::infinity()};
    const DualState n = dual_update(d, 1.2, 0.0);
    add(out, "manipulator", "dual_update", "lambda 0.5, step 0.1, violation 0.2 -> 0.52", std::abs(n.lambda - 0.52),
        1e-15);
  }
  {
    DualState d;
    d.thresholds = {1.0, 0.5};
    double drift = 0.0;
    for (int k = 0; k < 50; ++k) {
      d = dual_update(d, 0.5, 0.1);
      drift = std::max({drift, d.lambda, d.theta});
    }
    add(out, "manipulator", "dual_update", "strict slack keeps multipliers at 0", drift, 0.0);
  }
  {
    // Concave instance: quadratic surrogate, hinge distance penalty only.
    const std::size_t dim = 6;
    Vector center(dim), curvature(dim, 1.0);
    for (std::size_t k = 0; k < dim; ++k) center[k] = 0.5 * static_cast<double>(k) - 1.0;
    QuadraticObjective objective(center, curvature);
    AttackProblem problem;
    problem.observed = {Vector(dim, 0.1), Vector(dim, -0.05)};
    problem.observed_weights = {1.0, 1.0};
    problem.own_weight = 1.0;
    problem.global_params.assign(dim, 0.0);
    problem.objective = &objective;
    DualState d;
    d.lambda = 0.3;
    d.rho_lambda = 2.0;
    d.thresholds = {0.5, std::numeric_limits<double>::infinity()};
    LagrangianOptions opt;
    opt.form = PenaltyForm::kHinge;
    InnerOptions inner;
    inner.steps = 5000;
    inner.step_size = 0.5;
    const InnerResult r = inner_maximize(Vector(dim, 0.0), d, problem, opt, inner);
    SeededRng probes(4242);
    double worst_gap = 0.0;
    for (int p = 0; p < 10; ++p) {
      Vector x(dim);
      for (double& v : x) v = probes.normal(0.0, 1.5);
      worst_gap = std::max(worst_gap, augmented_lagrangian(x, d, problem, opt).value - r.best_value);
    }
    add(out, "manipulator", "inner_maximize", "dual value >= Lagrangian at 10 probes", worst_gap, 1e-9);
  }
}

void determinism(Results& out) {
  {
    SeededRng a(7), b(7), c = SeededRng(7).split("agent-0"), d = SeededRng(7).split("agent-0");
    double diff = 0.0;
    for (int i = 0; i < 100; ++i) {
      diff += a.next_u64() != b.next_u64();
      diff += c.next_u64() != d.next_u64();
    }
    add(out, "mathcore", "SeededRng", "identical streams for identical seeds and labels", diff, 0.0);
  }
  ExperimentConfig c;
  c.rounds = 4;
  c.attack = "augmp";
  c.defense = "both";
  c.train_per_class = 60;
  c.test_per_class = 40;
  c.vgae_epochs = 5;
  c.inner_steps = 10;
  const RunResult r1 = run_experiment(c);
  const RunResult r2 = run_experiment(c);
  double rows = 0.0;
  for (std::size_t i = 0; i < r1.rounds.size(); ++i) rows += metrics_row(r1.rounds[i]) != metrics_row(r2.rounds[i]);
  add(out, "harness_cli", "run_experiment", "metrics rows identical across repeated runs", rows, 0.0);
  auto s1 = r1.summary, s2 = r2.summary;
  s1.erase("wall_time_seconds");
  s2.erase("wall_time_seconds");
  add(out, "harness_cli", "run_experiment", "summary identical apart from wall time", s1 == s2 ? 0.0 : 1.0, 0.0);
  const ExperimentConfig back = parse_config(serialize(c));
  add(out, "harness_cli", "config", "parse(serialize(config)) = config", back == c ? 0.0 : 1.0, 0.0);
}

}  // namespace

const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names = {"numerics", "gradients", "gst", "duals", "determinism", "all"};
  return names;
}

std::vector<CheckResult> run_verify(const std::string& suite) {
  Results out;
  const bool all = suite == "all";
  if (!all && std::find(verify_suites().begin(), verify_suites().end(), suite) == verify_suites().end())
    throw std::invalid_argument("unknown verify suite '" + suite +
                                "' (numerics, gradients, gst, duals, determinism, all)");
  if (all || suite == "numerics") numerics(out);
  if (all || suite == "gradients") gradients(out);
  if (all || suite == "gst") gst_suite(out);
  if (all || suite == "duals") duals(out);
  if (all || suite == "determinism") determinism(out);
  return out;
}

bool print_report(const std::vector<CheckResult>& results, std::ostream& out) {
  char line[512];
  std::snprintf(line, sizeof line, "%-12s %-22s %-62s %12s %10s  %s\n", "module", "operation", "check", "value",
                "tolerance", "status");
  out << line;
  bool ok = true;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-12s %-22s %-62s %12.3e %10.1e  %s\n", r.module.c_str(), r.operation.c_str(),
                  r.check.c_str(), r.value, r.tolerance, r.passed ? "ok" : "FAIL");
    out << line;
    ok = ok && r.passed;
  }
  for (const auto& r : results)
    if (!r.passed)
      out << "FAILED: " << r.module << "::" << r.operation << " (" << r.check << "): " << r.value
          << " exceeds tolerance " << r.tolerance << "\n";
  out << (ok ? "all checks passed" : "some checks failed") << " (" << results.size() << " checks)\n";
  return ok;
}

}  // namespace augmp
