// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "xclr/audit.hpp"
#include "xclr/cli.hpp"
#include "xclr/data.hpp"
#include "xclr/eval.hpp"
#include "xclr/grad_check.hpp"
#include "xclr/losses.hpp"
#include "xclr/parallel.hpp"
#include "xclr/rng.hpp"
#include "xclr/trainer.hpp"

using namespace xclr;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kGradTol = 1e-5;
constexpr double kFreeFitLoss = 1e-10;
constexpr double kSpreadTol = 1e-3;
constexpr double kTauMaxTol = 1e-2;
constexpr double kMseTol = 1e-10;
constexpr double kScaleTol = 1e-9;
constexpr double kPacA1 = 0.39581, kPacA1Tol = 1e-4;
constexpr double kPacA2 = 0.110736, kPacA2Tol = 1e-5;
constexpr double kPacOne = 0.30962, kPacOneTol = 1e-4;
constexpr double kRandomInitMargin = 0.20;
constexpr double kContinuityTol = 1e-6;

struct Outcome {
  bool pass;
  std::string detail;
};

Array random_matrix(std::size_t n, std::size_t d, Rng& rng) {
  Array a = Array::matrix(n, d);
  for (double& v : a.values()) v = rng.normal();
  return a;
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

DistanceMatrix fixed_distances(const Array& d) {
  DistanceMatrix m;
  m.values = d;
  m.raw = d;
  m.embeddings = Array::matrix(d.rows(), 1);
  return m;
}

// Reference dataset and the 80/20 split used by criteria 7 and 8.
struct Reference {
  Dataset train, val;
};

const Reference& reference() {
  static const Reference r = [] {
    auto [tr, va] = split(generate_synthetic(SyntheticSpec::reference()), 0.8, 0);
    return Reference{std::move(tr), std::move(va)};
  }();
  return r;
}

double probe_on(const EncoderParams& p, const std::vector<std::size_t>& rows) {
  const auto& ref = reference();
  const Array etr = encode(p, ref.train.X), eva = encode(p, ref.val.X);
  std::vector<int> y;
  for (auto i : rows) y.push_back(ref.train.labels()[i]);
  return probe_accuracy(fit_linear_probe(etr.gather(rows), y), eva, ref.val.labels());
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

Outcome gradient_suite() {
  double worst = 0.0;
  std::string worst_at;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(seed, 101));
    const std::size_t n = 3 + seed % 4;
    const std::uint32_t t = 8 + static_cast<std::uint32_t>(seed % 9);
    EncoderConfig enc;
    enc.input_channels = 1;
    enc.input_length = t;
    enc.blocks = 2;
    enc.hidden_channels = 3;
    enc.strides = {1, 1 + static_cast<std::uint32_t>(seed % 2)};
    enc.head_hidden = 4;
    enc.embedding_dim = 1 + static_cast<std::uint32_t>(seed % 4);
    enc.seed = seed;
    const EncoderParams params = init_encoder(enc);
    Array X({n, 1, t});
    for (double& v : X.values()) v = rng.normal();
    const Array F = random_matrix(n, 2, rng);

    for (LossKind k : {LossKind::pair, LossKind::quad, LossKind::expclr, LossKind::mse_decode,
                       LossKind::binned}) {
      TrainConfig cfg;
      cfg.loss = k;
      cfg.normalize_distances = true;
      cfg.margin = {1.0, 0.5};
      cfg.bins = 2;
      const ParameterSet head = init_head(k, enc.embedding_dim, F.cols(), seed);
      DifferentiableFn fe = [&](const ParameterSet& q) {
        const auto o = evaluate_batch({enc, q}, head, cfg, k, X, F);
        return ValueAndGrad{o.value, o.encoder_grad};
      };
      double err = grad_check(fe, params.params, 1e-6).max_rel_error;
      if (head.size() > 0) {
        DifferentiableFn fh = [&](const ParameterSet& h) {
          const auto o = evaluate_batch(params, h, cfg, k, X, F);
          return ValueAndGrad{o.value, o.head_grad};
        };
        err = std::max(err, grad_check(fh, head, 1e-6).max_rel_error);
      }
      if (err > worst) {
        worst = err;
        worst_at = to_string(k) + " seed " + std::to_string(seed);
      }
    }
  }
  return {worst < kGradTol, "max rel error " + fmt(worst) + " (" + worst_at + ")"};
}

Outcome free_embedding_property() {
  double worst_spread = 0.0, worst_rel = 0.0, worst_loss = 0.0;
  for (std::uint64_t inst = 0; inst < 10; ++inst) {
    Rng rng(derive_seed(inst, 202));
    const std::size_t n = 6 + 14 * inst / 9;  // 6 .. 20
    const std::size_t d = 1 + inst % 3;
    const Array f = random_matrix(n, d, rng);
    const double margin = 0.5 + 0.25 * static_cast<double>(inst % 4);
    const auto fit = fit_free_embeddings(f, d, margin, inst, kFreeFitLoss);
    const auto r = pair_lipschitz(fit.embeddings, f, margin);
    worst_loss = std::max(worst_loss, fit.loss);
    worst_spread = std::max(worst_spread, r.spread);
    worst_rel = std::max({worst_rel, std::abs(r.l_min - r.target) / r.target,
                          std::abs(r.l_max - r.target) / r.target});
  }
  return {worst_loss < kFreeFitLoss && worst_spread < kSpreadTol && worst_rel < kSpreadTol,
          "max loss " + fmt(worst_loss) + ", max spread " + fmt(worst_spread) + ", max bound error " +
              fmt(worst_rel)};
}

Outcome temperature_limits() {
  double worst_max = 0.0, worst_ratio = 0.0;
  bool bounded = true;
  for (std::uint64_t inst = 0; inst < 10; ++inst) {
    Rng rng(derive_seed(inst, 303));
    const std::size_t n = 4 + inst % 4;
    Array dist = Array::matrix(n, n), sim = Array::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        dist(i, j) = rng.uniform(0.0, 2.0);
        sim(i, j) = rng.uniform();
      }
    const auto d = fixed_distances(dist);
    const auto q = quad_loss(d, sim, 1.0);
    double lo = INFINITY, hi = -INFINITY;
    for (double v : q.components.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    worst_max = std::max(worst_max, std::abs(expclr_loss(d, sim, {1.0, 1e-3}).value - hi));
    // tau * (lse_mean - mean) <= (max - min)^2 / 8 for every tau.
    const double c = (hi - lo) * (hi - lo) / 8.0;
    for (double tau : {10.0, 100.0, 1000.0}) {
      const double scaled = std::abs(expclr_loss(d, sim, {1.0, tau}).value - q.value) * tau;
      bounded = bounded && scaled <= c;
      worst_ratio = std::max(worst_ratio, scaled / c);
    }
  }
  return {worst_max < kTauMaxTol && bounded,
          "max |value - max| at tau=1e-3 " + fmt(worst_max) + ", max tau*gap / C " + fmt(worst_ratio)};
}

Outcome rescaling() {
  SyntheticSpec s;
  s.n = 48;
  s.length = 16;
  const Dataset d = generate_synthetic(s);
  EncoderConfig enc = EncoderConfig::defaults(1, 16, 4, 1);
  TrainConfig t;
  t.loss = LossKind::mse_decode;
  t.epochs = 3;
  t.batch_size = 16;
  const TrainResult r = train(enc, t, d);
  const auto bias = r.head.get("decoder.bias").values();
  const LinearMap m{r.head.get("decoder.weight"), {bias.begin(), bias.end()}};
  double worst_mse = 0.0, worst_scale = 0.0;
  bool flags = true;
  for (double c : {0.1, 0.5, 2.0, 10.0}) {
    const auto rep = rescaling_counterexample(r.params, m, c, d.X, d.F);
    worst_mse = std::max(worst_mse, std::abs(rep.mse_after - rep.mse_before));
    worst_scale = std::max({worst_scale, std::abs(rep.l_min_after - c * rep.l_min_before) / (c * rep.l_min_before),
                            std::abs(rep.l_max_after - c * rep.l_max_before) / (c * rep.l_max_before)});
    flags = flags && rep.mse_unchanged && rep.bounds_scaled;
  }
  return {flags && worst_mse < kMseTol && worst_scale < kScaleTol,
          "max |dMSE| " + fmt(worst_mse) + ", max bound scale error " + fmt(worst_scale)};
}

Outcome pac_oracles() {
  const double a1 = pac_bound_validation_interval(1000, 0.05);
  const double a2 = pac_bound_training_interval(0.05, 1000, 0.05);
  const double one = pac_bound_one_sided(1000, 0.05);
  std::vector<std::uint64_t> grid;
  for (std::uint64_t n = 100; n <= 10000000; n *= 10) grid.push_back(n);
  const auto curve = pac_curve(grid, 0.05, 0.05);
  const bool crossover = curve.crossover.has_value() && curve.a2_wins_below_crossover &&
                         curve.rows.front().bound_a2 < curve.rows.front().bound_a1;
  return {std::abs(a1 - kPacA1) < kPacA1Tol && std::abs(a2 - kPacA2) < kPacA2Tol &&
              std::abs(one - kPacOne) < kPacOneTol && crossover,
          "a1 " + fmt(a1, 8) + ", a2 " + fmt(a2, 8) + ", one-sided " + fmt(one, 8) + ", crossover N_val " +
              (curve.crossover ? std::to_string(*curve.crossover) : std::string("none"))};
}

Outcome one_hot_reduction() {
  std::size_t checked = 0;
  for (int classes = 2; classes <= 6; ++classes) {
    Rng rng(static_cast<std::uint64_t>(classes));
    std::vector<int> y(25);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % classes);
    rng.shuffle(y);
    const Array f = one_hot(y, classes);
    for (auto spec : {SimilaritySpec::linear(), SimilaritySpec::quadratic(),
                      SimilaritySpec::linear().with_global_max(std::sqrt(2.0)),
                      SimilaritySpec::quadratic().with_global_max(std::sqrt(2.0))}) {
      const Array s = similarity_matrix(f, spec);
      for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j) {
          if (s(i, j) != (y[i] == y[j] ? 1.0 : 0.0))
            return {false, "mismatch at classes " + std::to_string(classes)};
          ++checked;
        }
    }
  }
  return {true, std::to_string(checked) + " entries exactly delta"};
}

Outcome synthetic_end_to_end() {
  const auto& ref = reference();
  const auto rows = all_rows(ref.train.size());
  int ok = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const EncoderConfig enc = EncoderConfig::defaults(1, 64, 16, seed);
    TrainConfig t;
    t.seed = seed;
    t.margin = {1.0, 1.0};
    t.batch_size = 64;
    t.epochs = 30;
    const double random_init = probe_on(init_encoder(enc), rows);
    const double quad = probe_on(train(enc, t, ref.train).params, rows);
    t.similarity = SimilaritySpec::linear();
    const double lin = probe_on(train(enc, t, ref.train).params, rows);
    const bool pass = quad - random_init >= kRandomInitMargin && quad >= lin;
    ok += pass;
    detail += (seed ? "; " : "") + std::string("seed ") + std::to_string(seed) + ": random " +
              fmt(random_init, 3) + " quad " + fmt(quad, 3) + " linear " + fmt(lin, 3);
  }
  return {ok == 3, detail};
}

Outcome semi_supervised_trend() {
  const auto& ref = reference();
  int ok = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const EncoderConfig enc = EncoderConfig::defaults(1, 64, 16, seed);
    TrainConfig t;
    t.seed = seed;
    t.label_fraction = 0.1;
    t.mode = TrainMode::SS;
    const TrainResult ss = train(enc, t, ref.train);
    t.mode = TrainMode::S;
    const TrainResult sup = train(enc, t, ref.train);
    // The probe sees only the labelled 10% in both arms.
    const double a = probe_on(ss.params, ss.labeled_indices);
    const double b = probe_on(sup.params, sup.labeled_indices);
    ok += a >= b;
    detail += (seed ? "; " : "") + std::string("seed ") + std::to_string(seed) + ": SS " + fmt(a, 3) +
              " S " + fmt(b, 3);
  }
  return {ok == 3, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "xclr");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int rc = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (rc != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return rc;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "xclr_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path config = root / "config.json";
  std::ofstream(config) << R"({"train": {"epochs": 3}, "trials": 2, "eval": {"knn": true}})";
  struct Run {
    std::string ckpt0, ckpt1, metrics;
  };
  auto run_with = [&](const char* threads, const std::string& tag) -> std::optional<Run> {
    setenv("XCLR_THREADS", threads, 1);
    set_thread_count(0);
    const std::string out = (root / tag).string();
    if (invoke({"train", "--config", config.string(), "--out", out}) != 0) return std::nullopt;
    if (invoke({"eval", "--config", config.string(), "--out", out}) != 0) return std::nullopt;
    return Run{slurp(fs::path(out) / "trial_0" / "checkpoint.xclrp"),
               slurp(fs::path(out) / "trial_1" / "checkpoint.xclrp"), slurp(fs::path(out) / "metrics.csv")};
  };
  const auto a = run_with("1", "a"), b = run_with("1", "b"), c = run_with("4", "c");
  unsetenv("XCLR_THREADS");
  fs::remove_all(root);
  if (!a || !b || !c) return {false, "a run failed"};
  auto same = [](const Run& x, const Run& y) {
    return x.ckpt0 == y.ckpt0 && x.ckpt1 == y.ckpt1 && x.metrics == y.metrics;
  };
  const bool repeat = same(*a, *b), threads = same(*a, *c);
  return {repeat && threads && !a->ckpt0.empty() && a->ckpt0 != a->ckpt1,
          std::string("repeat ") + (repeat ? "identical" : "differs") + ", 1 vs 4 threads " +
              (threads ? "identical" : "differs") + ", " + std::to_string(a->ckpt0.size()) + "-byte checkpoints"};
}

Outcome derivative_continuity() {
  const double s = 0.5, h = 1e-7;
  const Array sim = Array::from_rows({{1, s}, {s, 1}});
  auto value = [&](decltype(quad_loss)* loss, double d01) {
    return loss(fixed_distances(Array::from_rows({{0, d01}, {0.5, 0}})), sim, 1.0).value;
  };
  // Per-pair derivative w.r.t. D_01, scaled back by the 1/N^2 pair weight.
  auto left = [&](decltype(quad_loss)* loss) { return 4.0 * (value(loss, 0.5) - value(loss, 0.5 - h)) / h; };
  auto right = [&](decltype(quad_loss)* loss) { return 4.0 * (value(loss, 0.5 + h) - value(loss, 0.5)) / h; };
  const double quad_gap = std::abs(right(quad_loss) - left(quad_loss));
  const double pair_gap = std::abs(right(pair_loss) - left(pair_loss));
  return {quad_gap < kContinuityTol && pair_gap > 0.5,
          "quad jump " + fmt(quad_gap) + ", pair jump " + fmt(pair_gap)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"free-embedding bilipschitz minimum", free_embedding_property},
      {"temperature limits", temperature_limits},
      {"rescaling counterexample", rescaling},
      {"PAC formula oracles and crossover", pac_oracles},
      {"one-hot reduction", one_hot_reduction},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"semi-supervised trend", semi_supervised_trend},
      {"determinism", determinism},
      {"derivative continuity contrast", derivative_continuity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("%s %2zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
