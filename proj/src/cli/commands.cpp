#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "xclr/audit.hpp"
#include "xclr/binio.hpp"
#include "xclr/cli.hpp"
#include "xclr/error.hpp"
#include "xclr/eval.hpp"

namespace xclr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Context {
  ExperimentConfig cfg;
  std::string hash;
  fs::path out;
  std::ostream& log;
};

Dataset load_data(const ExperimentConfig& cfg) {
  if (cfg.dataset_path) return load_dataset(*cfg.dataset_path);
  return generate_synthetic(cfg.synthetic);
}

struct Splits {
  Dataset train;
  Dataset val;
};

Splits make_splits(const ExperimentConfig& cfg) {
  auto [a, b] = split(load_data(cfg), cfg.split_fraction, cfg.split_seed);
  return {std::move(a), std::move(b)};
}

fs::path trial_dir(const Context& ctx, std::uint64_t seed) {
  return ctx.out / ("trial_" + std::to_string(seed));
}

std::ofstream open_out(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw DataError(DataErrorCode::io, "cannot write " + p.string());
  return os;
}

void write_history(const fs::path& p, const TrainHistory& h, const std::string& hash) {
  auto os = open_out(p);
  os << "config_hash,epoch,loss,lr,seconds\n";
  for (const auto& r : h.records)
    os << hash << ',' << r.epoch << ',' << format_number(r.loss) << ',' << format_number(r.lr)
       << ',' << format_number(r.seconds) << '\n';
}

struct Scores {
  double lin = NAN;
  double knn = NAN;
};

Scores score(const ExperimentConfig& cfg, const EncoderParams& params, const Splits& s,
             std::uint64_t seed) {
  const Array e_tr = encode(params, s.train.X);
  const Array e_val = encode(params, s.val.X);
  Scores out;
  if (cfg.eval.linear) {
    const auto probe = fit_linear_probe(
        e_tr, s.train.labels(), {cfg.eval.probe_iterations, cfg.eval.probe_lr, seed});
    out.lin = probe_accuracy(probe, e_val, s.val.labels());
  }
  if (cfg.eval.knn)
    out.knn = knn_accuracy(e_tr, s.train.labels(), e_val, s.val.labels(), cfg.eval.k);
  return out;
}

std::string cell(double v) { return std::isnan(v) ? "" : format_number(v); }

struct Aggregate {
  double mean = NAN;
  double stderr_ = NAN;
};

Aggregate aggregate(const std::vector<double>& v) {
  Aggregate a;
  std::vector<double> x;
  for (double d : v)
    if (!std::isnan(d)) x.push_back(d);
  if (x.empty()) return a;
  double s = 0.0;
  for (double d : x) s += d;
  a.mean = s / static_cast<double>(x.size());
  if (x.size() < 2) {
    a.stderr_ = 0.0;
    return a;
  }
  double ss = 0.0;
  for (double d : x) ss += (d - a.mean) * (d - a.mean);
  a.stderr_ = std::sqrt(ss / static_cast<double>(x.size() - 1)) / std::sqrt(static_cast<double>(x.size()));
  return a;
}

// Rows keyed by a leading label column, followed by mean and stderr rows per label.
void write_scores_csv(const fs::path& p, const std::string& hash, const std::string& header,
                      const std::vector<std::pair<std::string, std::vector<std::pair<std::uint64_t, Scores>>>>& groups) {
  auto os = open_out(p);
  os << "config_hash," << header << ",seed,lin_acc,knn_acc\n";
  for (const auto& [label, rows] : groups) {
    std::vector<double> lin, knn;
    for (const auto& [seed, sc] : rows) {
      os << hash << ',' << label << ',' << seed << ',' << cell(sc.lin) << ',' << cell(sc.knn) << '\n';
      lin.push_back(sc.lin);
      knn.push_back(sc.knn);
    }
    const auto al = aggregate(lin), ak = aggregate(knn);
    os << hash << ',' << label << ",mean," << cell(al.mean) << ',' << cell(ak.mean) << '\n';
    os << hash << ',' << label << ",stderr," << cell(al.stderr_) << ',' << cell(ak.stderr_) << '\n';
  }
}

TrainConfig trial_train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainConfig t = cfg.train;
  t.seed = seed;
  return t;
}

// ---------------------------------------------------------------- subcommands

int cmd_gen_data(Context& ctx, const std::string& output) {
  const Dataset ds = load_data(ctx.cfg);
  const fs::path path = output.empty() ? ctx.out / "dataset.xclrd" : fs::path(output);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_dataset(ds, path);
  std::string checksum;
  if (fs::is_regular_file(path)) {
    std::ifstream is(path, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    checksum = binio::hex64(binio::fnv1a(bytes));
  }
  ctx.log << "wrote " << path.string() << " N=" << ds.size() << " d=" << ds.feature_dim();
  if (!checksum.empty()) ctx.log << " checksum=" << checksum;
  ctx.log << '\n';
  return 0;
}

int cmd_train(Context& ctx) {
  const Splits s = make_splits(ctx.cfg);
  for (auto seed : ctx.cfg.seeds) {
    const auto enc = encoder_for(ctx.cfg, s.train.channels(), s.train.length(), seed);
    const TrainResult r = train(enc, trial_train_config(ctx.cfg, seed), s.train);
    const fs::path dir = trial_dir(ctx, seed);
    fs::create_directories(dir);
    save_checkpoint(r.params, dir / "checkpoint.xclrp");
    write_history(dir / "history.csv", r.history, ctx.hash);
    ctx.log << "trial " << seed << ": " << r.history.records.size() << " epochs";
    if (!r.history.records.empty())
      ctx.log << ", final loss " << format_number(r.history.records.back().loss);
    ctx.log << '\n';
  }
  return 0;
}

int cmd_finetune(Context& ctx) {
  if (!ctx.cfg.train.label_fraction)
    throw ConfigError("train.label_fraction", "required for finetune");
  const Splits s = make_splits(ctx.cfg);
  for (auto seed : ctx.cfg.seeds) {
    const fs::path dir = trial_dir(ctx, seed);
    const EncoderParams params = load_checkpoint(dir / "checkpoint.xclrp");
    TrainConfig t = trial_train_config(ctx.cfg, seed);
    t.mode = TrainMode::SS;
    const TrainResult r = fine_tune(params, t, s.train);
    save_checkpoint(r.params, dir / "checkpoint_ft.xclrp");
    write_history(dir / "history_ft.csv", r.history, ctx.hash);
    ctx.log << "trial " << seed << ": fine-tuned on " << r.labeled_indices.size() << " labels\n";
  }
  return 0;
}

int cmd_eval(Context& ctx, const std::string& checkpoint, bool random_init) {
  const Splits s = make_splits(ctx.cfg);
  const std::string lf = ctx.cfg.train.label_fraction ? format_number(*ctx.cfg.train.label_fraction) : "";
  auto os = open_out(ctx.out / "metrics.csv");
  os << "config_hash,method,mode,label_fraction,seed,lin_acc,knn_acc\n";
  auto emit = [&](const std::string& method, const std::string& mode,
                  const std::vector<std::pair<std::uint64_t, Scores>>& rows) {
    std::vector<double> lin, knn;
    const std::string prefix = ctx.hash + ',' + method + ',' + mode + ',' + lf + ',';
    for (const auto& [seed, sc] : rows) {
      os << prefix << seed << ',' << cell(sc.lin) << ',' << cell(sc.knn) << '\n';
      lin.push_back(sc.lin);
      knn.push_back(sc.knn);
      ctx.log << method << " seed " << seed << ": lin_acc=" << cell(sc.lin)
              << " knn_acc=" << cell(sc.knn) << '\n';
    }
    const auto al = aggregate(lin), ak = aggregate(knn);
    os << prefix << "mean," << cell(al.mean) << ',' << cell(ak.mean) << '\n';
    os << prefix << "stderr," << cell(al.stderr_) << ',' << cell(ak.stderr_) << '\n';
  };

  std::vector<std::pair<std::uint64_t, Scores>> trained, init;
  for (auto seed : ctx.cfg.seeds) {
    const EncoderParams params = load_checkpoint(trial_dir(ctx, seed) / checkpoint);
    trained.emplace_back(seed, score(ctx.cfg, params, s, seed));
    if (random_init) init.emplace_back(seed, score(ctx.cfg, init_encoder(params.config), s, seed));
  }
  emit(to_string(ctx.cfg.train.loss), to_string(ctx.cfg.train.mode), trained);
  if (random_init) emit("random_init", "none", init);
  return 0;
}

json pac_block(std::uint64_t nval, double delta, double pval) {
  json j = {{"nval", nval}, {"delta", delta}, {"pval", pval}};
  for (auto a : {PacApproach::validation_interval, PacApproach::training_interval, PacApproach::one_sided}) {
    const auto r = pac_report(a, nval, delta, pval);
    j[to_string(a)] = {{"bound", r.bound}, {"vacuous", r.vacuous}};
  }
  return j;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

int cmd_audit(Context& ctx, bool pac_only) {
  const auto& a = ctx.cfg.audit;
  json report = {{"config_hash", ctx.hash}};
  if (a.pac || pac_only) {
    report["pac"] = pac_block(a.nval, a.delta, a.pval);
    for (const char* k : {"validation_interval", "training_interval", "one_sided"})
      ctx.log << k << " bound: " << format_number(report["pac"][k]["bound"].get<double>()) << '\n';
  }
  if (a.bilipschitz && !pac_only) {
    const Splits s = make_splits(ctx.cfg);
    json trials = json::array();
    for (auto seed : ctx.cfg.seeds) {
      const fs::path ckpt = trial_dir(ctx, seed) / "checkpoint.xclrp";
      if (!fs::exists(ckpt)) continue;
      const EncoderParams params = load_checkpoint(ckpt);
      const Array e_tr = encode(params, s.train.X), e_val = encode(params, s.val.X);
      const auto bl = pair_lipschitz(e_val, s.val.F, ctx.cfg.train.margin.margin);

      // Intervals from disjoint training pairs, violations on disjoint validation pairs.
      auto index_range = [](std::size_t n) {
        std::vector<std::size_t> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = i;
        return v;
      };
      const auto z_tr = pair_constants(
          e_tr, s.train.F, sample_disjoint_pairs(index_range(s.train.size()), a.pair_seed));
      const auto z_val = pair_constants(
          e_val, s.val.F, sample_disjoint_pairs(index_range(s.val.size()), a.pair_seed + 1));
      json t = {{"seed", seed},
                {"l_min", finite_or_null(bl.l_min)},
                {"l_max", finite_or_null(bl.l_max)},
                {"target", bl.target},
                {"spread", finite_or_null(bl.spread)},
                {"unbounded", bl.unbounded}};
      if (!z_tr.empty() && !z_val.empty()) {
        const auto [lo, hi] = std::minmax_element(z_tr.begin(), z_tr.end());
        const auto [vlo, vhi] = std::minmax_element(z_val.begin(), z_val.end());
        const double pval = empirical_violation_rate(z_val, *lo, *hi);
        t["train_interval"] = {finite_or_null(*lo), finite_or_null(*hi)};
        t["val_interval"] = {finite_or_null(*vlo), finite_or_null(*vhi)};
        t["pac"] = pac_block(z_val.size(), a.delta, pval);
      }
      ctx.log << "trial " << seed << ": l_min=" << cell(bl.l_min) << " l_max=" << cell(bl.l_max)
              << " target=" << format_number(bl.target) << (bl.unbounded ? " (unbounded)" : "")
              << '\n';
      trials.push_back(t);
    }
    report["trials"] = trials;
  }
  auto os = open_out(ctx.out / "audit.json");
  os << report.dump(2) << '\n';
  return 0;
}

int cmd_pac_curve(Context& ctx) {
  const auto curve = pac_curve(ctx.cfg.audit.pac_grid, ctx.cfg.audit.delta, ctx.cfg.audit.pval);
  auto os = open_out(ctx.out / "pac_curve.csv");
  os << "config_hash,N_val,bound_a1,bound_a2\n";
  for (const auto& r : curve.rows)
    os << ctx.hash << ',' << r.n_val << ',' << format_number(r.bound_a1) << ','
       << format_number(r.bound_a2) << '\n';
  if (curve.crossover)
    ctx.log << "approach 1 is tighter from N_val = " << *curve.crossover << '\n';
  else
    ctx.log << "approach 2 is tighter on the whole grid\n";
  return 0;
}

int cmd_ablate_similarity(Context& ctx) {
  const Splits s = make_splits(ctx.cfg);
  std::vector<std::pair<std::string, std::vector<std::pair<std::uint64_t, Scores>>>> groups;
  for (auto kind : {SimilarityKind::linear, SimilarityKind::quadratic, SimilarityKind::gaussian}) {
    std::vector<std::pair<std::uint64_t, Scores>> rows;
    for (auto seed : ctx.cfg.seeds) {
      TrainConfig t = trial_train_config(ctx.cfg, seed);
      t.mode = TrainMode::U;
      t.similarity.kind = kind;
      t.similarity.sigma = kind == SimilarityKind::gaussian
                               ? std::optional<double>(ctx.cfg.train.similarity.sigma.value_or(1.0))
                               : std::nullopt;
      const auto enc = encoder_for(ctx.cfg, s.train.channels(), s.train.length(), seed);
      const auto r = train(enc, t, s.train);
      rows.emplace_back(seed, score(ctx.cfg, r.params, s, seed));
      ctx.log << to_string(kind) << " seed " << seed << ": lin_acc=" << cell(rows.back().second.lin) << '\n';
    }
    groups.emplace_back(to_string(kind), std::move(rows));
  }
  write_scores_csv(ctx.out / "ablate_similarity.csv", ctx.hash, "similarity", groups);
  return 0;
}

int cmd_ablate_tau(Context& ctx) {
  const Splits s = make_splits(ctx.cfg);
  std::vector<std::pair<std::string, std::vector<std::pair<std::uint64_t, Scores>>>> groups;
  for (double tau : ctx.cfg.tau_grid) {
    std::vector<std::pair<std::uint64_t, Scores>> rows;
    for (auto seed : ctx.cfg.seeds) {
      TrainConfig t = trial_train_config(ctx.cfg, seed);
      t.mode = TrainMode::U;
      t.loss = LossKind::expclr;
      t.margin.temperature = tau;
      const auto enc = encoder_for(ctx.cfg, s.train.channels(), s.train.length(), seed);
      const auto r = train(enc, t, s.train);
      rows.emplace_back(seed, score(ctx.cfg, r.params, s, seed));
      ctx.log << "tau " << format_number(tau) << " seed " << seed
              << ": lin_acc=" << cell(rows.back().second.lin) << '\n';
    }
    groups.emplace_back(format_number(tau), std::move(rows));
  }
  write_scores_csv(ctx.out / "ablate_tau.csv", ctx.hash, "tau", groups);
  return 0;
}

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> out, mode, loss, sim, dataset;
  std::vector<std::uint64_t> seeds;
  std::optional<double> tau, margin, label_fraction, delta, pval;
  std::optional<std::uint64_t> nval;
  std::optional<std::uint32_t> epochs;
  bool pac = false;
  std::string output;
  std::string checkpoint = "checkpoint.xclrp";
  bool random_init = false;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON experiment config");
  sub->add_option("--set", f.sets, "Override a config field: path.to.field=value");
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--seed", f.seeds, "Trial seed (repeatable)");
  sub->add_option("--dataset", f.dataset, "Dataset file or CSV directory");
  sub->add_option("--mode", f.mode, "Training mode: U, S or SS");
  sub->add_option("--loss", f.loss, "pair, quad, expclr, mse, binned or cross_entropy");
  sub->add_option("--sim", f.sim, "linear, quadratic or gaussian");
  sub->add_option("--tau", f.tau, "ExpCLR temperature");
  sub->add_option("--delta-margin", f.margin, "Margin");
  sub->add_option("--label-fraction", f.label_fraction, "Labelled fraction for S and SS");
  sub->add_option("--epochs", f.epochs, "Training epochs");
  sub->add_option("--nval", f.nval, "Validation pair count for the bounds");
  sub->add_option("--delta", f.delta, "Confidence parameter of the bounds");
  sub->add_option("--pval", f.pval, "Validation violation rate for the training-interval bound");
}

json load_config_json(const Flags& f) {
  json j = json::object();
  if (!f.config.empty()) {
    std::ifstream is(f.config);
    if (!is) throw ConfigError("--config", "cannot open " + f.config);
    j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("--config", f.config + " is not valid JSON");
  }
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set", "expected path=value, got '" + s + "'");
    apply_override(j, s.substr(0, eq), s.substr(eq + 1));
  }
  auto set_if = [&](const char* path, const auto& opt) {
    if (opt) j[json::json_pointer(path)] = *opt;
  };
  set_if("/out", f.out);
  set_if("/train/mode", f.mode);
  set_if("/train/loss", f.loss);
  set_if("/train/similarity/kind", f.sim);
  set_if("/train/tau", f.tau);
  set_if("/train/margin", f.margin);
  set_if("/train/label_fraction", f.label_fraction);
  set_if("/train/epochs", f.epochs);
  set_if("/audit/nval", f.nval);
  set_if("/audit/delta", f.delta);
  set_if("/audit/pval", f.pval);
  if (f.dataset) {
    j["dataset"] = json::object();
    j["dataset"]["path"] = *f.dataset;
  }
  if (!f.seeds.empty()) {
    j["seeds"] = f.seeds;
    if (j.contains("trials")) j["trials"] = f.seeds.size();
  }
  if (f.pac) j["audit"]["pac"] = true;
  return j;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Expert-feature contrastive representation learning for time series"};
  app.require_subcommand(1);
  Flags f;
  std::map<std::string, CLI::App*> subs;
  for (const char* name : {"gen-data", "train", "finetune", "eval", "audit", "pac-curve",
                           "ablate-similarity", "ablate-tau"}) {
    subs[name] = app.add_subcommand(name);
    add_common(subs[name], f);
  }
  subs["gen-data"]->description("Generate or convert a dataset");
  subs["gen-data"]->add_option("--output", f.output, "Dataset path (.xclrd file or CSV directory)");
  subs["train"]->description("Train one encoder per seed on the training split");
  subs["finetune"]->description("Fine-tune trained encoders on a labelled fraction");
  subs["eval"]->description("Linear-probe and KNN accuracy on the held-out split");
  subs["eval"]->add_option("--checkpoint", f.checkpoint, "Checkpoint file name inside each trial directory");
  subs["eval"]->add_flag("--random-init", f.random_init, "Also score the untrained encoder");
  subs["audit"]->description("Bilipschitz statistics and PAC bounds");
  subs["audit"]->add_flag("--pac", f.pac, "Report only the PAC formula bounds");
  subs["pac-curve"]->description("Both PAC bounds over a grid of validation pair counts");
  subs["ablate-similarity"]->description("Compare the three similarity measures");
  subs["ablate-tau"]->description("Sweep the ExpCLR temperature");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    Context ctx{parse_experiment(load_config_json(f)), {}, {}, out};
    ctx.hash = config_hash(ctx.cfg);
    ctx.out = ctx.cfg.out_dir;
    fs::create_directories(ctx.out);
    if (subs["gen-data"]->parsed()) return cmd_gen_data(ctx, f.output);
    if (subs["train"]->parsed()) return cmd_train(ctx);
    if (subs["finetune"]->parsed()) return cmd_finetune(ctx);
    if (subs["eval"]->parsed()) return cmd_eval(ctx, f.checkpoint, f.random_init);
    if (subs["audit"]->parsed()) return cmd_audit(ctx, f.pac);
    if (subs["pac-curve"]->parsed()) return cmd_pac_curve(ctx);
    if (subs["ablate-similarity"]->parsed()) return cmd_ablate_similarity(ctx);
    if (subs["ablate-tau"]->parsed()) return cmd_ablate_tau(ctx);
  } catch (const ConfigError& e) {
    err << "config error at " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    err << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 4;
  } catch (const CheckpointError& e) {
    err << "data error: " << e.what() << '\n';
    return 4;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace xclr::cli
