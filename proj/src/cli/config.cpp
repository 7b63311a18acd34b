#include <charconv>
#include <cmath>
#include <set>

#include "xclr/binio.hpp"
#include "xclr/cli.hpp"
#include "xclr/error.hpp"

namespace xclr::cli {

using nlohmann::json;

std::string format_number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

namespace {

// Reads the members of one JSON object, rejecting unknown keys on finish().
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  const json& raw(const std::string& key) { return j_.at(key); }

  void read(const std::string& key, bool& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(at(key), "expected a boolean");
    out = v.get<bool>();
  }
  void read(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) throw ConfigError(at(key), "must be finite");
  }
  void read(const std::string& key, std::optional<double>& out) {
    if (!has(key)) return;
    double d = 0.0;
    read(key, d);
    out = d;
  }
  template <typename U>
    requires std::is_unsigned_v<U>
  void read(const std::string& key, U& out) {
    if (!has(key)) return;
    out = to_unsigned<U>(j_.at(key), at(key));
  }
  void read(const std::string& key, int& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
    out = v.get<int>();
  }
  void read(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    out = v.get<std::string>();
  }
  template <typename U>
  void read_list(const std::string& key, std::vector<U>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(at(key), "expected a nonempty array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = at(key) + "[" + std::to_string(i) + "]";
      if constexpr (std::is_unsigned_v<U>) {
        out.push_back(to_unsigned<U>(v[i], p));
      } else {
        if (!v[i].is_number()) throw ConfigError(p, "expected a number");
        out.push_back(v[i].get<U>());
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(at(it.key()), "unknown field");
  }

 private:
  template <typename U>
  static U to_unsigned(const json& v, const std::string& p) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      throw ConfigError(p, "expected a nonnegative integer");
    const auto u = v.get<std::uint64_t>();
    if (u > std::numeric_limits<U>::max()) throw ConfigError(p, "value too large");
    return static_cast<U>(u);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto as_field(const std::string& field, Fn&& fn) {
  try {
    return fn();
  } catch (const ContractError& e) {
    throw ConfigError(field, e.what());
  }
}

void parse_synthetic(ObjectReader& r, SyntheticSpec& s) {
  r.read("n", s.n);
  r.read("channels", s.channels);
  r.read("length", s.length);
  r.read("classes", s.classes);
  s.feature_dim = 4 * s.channels;
  r.read("feature_dim", s.feature_dim);
  r.read("noise_std", s.noise_std);
  r.read("seed", s.seed);
  std::string family = to_string(s.family);
  r.read("family", family);
  s.family = as_field(r.at("family"), [&] { return synthetic_family_from_string(family); });
  r.finish();
  as_field(r.at(""), [&] { s.validate(); });
}

}  // namespace

ExperimentConfig parse_experiment(const json& j) {
  ExperimentConfig c;
  ObjectReader root(j, "");

  if (root.has("dataset")) {
    ObjectReader r(root.raw("dataset"), "dataset");
    std::string path;
    r.read("path", path);
    if (!path.empty()) c.dataset_path = path;
    if (r.has("synthetic")) {
      if (c.dataset_path) throw ConfigError("dataset", "give either path or synthetic, not both");
      ObjectReader s(r.raw("synthetic"), "dataset.synthetic");
      parse_synthetic(s, c.synthetic);
    }
    r.finish();
  }

  if (root.has("encoder")) {
    ObjectReader r(root.raw("encoder"), "encoder");
    r.read("blocks", c.encoder.blocks);
    r.read("hidden_channels", c.encoder.hidden_channels);
    r.read("kernel_size", c.encoder.kernel_size);
    if (r.has("strides")) {
      r.read_list("strides", c.encoder.strides);
      c.encoder_strides_set = true;
    }
    r.read("head_hidden", c.encoder.head_hidden);
    r.read("embedding_dim", c.encoder.embedding_dim);
    std::string act = c.encoder.head_activation == HeadActivation::relu ? "relu" : "identity";
    r.read("head_activation", act);
    if (act == "identity")
      c.encoder.head_activation = HeadActivation::identity;
    else if (act == "relu")
      c.encoder.head_activation = HeadActivation::relu;
    else
      throw ConfigError("encoder.head_activation", "expected identity or relu");
    r.finish();
  } else {
    c.encoder.embedding_dim = 16;
  }

  if (root.has("train")) {
    ObjectReader r(root.raw("train"), "train");
    TrainConfig& t = c.train;
    std::string s = to_string(t.mode);
    r.read("mode", s);
    t.mode = as_field("train.mode", [&] { return train_mode_from_string(s); });
    s = to_string(t.loss);
    r.read("loss", s);
    t.loss = as_field("train.loss", [&] { return loss_kind_from_string(s); });
    if (r.has("similarity")) {
      ObjectReader sr(r.raw("similarity"), "train.similarity");
      s = to_string(t.similarity.kind);
      sr.read("kind", s);
      t.similarity.kind = as_field("train.similarity.kind", [&] { return similarity_kind_from_string(s); });
      sr.read("sigma", t.similarity.sigma);
      std::string scope = t.similarity.scope == SimilarityScope::global ? "global" : "batch";
      sr.read("scope", scope);
      if (scope == "global")
        t.similarity.scope = SimilarityScope::global;
      else if (scope == "batch")
        t.similarity.scope = SimilarityScope::batch;
      else
        throw ConfigError("train.similarity.scope", "expected batch or global");
      sr.finish();
    }
    r.read("margin", t.margin.margin);
    r.read("tau", t.margin.temperature);
    r.read("epochs", t.epochs);
    r.read("fine_tune_epochs", t.fine_tune_epochs);
    r.read("batch_size", t.batch_size);
    r.read("base_lr", t.base_lr);
    r.read("decay", t.decay);
    r.read("label_fraction", t.label_fraction);
    r.read("normalize_distances", t.normalize_distances);
    r.read("bins", t.bins);
    r.finish();
  }
  if (c.train.similarity.kind == SimilarityKind::gaussian && !c.train.similarity.sigma)
    c.train.similarity.sigma = 1.0;
  if (c.train.similarity.kind != SimilarityKind::gaussian && c.train.similarity.sigma)
    throw ConfigError("train.similarity.sigma", "only the gaussian similarity takes sigma");
  as_field("train", [&] { c.train.validate(); });

  if (root.has("split")) {
    ObjectReader r(root.raw("split"), "split");
    r.read("fraction", c.split_fraction);
    r.read("seed", c.split_seed);
    r.finish();
  }
  if (!(c.split_fraction > 0.0 && c.split_fraction < 1.0))
    throw ConfigError("split.fraction", "must lie in (0, 1)");

  if (root.has("eval")) {
    ObjectReader r(root.raw("eval"), "eval");
    r.read("linear", c.eval.linear);
    r.read("knn", c.eval.knn);
    r.read("k", c.eval.k);
    r.read("probe_iterations", c.eval.probe_iterations);
    r.read("probe_lr", c.eval.probe_lr);
    r.finish();
  }
  if (c.eval.k == 0) throw ConfigError("eval.k", "must be positive");
  if (!(c.eval.probe_lr > 0.0)) throw ConfigError("eval.probe_lr", "must be positive");

  if (root.has("audit")) {
    ObjectReader r(root.raw("audit"), "audit");
    r.read("bilipschitz", c.audit.bilipschitz);
    r.read("pac", c.audit.pac);
    r.read("delta", c.audit.delta);
    r.read("nval", c.audit.nval);
    r.read("pval", c.audit.pval);
    r.read("pair_seed", c.audit.pair_seed);
    r.read_list("pac_grid", c.audit.pac_grid);
    r.finish();
  }
  if (!(c.audit.delta > 0.0 && c.audit.delta < 1.0)) throw ConfigError("audit.delta", "must lie in (0, 1)");
  if (c.audit.nval == 0) throw ConfigError("audit.nval", "must be positive");
  if (!(c.audit.pval >= 0.0 && c.audit.pval <= 1.0)) throw ConfigError("audit.pval", "must lie in [0, 1]");
  for (auto n : c.audit.pac_grid)
    if (n == 0) throw ConfigError("audit.pac_grid", "entries must be positive");

  if (root.has("ablation")) {
    ObjectReader r(root.raw("ablation"), "ablation");
    r.read_list("tau_grid", c.tau_grid);
    r.finish();
  }
  for (double t : c.tau_grid)
    if (!(t > 0.0)) throw ConfigError("ablation.tau_grid", "entries must be positive");

  root.read("out", c.out_dir);
  std::uint32_t trials = 0;
  root.read("trials", trials);
  root.read_list("seeds", c.seeds);
  if (j.contains("trials")) {
    if (trials == 0) throw ConfigError("trials", "must be positive");
    if (!j.contains("seeds")) {
      c.seeds.clear();
      for (std::uint32_t k = 0; k < trials; ++k) c.seeds.push_back(k);
    } else if (c.seeds.size() != trials) {
      throw ConfigError("seeds", "length " + std::to_string(c.seeds.size()) +
                                     " does not match trials = " + std::to_string(trials));
    }
  }
  root.finish();

  EncoderConfig probe = encoder_for(c, c.synthetic.channels, c.synthetic.length, 0);
  if (!c.dataset_path) as_field("encoder", [&] { probe.validate(); });
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  if (c.dataset_path) {
    j["dataset"] = {{"path", *c.dataset_path}};
  } else {
    const auto& s = c.synthetic;
    j["dataset"]["synthetic"] = {{"n", s.n},           {"channels", s.channels},
                                 {"length", s.length}, {"classes", s.classes},
                                 {"feature_dim", s.feature_dim}, {"noise_std", s.noise_std},
                                 {"seed", s.seed},     {"family", to_string(s.family)}};
  }
  j["encoder"] = {{"blocks", c.encoder.blocks},
                  {"hidden_channels", c.encoder.hidden_channels},
                  {"kernel_size", c.encoder.kernel_size},
                  {"head_hidden", c.encoder.head_hidden},
                  {"embedding_dim", c.encoder.embedding_dim},
                  {"head_activation",
                   c.encoder.head_activation == HeadActivation::relu ? "relu" : "identity"}};
  if (c.encoder_strides_set) j["encoder"]["strides"] = c.encoder.strides;
  const TrainConfig& t = c.train;
  json sim = {{"kind", to_string(t.similarity.kind)},
              {"scope", t.similarity.scope == SimilarityScope::global ? "global" : "batch"}};
  if (t.similarity.sigma) sim["sigma"] = *t.similarity.sigma;
  j["train"] = {{"mode", to_string(t.mode)},
                {"loss", to_string(t.loss)},
                {"similarity", sim},
                {"margin", t.margin.margin},
                {"tau", t.margin.temperature},
                {"epochs", t.epochs},
                {"fine_tune_epochs", t.fine_tune_epochs},
                {"batch_size", t.batch_size},
                {"base_lr", t.base_lr},
                {"decay", t.decay},
                {"normalize_distances", t.normalize_distances},
                {"bins", t.bins}};
  if (t.label_fraction) j["train"]["label_fraction"] = *t.label_fraction;
  j["split"] = {{"fraction", c.split_fraction}, {"seed", c.split_seed}};
  j["eval"] = {{"linear", c.eval.linear},
               {"knn", c.eval.knn},
               {"k", c.eval.k},
               {"probe_iterations", c.eval.probe_iterations},
               {"probe_lr", c.eval.probe_lr}};
  j["audit"] = {{"bilipschitz", c.audit.bilipschitz}, {"pac", c.audit.pac},
                {"delta", c.audit.delta},             {"nval", c.audit.nval},
                {"pval", c.audit.pval},               {"pair_seed", c.audit.pair_seed},
                {"pac_grid", c.audit.pac_grid}};
  j["ablation"] = {{"tau_grid", c.tau_grid}};
  j["out"] = c.out_dir;
  j["seeds"] = c.seeds;
  return j;
}

std::string config_hash(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("out");  // where results go does not change what they are
  return binio::hex64(binio::fnv1a(j.dump()));
}

void apply_override(json& j, const std::string& path, const std::string& value) {
  if (path.empty()) throw ConfigError("<override>", "empty field path");
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError(path, "malformed field path");
    if (!node->is_object() && !node->is_null()) throw ConfigError(path, "parent is not an object");
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

EncoderConfig encoder_for(const ExperimentConfig& config, std::size_t channels, std::size_t length,
                          std::uint64_t seed) {
  EncoderConfig e = EncoderConfig::defaults(static_cast<std::uint32_t>(channels),
                                            static_cast<std::uint32_t>(length),
                                            config.encoder.embedding_dim, seed);
  e.blocks = config.encoder.blocks;
  e.hidden_channels = config.encoder.hidden_channels;
  e.kernel_size = config.encoder.kernel_size;
  e.head_hidden = config.encoder.head_hidden;
  e.head_activation = config.encoder.head_activation;
  if (config.encoder_strides_set) {
    e.strides = config.encoder.strides;
  } else {
    e.strides.assign(e.blocks, 1);
    if (length > 256)
      for (std::uint32_t b = 1; b < e.blocks; ++b) e.strides[b] = 2;
  }
  return e;
}

}  // namespace xclr::cli
