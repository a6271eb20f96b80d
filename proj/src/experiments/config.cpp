#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "stpnet/error.hpp"
#include "stpnet/runner.hpp"

namespace stpnet::exp {

using nlohmann::json;

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Calibrate:
      return "calibrate";
    case ExperimentKind::SampleTarget:
      return "sample-target";
    case ExperimentKind::Train:
      return "train";
    case ExperimentKind::Generate:
      return "generate";
    case ExperimentKind::Classify:
      return "classify";
    case ExperimentKind::SweepStp:
      return "sweep-stp";
    case ExperimentKind::PatternComplete:
      return "pattern-complete";
    case ExperimentKind::Compare:
      return "compare";
  }
  return "?";
}

std::optional<ExperimentKind> experiment_kind_from_string(const std::string& name) {
  for (auto k : {ExperimentKind::Calibrate, ExperimentKind::SampleTarget, ExperimentKind::Train,
                 ExperimentKind::Generate, ExperimentKind::Classify, ExperimentKind::SweepStp,
                 ExperimentKind::PatternComplete, ExperimentKind::Compare}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

namespace {

// Reads the fields of one JSON object, reporting errors by dotted path and
// rejecting keys nobody asked for.
class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const char* key, double fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_number()) throw ConfigError(where(key), "expected a number");
    return v.get<double>();
  }

  std::uint64_t count(const char* key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    return as_count(obj_.at(key), where(key));
  }

  bool flag(const char* key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_boolean()) throw ConfigError(where(key), "expected true or false");
    return v.get<bool>();
  }

  std::string text(const char* key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_string()) throw ConfigError(where(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const char* key) {
    std::vector<double> out;
    if (!has(key)) return out;
    const auto& v = obj_.at(key);
    if (!v.is_array()) throw ConfigError(where(key), "expected an array of numbers");
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(where(key), "expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::vector<std::uint64_t> counts(const char* key) {
    std::vector<std::uint64_t> out;
    if (!has(key)) return out;
    const auto& v = obj_.at(key);
    if (!v.is_array()) throw ConfigError(where(key), "expected an array of non-negative integers");
    for (const auto& x : v) out.push_back(as_count(x, where(key)));
    return out;
  }

  sampling::RateSchedule schedule(const char* key, sampling::RateSchedule fallback) {
    if (!has(key)) return fallback;
    const auto v = numbers(key);
    if (v.size() != 2 || !(v[0] >= 0) || !(v[1] > 0))
      throw ConfigError(where(key), "expected [numerator, offset] with offset > 0");
    return {v[0], v[1]};
  }

  std::optional<Fields> object(const char* key) {
    if (!has(key)) return std::nullopt;
    return Fields(obj_.at(key), where(key));
  }

  const json& raw(const char* key) const { return obj_.at(key); }
  const std::string& path() const { return path_; }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError(where(key.c_str()), "unknown field");
    }
  }

 private:
  static std::uint64_t as_count(const json& v, const std::string& where) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError(where, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

lif::StpParams parse_stp(Fields f, const lif::StpParams& fallback) {
  lif::StpParams p{f.number("u0", fallback.u0), f.number("tau_rec", fallback.tau_rec),
                   f.number("tau_fac", fallback.tau_fac)};
  f.finish();
  try {
    p.check();
  } catch (const std::exception& e) {
    throw ConfigError(f.path(), e.what());
  }
  return p;
}

void parse_dataset(Fields f, DatasetSpec& d, const std::filesystem::path& base) {
  const std::string source = f.text("source", "none");
  if (source == "bars") {
    d.source = DatasetSpec::Source::Bars;
    d.side = f.count("side", d.side);
    const std::string mode = f.text("mode", "hard");
    if (mode != "easy" && mode != "hard") throw ConfigError(f.where("mode"), "expected \"easy\" or \"hard\"");
    d.bars_mode = mode == "easy" ? data::BarsMode::Easy : data::BarsMode::Hard;
    d.per_class = f.count("per_class", d.per_class);
  } else if (source == "mnist") {
    d.source = DatasetSpec::Source::Mnist;
    const std::filesystem::path root = STPNET_DATA_DIR;
    d.images = f.has("images") ? resolve(base, f.text("images", "")) : root / "mnist/digits-images-idx3-ubyte.gz";
    d.labels = f.has("labels") ? resolve(base, f.text("labels", "")) : root / "mnist/digits-labels-idx1-ubyte.gz";
    for (auto c : f.counts("classes")) d.classes.push_back(static_cast<int>(c));
    if (f.has("class_counts")) {
      const auto& cc = f.raw("class_counts");
      if (!cc.is_object()) throw ConfigError(f.where("class_counts"), "expected an object of class: count");
      for (const auto& [k, v] : cc.items()) {
        int cls = 0;
        try {
          std::size_t used = 0;
          cls = std::stoi(k, &used);
          if (used != k.size()) throw std::invalid_argument(k);
        } catch (const std::exception&) {
          throw ConfigError(f.where("class_counts"), "key '" + k + "' is not a class number");
        }
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
          throw ConfigError(f.where("class_counts") + "." + k, "expected a count");
        d.class_counts[cls] = v.get<std::size_t>();
      }
    }
  } else if (source == "file") {
    d.source = DatasetSpec::Source::File;
    d.file = resolve(base, f.text("path", ""));
  } else if (source != "none") {
    throw ConfigError(f.where("source"), "expected \"bars\", \"mnist\" or \"file\"");
  }
  d.test_count = f.count("test_count", d.test_count);
  d.seed = f.count("seed", d.seed);
  f.finish();
}

void parse_sampler(Fields f, SamplerSpec& s) {
  s.kind = SamplerKind::Gibbs;
  const std::string kind = f.text("kind", "gibbs");
  try {
    s.kind = sampler_kind_from_string(kind);
  } catch (const InvalidArgument& e) {
    throw ConfigError(f.where("kind"), e.what());
  }
  s.ladder_size = f.count("ladder_size", s.ladder_size);
  s.ladder_min_beta = f.number("ladder_min_beta", s.ladder_min_beta);
  s.gamma = f.schedule("gamma", s.gamma);
  s.max_steps_per_sample = f.count("max_steps_per_sample", s.max_steps_per_sample);
  const std::string model = f.text("model", "cuba");
  if (model != "cuba" && model != "coba") throw ConfigError(f.where("model"), "expected \"cuba\" or \"coba\"");
  s.model = model == "coba" ? lif::ModelKind::Coba : lif::ModelKind::Cuba;
  if (auto stp = f.object("stp")) s.stp = parse_stp(*stp, lif::StpParams{});
  s.sample_interval = f.number("sample_interval_ms", s.sample_interval);
  s.burn_in = f.number("burn_in_ms", s.burn_in);
  s.dt = f.number("dt_ms", s.dt);
  f.finish();
  try {
    s.check();
  } catch (const std::exception& e) {
    throw ConfigError(f.path(), e.what());
  }
}

void parse_training(Fields f, RunConfig& c) {
  auto& t = c.training;
  t.iterations = f.count("iterations", t.iterations);
  t.batch_size = f.count("batch_size", t.batch_size);
  t.learning_rate = f.schedule("learning_rate", t.learning_rate);
  t.gamma = f.schedule("gamma", t.gamma);
  t.ladder_size = f.count("ladder_size", t.ladder_size);
  t.ladder_min_beta = f.number("ladder_min_beta", t.ladder_min_beta);
  t.chains = f.count("chains", t.chains);
  t.data_bias_init = f.flag("data_bias_init", t.data_bias_init);
  c.training_seed = f.count("seed", c.training_seed);
  f.finish();
  try {
    t.check();
  } catch (const std::exception& e) {
    throw ConfigError("training", e.what());
  }
}

void parse_sweep(Fields f, SweepSpec& s) {
  auto axis = [&](const char* key, std::string& param, std::vector<double>& values) {
    auto a = f.object(key);
    if (!a) throw ConfigError(f.where(key), "missing sweep axis");
    param = a->text("param", "");
    if (param != "u0" && param != "tau_rec" && param != "tau_fac")
      throw ConfigError(a->where("param"), "expected \"u0\", \"tau_rec\" or \"tau_fac\"");
    values = a->numbers("values");
    if (values.empty()) throw ConfigError(a->where("values"), "need at least one value");
    a->finish();
  };
  axis("x", s.x_param, s.x_values);
  axis("y", s.y_param, s.y_values);
  if (s.x_param == s.y_param) throw ConfigError(f.where("y") + ".param", "must differ from the x axis");
  if (auto base = f.object("base")) s.base = parse_stp(*base, s.base);
  s.metric = f.text("metric", s.metric);
  if (s.metric != "kl" && s.metric != "isl") throw ConfigError(f.where("metric"), "expected \"kl\" or \"isl\"");
  f.finish();
}

}  // namespace

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  RunConfig c;
  Fields f(doc, "");
  const std::string kind = f.text("experiment", "");
  if (kind.empty()) throw ConfigError("experiment", "missing experiment kind");
  const auto k = experiment_kind_from_string(kind);
  if (!k) throw ConfigError("experiment", "unknown experiment kind '" + kind + "'");
  c.kind = *k;

  const auto seeds = f.counts("seeds");
  if (f.has("seeds")) {
    if (seeds.empty()) throw ConfigError("seeds", "need at least one seed");
    c.seeds = seeds;
  }
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
    throw ConfigError("seeds", "seeds must be distinct");
  if (f.has("output")) c.output = resolve(base_dir, f.text("output", ""));
  c.samples = f.count("samples", c.samples);
  c.mode_window = f.count("mode_window", c.mode_window);
  c.write_traces = f.flag("write_traces", c.write_traces);
  const std::string kl = f.text("kl", "joint");
  if (kl != "joint" && kl != "visible") throw ConfigError("kl", "expected \"joint\" or \"visible\"");
  c.kl_visible_only = kl == "visible";

  if (auto d = f.object("dataset")) parse_dataset(*d, c.dataset, base_dir);
  if (auto m = f.object("machine")) {
    if (m->has("path")) c.machine.path = resolve(base_dir, m->text("path", ""));
    c.machine.random_units = m->count("random_units", 0);
    c.machine.weight_range = m->number("weight_range", c.machine.weight_range);
    c.machine.bias_range = m->number("bias_range", c.machine.bias_range);
    c.machine.seed = m->count("seed", c.machine.seed);
    m->finish();
    if (c.machine.path && c.machine.random_units > 0)
      throw ConfigError("machine", "give either path or random_units, not both");
  }
  if (auto l = f.object("layout")) {
    c.layout = sampling::RbmLayout{l->count("visible", 0), l->count("hidden", 0), l->count("label", 0)};
    l->finish();
    if (c.layout->n_visible == 0 || c.layout->n_hidden == 0)
      throw ConfigError("layout", "visible and hidden counts must be positive");
  }
  if (auto t = f.object("training")) parse_training(*t, c);
  if (auto s = f.object("sampler")) parse_sampler(*s, c.sampler);
  if (auto i = f.object("isl")) {
    c.isl.beta = i->number("beta", c.isl.beta);
    for (auto v : i->counts("checkpoints")) c.isl_checkpoints.push_back(v);
    i->finish();
    try {
      c.isl.check();
    } catch (const std::exception& e) {
      throw ConfigError("isl.beta", e.what());
    }
  }
  if (auto t = f.object("tsne")) {
    TsneSpec ts;
    ts.points = t->count("points", ts.points);
    ts.stride = t->count("stride", ts.stride);
    ts.config.perplexity = t->number("perplexity", ts.config.perplexity);
    ts.config.iterations = t->count("iterations", ts.config.iterations);
    ts.config.learning_rate = t->number("learning_rate", ts.config.learning_rate);
    t->finish();
    if (ts.stride == 0) throw ConfigError("tsne.stride", "must be positive");
    try {
      ts.config.check();
    } catch (const std::exception& e) {
      throw ConfigError("tsne", e.what());
    }
    c.tsne = ts;
  }
  if (auto s = f.object("sweep")) parse_sweep(*s, c.sweep);
  if (auto p = f.object("completion")) {
    c.completion.from_class = static_cast<int>(p->count("from_class", 1));
    c.completion.towards_class = static_cast<int>(p->count("towards_class", 0));
    const std::string half = p->text("half", "lower");
    if (half != "lower" && half != "upper") throw ConfigError(p->where("half"), "expected \"lower\" or \"upper\"");
    c.completion.half = half == "lower" ? data::Half::Lower : data::Half::Upper;
    p->finish();
  }
  if (auto cal = f.object("calibration")) {
    if (cal->has("file")) c.calibration_file = resolve(base_dir, cal->text("file", ""));
    c.calibration_seed = cal->count("seed", c.calibration_seed);
    c.calibration.points = cal->count("points", c.calibration.points);
    c.calibration.duration = cal->number("duration_ms", c.calibration.duration);
    c.calibration.bracket_duration = cal->number("bracket_duration_ms", c.calibration.bracket_duration);
    c.calibration.max_residual = cal->number("max_residual", c.calibration.max_residual);
    cal->finish();
  }
  f.finish();
  c.document = doc;
  c.validate();
  return c;
}

void RunConfig::validate() const {
  auto require_file = [](const std::filesystem::path& p, const std::string& field) {
    if (!std::filesystem::is_regular_file(p)) throw ConfigError(field, "file not found: " + p.string());
  };
  if (samples == 0) throw ConfigError("samples", "must be positive");
  if (mode_window == 0) throw ConfigError("mode_window", "must be positive");
  if (machine.path) require_file(*machine.path, "machine.path");
  if (calibration_file) require_file(*calibration_file, "calibration.file");
  if (calibration.points < 5) throw ConfigError("calibration.points", "need at least 5 grid points");
  if (!(calibration.duration > 0) || !(calibration.bracket_duration > 0))
    throw ConfigError("calibration", "durations must be positive");
  switch (dataset.source) {
    case DatasetSpec::Source::Mnist:
      require_file(dataset.images, "dataset.images");
      require_file(dataset.labels, "dataset.labels");
      break;
    case DatasetSpec::Source::File:
      require_file(dataset.file, "dataset.path");
      break;
    case DatasetSpec::Source::Bars:
      if (dataset.side < (dataset.bars_mode == data::BarsMode::Hard ? 8u : 6u))
        throw ConfigError("dataset.side", "too small for this bars mode");
      if (dataset.per_class == 0) throw ConfigError("dataset.per_class", "must be positive");
      break;
    case DatasetSpec::Source::None:
      break;
  }
  const bool has_data = dataset.source != DatasetSpec::Source::None;
  const bool needs_machine = kind != ExperimentKind::Calibrate && kind != ExperimentKind::Train;
  const bool target_kl = kind == ExperimentKind::SampleTarget ||
                         (kind == ExperimentKind::SweepStp && sweep.metric == "kl");
  if (target_kl) {
    if (!machine.path && machine.random_units == 0)
      throw ConfigError("machine", "needs a path or random_units for a target distribution");
    if (machine.random_units > kMaxEnumerationUnits)
      throw ConfigError("machine.random_units", "exact KL needs at most 20 units");
    if (machine.random_units > 0 && layout && layout->n_units() != machine.random_units)
      throw ConfigError("machine.random_units", "must equal the layout's unit count (the machine is then bipartite)");
  } else if (needs_machine || kind == ExperimentKind::Train) {
    if (!has_data) throw ConfigError("dataset", "this experiment needs a dataset");
    if (!layout) throw ConfigError("layout", "this experiment needs a layout");
    if (machine.random_units > 0) throw ConfigError("machine.random_units", "not used with a dataset");
  }
  const bool needs_test = kind == ExperimentKind::Generate || kind == ExperimentKind::Classify ||
                          kind == ExperimentKind::Compare ||
                          (kind == ExperimentKind::SweepStp && sweep.metric == "isl");
  if (needs_test && dataset.test_count == 0) throw ConfigError("dataset.test_count", "needs held-out test items");
  if (kind == ExperimentKind::Classify && layout && layout->n_label == 0)
    throw ConfigError("layout.label", "classification needs label units");
  if (kind == ExperimentKind::PatternComplete) {
    if (layout && layout->n_label == 0) throw ConfigError("layout.label", "completion modes need label units");
  }
  if (kind == ExperimentKind::SweepStp && sampler.kind != SamplerKind::Lif)
    throw ConfigError("sampler.kind", "an STP sweep needs the lif sampler");
  if (kind == ExperimentKind::Compare && sampler.kind != SamplerKind::Lif)
    throw ConfigError("sampler.kind", "compare pits gibbs and ast against the configured lif sampler");
  if (tsne && kind != ExperimentKind::Generate && kind != ExperimentKind::Compare)
    throw ConfigError("tsne", "only used by generate and compare");
  if (tsne && tsne->points / tsne->stride > eval::kTsneMaxPoints)
    throw ConfigError("tsne.points", "embedding capped at 2000 points");
  for (std::size_t i = 1; i < isl_checkpoints.size(); ++i) {
    if (isl_checkpoints[i] <= isl_checkpoints[i - 1]) throw ConfigError("isl.checkpoints", "must increase strictly");
  }
  if (!isl_checkpoints.empty() && (isl_checkpoints.front() == 0 || isl_checkpoints.back() > samples))
    throw ConfigError("isl.checkpoints", "must lie in 1..samples");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("", "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

std::string config_hash(const json& doc) {
  json canonical = doc;
  if (canonical.is_object()) canonical.erase("output");
  const std::string text = canonical.dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

}  // namespace stpnet::exp
