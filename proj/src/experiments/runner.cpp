#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>

#include "stpnet/error.hpp"
#include "stpnet/runner.hpp"

namespace stpnet::exp {

using nlohmann::json;
namespace fs = std::filesystem;

bool RunManifest::ok() const {
  for (const auto& s : seeds)
    if (!s.ok) return false;
  return true;
}

json RunManifest::to_json() const {
  json seed_list = json::array();
  for (const auto& s : seeds) {
    json entry{{"seed", s.seed}, {"status", s.ok ? "ok" : "failed"}, {"files", s.files}, {"wall_seconds", s.wall_seconds}};
    if (!s.ok) entry["error"] = s.error;
    seed_list.push_back(std::move(entry));
  }
  return {{"config_hash", config_hash},   {"artifact_version", artifact_version}, {"experiment", experiment},
          {"shared_files", shared_files}, {"seeds", seed_list},                   {"wall_seconds", wall_seconds}};
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// splitmix64 of the pair, so neighbouring seeds and grid indices give
// unrelated streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + index + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  body(out);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& doc) {
  write_file(path, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
}

// Everything shared by the seeds of one run; built once, read concurrently.
struct Shared {
  data::ImageDataset train;
  data::ImageDataset test;
  std::optional<BoltzmannMachine> machine;
  std::optional<LifContext> lif;
  std::optional<DiscreteDistribution> target;
  std::vector<std::vector<double>> prototypes;
  std::size_t n_classes = 0;
  std::vector<std::string> files;
};

data::ImageDataset load_data(const DatasetSpec& spec, Rng& rng) {
  switch (spec.source) {
    case DatasetSpec::Source::Bars:
      return data::generate_bars(spec.side, spec.bars_mode, spec.per_class, rng);
    case DatasetSpec::Source::Mnist: {
      auto d = data::load_mnist_idx(spec.images, spec.labels);
      if (!spec.class_counts.empty()) d = data::make_imbalanced(d, spec.class_counts, rng);
      if (!spec.classes.empty()) d = data::relabel(d, spec.classes);
      return d;
    }
    case DatasetSpec::Source::File:
      return data::load_dataset(spec.file);
    case DatasetSpec::Source::None:
      break;
  }
  return {};
}

std::size_t class_count(const data::ImageDataset& d) {
  int top = -1;
  for (int l : d.labels) top = std::max(top, l);
  return static_cast<std::size_t>(top + 1);
}

std::vector<std::size_t> default_checkpoints(std::size_t n) {
  std::vector<std::size_t> out;
  for (std::size_t decade = 1; decade <= n; decade *= 10) {
    for (std::size_t m : {1u, 2u, 5u}) {
      if (decade * m < n) out.push_back(decade * m);
    }
  }
  out.push_back(n);
  return out;
}

const sampling::RbmLayout* layout_ptr(const RunConfig& c) { return c.layout ? &*c.layout : nullptr; }

Shared prepare(const RunConfig& c) {
  Shared s;
  if (c.dataset.source != DatasetSpec::Source::None) {
    Rng rng(c.dataset.seed);
    auto all = load_data(c.dataset, rng);
    all.validate();
    if (c.dataset.test_count >= all.size())
      throw ConfigError("dataset.test_count", "leaves no training items (" + std::to_string(all.size()) + " total)");
    if (c.dataset.test_count > 0) {
      std::tie(s.test, s.train) = data::shuffle_split(all, c.dataset.test_count, rng);
    } else {
      s.train = std::move(all);
    }
    if (c.layout && c.layout->n_visible != s.train.pixels())
      throw ConfigError("layout.visible", "dataset images have " + std::to_string(s.train.pixels()) + " pixels");
    s.n_classes = class_count(s.train);
    if (s.n_classes > 0) {
      std::vector<BinaryState> images = s.train.images;
      s.prototypes = eval::class_prototypes(images, s.train.labels, s.n_classes);
    }
  }

  if (c.machine.path) {
    s.machine = load_machine(*c.machine.path);
  } else if (c.machine.random_units > 0) {
    Rng rng(c.machine.seed);
    s.machine = c.layout ? sampling::random_rbm(*c.layout, rng, c.machine.weight_range, c.machine.bias_range)
                         : BoltzmannMachine::random(c.machine.random_units, rng, c.machine.weight_range,
                                                    c.machine.bias_range);
  } else if (c.kind != ExperimentKind::Train && c.kind != ExperimentKind::Calibrate) {
    Rng rng(c.training_seed);
    s.machine = sampling::cast_train(*c.layout, training_vectors(s.train, c.layout->n_label), c.training, rng);
    save_machine(*s.machine, c.output / "machine.json");
    s.files.push_back("machine.json");
  }
  if (s.machine && c.layout) c.layout->check(*s.machine);

  const bool target_kl = c.kind == ExperimentKind::SampleTarget ||
                         (c.kind == ExperimentKind::SweepStp && c.sweep.metric == "kl");
  if (target_kl) {
    if (s.machine->size() > kMaxEnumerationUnits) throw ConfigError("machine", "exact KL needs at most 20 units");
    s.target = exact_distribution(*s.machine);
  }

  if (c.sampler.kind == SamplerKind::Lif && c.kind != ExperimentKind::Calibrate && c.kind != ExperimentKind::Train) {
    if (c.calibration_file) {
      std::ifstream in(*c.calibration_file);
      LifContext ctx = c.sampler.model == lif::ModelKind::Coba
                           ? LifContext{lif::LifParams::coba_defaults(), lif::NoiseConfig::coba_defaults(), {}}
                           : LifContext{lif::LifParams::cuba_defaults(), lif::NoiseConfig::cuba_defaults(), {}};
      ctx.calibration = lif::calibration_from_json(json::parse(in));
      s.lif = ctx;
    } else {
      Rng rng(c.calibration_seed);
      s.lif = make_lif_context(c.sampler.model, rng, c.calibration);
      write_json(c.output / "calibration.json", lif::to_json(s.lif->calibration));
      s.files.push_back("calibration.json");
    }
  }
  return s;
}

// Per-seed context handed to the experiment bodies.
struct SeedRun {
  const RunConfig& config;
  const Shared& shared;
  std::uint64_t seed;
  fs::path dir;
  std::vector<std::string> files;

  fs::path file(const std::string& name) {
    files.push_back("seed-" + std::to_string(seed) + "/" + name);
    return dir / name;
  }
};

// KL(sampled || target), over all units or the visible block.
double target_kl(const RunConfig& c, const Shared& s, const SampleTrace& trace) {
  const std::size_t n = s.machine->size();
  const auto empirical = empirical_distribution(trace, n);
  if (!c.kl_visible_only) return kl_divergence(empirical, *s.target);
  std::vector<std::size_t> visible(c.layout ? c.layout->n_outer() : n);
  std::iota(visible.begin(), visible.end(), 0);
  return kl_divergence(marginal_over(empirical, visible), marginal_over(*s.target, visible));
}

json occupancy_json(const eval::DwellStats& d, std::size_t n_modes) {
  json occ = json::array();
  for (std::size_t m = 0; m < n_modes; ++m) occ.push_back(d.runs() ? d.occupancy(static_cast<int>(m)) : 0.0);
  return occ;
}

// ISL curve, mode statistics and optional embedding of one sample set.
json sample_report(SeedRun& r, const SampleTrace& trace, const SamplerSpec& spec, const std::string& suffix) {
  const auto& c = r.config;
  const auto& s = r.shared;
  const auto visible = visible_part(trace, c.layout->n_visible);
  json m;
  m["valid_samples"] = visible.size();
  m["effective_rate"] = sampling::ast_effective_rate(trace);
  if (!s.test.images.empty()) {
    const auto checkpoints = c.isl_checkpoints.empty() ? default_checkpoints(visible.size()) : c.isl_checkpoints;
    const auto curve = eval::isl_curve(s.test.images, visible, checkpoints, c.isl);
    write_file(r.file("isl" + suffix + ".csv"), [&](std::ostream& o) { eval::write_isl_csv(o, curve); });
    m["isl"] = curve.back().second;
  }
  const std::size_t n_modes = c.layout->n_label > 0 ? c.layout->n_label : s.n_classes;
  if (n_modes > 0) {
    const auto modes = mode_trace(trace.valid_only(), *c.layout, c.mode_window, s.prototypes);
    const double ms_per_sample = spec.kind == SamplerKind::Lif ? spec.sample_interval : kSweepEquivalentMs;
    const auto dwell = eval::mode_dwell(modes, ms_per_sample);
    write_file(r.file("dwell" + suffix + ".csv"), [&](std::ostream& o) { eval::write_dwell_csv(o, dwell); });
    m["switches"] = modes.switches();
    m["median_dwell_samples"] = dwell.median_length();
    m["occupancy"] = occupancy_json(dwell, n_modes);
    if (c.tsne) {
      std::vector<std::vector<double>> points;
      std::vector<int> labels;
      for (std::size_t i = 0; i < std::min(c.tsne->points, visible.size()); i += c.tsne->stride) {
        points.emplace_back(visible[i].begin(), visible[i].end());
        labels.push_back(modes.modes[i]);
      }
      Rng rng(derive_seed(r.seed, 0x75e));
      const auto emb = eval::tsne_embed(points, c.tsne->config, rng);
      write_file(r.file("tsne" + suffix + ".csv"), [&](std::ostream& o) { eval::write_tsne_csv(o, emb.points, labels); });
      m["tsne_cost"] = emb.cost;
    }
  }
  if (c.write_traces) write_file(r.file("trace" + suffix + ".txt"), [&](std::ostream& o) { write_trace(o, trace); });
  return m;
}

void run_calibrate(SeedRun& r) {
  Rng rng(r.seed);
  const auto ctx = make_lif_context(r.config.sampler.model, rng, r.config.calibration);
  write_json(r.file("calibration.json"), lif::to_json(ctx.calibration));
  write_file(r.file("activation.csv"), [&](std::ostream& o) {
    o << "e_leak,p_measured,p_fit\n";
    for (std::size_t i = 0; i < ctx.calibration.leak_grid.size(); ++i) {
      const double v = ctx.calibration.leak_grid[i];
      o << num(v) << ',' << num(ctx.calibration.activation[i]) << ',' << num(ctx.calibration.predict(v)) << '\n';
    }
  });
  write_json(r.file("metrics.json"), {{"alpha", ctx.calibration.alpha},
                                      {"midpoint", ctx.calibration.midpoint},
                                      {"residual_rms", ctx.calibration.residual_rms}});
}

void run_sample_target(SeedRun& r) {
  const auto& c = r.config;
  Rng rng(r.seed);
  const auto trace = draw_samples(*r.shared.machine, layout_ptr(c), c.sampler, r.shared.lif ? &*r.shared.lif : nullptr,
                                  c.samples, rng);
  if (c.write_traces) write_file(r.file("trace.txt"), [&](std::ostream& o) { write_trace(o, trace); });
  write_json(r.file("metrics.json"), {{"kl", target_kl(c, r.shared, trace)},
                                      {"valid_samples", trace.valid_count()},
                                      {"recorded", trace.size()},
                                      {"effective_rate", sampling::ast_effective_rate(trace)}});
}

void run_train(SeedRun& r) {
  const auto& c = r.config;
  const auto& s = r.shared;
  Rng rng(r.seed);
  const auto machine = sampling::cast_train(*c.layout, training_vectors(s.train, c.layout->n_label), c.training, rng);
  save_machine(machine, r.file("machine.json"));
  json m{{"iterations", c.training.iterations}, {"training_items", s.train.size()}};
  if (c.layout->n_label > 0 && !s.test.images.empty()) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < s.test.size(); ++i)
      correct += eval::classify_gibbs(machine, *c.layout, s.test.images[i], rng) == s.test.labels[i];
    m["accuracy"] = static_cast<double>(correct) / static_cast<double>(s.test.size());
  }
  write_json(r.file("metrics.json"), m);
}

void run_generate(SeedRun& r) {
  const auto& c = r.config;
  Rng rng(r.seed);
  const auto trace = draw_samples(*r.shared.machine, layout_ptr(c), c.sampler, r.shared.lif ? &*r.shared.lif : nullptr,
                                  c.samples, rng);
  write_json(r.file("metrics.json"), sample_report(r, trace, c.sampler, ""));
}

void run_classify(SeedRun& r) {
  const auto& c = r.config;
  const auto& s = r.shared;
  Rng rng(r.seed);
  eval::ClassifyOptions options;
  options.sweeps = c.samples;
  std::optional<lif::LifNetworkConfig> network;
  if (c.sampler.kind == SamplerKind::Lif) {
    network = lif::translate(*s.machine, s.lif->calibration, s.lif->neuron, s.lif->noise);
    network->sample_interval = c.sampler.sample_interval;
    if (c.sampler.stp) network->set_stp(*c.sampler.stp);
  }
  std::size_t correct = 0;
  write_file(r.file("predictions.csv"), [&](std::ostream& o) {
    o << "index,label,predicted\n";
    for (std::size_t i = 0; i < s.test.size(); ++i) {
      const int p = network ? eval::classify_lif(*network, *c.layout, s.test.images[i],
                                                 static_cast<double>(c.samples) * c.sampler.sample_interval, rng)
                            : eval::classify_gibbs(*s.machine, *c.layout, s.test.images[i], rng, options);
      correct += p == s.test.labels[i];
      o << i << ',' << s.test.labels[i] << ',' << p << '\n';
    }
  });
  write_json(r.file("metrics.json"), {{"accuracy", static_cast<double>(correct) / static_cast<double>(s.test.size())},
                                      {"test_items", s.test.size()}});
}

void run_pattern_complete(SeedRun& r) {
  const auto& c = r.config;
  const auto& s = r.shared;
  const auto& d = s.train;
  const std::size_t exemplar = data::ambiguous_exemplar(d, c.completion.from_class, c.completion.towards_class,
                                                        c.completion.half);
  const auto mask = data::half_clamp_mask(d.width, d.height, c.completion.half, d.images[exemplar]);
  Rng rng(r.seed);
  const auto trace = draw_samples(*s.machine, layout_ptr(c), c.sampler, s.lif ? &*s.lif : nullptr, c.samples, rng, mask);
  json m = sample_report(r, trace, c.sampler, "");
  m["exemplar_index"] = exemplar;
  write_json(r.file("metrics.json"), m);
}

void run_compare(SeedRun& r) {
  const auto& c = r.config;
  const auto& s = r.shared;
  json report;
  std::vector<BinaryState> tempered_visible;
  for (auto kind : {SamplerKind::Gibbs, SamplerKind::Ast, SamplerKind::Lif}) {
    SamplerSpec spec = c.sampler;
    spec.kind = kind;
    Rng rng(derive_seed(r.seed, static_cast<std::uint64_t>(kind)));
    const auto trace = draw_samples(*s.machine, layout_ptr(c), spec, s.lif ? &*s.lif : nullptr, c.samples, rng);
    const std::string name = to_string(kind);
    report[name] = sample_report(r, trace, spec, "_" + name);
    if (kind == SamplerKind::Ast) tempered_visible = visible_part(trace, c.layout->n_visible);
  }
  Rng rng(derive_seed(r.seed, 0xba5e));
  std::vector<BinaryState> training(s.train.images.begin(), s.train.images.end());
  report["pom"]["isl"] = eval::isl_log_likelihood(s.test.images, eval::pom_baseline(training, c.samples, rng), c.isl);
  report["opt"]["isl"] =
      eval::isl_log_likelihood(s.test.images, eval::opt_baseline(tempered_visible, c.samples, rng), c.isl);
  write_json(r.file("metrics.json"), report);
}

lif::StpParams with_param(lif::StpParams p, const std::string& name, double v) {
  if (name == "u0") p.u0 = v;
  if (name == "tau_rec") p.tau_rec = v;
  if (name == "tau_fac") p.tau_fac = v;
  return p;
}

// Grid points x seeds run as independent tasks; results are written by a
// single thread afterwards.
void run_sweep(const RunConfig& c, const Shared& s, RunManifest& manifest, std::size_t workers) {
  const auto& sw = c.sweep;
  const std::size_t nx = sw.x_values.size();
  const std::size_t points = nx * sw.y_values.size();
  const std::size_t n_seeds = c.seeds.size();
  std::vector<double> values(points * n_seeds, std::nan(""));
  std::vector<std::string> errors(points * n_seeds);
  std::vector<double> seconds(n_seeds, 0.0);
  std::mutex time_lock;
  parallel_for(points * n_seeds, workers, [&](std::size_t task) {
    const std::size_t seed_idx = task / points;
    const std::size_t p = task % points;
    const auto start = Clock::now();
    try {
      SamplerSpec spec = c.sampler;
      spec.stp = with_param(with_param(sw.base, sw.x_param, sw.x_values[p % nx]), sw.y_param, sw.y_values[p / nx]);
      spec.stp->check();
      Rng rng(derive_seed(c.seeds[seed_idx], p));
      const auto trace = draw_samples(*s.machine, layout_ptr(c), spec, &*s.lif, c.samples, rng);
      values[task] = sw.metric == "kl"
                         ? target_kl(c, s, trace)
                         : eval::isl_log_likelihood(s.test.images, visible_part(trace, c.layout->n_visible), c.isl);
    } catch (const std::exception& e) {
      errors[task] = e.what();
    }
    std::lock_guard lock(time_lock);
    seconds[seed_idx] += seconds_since(start);
  });

  const bool minimize = sw.metric == "kl";
  std::vector<double> mean(points, 0.0);
  for (std::size_t k = 0; k < n_seeds; ++k) {
    SeedRecord rec;
    rec.seed = c.seeds[k];
    rec.wall_seconds = seconds[k];
    for (std::size_t p = 0; p < points; ++p) {
      if (!errors[k * points + p].empty() && rec.ok) {
        rec.ok = false;
        rec.error = "grid point " + std::to_string(p) + ": " + errors[k * points + p];
      }
      mean[p] += values[k * points + p] / static_cast<double>(n_seeds);
    }
    const std::string name = "seed-" + std::to_string(rec.seed) + "/grid.csv";
    write_file(c.output / name, [&](std::ostream& o) {
      o << sw.x_param << ',' << sw.y_param << ',' << sw.metric << '\n';
      for (std::size_t p = 0; p < points; ++p)
        o << num(sw.x_values[p % nx]) << ',' << num(sw.y_values[p / nx]) << ',' << num(values[k * points + p]) << '\n';
    });
    rec.files.push_back(name);
    manifest.seeds.push_back(std::move(rec));
  }
  std::size_t best = 0;
  for (std::size_t p = 1; p < points; ++p) {
    if (std::isnan(mean[best]) || (minimize ? mean[p] < mean[best] : mean[p] > mean[best])) best = p;
  }
  write_file(c.output / "sweep.csv", [&](std::ostream& o) {
    o << sw.x_param << ',' << sw.y_param << ",mean_" << sw.metric << '\n';
    for (std::size_t p = 0; p < points; ++p)
      o << num(sw.x_values[p % nx]) << ',' << num(sw.y_values[p / nx]) << ',' << num(mean[p]) << '\n';
  });
  const auto best_stp = with_param(with_param(sw.base, sw.x_param, sw.x_values[best % nx]), sw.y_param,
                                   sw.y_values[best / nx]);
  write_json(c.output / "sweep_best.json",
             {{"metric", sw.metric}, {"value", mean[best]}, {"stp", lif::to_json(best_stp)}});
  manifest.shared_files.push_back("sweep.csv");
  manifest.shared_files.push_back("sweep_best.json");
}

}  // namespace

RunManifest run(const RunConfig& config, std::size_t workers) {
  config.validate();
  const auto start = Clock::now();
  RunManifest manifest;
  manifest.config_hash = config_hash(config.document);
  manifest.experiment = to_string(config.kind);
  fs::create_directories(config.output);

  const Shared shared = prepare(config);
  manifest.shared_files = shared.files;

  if (config.kind == ExperimentKind::SweepStp) {
    run_sweep(config, shared, manifest, workers);
  } else {
    std::vector<SeedRecord> records(config.seeds.size());
    parallel_for(config.seeds.size(), workers, [&](std::size_t i) {
      const auto seed_start = Clock::now();
      SeedRun r{config, shared, config.seeds[i], config.output / ("seed-" + std::to_string(config.seeds[i])), {}};
      fs::create_directories(r.dir);
      auto& rec = records[i];
      rec.seed = r.seed;
      try {
        switch (config.kind) {
          case ExperimentKind::Calibrate:
            run_calibrate(r);
            break;
          case ExperimentKind::SampleTarget:
            run_sample_target(r);
            break;
          case ExperimentKind::Train:
            run_train(r);
            break;
          case ExperimentKind::Generate:
            run_generate(r);
            break;
          case ExperimentKind::Classify:
            run_classify(r);
            break;
          case ExperimentKind::PatternComplete:
            run_pattern_complete(r);
            break;
          case ExperimentKind::Compare:
            run_compare(r);
            break;
          case ExperimentKind::SweepStp:
            break;
        }
      } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
      }
      rec.files = std::move(r.files);
      rec.wall_seconds = seconds_since(seed_start);
    });
    manifest.seeds = std::move(records);
  }
  manifest.wall_seconds = seconds_since(start);
  write_json(config.output / "manifest.json", manifest.to_json());
  return manifest;
}

}  // namespace stpnet::exp
