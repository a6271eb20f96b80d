#include "stpnet/experiments.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>

#include "stpnet/error.hpp"

namespace stpnet::exp {

const char* to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::Gibbs:
      return "gibbs";
    case SamplerKind::Ast:
      return "ast";
    case SamplerKind::Lif:
      return "lif";
  }
  return "?";
}

SamplerKind sampler_kind_from_string(const std::string& name) {
  if (name == "gibbs") return SamplerKind::Gibbs;
  if (name == "ast") return SamplerKind::Ast;
  if (name == "lif") return SamplerKind::Lif;
  throw InvalidArgument("unknown sampler '" + name + "' (expected gibbs, ast or lif)");
}

void SamplerSpec::check() const {
  if (ladder_size == 0 || !(ladder_min_beta > 0.0 && ladder_min_beta <= 1.0))
    throw InvalidArgument("invalid temperature ladder");
  if (max_steps_per_sample == 0) throw InvalidArgument("max_steps_per_sample must be positive");
  if (stp) stp->check();
  if (!(sample_interval > 0.0) || !(burn_in >= 0.0) || !(dt > 0.0))
    throw InvalidArgument("sample interval and dt must be positive, burn-in non-negative");
}

LifContext make_lif_context(lif::ModelKind model, Rng& rng, const lif::CalibrationOptions& options) {
  LifContext ctx;
  if (model == lif::ModelKind::Coba) {
    ctx.neuron = lif::LifParams::coba_defaults();
    ctx.noise = lif::NoiseConfig::coba_defaults();
  } else {
    ctx.neuron = lif::LifParams::cuba_defaults();
    ctx.noise = lif::NoiseConfig::cuba_defaults();
  }
  ctx.calibration = lif::calibrate(ctx.neuron, ctx.noise, rng, options);
  return ctx;
}

namespace {

BinaryState initial_state(std::size_t n, std::span<const Clamp> clamp, Rng& rng) {
  BinaryState s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Clamp c = i < clamp.size() ? clamp[i] : Clamp::Free;
    s[i] = c == Clamp::Free ? (rng.bernoulli(0.5) ? 1 : 0) : (c == Clamp::On ? 1 : 0);
  }
  return s;
}

SampleTrace classical_samples(const BoltzmannMachine& machine, const sampling::RbmLayout* layout,
                              const SamplerSpec& spec, std::size_t n_valid, Rng& rng, std::span<const Clamp> clamp) {
  sampling::Chain chain(machine, initial_state(machine.size(), clamp, rng), layout);
  if (!clamp.empty()) {
    std::vector<std::uint8_t> frozen(machine.size(), 0);
    for (std::size_t i = 0; i < clamp.size(); ++i) frozen[i] = clamp[i] != Clamp::Free;
    chain.set_frozen(std::move(frozen));
  }
  SampleTrace trace(machine.size());
  if (spec.kind == SamplerKind::Gibbs) {
    trace.reserve(n_valid);
    for (std::size_t s = 1; s <= n_valid; ++s) {
      chain.sweep(rng);
      trace.push(chain.state(), static_cast<double>(s));
    }
    return trace;
  }
  sampling::AstState ast(sampling::TemperatureLadder::equidistant(spec.ladder_size, spec.ladder_min_beta), spec.gamma);
  const std::size_t max_steps = n_valid * spec.max_steps_per_sample;
  std::size_t valid = 0;
  for (std::size_t step = 1; valid < n_valid; ++step) {
    if (step > max_steps)
      throw FitError("tempering chain produced " + std::to_string(valid) + " of " + std::to_string(n_valid) +
                     " valid samples within " + std::to_string(max_steps) + " steps");
    const bool ok = chain.ast_step(ast, rng);
    valid += ok ? 1 : 0;
    trace.push(chain.state(), static_cast<double>(step), ok);
  }
  return trace;
}

}  // namespace

SampleTrace draw_samples(const BoltzmannMachine& machine, const sampling::RbmLayout* layout,
                         const SamplerSpec& spec, const LifContext* lif_context, std::size_t n_valid, Rng& rng,
                         std::span<const Clamp> clamp) {
  spec.check();
  if (n_valid == 0) throw InvalidArgument("need at least one sample");
  if (clamp.size() > machine.size()) throw DimensionError("clamp mask longer than the machine");
  if (spec.kind != SamplerKind::Lif) return classical_samples(machine, layout, spec, n_valid, rng, clamp);

  if (!lif_context) throw InvalidArgument("spiking sampler needs a calibrated neuron context");
  auto network = lif::translate(machine, lif_context->calibration, lif_context->neuron, lif_context->noise);
  network.dt = spec.dt;
  network.sample_interval = spec.sample_interval;
  if (spec.stp) network.set_stp(*spec.stp);
  if (!clamp.empty()) {
    ClampMask full(machine.size(), Clamp::Free);
    std::copy(clamp.begin(), clamp.end(), full.begin());
    network = lif::clamp(std::move(network), full);
  }
  lif::SimulationOptions options;
  options.stp_enabled = spec.stp.has_value();
  options.burn_in = spec.burn_in;
  const double duration = spec.burn_in + static_cast<double>(n_valid) * spec.sample_interval;
  auto result = lif::simulate(network, duration, rng, options);
  return result.trace.valid_only(n_valid);
}

std::vector<BinaryState> training_vectors(const data::ImageDataset& dataset, std::size_t n_label) {
  std::vector<BinaryState> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    BinaryState v = dataset.images[i];
    if (n_label > 0) {
      const int label = dataset.labels[i];
      if (label < 0 || static_cast<std::size_t>(label) >= n_label)
        throw InvalidArgument("item " + std::to_string(i) + " has label " + std::to_string(label) + " outside 0.." +
                              std::to_string(n_label - 1));
      v.resize(v.size() + n_label, 0);
      v[dataset.pixels() + static_cast<std::size_t>(label)] = 1;
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<BinaryState> visible_part(const SampleTrace& trace, std::size_t n_visible) {
  if (n_visible > trace.n_units()) throw DimensionError("more visible units than the trace has");
  std::vector<BinaryState> out;
  out.reserve(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (!trace.valid(i)) continue;
    const auto& s = trace.state(i);
    out.emplace_back(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n_visible));
  }
  return out;
}

eval::ModeTrace mode_trace(const SampleTrace& trace, const sampling::RbmLayout& layout, std::size_t window,
                           std::span<const std::vector<double>> prototypes) {
  if (layout.n_label > 0) return eval::modes_from_labels(trace, layout, window);
  if (prototypes.empty()) throw InvalidArgument("modes without label units need class prototypes");
  return eval::modes_from_prototypes(trace, layout.n_visible, prototypes, window);
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(workers, 1), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::size_t default_workers() {
  if (const char* env = std::getenv("STPNET_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace stpnet::exp
