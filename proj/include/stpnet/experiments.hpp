#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stpnet/boltzmann.hpp"
#include "stpnet/clamp.hpp"
#include "stpnet/datasets.hpp"
#include "stpnet/lif.hpp"
#include "stpnet/modes.hpp"
#include "stpnet/samplers.hpp"

namespace stpnet::exp {

/// One classical sweep corresponds to this much spiking-network time (ms):
/// a state refresh takes one refractory period.
inline constexpr double kSweepEquivalentMs = 10.0;

enum class SamplerKind { Gibbs, Ast, Lif };

const char* to_string(SamplerKind kind);
SamplerKind sampler_kind_from_string(const std::string& name);

struct SamplerSpec {
  SamplerKind kind = SamplerKind::Gibbs;

  // tempering
  std::size_t ladder_size = 20;
  double ladder_min_beta = 0.9;
  sampling::RateSchedule gamma{90.0, 150.0};
  /// AST gives up after this many steps per requested valid sample.
  std::size_t max_steps_per_sample = 1000;

  // spiking network
  lif::ModelKind model = lif::ModelKind::Cuba;
  std::optional<lif::StpParams> stp;  ///< empty: static synapses
  double sample_interval = kSweepEquivalentMs;
  double burn_in = 0.0;  ///< ms
  double dt = 0.1;

  void check() const;
};

/// Neuron model, background noise and activation fit shared by every
/// spiking run of an experiment.
struct LifContext {
  lif::LifParams neuron;
  lif::NoiseConfig noise;
  lif::Calibration calibration;
};

LifContext make_lif_context(lif::ModelKind model, Rng& rng, const lif::CalibrationOptions& options = {});

/// Draws `n_valid` samples. Classical samplers start from a uniformly random
/// state (clamped units at their values) and use block sweeps when a layout
/// is given; the spiking network runs for burn_in + n_valid * sample_interval
/// ms. The returned trace may contain invalid (tempered) entries.
SampleTrace draw_samples(const BoltzmannMachine& machine, const sampling::RbmLayout* layout,
                         const SamplerSpec& spec, const LifContext* lif_context, std::size_t n_valid, Rng& rng,
                         std::span<const Clamp> clamp = {});

/// Visible pixels followed by a one-hot label block of `n_label` units (none
/// when n_label == 0).
std::vector<BinaryState> training_vectors(const data::ImageDataset& dataset, std::size_t n_label);

/// First n_visible entries of every valid sample.
std::vector<BinaryState> visible_part(const SampleTrace& trace, std::size_t n_visible);

/// Mode sequence of a trace: label activity when the layout has label units,
/// nearest class prototype otherwise.
eval::ModeTrace mode_trace(const SampleTrace& trace, const sampling::RbmLayout& layout, std::size_t window,
                           std::span<const std::vector<double>> prototypes = {});

/// Runs fn(0) .. fn(n - 1) on up to `workers` threads. Every task runs even
/// if another throws; the first exception (lowest index) is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// STPNET_WORKERS when set to a positive integer, else the hardware thread
/// count (at least 1).
std::size_t default_workers();

}  // namespace stpnet::exp
