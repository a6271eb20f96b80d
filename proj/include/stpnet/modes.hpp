#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "stpnet/boltzmann.hpp"
#include "stpnet/lif.hpp"
#include "stpnet/samplers.hpp"
#include "stpnet/trace.hpp"

namespace stpnet::eval {

/// Mode label per sample.
struct ModeTrace {
  std::vector<double> timestamps;
  std::vector<int> modes;

  std::size_t size() const { return modes.size(); }
  void push(double timestamp, int mode);
  /// Number of changes of mode between consecutive samples.
  std::size_t switches() const;
};

/// Mode = index of the most active label unit, activity being averaged over
/// the trailing `window` valid samples (including the current one). Invalid
/// samples are skipped. Ties go to the lowest index.
ModeTrace modes_from_labels(const SampleTrace& trace, const sampling::RbmLayout& layout, std::size_t window);

/// For layouts without label units: mode = argmax_c (2 a . p_c - |p_c|^2),
/// i.e. the prototype nearest (Euclidean) to the window-averaged visible
/// activity a. Prototypes are typically class-mean images.
ModeTrace modes_from_prototypes(const SampleTrace& trace, std::size_t n_visible,
                                std::span<const std::vector<double>> prototypes, std::size_t window);

/// Class-mean images of a labeled dataset, indexed by label 0..n_classes-1.
std::vector<std::vector<double>> class_prototypes(std::span<const BinaryState> images, std::span<const int> labels,
                                                  std::size_t n_classes);

/// Run-length encoding of a mode sequence.
struct DwellStats {
  std::vector<int> run_modes;
  std::vector<std::size_t> run_lengths;  ///< in samples
  double sample_interval = 1.0;          ///< time per sample

  std::size_t runs() const { return run_lengths.size(); }
  /// Run length -> number of runs with that length.
  std::map<std::size_t, std::size_t> histogram() const;
  /// Median run length in samples (mean of the middle two for even counts).
  double median_length() const;
  /// Fraction of samples spent in `mode`.
  double occupancy(int mode) const;
};

DwellStats mode_dwell(const ModeTrace& trace, double sample_interval = 1.0);

/// "length_samples,duration,count" per histogram bin.
void write_dwell_csv(std::ostream& out, const DwellStats& stats);

struct ClassifyOptions {
  std::size_t burn_in = 10;
  std::size_t sweeps = 200;
};

/// Visible units clamped to `image`; the label unit with the highest mean
/// activity wins (ties: lowest index). The Gibbs variant averages the exact
/// label conditionals along a block-Gibbs chain.
int classify_gibbs(const BoltzmannMachine& machine, const sampling::RbmLayout& layout, const BinaryState& image,
                   Rng& rng, const ClassifyOptions& options = {});

/// Spiking variant: label neuron with the most spikes over `duration` ms of a
/// clamped simulation of `network` (a translation of the machine).
int classify_lif(const lif::LifNetworkConfig& network, const sampling::RbmLayout& layout, const BinaryState& image,
                 double duration, Rng& rng);

/// Mean of each unit over the valid samples of a trace.
std::vector<double> mean_activity(const SampleTrace& trace);

/// wbar_ij = a_i^T W a_j for per-pattern mean activity vectors a_i.
std::vector<std::vector<double>> mean_interaction_strength(const BoltzmannMachine& machine,
                                                           std::span<const std::vector<double>> activities);

}  // namespace stpnet::eval
