#include "stpnet/modes.hpp"

#include <algorithm>
#include <deque>
#include <ostream>

#include "stpnet/error.hpp"
#include "stpnet/simd/kernels.hpp"

namespace stpnet::eval {

namespace {

// Calls score(sums, count) for every valid sample, where sums holds the
// activity of `units` summed over the trailing window.
template <class Score>
ModeTrace windowed_modes(const SampleTrace& trace, std::span<const std::size_t> units, std::size_t window,
                         Score score) {
  if (window == 0) throw InvalidArgument("mode window must hold at least one sample");
  for (std::size_t u : units)
    if (u >= trace.n_units()) throw InvalidArgument("mode unit outside the trace");
  ModeTrace modes;
  std::vector<double> sums(units.size(), 0.0);
  std::deque<std::size_t> held;
  for (std::size_t s = 0; s < trace.size(); ++s) {
    if (!trace.valid(s)) continue;
    const auto& z = trace.state(s);
    for (std::size_t k = 0; k < units.size(); ++k) sums[k] += z[units[k]];
    held.push_back(s);
    if (held.size() > window) {
      const auto& old = trace.state(held.front());
      for (std::size_t k = 0; k < units.size(); ++k) sums[k] -= old[units[k]];
      held.pop_front();
    }
    modes.push(trace.timestamp(s), score(sums, held.size()));
  }
  return modes;
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

void ModeTrace::push(double timestamp, int mode) {
  if (!timestamps.empty() && timestamp < timestamps.back()) throw InvalidArgument("mode timestamps must not decrease");
  timestamps.push_back(timestamp);
  modes.push_back(mode);
}

std::size_t ModeTrace::switches() const {
  std::size_t count = 0;
  for (std::size_t i = 1; i < modes.size(); ++i) count += modes[i] != modes[i - 1];
  return count;
}

ModeTrace modes_from_labels(const SampleTrace& trace, const sampling::RbmLayout& layout, std::size_t window) {
  if (layout.n_label == 0) throw InvalidArgument("layout has no label units");
  std::vector<std::size_t> units(layout.n_label);
  for (std::size_t k = 0; k < layout.n_label; ++k) units[k] = layout.label_begin() + k;
  return windowed_modes(trace, units, window, [](const std::vector<double>& sums, std::size_t) {
    return argmax(sums);
  });
}

ModeTrace modes_from_prototypes(const SampleTrace& trace, std::size_t n_visible,
                                std::span<const std::vector<double>> prototypes, std::size_t window) {
  if (prototypes.empty()) throw InvalidArgument("need at least one prototype");
  std::vector<double> norms;
  for (const auto& p : prototypes) {
    if (p.size() != n_visible) throw DimensionError("prototype length differs from the visible layer");
    double n2 = 0;
    for (double x : p) n2 += x * x;
    norms.push_back(n2);
  }
  std::vector<std::size_t> units(n_visible);
  for (std::size_t i = 0; i < n_visible; ++i) units[i] = i;
  std::vector<double> scores(prototypes.size());
  return windowed_modes(trace, units, window, [&](const std::vector<double>& sums, std::size_t count) {
    for (std::size_t c = 0; c < prototypes.size(); ++c) {
      double dot = 0;
      for (std::size_t i = 0; i < n_visible; ++i) dot += sums[i] * prototypes[c][i];
      scores[c] = 2.0 * dot / static_cast<double>(count) - norms[c];
    }
    return argmax(scores);
  });
}

std::vector<std::vector<double>> class_prototypes(std::span<const BinaryState> images, std::span<const int> labels,
                                                  std::size_t n_classes) {
  if (images.size() != labels.size()) throw DimensionError("image and label counts differ");
  if (images.empty()) throw InvalidArgument("no images");
  const std::size_t d = images.front().size();
  std::vector<std::vector<double>> protos(n_classes, std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(n_classes, 0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) throw InvalidArgument("label out of range");
    if (images[i].size() != d) throw DimensionError("images differ in size");
    auto& p = protos[static_cast<std::size_t>(labels[i])];
    for (std::size_t k = 0; k < d; ++k) p[k] += images[i][k];
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (counts[c] == 0) throw InvalidArgument("class " + std::to_string(c) + " has no images");
    for (auto& x : protos[c]) x /= static_cast<double>(counts[c]);
  }
  return protos;
}

std::map<std::size_t, std::size_t> DwellStats::histogram() const {
  std::map<std::size_t, std::size_t> h;
  for (auto l : run_lengths) ++h[l];
  return h;
}

double DwellStats::median_length() const {
  if (run_lengths.empty()) throw InvalidArgument("no runs");
  std::vector<std::size_t> sorted(run_lengths);
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size() / 2;
  if (sorted.size() % 2 == 1) return static_cast<double>(sorted[m]);
  return 0.5 * static_cast<double>(sorted[m - 1] + sorted[m]);
}

double DwellStats::occupancy(int mode) const {
  std::size_t total = 0, in_mode = 0;
  for (std::size_t r = 0; r < runs(); ++r) {
    total += run_lengths[r];
    if (run_modes[r] == mode) in_mode += run_lengths[r];
  }
  if (total == 0) throw InvalidArgument("no samples");
  return static_cast<double>(in_mode) / static_cast<double>(total);
}

DwellStats mode_dwell(const ModeTrace& trace, double sample_interval) {
  DwellStats stats;
  stats.sample_interval = sample_interval;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (i > 0 && trace.modes[i] == trace.modes[i - 1]) {
      ++stats.run_lengths.back();
    } else {
      stats.run_modes.push_back(trace.modes[i]);
      stats.run_lengths.push_back(1);
    }
  }
  return stats;
}

void write_dwell_csv(std::ostream& out, const DwellStats& stats) {
  out << "length_samples,duration,count\n";
  for (const auto& [len, count] : stats.histogram())
    out << len << ',' << static_cast<double>(len) * stats.sample_interval << ',' << count << '\n';
}

int classify_gibbs(const BoltzmannMachine& machine, const sampling::RbmLayout& layout, const BinaryState& image,
                   Rng& rng, const ClassifyOptions& options) {
  if (layout.n_label == 0) throw InvalidArgument("layout lacks label units");
  layout.check(machine);
  if (image.size() != layout.n_visible) throw DimensionError("image size differs from the visible layer");
  BinaryState initial(layout.n_units(), 0);
  std::copy(image.begin(), image.end(), initial.begin());
  std::vector<std::uint8_t> frozen(layout.n_units(), 0);
  std::fill(frozen.begin(), frozen.begin() + static_cast<std::ptrdiff_t>(layout.n_visible), 1);
  sampling::Chain chain(machine, initial, &layout);
  chain.set_frozen(std::move(frozen));

  std::vector<double> score(layout.n_label, 0.0);
  const std::size_t hb = layout.hidden_begin();
  for (std::size_t s = 0; s < options.burn_in + options.sweeps; ++s) {
    chain.sweep(rng);
    if (s < options.burn_in) continue;
    const auto& z = chain.state();
    for (std::size_t k = 0; k < layout.n_label; ++k) {
      const std::size_t u = layout.label_begin() + k;
      double field = machine.bias(u);
      for (std::size_t j = hb; j < layout.n_units(); ++j)
        if (z[j]) field += machine.weight(u, j);
      score[k] += logistic(field);
    }
  }
  return argmax(score);
}

int classify_lif(const lif::LifNetworkConfig& network, const sampling::RbmLayout& layout, const BinaryState& image,
                 double duration, Rng& rng) {
  if (layout.n_label == 0) throw InvalidArgument("layout lacks label units");
  if (network.n != layout.n_units()) throw DimensionError("network size differs from the layout");
  if (image.size() != layout.n_visible) throw DimensionError("image size differs from the visible layer");
  ClampMask mask(network.n, Clamp::Free);
  for (std::size_t i = 0; i < layout.n_visible; ++i) mask[i] = image[i] ? Clamp::On : Clamp::Off;
  const auto result = lif::simulate(lif::clamp(network, mask), duration, rng);
  std::vector<double> spikes(layout.n_label, 0.0);
  for (const auto& s : result.spikes) {
    if (s.neuron >= layout.label_begin() && s.neuron < layout.hidden_begin()) spikes[s.neuron - layout.label_begin()] += 1;
  }
  return argmax(spikes);
}

std::vector<double> mean_activity(const SampleTrace& trace) {
  std::vector<double> mean(trace.n_units(), 0.0);
  std::size_t count = 0;
  for (std::size_t s = 0; s < trace.size(); ++s) {
    if (!trace.valid(s)) continue;
    ++count;
    const auto& z = trace.state(s);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += z[k];
  }
  if (count == 0) throw InvalidArgument("trace has no valid samples");
  for (auto& m : mean) m /= static_cast<double>(count);
  return mean;
}

std::vector<std::vector<double>> mean_interaction_strength(const BoltzmannMachine& machine,
                                                           std::span<const std::vector<double>> activities) {
  const std::size_t n = machine.size();
  for (const auto& a : activities)
    if (a.size() != n) throw DimensionError("activity vector length differs from the machine");
  const auto& k = simd::kernels();
  std::vector<std::vector<double>> projected;  // W a_j
  for (const auto& a : activities) {
    std::vector<double> wa(n);
    for (std::size_t i = 0; i < n; ++i) wa[i] = k.dot(machine.row(i).data(), a.data(), n);
    projected.push_back(std::move(wa));
  }
  std::vector<std::vector<double>> w(activities.size(), std::vector<double>(activities.size()));
  for (std::size_t i = 0; i < activities.size(); ++i)
    for (std::size_t j = 0; j < activities.size(); ++j) w[i][j] = k.dot(activities[i].data(), projected[j].data(), n);
  return w;
}

}  // namespace stpnet::eval
