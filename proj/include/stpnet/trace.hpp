#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace stpnet {

/// One binary network state; entries are 0 or 1.
using BinaryState = std::vector<std::uint8_t>;

/// Time-ordered states produced by any sampler.
///
/// Timestamps are sweep indices for the classical samplers and simulation
/// time in ms for spiking networks. Only entries flagged valid represent the
/// target distribution (adaptive tempering records every step but only the
/// beta = 1 ones count).
class SampleTrace {
 public:
  SampleTrace() = default;
  explicit SampleTrace(std::size_t n_units) : n_units_(n_units) {}

  std::size_t n_units() const noexcept { return n_units_; }
  std::size_t size() const noexcept { return states_.size(); }
  bool empty() const noexcept { return states_.empty(); }
  std::size_t valid_count() const;

  void push(BinaryState state, double timestamp, bool valid = true);
  void reserve(std::size_t n);

  const BinaryState& state(std::size_t i) const { return states_[i]; }
  double timestamp(std::size_t i) const { return timestamps_[i]; }
  bool valid(std::size_t i) const { return valid_[i] != 0; }

  const std::vector<BinaryState>& states() const noexcept { return states_; }

  /// New trace holding only the valid entries, optionally restricted to the
  /// first `max_count` of them.
  SampleTrace valid_only(std::size_t max_count = SIZE_MAX) const;

  friend bool operator==(const SampleTrace&, const SampleTrace&) = default;

 private:
  std::size_t n_units_ = 0;
  std::vector<BinaryState> states_;
  std::vector<double> timestamps_;
  std::vector<std::uint8_t> valid_;
};

/// Plain text, one sample per line: "<timestamp> <valid 0|1> <bitstring>",
/// bit i of the string is unit i.
void write_trace(std::ostream& out, const SampleTrace& trace);
SampleTrace read_trace(std::istream& in);

}  // namespace stpnet
