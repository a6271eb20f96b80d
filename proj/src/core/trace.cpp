#include "stpnet/trace.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "stpnet/error.hpp"

namespace stpnet {

std::size_t SampleTrace::valid_count() const {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), std::uint8_t{1}));
}

void SampleTrace::push(BinaryState state, double timestamp, bool valid) {
  if (states_.empty() && n_units_ == 0) n_units_ = state.size();
  if (state.size() != n_units_) throw DimensionError("trace states must all have the same length");
  if (!timestamps_.empty() && timestamp < timestamps_.back()) {
    throw InvalidArgument("trace timestamps must be nondecreasing");
  }
  states_.push_back(std::move(state));
  timestamps_.push_back(timestamp);
  valid_.push_back(valid ? 1 : 0);
}

void SampleTrace::reserve(std::size_t n) {
  states_.reserve(n);
  timestamps_.reserve(n);
  valid_.reserve(n);
}

SampleTrace SampleTrace::valid_only(std::size_t max_count) const {
  SampleTrace out(n_units_);
  for (std::size_t i = 0; i < size() && out.size() < max_count; ++i) {
    if (valid_[i]) out.push(states_[i], timestamps_[i], true);
  }
  return out;
}

void write_trace(std::ostream& out, const SampleTrace& trace) {
  std::string line;
  char stamp[32];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(stamp, sizeof stamp, "%.17g", trace.timestamp(i));
    line.assign(stamp);
    line += trace.valid(i) ? " 1 " : " 0 ";
    for (std::uint8_t bit : trace.state(i)) line += bit ? '1' : '0';
    out << line << '\n';
  }
}

SampleTrace read_trace(std::istream& in) {
  SampleTrace trace;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    double stamp = 0;
    int valid = 0;
    std::string bits;
    if (!(fields >> stamp >> valid >> bits) || (valid != 0 && valid != 1)) {
      throw FormatError("trace line " + std::to_string(line_no) + " is malformed");
    }
    BinaryState state(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] != '0' && bits[i] != '1') throw FormatError("trace line " + std::to_string(line_no) + " has a non-binary state");
      state[i] = bits[i] == '1';
    }
    trace.push(std::move(state), stamp, valid == 1);
  }
  return trace;
}

}  // namespace stpnet
