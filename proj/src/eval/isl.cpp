#include "stpnet/isl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "stpnet/error.hpp"
#include "stpnet/simd/kernels.hpp"

namespace stpnet::eval {

namespace {

struct LogSumExp {
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;

  void add(double x) {
    if (x == -std::numeric_limits<double>::infinity()) return;
    if (x <= max) {
      sum += std::exp(x - max);
    } else {
      sum = sum * std::exp(max - x) + 1.0;
      max = x;
    }
  }
  double value() const { return sum == 0.0 ? max : max + std::log(sum); }
};

std::size_t common_dimension(std::span<const BinaryState> test, std::span<const BinaryState> generated) {
  if (test.empty()) throw InvalidArgument("ISL needs at least one test item");
  if (generated.empty()) throw InvalidArgument("ISL needs at least one generated sample");
  const std::size_t d = test.front().size();
  if (d == 0) throw InvalidArgument("ISL needs nonempty vectors");
  for (const auto& v : test)
    if (v.size() != d) throw DimensionError("test vectors differ in length");
  for (const auto& v : generated)
    if (v.size() != d) throw DimensionError("generated vectors differ from the test dimension");
  return d;
}

PackedBits pack(std::span<const BinaryState> set, std::size_t d) {
  PackedBits p(d);
  for (const auto& v : set) p.push(v);
  return p;
}

}  // namespace

void IslConfig::check() const {
  if (!(beta > 0.5 && beta <= 1.0)) throw InvalidArgument("ISL beta must lie in (0.5, 1]");
}

void PackedBits::push(const BinaryState& bits) {
  if (bits.size() != n_bits_) throw DimensionError("vector length differs from the packed width");
  const std::size_t base = data_.size();
  data_.resize(base + words_, 0);
  for (std::size_t i = 0; i < n_bits_; ++i) {
    if (bits[i] > 1) throw InvalidArgument("binary vectors must hold 0 or 1");
    if (bits[i]) data_[base + i / 64] |= std::uint64_t{1} << (i % 64);
  }
  ++count_;
}

std::uint64_t PackedBits::mismatches(std::size_t i, const PackedBits& other, std::size_t j) const {
  if (other.words_ != words_) throw DimensionError("packed sets differ in width");
  return simd::kernels().mismatch_count(row(i), other.row(j), words_);
}

std::vector<std::pair<std::size_t, double>> isl_curve(std::span<const BinaryState> test,
                                                      std::span<const BinaryState> generated,
                                                      std::span<const std::size_t> checkpoints,
                                                      const IslConfig& config) {
  config.check();
  const std::size_t d = common_dimension(test, generated);
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    if (checkpoints[c] == 0 || checkpoints[c] > generated.size() || (c > 0 && checkpoints[c] <= checkpoints[c - 1]))
      throw InvalidArgument("ISL checkpoints must be strictly increasing within 1..N");
  }
  const PackedBits t = pack(test, d);
  const PackedBits g = pack(generated, d);
  // log beta^{d - mm} (1 - beta)^{mm}; beta = 1 gives -inf for any mismatch.
  const double log_match = std::log(config.beta);
  const double log_miss = config.beta == 1.0 ? -std::numeric_limits<double>::infinity() : std::log1p(-config.beta);
  std::vector<double> term(d + 1);
  for (std::size_t mm = 0; mm <= d; ++mm) {
    term[mm] = mm == 0 ? static_cast<double>(d) * log_match
                       : static_cast<double>(d - mm) * log_match + static_cast<double>(mm) * log_miss;
  }

  std::vector<LogSumExp> acc(t.size());
  std::vector<std::pair<std::size_t, double>> curve;
  std::size_t next = 0;
  for (std::size_t i = 0; i < g.size() && next < checkpoints.size(); ++i) {
    for (std::size_t k = 0; k < t.size(); ++k) acc[k].add(term[t.mismatches(k, g, i)]);
    if (i + 1 == checkpoints[next]) {
      double total = 0.0;
      for (const auto& a : acc) total += a.value();
      curve.emplace_back(i + 1, total / static_cast<double>(t.size()) - std::log(static_cast<double>(i + 1)));
      ++next;
    }
  }
  return curve;
}

double isl_log_likelihood(std::span<const BinaryState> test, std::span<const BinaryState> generated,
                          const IslConfig& config) {
  const std::size_t all[] = {generated.size()};
  common_dimension(test, generated);
  return isl_curve(test, generated, all, config).front().second;
}

std::vector<BinaryState> pom_baseline(std::span<const BinaryState> training, std::size_t n_samples, Rng& rng) {
  if (training.empty()) throw InvalidArgument("baseline needs a training set");
  const std::size_t d = training.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& v : training) {
    if (v.size() != d) throw DimensionError("training vectors differ in length");
    for (std::size_t i = 0; i < d; ++i) mean[i] += v[i];
  }
  for (auto& m : mean) m /= static_cast<double>(training.size());
  std::vector<BinaryState> out(n_samples, BinaryState(d));
  for (auto& v : out)
    for (std::size_t i = 0; i < d; ++i) v[i] = rng.bernoulli(mean[i]) ? 1 : 0;
  return out;
}

std::vector<BinaryState> opt_baseline(std::span<const BinaryState> base, std::size_t n_samples, Rng& rng) {
  if (base.empty()) throw InvalidArgument("baseline needs a nonempty base set");
  std::vector<BinaryState> out;
  out.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) out.push_back(base[rng.below(base.size())]);
  return out;
}

void write_isl_csv(std::ostream& out, std::span<const std::pair<std::size_t, double>> curve) {
  out << "n_samples,isl\n";
  out.precision(10);
  for (const auto& [n, v] : curve) out << n << ',' << v << '\n';
}

}  // namespace stpnet::eval
