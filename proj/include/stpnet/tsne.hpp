#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "stpnet/rng.hpp"

namespace stpnet::eval {

using Point2 = std::array<double, 2>;

/// Exact (O(n^2)) t-SNE in two dimensions. The optimizer settings are the
/// customary ones: early exaggeration for the first iterations, momentum
/// switched from 0.5 to 0.8, per-coordinate adaptive gains.
struct TsneConfig {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double exaggeration = 4.0;
  std::size_t exaggeration_iterations = 100;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::size_t momentum_switch = 250;
  /// Perplexity match tolerance of the per-point bandwidth search.
  double perplexity_tolerance = 1e-4;
  void check() const;
};

inline constexpr std::size_t kTsneMaxPoints = 2000;

/// Symmetric joint probabilities p_ij = (p_j|i + p_i|j) / (2n), row-major
/// n x n with a zero diagonal. Each conditional row has its Gaussian
/// bandwidth tuned so its perplexity 2^H matches the target.
std::vector<double> tsne_affinities(std::span<const std::vector<double>> samples, double perplexity,
                                    double tolerance = 1e-4);

/// KL(P || Q) with Student-t similarities q_ij of the embedding.
double tsne_cost(std::span<const double> p, std::span<const Point2> y);

/// dC/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2).
std::vector<Point2> tsne_gradient(std::span<const double> p, std::span<const Point2> y);

struct TsneResult {
  std::vector<Point2> points;
  double cost = 0.0;
  /// Unexaggerated cost at the start of every iteration.
  std::vector<double> cost_history;
};

TsneResult tsne_embed(std::span<const std::vector<double>> samples, const TsneConfig& config, Rng& rng);

/// "x,y,mode" per point; `modes` may be empty (column left blank).
void write_tsne_csv(std::ostream& out, std::span<const Point2> points, std::span<const int> modes);

}  // namespace stpnet::eval
