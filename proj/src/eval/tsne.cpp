#include "stpnet/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "stpnet/error.hpp"
#include "stpnet/simd/kernels.hpp"

namespace stpnet::eval {

namespace {

std::size_t side_of(std::span<const double> p, std::size_t n_points) {
  if (p.size() != n_points * n_points) throw DimensionError("affinity matrix is not n x n for the embedding");
  return n_points;
}

// Gradient of KL(P || Q) with P scaled by `exaggeration`; also returns the
// unexaggerated cost, which shares the Student-t numerators.
double gradient_and_cost(std::span<const double> p, std::span<const Point2> y, double exaggeration,
                         std::vector<Point2>& grad) {
  const std::size_t n = side_of(p, y.size());
  std::vector<double> num(n * n, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
      const double q = 1.0 / (1.0 + dx * dx + dy * dy);
      num[i * n + j] = num[j * n + i] = q;
      z += 2.0 * q;
    }
  }
  grad.assign(n, Point2{0.0, 0.0});
  double plogp = 0.0, plognum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double pij = p[i * n + j];
      const double q = num[i * n + j];
      const double f = 4.0 * (exaggeration * pij - q / z) * q;
      grad[i][0] += f * (y[i][0] - y[j][0]);
      grad[i][1] += f * (y[i][1] - y[j][1]);
      if (pij > 0) {
        plogp += pij * std::log(pij);
        plognum += pij * std::log(q);
      }
    }
  }
  return plogp - plognum + std::log(z);
}

}  // namespace

void TsneConfig::check() const {
  if (!(perplexity > 0)) throw InvalidArgument("perplexity must be positive");
  if (iterations == 0) throw InvalidArgument("tSNE needs at least one iteration");
  if (!(learning_rate > 0)) throw InvalidArgument("tSNE learning rate must be positive");
  if (!(exaggeration >= 1)) throw InvalidArgument("early exaggeration must be at least 1");
  if (!(perplexity_tolerance > 0)) throw InvalidArgument("perplexity tolerance must be positive");
}

std::vector<double> tsne_affinities(std::span<const std::vector<double>> samples, double perplexity,
                                    double tolerance) {
  const std::size_t n = samples.size();
  if (n < 2) throw InvalidArgument("tSNE needs at least two samples");
  if (!(perplexity > 0) || perplexity >= static_cast<double>(n))
    throw InvalidArgument("perplexity must be positive and below the sample count");
  const std::size_t d = samples.front().size();
  for (const auto& s : samples)
    if (s.size() != d) throw DimensionError("samples differ in dimension");

  const auto& k = simd::kernels();
  std::vector<double> dist(n * n, 0.0);
  double largest = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i * n + j] = dist[j * n + i] = k.squared_distance(samples[i].data(), samples[j].data(), d);
      largest = std::max(largest, dist[i * n + j]);
    }
  if (largest == 0.0) throw InvalidArgument("all samples are identical");

  const double target_entropy = std::log(perplexity);
  std::vector<double> cond(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, dist[i * n + j]);
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double* row = cond.data() + i * n;
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0, weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double shifted = dist[i * n + j] - dmin;
        row[j] = std::exp(-beta * shifted);
        sum += row[j];
        weighted += shifted * row[j];
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
      if (std::abs(std::exp(entropy) - perplexity) < tolerance) break;
      if (entropy > target_entropy) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
  }
  std::vector<double> p(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * static_cast<double>(n));
  return p;
}

double tsne_cost(std::span<const double> p, std::span<const Point2> y) {
  std::vector<Point2> unused;
  return gradient_and_cost(p, y, 1.0, unused);
}

std::vector<Point2> tsne_gradient(std::span<const double> p, std::span<const Point2> y) {
  std::vector<Point2> grad;
  gradient_and_cost(p, y, 1.0, grad);
  return grad;
}

TsneResult tsne_embed(std::span<const std::vector<double>> samples, const TsneConfig& config, Rng& rng) {
  config.check();
  const std::size_t n = samples.size();
  if (n > kTsneMaxPoints) throw InvalidArgument("exact tSNE is capped at 2000 points");
  if (static_cast<double>(n) < 3.0 * config.perplexity)
    throw InvalidArgument("tSNE needs at least three times as many samples as the perplexity");
  const auto p = tsne_affinities(samples, config.perplexity, config.perplexity_tolerance);

  TsneResult result;
  result.points.resize(n);
  for (auto& pt : result.points) pt = {rng.normal(0.0, 1e-4), rng.normal(0.0, 1e-4)};
  std::vector<Point2> velocity(n, Point2{0, 0}), gains(n, Point2{1, 1}), grad;
  result.cost_history.reserve(config.iterations);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const double exaggeration = it < config.exaggeration_iterations ? config.exaggeration : 1.0;
    const double momentum = it < config.momentum_switch ? config.initial_momentum : config.final_momentum;
    result.cost_history.push_back(gradient_and_cost(p, result.points, exaggeration, grad));
    Point2 mean{0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 2; ++c) {
        double& g = gains[i][c];
        g = (grad[i][c] > 0) != (velocity[i][c] > 0) ? g + 0.2 : g * 0.8;
        g = std::max(g, 0.01);
        velocity[i][c] = momentum * velocity[i][c] - config.learning_rate * g * grad[i][c];
        result.points[i][c] += velocity[i][c];
        mean[c] += result.points[i][c] / static_cast<double>(n);
      }
    }
    for (auto& pt : result.points) {
      pt[0] -= mean[0];
      pt[1] -= mean[1];
    }
  }
  result.cost = tsne_cost(p, result.points);
  return result;
}

void write_tsne_csv(std::ostream& out, std::span<const Point2> points, std::span<const int> modes) {
  if (!modes.empty() && modes.size() != points.size()) throw DimensionError("mode count differs from point count");
  out << "x,y,mode\n";
  out.precision(10);
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << points[i][0] << ',' << points[i][1] << ',';
    if (!modes.empty()) out << modes[i];
    out << '\n';
  }
}

}  // namespace stpnet::eval
