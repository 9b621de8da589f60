#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace evdl {

struct RngSeed {
  std::uint64_t value = 0;
};

/// Seeded pseudo-random source. The distributions are implemented here on
/// top of the raw 64-bit engine so streams are identical across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(RngSeed seed) : engine_(seed.value) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1).
  double uniform_open();
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double gamma(double shape);
  double beta(double alpha, double beta);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

double log_gamma(double x);
double digamma(double x);
double trigamma(double x);
double log_beta(double a, double b);

std::vector<double> sample_beta(double alpha, double beta, RngSeed seed, std::size_t n);

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::size_t intervals = 0;
};

/// Adaptive Gauss-Kronrod (7/15) integration over [1e-12, 1 - 1e-12].
/// Throws AccuracyError when `max_intervals` subdivisions do not reach `tol`.
QuadratureResult integrate_unit_interval(const std::function<double(double)>& f, double tol,
                                         std::size_t max_intervals = 4000);

}  // namespace evdl
