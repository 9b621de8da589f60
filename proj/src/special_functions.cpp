#include "evdl/special_functions.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include "evdl/errors.hpp"

namespace evdl {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() {
  double u = 0.0;
  do {
    u = uniform();
  } while (u == 0.0);
  return u;
}

double Rng::normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  // Marsaglia polar method.
  double u = 0.0, v = 0.0, s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double scale = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * scale;
  has_spare_normal_ = true;
  return u * scale;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw DomainError("Rng::below: empty range");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r = 0;
  do {
    r = engine_();
  } while (r >= limit);
  return r % n;
}

double Rng::gamma(double shape) {
  if (!(shape >= 1.0) || !std::isfinite(shape)) {
    throw DomainError("gamma sampler requires shape >= 1, got " + std::to_string(shape));
  }
  // Marsaglia & Tsang (2000).
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0, v = 0.0;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::beta(double alpha, double beta) {
  if (!(alpha >= 1.0) || !(beta >= 1.0)) {
    throw DomainError("beta sampler requires alpha, beta >= 1");
  }
  const double x = gamma(alpha);
  const double y = gamma(beta);
  return x / (x + y);
}

double log_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("log_gamma: argument must be positive and finite, got " + std::to_string(x));
  }
  // Lanczos approximation, g = 671/128, 14 terms.
  static constexpr std::array<double, 14> kCoefficients = {
      57.1562356658629235,     -59.5979603554754912,    14.1360979747417471,
      -0.491913816097620199,   .339946499848118887e-4,  .465236289270485756e-4,
      -.983744753048795646e-4, .158088703224912494e-3,  -.210264441724104883e-3,
      .217439618115212643e-3,  -.164318106536763890e-3, .844182239838527433e-4,
      -.261908384015814087e-4, .368991826595316234e-5};
  double y = x;
  double tmp = x + 5.24218750000000000;
  tmp = (x + 0.5) * std::log(tmp) - tmp;
  double series = 0.999999999999997092;
  for (double c : kCoefficients) series += c / ++y;
  return tmp + std::log(2.5066282746310005 * series / x);
}

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("digamma: argument must be positive and finite, got " + std::to_string(x));
  }
  double shift = 0.0;
  while (x < 10.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // ln x - 1/(2x) - sum B_2k / (2k x^2k)
  const double tail =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760))))));
  return shift + std::log(x) - 0.5 * inv - tail;
}

double trigamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("trigamma: argument must be positive and finite, got " + std::to_string(x));
  }
  double shift = 0.0;
  while (x < 10.0) {
    shift += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // 1/x + 1/(2x^2) + sum B_2k / x^(2k+1)
  const double tail =
      inv * inv2 *
      (1.0 / 6 - inv2 * (1.0 / 30 - inv2 * (1.0 / 42 - inv2 * (1.0 / 30 - inv2 * (5.0 / 66)))));
  return shift + inv + 0.5 * inv2 + tail;
}

double log_beta(double a, double b) { return log_gamma(a) + log_gamma(b) - log_gamma(a + b); }

std::vector<double> sample_beta(double alpha, double beta, RngSeed seed, std::size_t n) {
  if (n == 0) throw DomainError("sample_beta: n must be >= 1");
  if (!(alpha >= 1.0) || !(beta >= 1.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw DomainError("sample_beta: alpha and beta must be finite and >= 1");
  }
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& v : out) v = rng.beta(alpha, beta);
  return out;
}

namespace {

constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for the nodes at odd Kronrod indices 1, 3, 5, 7.
constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double lo;
  double hi;
  double value;
  double error;
  bool operator<(const Panel& other) const { return error < other.error; }
};

Panel gauss_kronrod(const std::function<double(double)>& f, double lo, double hi) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double fc = f(center);
  if (!std::isfinite(fc)) throw DomainError("integrate_unit_interval: non-finite integrand");
  double kronrod = fc * kKronrodWeights[7];
  double gauss = fc * kGaussWeights[3];
  for (std::size_t j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    const double f1 = f(center - dx);
    const double f2 = f(center + dx);
    if (!std::isfinite(f1) || !std::isfinite(f2)) {
      throw DomainError("integrate_unit_interval: non-finite integrand");
    }
    kronrod += kKronrodWeights[j] * (f1 + f2);
    if (j % 2 == 1) gauss += kGaussWeights[j / 2] * (f1 + f2);
  }
  return {lo, hi, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace

QuadratureResult integrate_unit_interval(const std::function<double(double)>& f, double tol,
                                         std::size_t max_intervals) {
  if (!(tol > 0.0)) throw DomainError("integrate_unit_interval: tol must be positive");
  constexpr double kEndpointOffset = 1e-12;

  std::priority_queue<Panel> panels;
  double value = 0.0;
  double error = 0.0;
  // A few initial panels so sharply peaked integrands are not missed.
  constexpr int kInitialPanels = 8;
  for (int i = 0; i < kInitialPanels; ++i) {
    const double lo = i == 0 ? kEndpointOffset : static_cast<double>(i) / kInitialPanels;
    const double hi =
        i == kInitialPanels - 1 ? 1.0 - kEndpointOffset : static_cast<double>(i + 1) / kInitialPanels;
    Panel p = gauss_kronrod(f, lo, hi);
    value += p.value;
    error += p.error;
    panels.push(p);
  }

  while (error > tol) {
    if (panels.size() >= max_intervals) {
      throw AccuracyError("integrate_unit_interval: interval budget exhausted", value, error);
    }
    Panel worst = panels.top();
    panels.pop();
    const double mid = 0.5 * (worst.lo + worst.hi);
    Panel left = gauss_kronrod(f, worst.lo, mid);
    Panel right = gauss_kronrod(f, mid, worst.hi);
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    panels.push(left);
    panels.push(right);
  }
  // Re-sum to shed accumulated update rounding.
  QuadratureResult result{0.0, 0.0, panels.size()};
  while (!panels.empty()) {
    result.value += panels.top().value;
    result.error_estimate += panels.top().error;
    panels.pop();
  }
  return result;
}

}  // namespace evdl
