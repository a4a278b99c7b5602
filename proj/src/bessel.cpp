#include "scoreis/bessel.hpp"

#include <cmath>
#include <numbers>

#include "scoreis/errors.hpp"

namespace scoreis {

namespace {

constexpr double kSeriesLimit = 30.0;

struct SeriesSums {
  double i0;
  double i1;
};

// Power series; all terms positive so no cancellation.
SeriesSums power_series(double z) {
  const double q = 0.25 * z * z;
  double term0 = 1.0;
  double term1 = 0.5 * z;
  double s0 = term0;
  double s1 = term1;
  for (int k = 1; k < 500; ++k) {
    term0 *= q / (static_cast<double>(k) * k);
    term1 *= q / (static_cast<double>(k) * (k + 1));
    s0 += term0;
    s1 += term1;
    if (term0 < 1e-18 * s0 && term1 < 1e-18 * s1) break;
  }
  return {s0, s1};
}

// Asymptotic series without the e^z / sqrt(2 pi z) prefactor:
// sum_k (-1)^k prod_{j=1..k} (mu - (2j-1)^2) / (k! (8z)^k), mu = 4 nu^2.
double asymptotic_series(double nu, double z) {
  const double mu = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = -term * (mu - odd * odd) / (k * 8.0 * z);
    if (std::abs(next) >= std::abs(term)) break;
    term = next;
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

}  // namespace

double log_bessel_i0(double z) {
  if (!(z >= 0.0)) throw DomainError("log_bessel_i0: argument must be non-negative");
  if (z <= kSeriesLimit) return std::log(power_series(z).i0);
  return z - 0.5 * std::log(2.0 * std::numbers::pi * z) + std::log(asymptotic_series(0.0, z));
}

double bessel_i1_over_i0(double z) {
  if (!(z >= 0.0)) throw DomainError("bessel_i1_over_i0: argument must be non-negative");
  if (z <= kSeriesLimit) {
    const SeriesSums s = power_series(z);
    return s.i1 / s.i0;
  }
  return asymptotic_series(1.0, z) / asymptotic_series(0.0, z);
}

}  // namespace scoreis
