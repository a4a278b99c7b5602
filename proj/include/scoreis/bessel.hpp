#pragma once

namespace scoreis {

/// log I0(z) for z >= 0, accurate for arguments far beyond the overflow
/// range of std::cyl_bessel_i.
double log_bessel_i0(double z);

/// I1(z) / I0(z) for z >= 0.
double bessel_i1_over_i0(double z);

}  // namespace scoreis
