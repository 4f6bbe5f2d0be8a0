#pragma once

#include <complex>
#include <numbers>

namespace omsim {

inline constexpr double hbar = 1.054571817e-34;  // J s
inline constexpr double k_B = 1.380649e-23;      // J/K
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double pi = std::numbers::pi;

using cplx = std::complex<double>;
inline constexpr cplx im{0.0, 1.0};

}  // namespace omsim
