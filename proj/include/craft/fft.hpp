#pragma once

#include <complex>
#include <span>
#include <vector>

namespace craft::fft {

/// First f bins of the unnormalized forward DFT of a real input:
/// bin k = sum_n x[n] * exp(-2*pi*i*k*n/L). Bin 0 is DC. Valid range is
/// 1 <= f <= floor(L/2)+1. Power-of-two lengths use radix-2 Cooley-Tukey;
/// everything else goes through Bluestein's chirp-z transform, so L is
/// unrestricted.
std::vector<std::complex<double>> truncated_rfft(std::span<const double> x, std::size_t f);

/// Full one-sided spectrum (f = floor(L/2)+1).
std::vector<std::complex<double>> rfft(std::span<const double> x);

} // namespace craft::fft
