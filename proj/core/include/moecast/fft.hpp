#pragma once

#include <complex>
#include <vector>

namespace moecast::fft {

// In-place complex DFT of arbitrary length: iterative radix-2 when the length
// is a power of two, Bluestein's chirp-z algorithm otherwise.
// inverse=true applies the 1/N normalization.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

// Real-input forward transform, unnormalized: N reals -> floor(N/2)+1 bins.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

// Inverse of rfft with 1/N normalization, reconstructing the full spectrum by
// conjugate symmetry. The imaginary parts of the DC bin and (for even n) the
// Nyquist bin are ignored; they are zero for any spectrum of a real signal.
std::vector<double> irfft(const std::vector<std::complex<double>>& spec, int n);

} // namespace moecast::fft
