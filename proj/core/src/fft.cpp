#include "moecast/fft.hpp"

#include <cmath>
#include <cstddef>
#include <numbers>
#include <utility>

#include "moecast/error.hpp"

namespace moecast::fft {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& z : a) z *= inv;
    }
}

// Bluestein: expresses a length-n DFT as a convolution that is evaluated with
// power-of-two FFTs of length >= 2n-1. k^2 is reduced mod 2n before the angle
// is formed so the chirp phase stays accurate for large n.
void fft_bluestein(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<std::complex<double>> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t k2 = static_cast<std::size_t>(
            (static_cast<unsigned long long>(k) * k) % (2ULL * n));
        chirp[k] = std::polar(1.0, sign * kPi * static_cast<double>(k2) / static_cast<double>(n));
    }
    const std::size_t m = next_pow2(2 * n - 1);
    std::vector<std::complex<double>> fa(m, {0.0, 0.0});
    std::vector<std::complex<double>> fb(m, {0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k) fa[k] = a[k] * chirp[k];
    fb[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) fb[k] = fb[m - k] = std::conj(chirp[k]);
    fft_pow2(fa, false);
    fft_pow2(fb, false);
    for (std::size_t i = 0; i < m; ++i) fa[i] *= fb[i];
    fft_pow2(fa, true);
    for (std::size_t k = 0; k < n; ++k) a[k] = fa[k] * chirp[k];
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& z : a) z *= inv;
    }
}

} // namespace

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    if (a.empty()) throw DimensionError("fft: empty input");
    if (a.size() == 1) return;
    if (is_pow2(a.size())) {
        fft_pow2(a, inverse);
    } else {
        fft_bluestein(a, inverse);
    }
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
    if (x.empty()) throw DimensionError("rfft: empty input");
    std::vector<std::complex<double>> a(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
    fft_inplace(a, false);
    a.resize(x.size() / 2 + 1);
    return a;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& spec, int n) {
    if (n <= 0) throw DimensionError("irfft: n must be positive");
    const std::size_t want = static_cast<std::size_t>(n) / 2 + 1;
    if (spec.size() != want) {
        throw DimensionError("irfft: spectrum has " + std::to_string(spec.size()) +
                             " bins, length " + std::to_string(n) + " needs " +
                             std::to_string(want));
    }
    std::vector<std::complex<double>> full(static_cast<std::size_t>(n));
    full[0] = {spec[0].real(), 0.0};
    const bool even = n % 2 == 0;
    const std::size_t half = static_cast<std::size_t>(n) / 2;
    if (even) full[half] = {spec[half].real(), 0.0};
    const std::size_t interior_end = even ? half : half + 1;
    for (std::size_t f = 1; f < interior_end; ++f) {
        full[f] = spec[f];
        full[static_cast<std::size_t>(n) - f] = std::conj(spec[f]);
    }
    fft_inplace(full, true);
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) out[static_cast<std::size_t>(t)] = full[static_cast<std::size_t>(t)].real();
    return out;
}

} // namespace moecast::fft
