#pragma once

// Test-side reference implementations, deliberately written the slow/obvious
// way so they share no code path with the library: an O(N^2) DFT, an
// explicitly compensated double-loop MMD, and a central-difference gradient
// checker that re-runs the forward closure per perturbed element.

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "moecast/tensor.hpp"

namespace oracle {

inline double kahan_sum(const std::vector<double>& xs) {
    double s = 0.0, c = 0.0;
    for (double x : xs) {
        const double y = x - c;
        const double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s;
}

// Full complex DFT, O(N^2): X[k] = sum_n x[n] exp(-2*pi*i*k*n/N).
inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(j) /
                               static_cast<double>(n);
            acc += x[j] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

inline double rbf(const double* x, const double* y, std::size_t d, double sigma) {
    double sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = x[i] - y[i];
        sq += diff * diff;
    }
    return std::exp(-sq / (2.0 * sigma * sigma));
}

// Biased (V-statistic) squared MMD, diagonal terms included, written as three
// compensated double loops over rows of the flat [n,d] / [m,d] blocks.
inline double naive_mmd2_biased(const std::vector<double>& xs, std::size_t n,
                                const std::vector<double>& ys, std::size_t m, std::size_t d,
                                double sigma) {
    std::vector<double> kxx, kyy, kxy;
    kxx.reserve(n * n);
    kyy.reserve(m * m);
    kxy.reserve(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) kxx.push_back(rbf(&xs[i * d], &xs[j * d], d, sigma));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) kyy.push_back(rbf(&ys[i * d], &ys[j * d], d, sigma));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) kxy.push_back(rbf(&xs[i * d], &ys[j * d], d, sigma));
    const double nn = static_cast<double>(n), mm = static_cast<double>(m);
    return kahan_sum(kxx) / (nn * nn) + kahan_sum(kyy) / (mm * mm) -
           2.0 * kahan_sum(kxy) / (nn * mm);
}

// Unbiased (U-statistic) squared MMD: diagonals excluded, needs n,m >= 2.
inline double naive_mmd2_unbiased(const std::vector<double>& xs, std::size_t n,
                                  const std::vector<double>& ys, std::size_t m, std::size_t d,
                                  double sigma) {
    std::vector<double> kxx, kyy, kxy;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) kxx.push_back(rbf(&xs[i * d], &xs[j * d], d, sigma));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j) kyy.push_back(rbf(&ys[i * d], &ys[j * d], d, sigma));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) kxy.push_back(rbf(&xs[i * d], &ys[j * d], d, sigma));
    const double nn = static_cast<double>(n), mm = static_cast<double>(m);
    return kahan_sum(kxx) / (nn * (nn - 1.0)) + kahan_sum(kyy) / (mm * (mm - 1.0)) -
           2.0 * kahan_sum(kxy) / (nn * mm);
}

struct FdReport {
    double max_err = 0.0;   // worst relative error over all checked elements
    std::string where;      // "<param index>[<element>]" of the worst element
    std::size_t checked = 0;
};

// Central-difference check of d(loss)/d(p) for every element of every listed
// parameter. `make_loss` must rebuild the graph from the parameters' current
// values each call. Relative error uses max(|analytic|,|numeric|) as the
// scale, falling back to absolute comparison when both are below `floor`.
inline FdReport fd_check(const std::vector<moecast::Tensor>& params,
                         const std::function<moecast::Tensor()>& make_loss, double h = 1e-5,
                         double floor = 1e-6) {
    using moecast::Tensor;
    for (Tensor p : params) p.zero_grad();
    const Tensor loss = make_loss();
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const Tensor& p : params) analytic.push_back(p.grad());

    FdReport rep;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        auto& v = p.data();
        for (std::size_t e = 0; e < v.size(); ++e) {
            const double keep = v[e];
            v[e] = keep + h;
            const double fp = make_loss().item();
            v[e] = keep - h;
            const double fm = make_loss().item();
            v[e] = keep;
            const double num = (fp - fm) / (2.0 * h);
            const double ana = analytic[pi][e];
            const double scale = std::max(std::fabs(ana), std::fabs(num));
            const double err = scale < floor ? std::fabs(ana - num) : std::fabs(ana - num) / scale;
            ++rep.checked;
            if (err > rep.max_err) {
                rep.max_err = err;
                rep.where = std::to_string(pi) + "[" + std::to_string(e) + "]";
            }
        }
    }
    return rep;
}

inline std::vector<double> random_vec(std::size_t n, unsigned seed, double lo = -1.0,
                                      double hi = 1.0) {
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> out(n);
    for (auto& x : out) x = dist(eng);
    return out;
}

} // namespace oracle
