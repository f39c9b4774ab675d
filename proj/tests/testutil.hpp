#pragma once

// Shared test helpers: dense oracles (quadrature convolution, dense assembly
// of the wave linearization, finite differences) kept independent of the
// library's fast paths.

#include <Eigen/Dense>

#include <random>

#include "nfwave/waves.hpp"

namespace nftest {

using nfwave::Grid;
using nfwave::KernelSet;
using nfwave::ModelParams;
using nfwave::Vec;

inline std::mt19937& rng() {
    static std::mt19937 gen(987654321u);
    return gen;
}

inline Vec random_vec(std::size_t n, double scale = 1.0) {
    std::normal_distribution<double> gauss(0.0, scale);
    Vec v(n);
    for (auto& x : v) x = gauss(rng());
    return v;
}

// O(N^2) quadrature convolution oracle on the sampled kernel stencil with
// the field extended by its boundary values (the library's convention)
inline Vec dense_convolve(const Vec& stencil, const Vec& f, double dx) {
    const int n = (int)f.size();
    Vec out(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = i - (n - 1); j <= i + (n - 1); ++j) {
            const double fj = f[std::clamp(j, 0, n - 1)];
            s += stencil[i - j + n - 1] * fj;
        }
        out[i] = s * dx;
    }
    return out;
}

// dense assembly of A = c d + dF(v) (same discretization as the library)
inline Eigen::MatrixXd dense_wave_operator(const Vec& profile, double c, const ModelParams& p,
                                           const KernelSet& K) {
    const Grid& g = K.grid();
    const int n = g.n_points;
    const int n2 = 2 * n;
    Eigen::MatrixXd Ke(n, n), Ki(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Ke(i, j) = K.k_e()[i - j + n - 1] * g.dx;
            Ki(i, j) = K.k_i()[i - j + n - 1] * g.dx;
        }
    // constant-extension boundary columns
    for (int i = 0; i < n; ++i) {
        Ke(i, 0) += K.left_tail_mass_e()[i];
        Ke(i, n - 1) += K.left_tail_mass_e()[n - 1 - i];
        Ki(i, 0) += K.left_tail_mass_i()[i];
        Ki(i, n - 1) += K.left_tail_mass_i()[n - 1 - i];
    }
    Eigen::VectorXd u(n), v(n);
    for (int i = 0; i < n; ++i) {
        u(i) = profile[i];
        v(i) = profile[n + i];
    }
    Eigen::VectorXd cu = Ke * u, cv = Ki * v;
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n - 1; ++i) {
        D(i, i - 1) = -1.0 / (2.0 * g.dx);
        D(i, i + 1) = 1.0 / (2.0 * g.dx);
    }
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n2, n2);
    for (int i = 0; i < n; ++i) {
        const double se =
            nfwave::sigmoid_deriv(p.a_ee * cu(i) - p.a_ei * cv(i) - p.theta_e, p.beta, 1);
        const double si =
            nfwave::sigmoid_deriv(p.a_ie * cu(i) - p.a_ii * cv(i) - p.theta_i, p.beta, 1);
        for (int j = 0; j < n; ++j) {
            A(i, j) += se * p.a_ee * Ke(i, j);
            A(i, n + j) += -se * p.a_ei * Ki(i, j);
            A(n + i, j) += si * p.a_ie * Ke(i, j) / p.tau;
            A(n + i, n + j) += -si * p.a_ii * Ki(i, j) / p.tau;
        }
        A(i, i) += -1.0;
        A(n + i, n + i) += -1.0 / p.tau;
    }
    A.topLeftCorner(n, n) += c * D;
    A.bottomRightCorner(n, n) += c * D;
    return A;
}

// a smooth localized synthetic profile used by dense-instance tests
inline Vec bump_profile(const Grid& g, double center, double width, double amp_u, double amp_v) {
    const int n = g.n_points;
    Vec out(2 * (std::size_t)n, 0.0);
    for (int i = 0; i < n; ++i) {
        const double z = (g.nodes[i] - center) / width;
        out[i] = amp_u * std::exp(-z * z);
        out[n + i] = amp_v * std::exp(-z * z * 1.3);
    }
    return out;
}

}  // namespace nftest
