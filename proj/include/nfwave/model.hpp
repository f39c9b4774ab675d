#pragma once

// Two-population neural field model on a uniform 1d grid:
//
//   du/dt = -u + S(a_ee Ke*u - a_ei Ki*v - theta_e)
//   dv/dt = (-v + S(a_ie Ke*u - a_ii Ki*v - theta_i)) / tau
//
// with gaussian connectivity kernels normalized to unit mass and the
// logistic firing rate S(I) = 1/(1+exp(-beta I)).  Convolutions are
// evaluated by zero-padded real FFTs plus an O(N) boundary correction that
// extends the field by its edge values, so spatially constant states are
// exact fixed points of the coupling on the truncated domain.

#include <array>
#include <complex>
#include <memory>

#include "nfwave/core.hpp"

namespace nfwave {

struct ModelParams {
    double beta = 50.0;
    double a_ee = 1.0;
    double a_ei = 1.0;
    double a_ie = 1.3;
    double a_ii = 0.25;
    double theta_e = 0.12;
    double theta_i = 0.3;
    double sigma_e = 10.0;
    double sigma_i = 10.0;
    double tau = 0.82;

    void validate() const;  // throws std::invalid_argument listing violations
};

struct Grid {
    int n_points = 0;
    double half_length = 0.0;  // domain is [-L, L]
    double dx = 0.0;
    Vec nodes;

    Grid() = default;
    Grid(int n, double half_length);

    // discrete L2 inner product (riemann sum) on per-component or stacked data
    double inner(const Vec& a, const Vec& b) const { return dx * dot(a, b); }
};

// Two-component state sampled on a Grid, stored flat: u samples then v samples.
struct Field {
    Vec data;
    int n = 0;

    Field() = default;
    explicit Field(int n_points) : data(2 * (std::size_t)n_points, 0.0), n(n_points) {}
    Field(int n_points, Vec flat) : data(std::move(flat)), n(n_points) {}

    double& u(int i) { return data[i]; }
    double& v(int i) { return data[n + i]; }
    double u(int i) const { return data[i]; }
    double v(int i) const { return data[n + i]; }
    std::size_t size() const { return data.size(); }
};

double sigmoid(double input, double beta);
// order 1: beta*S*(1-S); order 2: beta^2*S*(1-S)*(1-2S)
double sigmoid_deriv(double input, double beta, int order);

// Sampled gaussian kernels on the symmetric stencil {-(n-1)dx, ..., (n-1)dx},
// renormalized to unit discrete mass, plus cached FFT data for fast applies.
class KernelSet {
public:
    KernelSet(const ModelParams& p, const Grid& g);
    ~KernelSet();
    KernelSet(const KernelSet&) = delete;
    KernelSet& operator=(const KernelSet&) = delete;

    const Grid& grid() const { return grid_; }
    const Vec& k_e() const { return k_e_; }  // stencil samples, length 2n-1
    const Vec& k_i() const { return k_i_; }
    // dx * sum_{m > i} k_m, the kernel mass beyond node distance i
    const Vec& left_tail_mass_e() const { return left_mass_e_; }
    const Vec& left_tail_mass_i() const { return left_mass_i_; }

    // out[i] = dx * sum_j k(x_i - x_j) f[j] with f extended by its boundary
    // values outside the domain, so constants are exact fixed points
    void convolve_e(const Vec& component, Vec& out) const;
    void convolve_i(const Vec& component, Vec& out) const;

private:
    void convolve(const Vec& spectrum, const Vec& component, Vec& out) const;

    Grid grid_;
    Vec k_e_, k_i_;
    Vec spec_e_, spec_i_;  // rfft of the wrapped stencil, scaled by dx
    Vec left_mass_e_, left_mass_i_;
    int padded_ = 0;
    struct Fft;
    std::shared_ptr<Fft> fft_;
};

// Second-order centered differences; mirrored ghost points make the
// derivative vanish at both boundary nodes (Neumann).
struct DiffOp {
    double inv2dx = 0.0;
    int n = 0;

    DiffOp() = default;
    explicit DiffOp(const Grid& g) : inv2dx(1.0 / (2.0 * g.dx)), n(g.n_points) {}

    void apply_component(const Vec& f, Vec& out) const;
    void apply_field(const Vec& f2n, Vec& out2n) const;
    Vec apply(const Vec& f2n) const;
};

void rhs_into(const Vec& state, const ModelParams& p, const KernelSet& K, Vec& out);
Field rhs(const Field& state, const ModelParams& p, const KernelSet& K);

// dF(state): gain profiles are evaluated once so repeated applies cost two
// convolutions each (the hot path of every Krylov loop).
class Linearization {
public:
    Linearization(const Vec& state, const ModelParams& p, const KernelSet& K);
    void apply(const Vec& h, Vec& out) const;
    const Vec& gain_e() const { return se_; }
    const Vec& gain_i() const { return si_; }

private:
    const ModelParams p_;
    const KernelSet* K_;
    Vec se_, si_;  // S'(arg_e), S'(arg_i)
};

void jacobian_apply_into(const Vec& state, const Vec& direction, const ModelParams& p,
                         const KernelSet& K, Vec& out);
Field jacobian_apply(const Field& state, const Field& direction, const ModelParams& p,
                     const KernelSet& K);

struct ClampedEquilibrium {
    double u = 0.0;
    double v = 0.0;
    std::array<std::complex<double>, 2> jac_eigs;  // of the clamped 2x2 system
};

// All fixed points of the space-clamped system found by Newton from an
// n_seeds x n_seeds grid over the search box, deduplicated and sorted by u.
std::vector<ClampedEquilibrium> clamped_equilibria(const ModelParams& p,
                                                   double box_lo = 0.0, double box_hi = 1.0,
                                                   int n_seeds = 50);

}  // namespace nfwave
