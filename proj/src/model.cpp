#include "nfwave/model.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <map>
#include <mutex>
#include <sstream>

namespace nfwave {

namespace {
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

void ModelParams::validate() const {
    std::ostringstream err;
    auto req = [&](bool ok, const char* what) {
        if (!ok) err << what << "; ";
    };
    req(beta >= 0.0, "beta must be >= 0");
    req(a_ee >= 0.0 && a_ei >= 0.0 && a_ie >= 0.0 && a_ii >= 0.0, "coupling strengths must be >= 0");
    req(sigma_e > 0.0 && sigma_i > 0.0, "kernel widths must be > 0");
    req(tau > 0.0, "tau must be > 0");
    if (!err.str().empty()) throw std::invalid_argument("ModelParams: " + err.str());
}

Grid::Grid(int n, double half_length_) {
    if (n < 2 || half_length_ <= 0.0) throw std::invalid_argument("Grid: need n >= 2, L > 0");
    n_points = n;
    half_length = half_length_;
    dx = 2.0 * half_length / (n - 1);
    nodes.resize(n);
    for (int i = 0; i < n; ++i) nodes[i] = -half_length + i * dx;
}

double sigmoid(double input, double beta) {
    const double a = beta * input;
    if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

double sigmoid_deriv(double input, double beta, int order) {
    const double s = sigmoid(input, beta);
    if (order == 1) return beta * s * (1.0 - s);
    if (order == 2) return beta * beta * s * (1.0 - s) * (1.0 - 2.0 * s);
    throw std::invalid_argument("sigmoid_deriv: order must be 1 or 2");
}

// ---------------------------------------------------------------------------
// KernelSet

struct KernelSet::Fft {
    int padded = 0;
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;

    explicit Fft(int m) : padded(m) {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        double* re = fftw_alloc_real(m);
        fftw_complex* cx = fftw_alloc_complex(m / 2 + 1);
        fwd = fftw_plan_dft_r2c_1d(m, re, cx, FFTW_ESTIMATE);
        bwd = fftw_plan_dft_c2r_1d(m, cx, re, FFTW_ESTIMATE);
        fftw_free(re);
        fftw_free(cx);
    }
    ~Fft() {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(bwd);
    }
};

namespace {

struct FftWorkspace {
    int padded = 0;
    double* re = nullptr;
    fftw_complex* cx = nullptr;

    explicit FftWorkspace(int m) : padded(m) {
        re = fftw_alloc_real(m);
        cx = fftw_alloc_complex(m / 2 + 1);
    }
    ~FftWorkspace() {
        fftw_free(re);
        fftw_free(cx);
    }
    FftWorkspace(const FftWorkspace&) = delete;
    FftWorkspace& operator=(const FftWorkspace&) = delete;
};

FftWorkspace& workspace_for(int padded) {
    thread_local std::map<int, std::unique_ptr<FftWorkspace>> cache;
    auto& slot = cache[padded];
    if (!slot) slot = std::make_unique<FftWorkspace>(padded);
    return *slot;
}

Vec sampled_gaussian(double sigma, const Grid& g) {
    const int n = g.n_points;
    Vec k(2 * n - 1);
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * M_PI));
    for (int m = -(n - 1); m <= n - 1; ++m) {
        const double x = m * g.dx;
        k[m + n - 1] = norm * std::exp(-x * x / (2.0 * sigma * sigma));
    }
    double mass = 0.0;
    for (double kv : k) mass += kv;
    mass *= g.dx;
    for (double& kv : k) kv /= mass;
    return k;
}

}  // namespace

KernelSet::KernelSet(const ModelParams& p, const Grid& g) : grid_(g) {
    p.validate();
    for (double sigma : {p.sigma_e, p.sigma_i}) {
        // mass of the continuous kernel lost to truncation at +-L
        const double outside = std::erfc(g.half_length / (sigma * std::sqrt(2.0)));
        if (outside > 1e-12)
            throw std::invalid_argument("KernelSet: kernel width too large for the domain "
                                        "(mass outside [-L,L] exceeds 1e-12)");
    }
    const int n = g.n_points;
    k_e_ = sampled_gaussian(p.sigma_e, g);
    k_i_ = sampled_gaussian(p.sigma_i, g);

    int m = 1;
    while (m < 3 * n) m *= 2;
    padded_ = m;
    fft_ = std::make_shared<Fft>(m);

    auto make_spectrum = [&](const Vec& k) {
        FftWorkspace& ws = workspace_for(m);
        std::memset(ws.re, 0, sizeof(double) * m);
        for (int off = 0; off <= n - 1; ++off) ws.re[off] = k[off + n - 1];
        for (int off = 1; off <= n - 1; ++off) ws.re[m - off] = k[n - 1 - off];
        fftw_execute_dft_r2c(fft_->fwd, ws.re, ws.cx);
        Vec spec(2 * (m / 2 + 1));
        const double scale = g.dx / m;  // dx from the quadrature, 1/m from fftw's unnormalized pair
        for (int i = 0; i <= m / 2; ++i) {
            spec[2 * i] = ws.cx[i][0] * scale;
            spec[2 * i + 1] = ws.cx[i][1] * scale;
        }
        return spec;
    };
    spec_e_ = make_spectrum(k_e_);
    spec_i_ = make_spectrum(k_i_);

    // tail masses lm[i] = dx * sum_{m > i} k_m for the constant extension
    // beyond the domain ends; they make constants exact fixed points
    auto make_tail = [&](const Vec& k) {
        Vec lm(n, 0.0);
        double acc = 0.0;
        for (int i = n - 1; i >= 0; --i) {
            lm[i] = acc * g.dx;
            if (i > 0) acc += k[i + n - 1];
        }
        return lm;
    };
    left_mass_e_ = make_tail(k_e_);
    left_mass_i_ = make_tail(k_i_);
}

KernelSet::~KernelSet() = default;

void KernelSet::convolve(const Vec& spectrum, const Vec& component, Vec& out) const {
    const int n = grid_.n_points;
    if ((int)component.size() != n) throw std::invalid_argument("convolve: component size mismatch");
    const int m = padded_;
    FftWorkspace& ws = workspace_for(m);
    std::memcpy(ws.re, component.data(), sizeof(double) * n);
    std::memset(ws.re + n, 0, sizeof(double) * (m - n));
    fftw_execute_dft_r2c(fft_->fwd, ws.re, ws.cx);
    for (int i = 0; i <= m / 2; ++i) {
        const double ar = ws.cx[i][0], ai = ws.cx[i][1];
        const double br = spectrum[2 * i], bi = spectrum[2 * i + 1];
        ws.cx[i][0] = ar * br - ai * bi;
        ws.cx[i][1] = ar * bi + ai * br;
    }
    fftw_execute_dft_c2r(fft_->bwd, ws.cx, ws.re);
    out.resize(n);
    std::memcpy(out.data(), ws.re, sizeof(double) * n);
}

void KernelSet::convolve_e(const Vec& component, Vec& out) const {
    convolve(spec_e_, component, out);
    const int n = grid_.n_points;
    const double front = component[0], back = component[n - 1];
    for (int i = 0; i < n; ++i)
        out[i] += front * left_mass_e_[i] + back * left_mass_e_[n - 1 - i];
}

void KernelSet::convolve_i(const Vec& component, Vec& out) const {
    convolve(spec_i_, component, out);
    const int n = grid_.n_points;
    const double front = component[0], back = component[n - 1];
    for (int i = 0; i < n; ++i)
        out[i] += front * left_mass_i_[i] + back * left_mass_i_[n - 1 - i];
}

// ---------------------------------------------------------------------------
// Differentiation

void DiffOp::apply_component(const Vec& f, Vec& out) const {
    out.resize(n);
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for (int i = 1; i < n - 1; ++i) out[i] = (f[i + 1] - f[i - 1]) * inv2dx;
}

void DiffOp::apply_field(const Vec& f, Vec& out) const {
    out.resize(2 * (std::size_t)n);
    out[0] = 0.0;
    out[n - 1] = 0.0;
    out[n] = 0.0;
    out[2 * n - 1] = 0.0;
    for (int i = 1; i < n - 1; ++i) {
        out[i] = (f[i + 1] - f[i - 1]) * inv2dx;
        out[n + i] = (f[n + i + 1] - f[n + i - 1]) * inv2dx;
    }
}

Vec DiffOp::apply(const Vec& f) const {
    Vec out;
    apply_field(f, out);
    return out;
}

// ---------------------------------------------------------------------------
// Right-hand side and its differential

void rhs_into(const Vec& state, const ModelParams& p, const KernelSet& K, Vec& out) {
    const int n = K.grid().n_points;
    thread_local Vec cu, cv, su, sv;
    su.assign(state.begin(), state.begin() + n);
    sv.assign(state.begin() + n, state.end());
    K.convolve_e(su, cu);
    K.convolve_i(sv, cv);
    out.resize(2 * (std::size_t)n);
    const double inv_tau = 1.0 / p.tau;
    for (int i = 0; i < n; ++i) {
        const double arg_e = p.a_ee * cu[i] - p.a_ei * cv[i] - p.theta_e;
        const double arg_i = p.a_ie * cu[i] - p.a_ii * cv[i] - p.theta_i;
        out[i] = -state[i] + sigmoid(arg_e, p.beta);
        out[n + i] = (-state[n + i] + sigmoid(arg_i, p.beta)) * inv_tau;
    }
}

Field rhs(const Field& state, const ModelParams& p, const KernelSet& K) {
    Field out(state.n);
    rhs_into(state.data, p, K, out.data);
    return out;
}

Linearization::Linearization(const Vec& state, const ModelParams& p, const KernelSet& K)
    : p_(p), K_(&K) {
    const int n = K.grid().n_points;
    Vec cu, cv;
    Vec su(state.begin(), state.begin() + n);
    Vec sv(state.begin() + n, state.end());
    K.convolve_e(su, cu);
    K.convolve_i(sv, cv);
    se_.resize(n);
    si_.resize(n);
    for (int i = 0; i < n; ++i) {
        se_[i] = sigmoid_deriv(p.a_ee * cu[i] - p.a_ei * cv[i] - p.theta_e, p.beta, 1);
        si_[i] = sigmoid_deriv(p.a_ie * cu[i] - p.a_ii * cv[i] - p.theta_i, p.beta, 1);
    }
}

void Linearization::apply(const Vec& h, Vec& out) const {
    const int n = K_->grid().n_points;
    thread_local Vec cu, cv, hu, hv;
    hu.assign(h.begin(), h.begin() + n);
    hv.assign(h.begin() + n, h.end());
    K_->convolve_e(hu, cu);
    K_->convolve_i(hv, cv);
    out.resize(2 * (std::size_t)n);
    const double inv_tau = 1.0 / p_.tau;
    for (int i = 0; i < n; ++i) {
        out[i] = -h[i] + se_[i] * (p_.a_ee * cu[i] - p_.a_ei * cv[i]);
        out[n + i] = (-h[n + i] + si_[i] * (p_.a_ie * cu[i] - p_.a_ii * cv[i])) * inv_tau;
    }
}

void jacobian_apply_into(const Vec& state, const Vec& direction, const ModelParams& p,
                         const KernelSet& K, Vec& out) {
    Linearization lin(state, p, K);
    lin.apply(direction, out);
}

Field jacobian_apply(const Field& state, const Field& direction, const ModelParams& p,
                     const KernelSet& K) {
    Field out(state.n);
    jacobian_apply_into(state.data, direction.data, p, K, out.data);
    return out;
}

// ---------------------------------------------------------------------------
// Space-clamped equilibria

std::vector<ClampedEquilibrium> clamped_equilibria(const ModelParams& p, double box_lo,
                                                   double box_hi, int n_seeds) {
    p.validate();
    auto residual = [&](double u, double v, double& f1, double& f2) {
        f1 = -u + sigmoid(p.a_ee * u - p.a_ei * v - p.theta_e, p.beta);
        f2 = -v + sigmoid(p.a_ie * u - p.a_ii * v - p.theta_i, p.beta);
    };
    std::vector<ClampedEquilibrium> found;
    for (int a = 0; a < n_seeds; ++a) {
        for (int b = 0; b < n_seeds; ++b) {
            double u = box_lo + (box_hi - box_lo) * a / (n_seeds - 1.0);
            double v = box_lo + (box_hi - box_lo) * b / (n_seeds - 1.0);
            bool ok = false;
            for (int it = 0; it < 60; ++it) {
                double f1, f2;
                residual(u, v, f1, f2);
                if (std::max(std::abs(f1), std::abs(f2)) < 1e-13) {
                    ok = true;
                    break;
                }
                const double se = sigmoid_deriv(p.a_ee * u - p.a_ei * v - p.theta_e, p.beta, 1);
                const double si = sigmoid_deriv(p.a_ie * u - p.a_ii * v - p.theta_i, p.beta, 1);
                const double j11 = -1.0 + se * p.a_ee, j12 = -se * p.a_ei;
                const double j21 = si * p.a_ie, j22 = -1.0 - si * p.a_ii;
                const double det = j11 * j22 - j12 * j21;
                if (std::abs(det) < 1e-300) break;
                const double du = (-f1 * j22 + f2 * j12) / det;
                const double dv = (-f2 * j11 + f1 * j21) / det;
                u += du;
                v += dv;
                if (!std::isfinite(u) || !std::isfinite(v) || std::abs(u) + std::abs(v) > 1e3) break;
            }
            if (!ok) continue;
            bool dup = false;
            for (const auto& e : found)
                if (std::abs(e.u - u) < 1e-8 && std::abs(e.v - v) < 1e-8) dup = true;
            if (dup) continue;
            ClampedEquilibrium e;
            e.u = u;
            e.v = v;
            const double se = sigmoid_deriv(p.a_ee * u - p.a_ei * v - p.theta_e, p.beta, 1);
            const double si = sigmoid_deriv(p.a_ie * u - p.a_ii * v - p.theta_i, p.beta, 1);
            // jacobian of the clamped dynamics, including the 1/tau row scaling
            const double j11 = -1.0 + se * p.a_ee, j12 = -se * p.a_ei;
            const double j21 = si * p.a_ie / p.tau, j22 = (-1.0 - si * p.a_ii) / p.tau;
            const double tr = j11 + j22, det = j11 * j22 - j12 * j21;
            const double disc = tr * tr / 4.0 - det;
            if (disc >= 0.0) {
                e.jac_eigs = {std::complex<double>(tr / 2.0 + std::sqrt(disc), 0.0),
                              std::complex<double>(tr / 2.0 - std::sqrt(disc), 0.0)};
            } else {
                e.jac_eigs = {std::complex<double>(tr / 2.0, std::sqrt(-disc)),
                              std::complex<double>(tr / 2.0, -std::sqrt(-disc))};
            }
            found.push_back(e);
        }
    }
    std::sort(found.begin(), found.end(),
              [](const ClampedEquilibrium& a, const ClampedEquilibrium& b) { return a.u < b.u; });
    return found;
}

}  // namespace nfwave
