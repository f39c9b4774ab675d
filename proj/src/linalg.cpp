#include "nfwave/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>

namespace nfwave {

using Cplx = std::complex<double>;

namespace {

inline double abs2(double v) { return v * v; }
inline double abs2(const Cplx& v) { return std::norm(v); }
inline double conj_val(double v) { return v; }
inline Cplx conj_val(const Cplx& v) { return std::conj(v); }

// conjugates the first argument
inline double vdot(const Vec& a, const Vec& b) { return dot(a, b); }
inline Cplx vdot(const std::vector<Cplx>& a, const std::vector<Cplx>& b) {
    Cplx s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

template <class T>
double vnorm(const std::vector<T>& a) {
    double s = 0.0;
    for (const T& v : a) s += abs2(v);
    return std::sqrt(s);
}

// unitary rotation with real c: [c, s; -conj(s), c] [a; b] = [r; 0]
template <class T>
void make_givens(const T& a, const T& b, double& c, T& s) {
    const double absa = std::sqrt(abs2(a));
    const double den = std::sqrt(abs2(a) + abs2(b));
    if (den == 0.0) {
        c = 1.0;
        s = T(0);
        return;
    }
    if (absa == 0.0) {
        c = 0.0;
        s = T(1);
        return;
    }
    c = absa / den;
    s = (a / T(absa)) * conj_val(b) / T(den);
}

}  // namespace

LinearMapZ complexify(const LinearMap& op) {
    LinearMapZ out;
    out.dim = op.dim;
    out.apply = [op](const std::vector<Cplx>& x, std::vector<Cplx>& y) {
        const int n = op.dim;
        Vec re(n), im(n), wr(n), wi(n);
        for (int i = 0; i < n; ++i) {
            re[i] = x[i].real();
            im[i] = x[i].imag();
        }
        op.apply(re, wr);
        op.apply(im, wi);
        y.resize(n);
        for (int i = 0; i < n; ++i) y[i] = Cplx(wr[i], wi[i]);
    };
    return out;
}

// ---------------------------------------------------------------------------
// GMRES

namespace {

template <class T>
GmresResult gmres_impl(const LinearMapT<T>& op, const std::vector<T>& rhs, std::vector<T>& x,
                       const LinearMapT<T>* right_precond, const GmresOptions& opts) {
    GmresResult res;
    const int n = op.dim;
    const double bnorm = vnorm(rhs);
    if (x.size() != (std::size_t)n) x.assign(n, T(0));
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), T(0));
        res.converged = true;
        return res;
    }

    std::vector<T> r(n), w(n), z(n);
    const int m = std::max(1, opts.restart);
    std::vector<std::vector<T>> V;
    std::vector<std::vector<T>> H(m + 1, std::vector<T>(m, T(0)));
    std::vector<double> cs(m, 1.0);
    std::vector<T> sn(m, T(0)), g(m + 1, T(0));

    int total_it = 0;
    double rel = 1.0;
    bool done = false;
    while (!done && total_it < opts.max_iter) {
        op.apply(x, r);
        for (int i = 0; i < n; ++i) r[i] = rhs[i] - r[i];
        const double beta = vnorm(r);
        rel = beta / bnorm;
        if (rel <= opts.tol) {
            res.converged = true;
            break;
        }
        V.assign(1, r);
        for (auto& v : V[0]) v /= T(beta);
        std::fill(g.begin(), g.end(), T(0));
        g[0] = T(beta);

        int j = 0;
        for (; j < m && total_it < opts.max_iter; ++total_it) {
            if (right_precond) {
                right_precond->apply(V[j], z);
                op.apply(z, w);
            } else {
                op.apply(V[j], w);
            }
            for (int pass = 0; pass < 2; ++pass) {
                for (int i = 0; i <= j; ++i) {
                    const T h = vdot(V[i], w);
                    H[i][j] += h;
                    for (int l = 0; l < n; ++l) w[l] -= h * V[i][l];
                }
            }
            const double hnext = vnorm(w);
            H[j + 1][j] = T(hnext);
            if (hnext > 0.0) {
                V.push_back(w);
                for (auto& v : V.back()) v /= T(hnext);
            }
            for (int i = 0; i < j; ++i) {
                const T t1 = T(cs[i]) * H[i][j] + sn[i] * H[i + 1][j];
                const T t2 = -conj_val(sn[i]) * H[i][j] + T(cs[i]) * H[i + 1][j];
                H[i][j] = t1;
                H[i + 1][j] = t2;
            }
            make_givens(H[j][j], H[j + 1][j], cs[j], sn[j]);
            H[j][j] = T(cs[j]) * H[j][j] + sn[j] * H[j + 1][j];
            H[j + 1][j] = T(0);
            g[j + 1] = -conj_val(sn[j]) * g[j];
            g[j] = T(cs[j]) * g[j];

            ++j;
            rel = std::sqrt(abs2(g[j])) / bnorm;
            res.history.push_back(rel);
            if (rel <= opts.tol || hnext == 0.0) {
                done = (rel <= opts.tol);
                ++total_it;
                break;
            }
        }
        std::vector<T> y(j, T(0));
        for (int i = j - 1; i >= 0; --i) {
            T s = g[i];
            for (int l = i + 1; l < j; ++l) s -= H[i][l] * y[l];
            y[i] = s / H[i][i];
        }
        std::vector<T> update(n, T(0));
        for (int l = 0; l < j; ++l)
            for (int i = 0; i < n; ++i) update[i] += y[l] * V[l][i];
        if (right_precond) {
            right_precond->apply(update, z);
            for (int i = 0; i < n; ++i) x[i] += z[i];
        } else {
            for (int i = 0; i < n; ++i) x[i] += update[i];
        }
        for (auto& col : H)
            std::fill(col.begin(), col.end(), T(0));
        if (done) res.converged = true;
    }
    if (rel <= opts.tol) res.converged = true;
    res.rel_residual = rel;
    res.iterations = total_it;
    return res;
}

}  // namespace

GmresResult gmres(const LinearMap& op, const Vec& rhs, Vec& x, const LinearMap* right_precond,
                  const GmresOptions& opts) {
    return gmres_impl(op, rhs, x, right_precond, opts);
}

GmresResult gmres(const LinearMapZ& op, const std::vector<Cplx>& rhs, std::vector<Cplx>& x,
                  const LinearMapZ* right_precond, const GmresOptions& opts) {
    return gmres_impl(op, rhs, x, right_precond, opts);
}

// ---------------------------------------------------------------------------
// Tridiagonal LU (gttrf-style partial pivoting)

template <class T>
TriDiagLU<T>::TriDiagLU(std::vector<T> sub, std::vector<T> diag, std::vector<T> super)
    : dl_(std::move(sub)), d_(std::move(diag)), du_(std::move(super)) {
    const int n = (int)d_.size();
    if ((int)dl_.size() != n - 1 || (int)du_.size() != n - 1)
        throw std::invalid_argument("TriDiagLU: band sizes inconsistent");
    du2_.assign(std::max(0, n - 2), T(0));
    piv_.assign(std::max(0, n - 1), 0);
    for (int i = 0; i < n - 1; ++i) {
        if (std::sqrt(abs2(d_[i])) >= std::sqrt(abs2(dl_[i]))) {
            if (abs2(d_[i]) == 0.0) throw SolveError("TriDiagLU: zero pivot");
            const T fact = dl_[i] / d_[i];
            dl_[i] = fact;
            d_[i + 1] -= fact * du_[i];
            piv_[i] = 0;
        } else {
            const T fact = d_[i] / dl_[i];
            d_[i] = dl_[i];
            dl_[i] = fact;
            const T tmp = du_[i];
            du_[i] = d_[i + 1];
            d_[i + 1] = tmp - fact * d_[i + 1];
            if (i < n - 2) {
                du2_[i] = du_[i + 1];
                du_[i + 1] = -fact * du_[i + 1];
            }
            piv_[i] = 1;
        }
    }
    if (abs2(d_[n - 1]) == 0.0) throw SolveError("TriDiagLU: zero pivot");
}

template <class T>
void TriDiagLU<T>::solve(std::vector<T>& b) const {
    const int n = (int)d_.size();
    for (int i = 0; i < n - 1; ++i) {
        if (piv_[i]) std::swap(b[i], b[i + 1]);
        b[i + 1] -= dl_[i] * b[i];
    }
    b[n - 1] /= d_[n - 1];
    if (n >= 2) b[n - 2] = (b[n - 2] - du_[n - 2] * b[n - 1]) / d_[n - 2];
    for (int i = n - 3; i >= 0; --i)
        b[i] = (b[i] - du_[i] * b[i + 1] - du2_[i] * b[i + 2]) / d_[i];
}

template class TriDiagLU<double>;
template class TriDiagLU<Cplx>;

// ---------------------------------------------------------------------------
// Transport preconditioner

template <class T>
TransportBlocks<T>::TransportBlocks(T alpha_u, T alpha_v, T g, const Grid& grid)
    : n_(grid.n_points) {
    const int n = n_;
    const T gd = g / T(2.0 * grid.dx);
    auto make = [&](T alpha) {
        std::vector<T> sub(n - 1, -gd), diag(n, alpha), super(n - 1, gd);
        // boundary rows of the derivative vanish (mirrored ghosts)
        super[0] = T(0);
        sub[n - 2] = T(0);
        return TriDiagLU<T>(std::move(sub), std::move(diag), std::move(super));
    };
    lu_u_ = make(alpha_u);
    lu_v_ = make(alpha_v);
}

template <class T>
void TransportBlocks<T>::solve_field(std::vector<T>& x) const {
    std::vector<T> part(x.begin(), x.begin() + n_);
    lu_u_.solve(part);
    std::copy(part.begin(), part.end(), x.begin());
    part.assign(x.begin() + n_, x.begin() + 2 * n_);
    lu_v_.solve(part);
    std::copy(part.begin(), part.end(), x.begin() + n_);
}

template <class T>
LinearMapT<T> TransportBlocks<T>::as_precond() const {
    LinearMapT<T> map;
    map.dim = 2 * n_;
    map.apply = [blocks = *this](const std::vector<T>& x, std::vector<T>& y) {
        y = x;
        blocks.solve_field(y);
    };
    return map;
}

template class TransportBlocks<double>;
template class TransportBlocks<Cplx>;

TransportPreconditioner::TransportPreconditioner(double c_prec, double tau, const Grid& grid)
    : blocks_(-1.0, -1.0 / tau, c_prec, grid), c_prec_(c_prec) {}

TransportPreconditioner build_preconditioner(double c_prec, double tau, const Grid& grid) {
    return TransportPreconditioner(c_prec, tau, grid);
}

// ---------------------------------------------------------------------------
// Newton-Krylov

NewtonResult newton_krylov(const std::function<void(const Vec&, Vec&)>& residual,
                           const JacobianFactory& make_jvp, const LinearMap* precond, Vec& x,
                           const NewtonOptions& opts) {
    NewtonResult out;
    Vec r, rtry, step, xtry;
    residual(x, r);
    double rn = norm_inf(r);
    const double rn0 = rn;
    out.residual_history.push_back(rn);

    for (int it = 0; it < opts.max_newton; ++it) {
        if (rn <= opts.tol_sup) {
            out.converged = true;
            break;
        }
        auto jvp = make_jvp(x);
        LinearMap jac;
        jac.dim = (int)x.size();
        jac.apply = [&](const Vec& h, Vec& y) { jvp(h, y); };
        Vec rhs = r;
        scal(-1.0, rhs);
        step.assign(x.size(), 0.0);
        GmresOptions gopt;
        gopt.tol = opts.forcing;
        gopt.max_iter = opts.gmres_max_iter;
        gopt.restart = opts.gmres_restart;
        GmresResult lin = gmres(jac, rhs, step, precond, gopt);
        out.inner_iterations.push_back((double)lin.iterations);
        if (!lin.converged && lin.rel_residual > 0.5) {
            out.message = "inner GMRES failed (relative residual " +
                          std::to_string(lin.rel_residual) + ")";
            break;
        }
        double alpha = 1.0;
        double rn_new = rn;
        bool accepted = false;
        for (int bt = 0; bt <= opts.max_backtrack; ++bt) {
            xtry = x;
            axpy(alpha, step, xtry);
            residual(xtry, rtry);
            rn_new = norm_inf(rtry);
            if (std::isfinite(rn_new) && rn_new < rn) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            // keep the full step once near the rounding floor, otherwise stop
            if (rn <= 1e3 * opts.tol_sup && std::isfinite(rn_new)) {
                accepted = true;
            } else {
                out.message = "no residual decrease along the Newton step";
                break;
            }
        }
        x = xtry;
        r = rtry;
        rn = rn_new;
        out.residual_history.push_back(rn);
        out.iterations = it + 1;
        if (rn > 1e8 * (rn0 + 1.0)) {
            out.message = "diverging iteration (residual grew beyond 1e8)";
            break;
        }
    }
    if (rn <= opts.tol_sup) out.converged = true;
    out.residual_sup = rn;
    if (!out.converged && out.message.empty()) out.message = "max Newton iterations exceeded";
    return out;
}

// ---------------------------------------------------------------------------
// Arnoldi

namespace {

template <class T>
struct ArnoldiFactorization {
    std::vector<std::vector<T>> V;              // m+1 basis vectors
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> H;  // (m+1) x m
    int m = 0;  // effective size (may shrink on breakdown)
};

template <class T>
ArnoldiFactorization<T> arnoldi_factorize(const LinearMapT<T>& op, const std::vector<T>& v0,
                                          int m) {
    ArnoldiFactorization<T> fac;
    fac.H = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>::Zero(m + 1, m);
    fac.V.push_back(v0);
    const double n0 = vnorm(v0);
    for (auto& v : fac.V[0]) v /= T(n0);
    std::vector<T> w;
    for (int j = 0; j < m; ++j) {
        op.apply(fac.V[j], w);
        for (int pass = 0; pass < 2; ++pass) {
            for (int i = 0; i <= j; ++i) {
                const T h = vdot(fac.V[i], w);
                fac.H(i, j) += h;
                for (std::size_t l = 0; l < w.size(); ++l) w[l] -= h * fac.V[i][l];
            }
        }
        const double hn = vnorm(w);
        fac.H(j + 1, j) = T(hn);
        fac.m = j + 1;
        if (hn < 1e-14) break;  // invariant subspace
        fac.V.push_back(w);
        for (auto& v : fac.V.back()) v /= T(hn);
    }
    return fac;
}

struct RitzPair {
    Cplx value;
    Eigen::VectorXcd y;
    double residual;
};

template <class T>
std::vector<RitzPair> ritz_pairs(const ArnoldiFactorization<T>& fac);

template <>
std::vector<RitzPair> ritz_pairs(const ArnoldiFactorization<double>& fac) {
    const int m = fac.m;
    Eigen::MatrixXd Hm = fac.H.topLeftCorner(m, m);
    Eigen::EigenSolver<Eigen::MatrixXd> es(Hm);
    std::vector<RitzPair> out;
    const double hlast = std::abs(fac.H(m, m - 1));
    for (int i = 0; i < m; ++i) {
        RitzPair p;
        p.value = es.eigenvalues()(i);
        p.y = es.eigenvectors().col(i);
        p.residual = hlast * std::abs(p.y(m - 1));
        out.push_back(std::move(p));
    }
    return out;
}

template <>
std::vector<RitzPair> ritz_pairs(const ArnoldiFactorization<Cplx>& fac) {
    const int m = fac.m;
    Eigen::MatrixXcd Hm = fac.H.topLeftCorner(m, m);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Hm);
    std::vector<RitzPair> out;
    const double hlast = std::abs(fac.H(m, m - 1));
    for (int i = 0; i < m; ++i) {
        RitzPair p;
        p.value = es.eigenvalues()(i);
        p.y = es.eigenvectors().col(i);
        p.residual = hlast * std::abs(p.y(m - 1));
        out.push_back(std::move(p));
    }
    return out;
}

bool better(const RitzPair& a, const RitzPair& b, EigWhich which) {
    if (which == EigWhich::LargestMagnitude) return std::abs(a.value) > std::abs(b.value);
    return a.value.real() > b.value.real();
}

template <class T>
std::vector<EigPair> arnoldi_generic(const LinearMapT<T>& op, const ArnoldiOptions& opts) {
    const int n = op.dim;
    const int k = std::min(opts.k, n);
    int m = opts.subspace > 0 ? opts.subspace : std::max(2 * k + 10, 30);
    m = std::min(m, n);

    std::mt19937 rng(opts.seed);
    std::normal_distribution<double> gauss;
    std::vector<T> v0(n);
    for (auto& v : v0) v = T(gauss(rng));

    std::vector<EigPair> result;
    for (int restart = 0; restart <= opts.max_restarts; ++restart) {
        auto fac = arnoldi_factorize(op, v0, m);
        auto pairs = ritz_pairs(fac);
        std::sort(pairs.begin(), pairs.end(),
                  [&](const RitzPair& a, const RitzPair& b) { return better(a, b, opts.which); });
        const int kk = std::min<int>(k, (int)pairs.size());
        result.clear();
        bool all_ok = true;
        for (int i = 0; i < kk; ++i) {
            EigPair e;
            e.value = pairs[i].value;
            e.residual = pairs[i].residual;
            e.converged = pairs[i].residual <= opts.tol * std::max(1.0, std::abs(pairs[i].value));
            all_ok = all_ok && e.converged;
            if (opts.want_vectors || !e.converged) {
                e.vector.assign(n, Cplx(0.0, 0.0));
                for (int l = 0; l < fac.m; ++l) {
                    const Cplx c = pairs[i].y(l);
                    for (int q = 0; q < n; ++q) e.vector[q] += c * Cplx(fac.V[l][q]);
                }
                double vn = 0.0;
                for (auto& c : e.vector) vn += std::norm(c);
                vn = std::sqrt(vn);
                if (vn > 0) for (auto& c : e.vector) c /= vn;
            }
            result.push_back(std::move(e));
        }
        if (all_ok || fac.m < m) break;  // converged, or operator exhausted
        // explicit restart: combine the wanted directions
        std::fill(v0.begin(), v0.end(), T(0));
        for (int i = 0; i < kk; ++i) {
            for (int l = 0; l < fac.m; ++l) {
                const Cplx c = pairs[i].y(l);
                for (int q = 0; q < n; ++q) {
                    if constexpr (std::is_same_v<T, double>)
                        v0[q] += c.real() * fac.V[l][q] + 0.3 * c.imag() * fac.V[l][q];
                    else
                        v0[q] += T(c) * fac.V[l][q];
                }
            }
        }
        if (vnorm(v0) < 1e-300)
            for (auto& v : v0) v = T(gauss(rng));
    }
    return result;
}

}  // namespace

std::vector<EigPair> arnoldi_eigs(const LinearMap& op, const ArnoldiOptions& opts) {
    return arnoldi_generic(op, opts);
}

std::vector<EigPair> arnoldi_eigs_z(const LinearMapZ& op, const ArnoldiOptions& opts) {
    return arnoldi_generic(op, opts);
}

double eig_residual(const LinearMap& op, const EigPair& pair) {
    const int n = op.dim;
    Vec re(n), im(n), wr(n), wi(n);
    for (int i = 0; i < n; ++i) {
        re[i] = pair.vector[i].real();
        im[i] = pair.vector[i].imag();
    }
    op.apply(re, wr);
    op.apply(im, wi);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
        const Cplx ax(wr[i], wi[i]);
        const Cplx lx = pair.value * pair.vector[i];
        num += std::norm(ax - lx);
        den += std::norm(pair.vector[i]);
    }
    return std::sqrt(num / den);
}

std::vector<EigPair> shift_invert_eigs(const LinearMap& op, std::complex<double> shift,
                                       const LinearMapZ* inner_precond,
                                       const ShiftInvertOptions& opts) {
    LinearMapZ opz = complexify(op);
    LinearMapZ inv;
    inv.dim = op.dim;
    inv.apply = [opz, shift, inner_precond, &opts](const std::vector<Cplx>& b,
                                                   std::vector<Cplx>& y) {
        LinearMapZ shifted;
        shifted.dim = opz.dim;
        shifted.apply = [&](const std::vector<Cplx>& x, std::vector<Cplx>& out) {
            opz.apply(x, out);
            for (std::size_t i = 0; i < x.size(); ++i) out[i] -= shift * x[i];
        };
        y.assign(b.size(), Cplx(0.0));
        GmresResult r = gmres(shifted, b, y, inner_precond, opts.inner);
        if (!r.converged)
            throw SolveError("shift_invert_eigs: inner solve failed (relative residual " +
                             std::to_string(r.rel_residual) + "); shift may lie on the spectrum");
    };
    ArnoldiOptions aopt = opts.arnoldi;
    aopt.k = opts.k;
    aopt.which = EigWhich::LargestMagnitude;
    aopt.want_vectors = true;
    std::vector<EigPair> pairs = arnoldi_eigs_z(inv, aopt);
    for (auto& p : pairs) {
        p.value = shift + 1.0 / p.value;
        p.residual = eig_residual(op, p);
        p.converged = p.residual <= aopt.tol * std::max(1.0, std::abs(p.value));
    }
    std::sort(pairs.begin(), pairs.end(), [&](const EigPair& a, const EigPair& b) {
        return std::abs(a.value - shift) < std::abs(b.value - shift);
    });
    return pairs;
}

}  // namespace nfwave
