#include "nfwave/dynamics.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <memory>

namespace nfwave {

namespace {

// SDIRK4(3), Hairer & Wanner: 5 stages, stiffly accurate, L-stable,
// gamma = 1/4, embedded order-3 weights in the last row of bhat.
constexpr int kStages = 5;
constexpr double kGamma = 0.25;
constexpr double kA[kStages][kStages] = {
    {0.25, 0, 0, 0, 0},
    {0.5, 0.25, 0, 0, 0},
    {17.0 / 50.0, -1.0 / 25.0, 0.25, 0, 0},
    {371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0},
    {25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25},
};
constexpr double kC[kStages] = {0.25, 0.75, 11.0 / 20.0, 0.5, 1.0};
constexpr double kBhat[kStages] = {59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0};

struct StageWorkspace {
    Vec known;      // h * sum_{j<i} a_ij f_j   (differential rows)
    Vec alg_known;  // (1/gamma) * sum_{j<i} a_ij f_j   (algebraic rows)
    Vec res, f, delta, ytry;
};

}  // namespace

void Trajectory::at(double t, Vec& out) const {
    if (times.empty()) throw SolveError("Trajectory::at on empty trajectory");
    const double lo = times.front(), hi = times.back();
    const double span = std::max(1e-300, hi - lo);
    if (t < lo - 1e-9 * span || t > hi + 1e-9 * span)
        throw SolveError("Trajectory::at: query outside stored range");
    t = std::clamp(t, lo, hi);
    auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t k = (it == times.begin()) ? 0 : (it - times.begin() - 1);
    if (k >= times.size() - 1) k = times.size() - 2;
    if (times.size() == 1) {
        out = states[0];
        return;
    }
    const double h = times[k + 1] - times[k];
    const double s = (t - times[k]) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    const Vec& y0 = states[k];
    const Vec& y1 = states[k + 1];
    const Vec& d0 = derivs[k];
    const Vec& d1 = derivs[k + 1];
    out.resize(y0.size());
    for (std::size_t i = 0; i < y0.size(); ++i)
        out[i] = h00 * y0[i] + h * h10 * d0[i] + h01 * y1[i] + h * h11 * d1[i];
}

Vec Trajectory::at(double t) const {
    Vec out;
    at(t, out);
    return out;
}

Trajectory integrate(const ImplicitProblem& problem, const Vec& y0, double t0, double t1,
                     const StepperOptions& opts) {
    const int n = problem.dim;
    if ((int)y0.size() != n) throw std::invalid_argument("integrate: state size mismatch");
    const bool has_alg = !problem.algebraic.empty();
    int n_diff = n;
    if (has_alg)
        for (int i = 0; i < n; ++i)
            if (problem.algebraic[i]) --n_diff;

    Trajectory traj;
    Vec y = y0;
    double t = t0;

    auto eval_rhs = [&](double tt, const Vec& yy, Vec& out) {
        problem.rhs(tt, yy, out);
        ++traj.stats.n_rhs;
    };

    Vec f0(n);
    eval_rhs(t, y, f0);

    auto push_knot = [&](double tt, const Vec& yy, const Vec& ff, const Vec* yprev, double h) {
        traj.times.push_back(tt);
        traj.states.push_back(yy);
        Vec d = ff;
        if (has_alg && yprev) {
            for (int i = 0; i < n; ++i)
                if (problem.algebraic[i]) d[i] = (yy[i] - (*yprev)[i]) / h;
        } else if (has_alg) {
            for (int i = 0; i < n; ++i)
                if (problem.algebraic[i]) d[i] = 0.0;
        }
        traj.derivs.push_back(std::move(d));
    };
    push_knot(t, y, f0, nullptr, 1.0);

    // cached stage preconditioner
    LinearMap precond;
    bool precond_valid = false;
    double precond_gh = 0.0;
    bool want_rebuild = false;
    auto ensure_precond = [&](double gh) {
        if (!problem.make_precond) return (const LinearMap*)nullptr;
        if (!precond_valid || want_rebuild || std::abs(gh / precond_gh - 1.0) > 0.25) {
            precond = problem.make_precond(gh, t, y);
            precond_gh = gh;
            precond_valid = true;
            want_rebuild = false;
            ++traj.stats.n_precond_builds;
        }
        return (const LinearMap*)&precond;
    };


    double h = std::min({opts.h0, opts.hmax, t1 - t0});
    StageWorkspace ws;
    std::vector<Vec> F(kStages, Vec(n)), Y(kStages, Vec(n));

    long steps = 0;
    const double t_eps = 1e-12 * std::max({1.0, std::abs(t0), std::abs(t1)});
    while (t < t1 - t_eps) {
        if (++steps > opts.max_steps) throw SolveError("integrate: max step count exceeded");
        h = std::min(h, t1 - t);
        if (h < opts.hmin)
            throw SolveError("integrate: step size underflow at t = " + std::to_string(t));
        const double gh = kGamma * h;
        const LinearMap* pc = ensure_precond(gh);

        bool stage_ok = true;
        for (int i = 0; i < kStages && stage_ok; ++i) {
            // accumulated explicit part
            ws.known.assign(n, 0.0);
            for (int j = 0; j < i; ++j)
                if (kA[i][j] != 0.0) axpy(h * kA[i][j], F[j], ws.known);
            if (has_alg) {
                ws.alg_known.assign(n, 0.0);
                for (int j = 0; j < i; ++j)
                    if (kA[i][j] != 0.0) axpy(kA[i][j] / kGamma, F[j], ws.alg_known);
            }
            const double ti = t + kC[i] * h;
            // predictor
            Vec& Yi = Y[i];
            Yi = y;
            axpy(1.0, ws.known, Yi);
            axpy(gh, (i == 0) ? f0 : F[i - 1], Yi);
            if (has_alg)
                for (int q = 0; q < n; ++q)
                    if (problem.algebraic[q]) Yi[q] = (i == 0) ? y[q] : Y[i - 1][q];

            // stage system in the M/(h gamma) - J scaling, which keeps the
            // algebraic directions O(1)-conditioned as h -> 0
            auto stage_residual = [&](const Vec& yy, Vec& res) {
                eval_rhs(ti, yy, ws.f);
                res.resize(n);
                for (int q = 0; q < n; ++q) {
                    if (has_alg && problem.algebraic[q])
                        res[q] = -(ws.f[q] + ws.alg_known[q]);
                    else
                        res[q] = (yy[q] - y[q] - ws.known[q]) / gh - ws.f[q];
                }
            };

            stage_residual(Yi, ws.res);
            // Newton with increment-based stopping in error-weight units
            auto inc_norm = [&](const Vec& d, const Vec& at) {
                double m = 0.0;
                for (int q = 0; q < n; ++q)
                    m = std::max(m, std::abs(d[q]) / (opts.atol + opts.rtol * std::abs(at[q])));
                return m;
            };
            bool solved = norm_inf(ws.res) == 0.0;
            double inc_prev = 1e300;
            int bad = 0;
            for (int it = 0; it < opts.max_stage_newton && !solved; ++it) {
                ++traj.stats.n_newton;
                auto jvp = problem.make_jvp(ti, Yi);
                LinearMap stage_jac;
                stage_jac.dim = n;
                // the full matrix M/(h gamma) - J
                stage_jac.apply = [&](const Vec& hh, Vec& out) {
                    jvp(hh, out);
                    for (int q = 0; q < n; ++q) {
                        if (has_alg && problem.algebraic[q])
                            out[q] = -out[q];
                        else
                            out[q] = hh[q] / gh - out[q];
                    }
                };
                Vec rhs = ws.res;
                scal(-1.0, rhs);
                ws.delta.assign(n, 0.0);
                GmresOptions gopt;
                gopt.tol = opts.gmres_forcing;
                gopt.max_iter = opts.gmres_max_iter;
                gopt.restart = std::min(opts.gmres_max_iter, 200);
                GmresResult lin = gmres(stage_jac, rhs, ws.delta, pc, gopt);
                if (lin.iterations > opts.precond_refresh_iters) want_rebuild = true;
                if (!lin.converged && lin.rel_residual > 0.5) break;
                axpy(1.0, ws.delta, Yi);
                stage_residual(Yi, ws.res);
                const double inc = inc_norm(ws.delta, Yi);
                if (!std::isfinite(inc)) break;
                if (inc <= opts.stage_tol_factor) {
                    solved = true;
                    break;
                }
                if (inc > 0.95 * inc_prev && ++bad >= 2) break;
                inc_prev = inc;
            }
            if (!solved) {
                stage_ok = false;
                break;
            }
            F[i] = ws.f;  // rhs at the converged stage, evaluated by stage_residual
        }

        if (!stage_ok) {
            if (std::getenv("NFWAVE_DEBUG_STEPPER"))
                std::fprintf(stderr, "stage reject t=%.6g h=%.3g\n", t, h);
            ++traj.stats.n_rejected;
            want_rebuild = true;
            h *= 0.25;
            continue;
        }

        // embedded error estimate on the differential components
        double errsum = 0.0;
        const Vec& ynew = Y[kStages - 1];
        for (int q = 0; q < n; ++q) {
            if (has_alg && problem.algebraic[q]) continue;
            double e = 0.0;
            for (int i = 0; i < kStages; ++i) e += (kA[kStages - 1][i] - kBhat[i]) * F[i][q];
            e *= h;
            const double sc = opts.atol + opts.rtol * std::max(std::abs(y[q]), std::abs(ynew[q]));
            errsum += (e / sc) * (e / sc);
        }
        const double errnorm = std::sqrt(errsum / std::max(1, n_diff));
        if (std::getenv("NFWAVE_DEBUG_STEPPER") && n == 1 && errnorm > 1.0)
            std::fprintf(stderr,
                         "  detail t=%.8g h=%.3g F=[%.6g %.6g %.6g %.6g %.6g] y=%.8g ynew=%.8g\n",
                         t, h, F[0][0], F[1][0], F[2][0], F[3][0], F[4][0], y[0], ynew[0]);

        if (errnorm <= 1.0) {
            const double hdone = h;
            t += h;
            Vec yprev = y;
            y = ynew;
            eval_rhs(t, y, f0);
            if (opts.store_knots) push_knot(t, y, f0, &yprev, hdone);
            ++traj.stats.n_accepted;
            const double fac = std::clamp(0.9 * std::pow(std::max(errnorm, 1e-10), -0.25), 0.3, 5.0);
            h = std::min(h * fac, opts.hmax);
        } else {
            if (std::getenv("NFWAVE_DEBUG_STEPPER"))
                std::fprintf(stderr, "err reject t=%.6g h=%.3g err=%.3g\n", t, h, errnorm);
            ++traj.stats.n_rejected;
            const double fac = std::clamp(0.9 * std::pow(errnorm, -0.25), 0.1, 0.5);
            h *= fac;
        }
    }
    if (!opts.store_knots) {
        traj.times.push_back(t);
        traj.states.push_back(y);
        traj.derivs.push_back(f0);
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Model-specific integrators

ReferenceProfile make_reference(const Vec& profile, const Grid& grid) {
    ReferenceProfile ref;
    ref.u_hat = profile;
    DiffOp diff(grid);
    diff.apply_field(profile, ref.du_hat);
    return ref;
}

Trajectory simulate_cauchy(const Field& initial, double t0, double t1, const ModelParams& p,
                           const KernelSet& K, const StepperOptions& opts) {
    const Grid& grid = K.grid();
    ImplicitProblem prob;
    prob.dim = 2 * grid.n_points;
    prob.rhs = [&p, &K](double, const Vec& y, Vec& out) { rhs_into(y, p, K, out); };
    prob.make_jvp = [&p, &K](double, const Vec& y) {
        auto lin = std::make_shared<Linearization>(y, p, K);
        return [lin](const Vec& h, Vec& out) { lin->apply(h, out); };
    };
    prob.make_precond = [&p, &grid](double gh, double, const Vec&) {
        return TransportBlocks<double>(1.0 / gh + 1.0, 1.0 / gh + 1.0 / p.tau, 0.0, grid).as_precond();
    };
    return integrate(prob, initial.data, t0, t1, opts);
}

Trajectory simulate_wave_frame(const Field& initial, double c_bar, double t0, double t1,
                               const ModelParams& p, const KernelSet& K,
                               const StepperOptions& opts) {
    const Grid& grid = K.grid();
    DiffOp diff(grid);
    ImplicitProblem prob;
    prob.dim = 2 * grid.n_points;
    prob.rhs = [&p, &K, diff, c_bar](double, const Vec& y, Vec& out) {
        rhs_into(y, p, K, out);
        thread_local Vec dy;
        diff.apply_field(y, dy);
        axpy(c_bar, dy, out);
    };
    prob.make_jvp = [&p, &K, diff, c_bar](double, const Vec& y) {
        auto lin = std::make_shared<Linearization>(y, p, K);
        return [lin, diff, c_bar](const Vec& h, Vec& out) {
            lin->apply(h, out);
            thread_local Vec dh;
            diff.apply_field(h, dh);
            axpy(c_bar, dh, out);
        };
    };
    prob.make_precond = [&p, &grid, c_bar](double gh, double, const Vec&) {
        return TransportBlocks<double>(1.0 / gh + 1.0, 1.0 / gh + 1.0 / p.tau, -c_bar, grid).as_precond();
    };
    return integrate(prob, initial.data, t0, t1, opts);
}

Trajectory simulate_freezing_dae(const FrozenState& initial, const ReferenceProfile& ref,
                                 double t0, double t1, const ModelParams& p, const KernelSet& K,
                                 const StepperOptions& opts) {
    const Grid& grid = K.grid();
    const int n2 = 2 * grid.n_points;
    DiffOp diff(grid);

    Vec v = initial.profile;
    // project onto the phase constraint, then pick the consistent lambda
    {
        const double dd = dot(ref.du_hat, ref.du_hat);
        if (dd <= 0.0) throw SolveError("simulate_freezing_dae: reference derivative vanishes");
        double c0 = 0.0;
        for (int i = 0; i < n2; ++i) c0 += (v[i] - ref.u_hat[i]) * ref.du_hat[i];
        axpy(-c0 / dd, ref.du_hat, v);
    }
    Vec f0(n2), dv0;
    rhs_into(v, p, K, f0);
    diff.apply_field(v, dv0);
    const double den0 = dot(dv0, ref.du_hat);
    if (std::abs(den0) < 1e-12 * dot(ref.du_hat, ref.du_hat))
        throw SolveError("simulate_freezing_dae: phase condition not transversal");
    const double lambda0 = -dot(f0, ref.du_hat) / den0;

    Vec y0(n2 + 2);
    std::copy(v.begin(), v.end(), y0.begin());
    y0[n2] = initial.gamma;
    y0[n2 + 1] = lambda0;

    const double uhat_term = dot(ref.u_hat, ref.du_hat);
    const double dx = grid.dx;

    ImplicitProblem prob;
    prob.dim = n2 + 2;
    prob.algebraic.assign(n2 + 2, 0);
    prob.algebraic[n2 + 1] = 1;
    const double du_hat_norm2 = dot(ref.du_hat, ref.du_hat);
    prob.rhs = [&, uhat_term, dx, du_hat_norm2](double t, const Vec& y, Vec& out) {
        const double lambda = y[n2 + 1];
        thread_local Vec vpart, dv, f;
        vpart.assign(y.begin(), y.begin() + n2);
        rhs_into(vpart, p, K, f);
        diff.apply_field(vpart, dv);
        if (std::abs(dot(dv, ref.du_hat)) < 1e-8 * du_hat_norm2)
            throw SolveError("simulate_freezing_dae: loss of phase-condition transversality at t = " +
                             std::to_string(t));
        out.resize(n2 + 2);
        for (int i = 0; i < n2; ++i) out[i] = f[i] + lambda * dv[i];
        out[n2] = lambda;
        out[n2 + 1] = dx * (dot(vpart, ref.du_hat) - uhat_term);
    };
    prob.make_jvp = [&, dx](double, const Vec& y) {
        auto lin = std::make_shared<Linearization>(Vec(y.begin(), y.begin() + n2), p, K);
        auto dv = std::make_shared<Vec>();
        diff.apply_field(Vec(y.begin(), y.begin() + n2), *dv);
        const double lambda = y[n2 + 1];
        return [this_lin = lin, dv, lambda, n2, diff, &ref, dx](const Vec& h, Vec& out) {
            thread_local Vec hv, dh, jh;
            hv.assign(h.begin(), h.begin() + n2);
            this_lin->apply(hv, jh);
            diff.apply_field(hv, dh);
            out.resize(n2 + 2);
            const double hl = h[n2 + 1];
            for (int i = 0; i < n2; ++i) out[i] = jh[i] + lambda * dh[i] + hl * (*dv)[i];
            out[n2] = hl;
            out[n2 + 1] = dx * dot(hv, ref.du_hat);
        };
    };
    prob.make_precond = [&p, &grid, n2](double gh, double, const Vec& y) {
        const double lambda = y[n2 + 1];
        auto blocks = std::make_shared<TransportBlocks<double>>(1.0 / gh + 1.0, 1.0 / gh + 1.0 / p.tau,
                                                                -lambda, grid);
        LinearMap map;
        map.dim = n2 + 2;
        map.apply = [blocks, n2](const Vec& x, Vec& yy) {
            yy = x;
            thread_local Vec part;
            part.assign(yy.begin(), yy.begin() + n2);
            blocks->solve_field(part);
            std::copy(part.begin(), part.end(), yy.begin());
        };
        return map;
    };
    return integrate(prob, y0, t0, t1, opts);
}

FrozenState frozen_state_at(const Trajectory& traj, double t, int n_points) {
    Vec y = traj.at(t);
    FrozenState s;
    s.profile.assign(y.begin(), y.begin() + 2 * n_points);
    s.gamma = y[2 * n_points];
    s.lambda = y[2 * n_points + 1];
    return s;
}

// ---------------------------------------------------------------------------
// Phase recovery

void shift_samples(const Vec& samples, const Grid& grid, double shift, Vec& out) {
    const int n = grid.n_points;
    const int ncomp = (int)samples.size() / n;
    out.assign(samples.size(), 0.0);
    const double x0 = -grid.half_length;
    for (int c = 0; c < ncomp; ++c) {
        const double* s = samples.data() + (std::size_t)c * n;
        double* o = out.data() + (std::size_t)c * n;
        for (int i = 0; i < n; ++i) {
            // sample position x_i - shift in grid coordinates
            const double pos = (grid.nodes[i] - shift - x0) / grid.dx;
            const int j = (int)std::floor(pos);
            if (j < -1 || j > n - 1) continue;  // zero extension
            const double w = pos - j;
            // cubic Catmull-Rom with clamped end handling
            auto at = [&](int idx) { return (idx < 0 || idx >= n) ? 0.0 : s[idx]; };
            const double pm1 = at(j - 1), p0 = at(j), p1 = at(j + 1), p2 = at(j + 2);
            o[i] = p0 + 0.5 * w * (p1 - pm1 +
                   w * (2 * pm1 - 5 * p0 + 4 * p1 - p2 + w * (3 * (p0 - p1) + p2 - pm1)));
        }
    }
}

PhaseTrace recover_phase(const Trajectory& traj, const ReferenceProfile& ref,
                         const ModelParams& p, const KernelSet& K, const StepperOptions& opts) {
    const Grid& grid = K.grid();
    DiffOp diff(grid);
    const double du_norm2 = dot(ref.du_hat, ref.du_hat);

    auto g_of = [&](double t, double gamma) {
        thread_local Vec u, f, du, shifted;
        traj.at(t, u);
        rhs_into(u, p, K, f);
        diff.apply_field(u, du);
        shift_samples(ref.du_hat, grid, gamma, shifted);
        const double den = dot(du, shifted);
        if (std::abs(den) < 1e-10 * std::sqrt(du_norm2 * dot(du, du)))
            throw SolveError("recover_phase: denominator vanished at t = " + std::to_string(t));
        return -dot(f, shifted) / den;
    };

    ImplicitProblem prob;
    prob.dim = 1;
    prob.rhs = [&](double t, const Vec& y, Vec& out) {
        out.resize(1);
        out[0] = g_of(t, y[0]);
    };
    prob.make_jvp = [&](double t, const Vec& y) {
        const double eps = 1e-6 * (1.0 + std::abs(y[0]));
        const double slope = (g_of(t, y[0] + eps) - g_of(t, y[0] - eps)) / (2 * eps);
        return [slope](const Vec& h, Vec& out) {
            out.resize(1);
            out[0] = slope * h[0];
        };
    };
    StepperOptions sopts = opts;
    Trajectory gtraj = integrate(prob, Vec{0.0}, traj.t0(), traj.t1(), sopts);

    PhaseTrace out;
    out.times = traj.times;
    out.gamma.resize(traj.times.size());
    Vec tmp;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        gtraj.at(traj.times[i], tmp);
        out.gamma[i] = tmp[0];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Projector and mu

Vec projector_apply(const Vec& w, const WaveState& wave, const ReferenceProfile& ref,
                    const Grid& grid) {
    DiffOp diff(grid);
    Vec dv;
    diff.apply_field(wave.profile, dv);
    const double den = dot(dv, ref.du_hat);
    if (std::abs(den) < 1e-8 * dot(ref.du_hat, ref.du_hat))
        throw SolveError("projector_apply: phase condition not transversal");
    Vec out = w;
    axpy(-dot(w, ref.du_hat) / den, dv, out);
    return out;
}

double mu_of_v(const Vec& deviation, const WaveState& wave, const ReferenceProfile& ref,
               const ModelParams& p, const KernelSet& K) {
    const Grid& grid = K.grid();
    DiffOp diff(grid);
    const int n2 = (int)wave.profile.size();
    Vec full = wave.profile;
    axpy(1.0, deviation, full);
    Vec f_full(n2), f_base(n2);
    rhs_into(full, p, K, f_full);
    rhs_into(wave.profile, p, K, f_base);
    Vec dv, dvbar;
    diff.apply_field(deviation, dv);
    diff.apply_field(wave.profile, dvbar);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n2; ++i) {
        num += ref.du_hat[i] * (wave.speed * dv[i] + (f_full[i] - f_base[i]));
        den += ref.du_hat[i] * (dvbar[i] + dv[i]);
    }
    if (std::abs(den) < 1e-8 * dot(ref.du_hat, ref.du_hat))
        throw SolveError("mu_of_v: denominator below transversality threshold");
    return -num / den;
}

}  // namespace nfwave
