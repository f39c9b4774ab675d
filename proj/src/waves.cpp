#include "nfwave/waves.hpp"

#include <algorithm>

namespace nfwave {

using Cplx = std::complex<double>;

TwResidual tw_residual(const WaveState& candidate, const ReferenceProfile& ref,
                       const ModelParams& p, const KernelSet& K) {
    const Grid& grid = K.grid();
    DiffOp diff(grid);
    TwResidual out;
    rhs_into(candidate.profile, p, K, out.field);
    Vec dv;
    diff.apply_field(candidate.profile, dv);
    axpy(candidate.speed, dv, out.field);
    double ph = 0.0;
    for (std::size_t i = 0; i < candidate.profile.size(); ++i)
        ph += (candidate.profile[i] - ref.u_hat[i]) * ref.du_hat[i];
    out.phase = grid.dx * ph;
    return out;
}

WaveState solve_tw(const WaveState& guess, const ReferenceProfile& ref, const ModelParams& p,
                   const KernelSet& K, const TwSolveOptions& opts, NewtonResult* info) {
    const Grid& grid = K.grid();
    const int n2 = 2 * grid.n_points;
    DiffOp diff(grid);
    const double dx = grid.dx;
    const double uhat_term = dot(ref.u_hat, ref.du_hat);

    Vec x(n2 + 1);
    std::copy(guess.profile.begin(), guess.profile.end(), x.begin());
    x[n2] = guess.speed;

    auto residual = [&](const Vec& xx, Vec& out) {
        out.resize(n2 + 1);
        thread_local Vec vpart, dv, f;
        vpart.assign(xx.begin(), xx.begin() + n2);
        rhs_into(vpart, p, K, f);
        diff.apply_field(vpart, dv);
        const double c = xx[n2];
        for (int i = 0; i < n2; ++i) out[i] = c * dv[i] + f[i];
        out[n2] = dx * (dot(vpart, ref.du_hat) - uhat_term);
    };
    JacobianFactory make_jvp = [&](const Vec& xx) {
        Vec vpart(xx.begin(), xx.begin() + n2);
        auto lin = std::make_shared<Linearization>(vpart, p, K);
        auto dv = std::make_shared<Vec>();
        diff.apply_field(vpart, *dv);
        const double c = xx[n2];
        return [lin, dv, c, n2, diff, &ref, dx](const Vec& h, Vec& out) {
            thread_local Vec hv, dh;
            hv.assign(h.begin(), h.begin() + n2);
            lin->apply(hv, out);
            out.resize(n2 + 1);
            diff.apply_field(hv, dh);
            const double hc = h[n2];
            for (int i = 0; i < n2; ++i) out[i] += c * dh[i] + hc * (*dv)[i];
            out[n2] = dx * dot(hv, ref.du_hat);
        };
    };

    const double c_prec = opts.c_prec != 0.0 ? opts.c_prec : guess.speed;
    TransportPreconditioner pr(c_prec, p.tau, grid);
    LinearMap precond;
    precond.dim = n2 + 1;
    precond.apply = [&pr, n2](const Vec& b, Vec& y) {
        y = b;
        thread_local Vec part;
        part.assign(y.begin(), y.begin() + n2);
        pr.solve_field(part);
        std::copy(part.begin(), part.end(), y.begin());
    };

    NewtonOptions nopt = opts.newton;
    NewtonResult res = newton_krylov(residual, make_jvp, &precond, x, nopt);
    if (info) *info = res;
    if (!res.converged)
        throw SolveError("solve_tw: Newton failed (" + res.message +
                         ", residual = " + std::to_string(res.residual_sup) + ")");
    WaveState out;
    out.profile.assign(x.begin(), x.begin() + n2);
    out.speed = x[n2];
    return out;
}

LinearMap wave_operator(const WaveState& wave, const ModelParams& p, const KernelSet& K) {
    const Grid& grid = K.grid();
    DiffOp diff(grid);
    auto lin = std::make_shared<Linearization>(wave.profile, p, K);
    const double c = wave.speed;
    LinearMap op;
    op.dim = 2 * grid.n_points;
    op.apply = [lin, diff, c](const Vec& h, Vec& out) {
        lin->apply(h, out);
        thread_local Vec dh;
        diff.apply_field(h, dh);
        axpy(c, dh, out);
    };
    return op;
}

Vec linearization_apply(const WaveState& wave, const Vec& direction, const ModelParams& p,
                        const KernelSet& K) {
    Vec out;
    wave_operator(wave, p, K).apply(direction, out);
    return out;
}

Vec projected_linearization_apply(const WaveState& wave, const ReferenceProfile& ref,
                                  const Vec& direction, const ModelParams& p,
                                  const KernelSet& K) {
    Vec a = linearization_apply(wave, direction, p, K);
    return projector_apply(a, wave, ref, K.grid());
}

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::Stable: return "stable";
        case Verdict::Unstable: return "unstable";
        default: return "marginal";
    }
}

namespace {

// identify the translation mode by overlap with d v_bar; only converged
// Ritz pairs qualify as the rightmost candidate
void finalize_report(SpectrumReport& rep, const Vec& dvbar) {
    std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end(),
              [](const EigPair& a, const EigPair& b) { return a.value.real() > b.value.real(); });
    const double dvn = norm2(dvbar);
    double best = -1.0;
    int best_i = -1;
    for (std::size_t i = 0; i < rep.eigenvalues.size(); ++i) {
        const auto& x = rep.eigenvalues[i].vector;
        if (x.empty()) continue;
        Cplx ov(0.0, 0.0);
        for (std::size_t q = 0; q < x.size(); ++q) ov += std::conj(x[q]) * dvbar[q];
        const double overlap = std::abs(ov) / dvn;  // eigenvectors are normalized
        const double score = overlap / (1.0 + std::abs(rep.eigenvalues[i].value));
        if (overlap > 0.5 && score > best) {
            best = score;
            best_i = (int)i;
        }
    }
    if (best_i < 0) {
        // fall back to the smallest-magnitude eigenvalue
        double mn = 1e300;
        for (std::size_t i = 0; i < rep.eigenvalues.size(); ++i)
            if (std::abs(rep.eigenvalues[i].value) < mn) {
                mn = std::abs(rep.eigenvalues[i].value);
                best_i = (int)i;
            }
    }
    rep.goldstone_index = best_i;
    if (best_i >= 0) rep.kernel_eig_magnitude = std::abs(rep.eigenvalues[best_i].value);
    bool found = false;
    for (int pass = 0; pass < 2 && !found; ++pass) {
        for (std::size_t i = 0; i < rep.eigenvalues.size(); ++i) {
            if ((int)i == best_i) continue;
            if (pass == 0 && !rep.eigenvalues[i].converged) continue;
            rep.rightmost_nonzero = rep.eigenvalues[i].value;
            found = true;
            break;
        }
    }
    if (!found && best_i >= 0) rep.rightmost_nonzero = rep.eigenvalues[best_i].value;
}

int spectrum_subspace(const SpectrumOptions& opts) {
    return opts.subspace > 0 ? opts.subspace : std::max(4 * opts.k, 80);
}

}  // namespace

SpectrumReport tw_spectrum_shift_invert(const WaveState& wave, const ModelParams& p,
                                        const KernelSet& K, const SpectrumOptions& opts) {
    const Grid& grid = K.grid();
    LinearMap A = wave_operator(wave, p, K);
    TransportBlocks<Cplx> blocks(Cplx(-1.0) - opts.shift, Cplx(-1.0 / p.tau) - opts.shift,
                                 Cplx(wave.speed), grid);
    LinearMapZ precond = blocks.as_precond();

    ShiftInvertOptions sopt;
    sopt.k = opts.k;
    sopt.arnoldi.tol = opts.arnoldi_tol;
    sopt.arnoldi.subspace = opts.subspace;
    std::vector<EigPair> pairs = shift_invert_eigs(A, opts.shift, &precond, sopt);

    SpectrumReport rep;
    rep.method = "shift-invert";
    rep.c_bar = wave.speed;
    rep.eigenvalues = std::move(pairs);
    DiffOp diff(grid);
    Vec dvbar;
    diff.apply_field(wave.profile, dvbar);
    finalize_report(rep, dvbar);
    return rep;
}

SpectrumReport tw_spectrum_semigroup(const WaveState& wave, const ModelParams& p,
                                     const KernelSet& K, const SpectrumOptions& opts,
                                     const SpectrumReport* hint) {
    const Grid& grid = K.grid();
    const int n2 = 2 * grid.n_points;
    const double t_small = opts.t_small;
    if (t_small <= 0.0) throw std::invalid_argument("tw_spectrum_semigroup: t_small must be > 0");
    DiffOp diff(grid);
    auto lin = std::make_shared<Linearization>(wave.profile, p, K);
    const double c = wave.speed;

    ImplicitProblem lp;
    lp.dim = n2;
    lp.rhs = [lin, diff, c](double, const Vec& w, Vec& out) {
        lin->apply(w, out);
        thread_local Vec dw;
        diff.apply_field(w, dw);
        axpy(c, dw, out);
    };
    lp.make_jvp = [lin, diff, c](double, const Vec&) {
        return [lin, diff, c](const Vec& h, Vec& out) {
            lin->apply(h, out);
            thread_local Vec dh;
            diff.apply_field(h, dh);
            axpy(c, dh, out);
        };
    };
    lp.make_precond = [&p, &grid, c](double gh, double, const Vec&) {
        return TransportBlocks<double>(1.0 / gh + 1.0, 1.0 / gh + 1.0 / p.tau, -c, grid).as_precond();
    };
    StepperOptions sopts = opts.stepper;
    sopts.rtol = std::min(sopts.rtol, 1e-9);
    sopts.atol = std::min(sopts.atol, 1e-9);
    sopts.h0 = std::min(sopts.h0, t_small / 4.0);
    sopts.store_knots = false;

    LinearMap flow;
    flow.dim = n2;
    flow.apply = [&](const Vec& w, Vec& out) {
        Trajectory tr = integrate(lp, w, 0.0, t_small, sopts);
        out = tr.states.back();
    };

    ArnoldiOptions aopt;
    aopt.k = opts.k;
    aopt.which = EigWhich::LargestMagnitude;
    aopt.tol = std::max(opts.arnoldi_tol, 1e-9);
    aopt.subspace = opts.subspace;
    std::vector<EigPair> mult = arnoldi_eigs(flow, aopt);

    LinearMap A = wave_operator(wave, p, K);
    SpectrumReport rep;
    rep.method = "semigroup";
    rep.c_bar = wave.speed;
    for (auto& m : mult) {
        if (std::abs(m.value) < 1e-300) continue;
        EigPair e = m;
        const double re = std::log(std::abs(m.value)) / t_small;
        const double im0 = std::arg(m.value) / t_small;
        double im = im0;
        if (hint) {
            double bestd = 1e300;
            for (int k = -4; k <= 4; ++k) {
                const double cand = im0 + 2.0 * M_PI * k / t_small;
                for (const auto& hpair : hint->eigenvalues) {
                    const double d = std::abs(Cplx(re, cand) - hpair.value);
                    if (d < bestd) {
                        bestd = d;
                        im = cand;
                    }
                }
            }
        }
        e.value = Cplx(re, im);
        e.residual = eig_residual(A, e);
        e.converged = m.converged;
        rep.eigenvalues.push_back(std::move(e));
    }
    Vec dvbar;
    diff.apply_field(wave.profile, dvbar);
    finalize_report(rep, dvbar);
    return rep;
}

Verdict stability_verdict(const SpectrumReport& report, double gap) {
    const double re = report.rightmost_nonzero.real();
    if (re < -gap) return Verdict::Stable;
    if (re > gap) return Verdict::Unstable;
    return Verdict::Marginal;
}

EigPair refine_wave_eigenpair(const WaveState& wave, const ModelParams& p, const KernelSet& K,
                              const EigPair& seed, double tol, int max_iter) {
    const Grid& grid = K.grid();
    const int n2 = 2 * grid.n_points;
    LinearMapZ A = complexify(wave_operator(wave, p, K));

    std::vector<Cplx> zeta = seed.vector;
    if ((int)zeta.size() != n2) throw std::invalid_argument("refine_wave_eigenpair: bad seed");
    Cplx lambda = seed.value;
    const std::vector<Cplx> q = zeta;  // fixed normalization vector

    EigPair out = seed;
    for (int it = 0; it < max_iter; ++it) {
        std::vector<Cplx> Az;
        A.apply(zeta, Az);
        std::vector<Cplx> res(n2 + 1);
        double rn = 0.0;
        for (int i = 0; i < n2; ++i) {
            res[i] = Az[i] - lambda * zeta[i];
            rn += std::norm(res[i]);
        }
        Cplx qz(0.0, 0.0);
        for (int i = 0; i < n2; ++i) qz += std::conj(q[i]) * zeta[i];
        res[n2] = qz - 1.0;
        rn = std::sqrt(rn + std::norm(res[n2]));
        out.value = lambda;
        out.vector = zeta;
        out.residual = rn;
        out.converged = rn <= tol * std::max(1.0, std::abs(lambda));
        if (out.converged) break;

        LinearMapZ jac;
        jac.dim = n2 + 1;
        jac.apply = [&](const std::vector<Cplx>& h, std::vector<Cplx>& y) {
            std::vector<Cplx> hz(h.begin(), h.begin() + n2);
            std::vector<Cplx> Ah;
            A.apply(hz, Ah);
            y.resize(n2 + 1);
            const Cplx dl = h[n2];
            Cplx qh(0.0, 0.0);
            for (int i = 0; i < n2; ++i) {
                y[i] = Ah[i] - lambda * hz[i] - dl * zeta[i];
                qh += std::conj(q[i]) * hz[i];
            }
            y[n2] = qh;
        };
        TransportBlocks<Cplx> blocks(Cplx(-1.0) - lambda, Cplx(-1.0 / p.tau) - lambda,
                                     Cplx(wave.speed), grid);
        LinearMapZ precond;
        precond.dim = n2 + 1;
        precond.apply = [&blocks, n2](const std::vector<Cplx>& b, std::vector<Cplx>& y) {
            y = b;
            std::vector<Cplx> part(y.begin(), y.begin() + n2);
            blocks.solve_field(part);
            std::copy(part.begin(), part.end(), y.begin());
        };
        std::vector<Cplx> rhs(n2 + 1), delta(n2 + 1, Cplx(0.0));
        for (int i = 0; i <= n2; ++i) rhs[i] = -res[i];
        GmresOptions gopt;
        gopt.tol = 1e-10;
        gopt.max_iter = 2000;
        GmresResult lr = gmres(jac, rhs, delta, &precond, gopt);
        if (!lr.converged && lr.rel_residual > 0.2)
            throw SolveError("refine_wave_eigenpair: bordered solve failed");
        for (int i = 0; i < n2; ++i) zeta[i] += delta[i];
        lambda += delta[n2];
    }
    out.residual = eig_residual(wave_operator(wave, p, K), out);
    return out;
}

StabilityAssessment assess_stability(const WaveState& wave, const ModelParams& p,
                                     const KernelSet& K, const StabilityOptions& opts) {
    StabilityAssessment out;
    out.shift_invert = tw_spectrum_shift_invert(wave, p, K, opts.spectrum);
    out.goldstone_mag = out.shift_invert.kernel_eig_magnitude;
    out.rightmost = out.shift_invert.rightmost_nonzero;
    const SpectrumReport* src = &out.shift_invert;

    const bool near_axis = std::abs(out.rightmost.real()) < opts.cross_check_window;
    if (opts.always_cross_check || near_axis) {
        out.semigroup = tw_spectrum_semigroup(wave, p, K, opts.spectrum, &out.shift_invert);
        out.cross_checked = true;
        if (out.semigroup.rightmost_nonzero.real() > out.rightmost.real() + 1e-12) {
            out.rightmost = out.semigroup.rightmost_nonzero;
            src = &out.semigroup;
        }
    }
    // pull the eigenvector of the rightmost candidate, refining when asked
    for (std::size_t i = 0; i < src->eigenvalues.size(); ++i) {
        if ((int)i == src->goldstone_index) continue;
        if (src->eigenvalues[i].value == src->rightmost_nonzero &&
            !src->eigenvalues[i].vector.empty()) {
            EigPair cand = src->eigenvalues[i];
            if (opts.refine) {
                EigPair refp = refine_wave_eigenpair(wave, p, K, cand);
                if (refp.converged) cand = refp;
            }
            out.rightmost = cand.value;
            out.rightmost_vec = cand.vector;
            break;
        }
    }
    SpectrumReport proxy;
    proxy.rightmost_nonzero = out.rightmost;
    out.verdict = stability_verdict(proxy, opts.gap);
    return out;
}

}  // namespace nfwave
