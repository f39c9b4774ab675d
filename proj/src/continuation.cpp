#include "nfwave/continuation.hpp"

#include <algorithm>
#include <memory>

namespace nfwave {

using Cplx = std::complex<double>;

double get_param(const ModelParams& p, const std::string& name) {
    if (name == "beta") return p.beta;
    if (name == "a_ee") return p.a_ee;
    if (name == "a_ei") return p.a_ei;
    if (name == "a_ie") return p.a_ie;
    if (name == "a_ii") return p.a_ii;
    if (name == "theta_e") return p.theta_e;
    if (name == "theta_i") return p.theta_i;
    if (name == "tau") return p.tau;
    if (name == "sigma_e" || name == "sigma_i")
        throw std::invalid_argument("continuation in kernel widths is not supported");
    throw std::invalid_argument("unknown parameter: " + name);
}

void set_param(ModelParams& p, const std::string& name, double value) {
    if (name == "beta") p.beta = value;
    else if (name == "a_ee") p.a_ee = value;
    else if (name == "a_ei") p.a_ei = value;
    else if (name == "a_ie") p.a_ie = value;
    else if (name == "a_ii") p.a_ii = value;
    else if (name == "theta_e") p.theta_e = value;
    else if (name == "theta_i") p.theta_i = value;
    else if (name == "tau") p.tau = value;
    else throw std::invalid_argument("unknown parameter: " + name);
}

const char* to_string(BifPoint::Kind k) {
    switch (k) {
        case BifPoint::Kind::Fold: return "Fold";
        case BifPoint::Kind::Hopf: return "Hopf";
        case BifPoint::Kind::BT: return "BT";
        default: return "LPC";
    }
}

// ---------------------------------------------------------------------------
// Generic pseudo-arclength driver

namespace {

struct ExtVec {
    // weighted inner product on (x, p): RMS on the state part, full on p
    static double dot_w(const Vec& a, const Vec& b) {
        const std::size_t nx = a.size() - 1;
        double s = 0.0;
        for (std::size_t i = 0; i < nx; ++i) s += a[i] * b[i];
        return s / (double)nx + a[nx] * b[nx];
    }
    static double norm_w(const Vec& a) { return std::sqrt(dot_w(a, a)); }
};

// corrector: solve [residual(x,p); <X - anchor, tangent>_w - ds] = 0
NewtonResult correct(const ContinuationProblem& prob, Vec& X, const Vec& anchor,
                     const Vec& tangent, double ds, const NewtonOptions& nopt) {
    const int nx = prob.dim_x;
    auto residual = [&](const Vec& XX, Vec& out) {
        thread_local Vec rx;
        Vec x(XX.begin(), XX.begin() + nx);
        prob.residual(x, XX[nx], rx);
        out.resize(nx + 1);
        std::copy(rx.begin(), rx.end(), out.begin());
        Vec diffX = XX;
        axpy(-1.0, anchor, diffX);
        out[nx] = ExtVec::dot_w(diffX, tangent) - ds;
    };
    JacobianFactory make_jvp = [&](const Vec& XX) {
        Vec x(XX.begin(), XX.begin() + nx);
        const double p = XX[nx];
        auto inner = prob.make_jvp(x, p);
        // parameter column by centered differences
        auto Jp = std::make_shared<Vec>(nx);
        {
            const double eps = 1e-7 * (1.0 + std::abs(p));
            Vec rp, rm;
            prob.residual(x, p + eps, rp);
            prob.residual(x, p - eps, rm);
            for (int i = 0; i < nx; ++i) (*Jp)[i] = (rp[i] - rm[i]) / (2.0 * eps);
        }
        return [inner, Jp, tangent, nx](const Vec& h, Vec& out) {
            thread_local Vec hx, ox;
            hx.assign(h.begin(), h.begin() + nx);
            inner(hx, ox);
            out.resize(nx + 1);
            for (int i = 0; i < nx; ++i) out[i] = ox[i] + h[nx] * (*Jp)[i];
            out[nx] = ExtVec::dot_w(h, tangent);
        };
    };
    LinearMap precond;
    const LinearMap* pc = nullptr;
    if (prob.make_precond) {
        LinearMap base = prob.make_precond(Vec(X.begin(), X.begin() + nx), X[nx]);
        precond.dim = nx + 1;
        precond.apply = [base, nx](const Vec& b, Vec& y) {
            thread_local Vec part, sol;
            part.assign(b.begin(), b.begin() + nx);
            base.apply(part, sol);
            y.resize(nx + 1);
            std::copy(sol.begin(), sol.end(), y.begin());
            y[nx] = b[nx];
        };
        pc = &precond;
    }
    return newton_krylov(residual, make_jvp, pc, X, nopt);
}

BranchPoint make_point(const ContinuationProblem& prob, const Vec& X, double s, bool flag) {
    BranchPoint bp;
    const int nx = prob.dim_x;
    bp.state.assign(X.begin(), X.begin() + nx);
    bp.parameter = X[nx];
    bp.arclength = s;
    if (flag && prob.assess) {
        bp.test_value = prob.assess(bp.state, bp.parameter, bp);
        bp.flagged = true;
    }
    return bp;
}

}  // namespace

Branch continue_branch(const ContinuationProblem& prob, const Vec& x0, double p0,
                       double initial_direction, const ContinuationOptions& opts) {
    Branch branch;
    const int nx = prob.dim_x;
    Vec X(nx + 1);
    std::copy(x0.begin(), x0.end(), X.begin());
    X[nx] = p0;

    // first tangent by a bordered solve: J_x dxdp = -J_p
    Vec tangent(nx + 1, 0.0);
    {
        auto jvp = prob.make_jvp(x0, p0);
        LinearMap jx;
        jx.dim = nx;
        jx.apply = [&](const Vec& h, Vec& y) { jvp(h, y); };
        Vec rp, rm, Jp(nx);
        const double eps = 1e-7 * (1.0 + std::abs(p0));
        prob.residual(x0, p0 + eps, rp);
        prob.residual(x0, p0 - eps, rm);
        for (int i = 0; i < nx; ++i) Jp[i] = -(rp[i] - rm[i]) / (2.0 * eps);
        Vec dxdp(nx, 0.0);
        const LinearMap pcmap = prob.make_precond ? prob.make_precond(x0, p0) : LinearMap{};
        GmresOptions gopt;
        gopt.tol = 1e-8;
        gopt.max_iter = 2000;
        gmres(jx, Jp, dxdp, prob.make_precond ? &pcmap : nullptr, gopt);
        std::copy(dxdp.begin(), dxdp.end(), tangent.begin());
        tangent[nx] = 1.0;
        const double tn = ExtVec::norm_w(tangent);
        scal(initial_direction / tn, tangent);
    }

    branch.points.push_back(make_point(prob, X, 0.0, true));
    if (prob.on_accept) prob.on_accept(x0, p0);

    double ds = opts.ds0;
    double s = 0.0;
    std::size_t last_flagged = 0;
    int step = 0;
    while (step < opts.max_steps) {
        Vec Xg = X;
        axpy(ds, tangent, Xg);
        Vec Xtry = Xg;
        NewtonResult nr = correct(prob, Xtry, X, tangent, ds, opts.corrector);
        if (!nr.converged) {
            ds *= 0.5;
            if (ds < opts.ds_min) {
                branch.termination = "corrector failure at minimal step";
                break;
            }
            continue;
        }
        ++step;
        s += ds;
        Vec secant = Xtry;
        axpy(-1.0, X, secant);
        const double sn = ExtVec::norm_w(secant);
        if (sn > 0) {
            scal(1.0 / sn, secant);
            if (ExtVec::dot_w(secant, tangent) > 0 || branch.points.size() < 2) tangent = secant;
        }
        X = Xtry;
        const bool flag = (step % std::max(1, opts.flag_stride)) == 0;
        branch.points.push_back(make_point(prob, X, s, flag));
        if (prob.on_accept)
            prob.on_accept(Vec(X.begin(), X.begin() + nx), X[nx]);

        if (opts.detect && flag && branch.points.back().flagged) {
            const std::size_t cur = branch.points.size() - 1;
            const auto& a = branch.points[last_flagged];
            const auto& b = branch.points[cur];
            if (a.flagged && a.test_value * b.test_value < 0.0) {
                BifPoint bif = detect_bifurcation(prob, branch, last_flagged, opts);
                branch.bifurcations.push_back(std::move(bif));
            }
            last_flagged = cur;
        }

        if (X[nx] < opts.p_lo || X[nx] > opts.p_hi) {
            branch.termination = "parameter left the requested range";
            break;
        }
        if (nr.iterations <= opts.fast_iters) ds = std::min(ds * opts.grow, opts.ds_max);
    }
    if (branch.termination.empty())
        branch.termination = step >= opts.max_steps ? "max steps" : branch.termination;
    return branch;
}

BifPoint detect_bifurcation(const ContinuationProblem& prob, const Branch& branch,
                            std::size_t left_index, const ContinuationOptions& opts) {
    // find the right bracket: next flagged point
    std::size_t ri = left_index + 1;
    while (ri < branch.points.size() && !branch.points[ri].flagged) ++ri;
    if (ri >= branch.points.size())
        throw std::invalid_argument("detect_bifurcation: no right bracket");
    const int nx = prob.dim_x;

    auto pack = [&](const BranchPoint& bp) {
        Vec X(nx + 1);
        std::copy(bp.state.begin(), bp.state.end(), X.begin());
        X[nx] = bp.parameter;
        return X;
    };
    Vec Xa = pack(branch.points[left_index]);
    Vec Xb = pack(branch.points[ri]);
    double ta = branch.points[left_index].test_value;
    BranchPoint probe = branch.points[ri];

    BifPoint out;
    out.detection_residual = std::abs(probe.test_value);
    for (int it = 0; it < opts.bisect_max; ++it) {
        Vec secant = Xb;
        axpy(-1.0, Xa, secant);
        const double dist = ExtVec::norm_w(secant);
        if (dist < 1e-300) break;
        scal(1.0 / dist, secant);
        Vec Xm = Xa;
        axpy(0.5 * dist, secant, Xm);
        NewtonResult nr = correct(prob, Xm, Xa, secant, 0.5 * dist, opts.corrector);
        if (!nr.converged) {
            // shrink toward the left point and retry
            Xb = Xm;
            continue;
        }
        BranchPoint bm;
        bm.state.assign(Xm.begin(), Xm.begin() + nx);
        bm.parameter = Xm[nx];
        const double tm = prob.assess(bm.state, bm.parameter, bm);
        probe = bm;
        probe.test_value = tm;
        out.detection_residual = std::abs(tm);
        if (std::abs(tm) <= opts.bisect_tol) {
            out.refined = true;
            break;
        }
        if (tm * ta > 0.0) {
            Xa = Xm;
            ta = tm;
        } else {
            Xb = Xm;
        }
    }
    out.p1 = probe.parameter;
    out.state = probe.state;
    out.critical = probe.critical;
    out.omega = std::abs(probe.critical.imag());
    out.eigvec = probe.critical_vec;
    out.kind = (out.omega > 1e-4) ? BifPoint::Kind::Hopf : BifPoint::Kind::Fold;
    return out;
}

// ---------------------------------------------------------------------------
// TW branches

Branch continue_tw_branch(const WaveState& start, const ModelParams& p0, const KernelSet& K,
                          const TwBranchConfig& cfg, double initial_direction) {
    const Grid& grid = K.grid();
    const int n2 = 2 * grid.n_points;
    auto diff = DiffOp(grid);
    const double dx = grid.dx;

    struct Shared {
        ReferenceProfile ref;
        double c_prec;
        ModelParams params;
        std::string name;
    };
    auto sh = std::make_shared<Shared>();
    sh->ref = make_reference(start.profile, grid);
    sh->c_prec = start.speed;
    sh->params = p0;
    sh->name = cfg.parameter;

    ContinuationProblem prob;
    prob.dim_x = n2 + 1;
    prob.residual = [sh, &K, diff, dx, n2](const Vec& x, double p, Vec& out) {
        ModelParams mp = sh->params;
        set_param(mp, sh->name, p);
        thread_local Vec vpart, dv, f;
        vpart.assign(x.begin(), x.begin() + n2);
        rhs_into(vpart, mp, K, f);
        diff.apply_field(vpart, dv);
        out.resize(n2 + 1);
        const double c = x[n2];
        for (int i = 0; i < n2; ++i) out[i] = c * dv[i] + f[i];
        double ph = 0.0;
        for (int i = 0; i < n2; ++i) ph += (vpart[i] - sh->ref.u_hat[i]) * sh->ref.du_hat[i];
        out[n2] = dx * ph;
    };
    prob.make_jvp = [sh, &K, diff, dx, n2](const Vec& x, double p) {
        ModelParams mp = sh->params;
        set_param(mp, sh->name, p);
        Vec vpart(x.begin(), x.begin() + n2);
        auto lin = std::make_shared<Linearization>(vpart, mp, K);
        auto dv = std::make_shared<Vec>();
        diff.apply_field(vpart, *dv);
        const double c = x[n2];
        return [lin, dv, c, n2, diff, sh, dx](const Vec& h, Vec& out) {
            thread_local Vec hv, dh;
            hv.assign(h.begin(), h.begin() + n2);
            lin->apply(hv, out);
            out.resize(n2 + 1);
            diff.apply_field(hv, dh);
            for (int i = 0; i < n2; ++i) out[i] += c * dh[i] + h[n2] * (*dv)[i];
            double ph = 0.0;
            for (int i = 0; i < n2; ++i) ph += hv[i] * sh->ref.du_hat[i];
            out[n2] = dx * ph;
        };
    };
    prob.make_precond = [sh, &K, n2](const Vec& x, double) {
        auto pr = std::make_shared<TransportPreconditioner>(
            sh->c_prec != 0.0 ? sh->c_prec : x[n2], sh->params.tau, K.grid());
        LinearMap map;
        map.dim = n2 + 1;
        map.apply = [pr, n2](const Vec& b, Vec& y) {
            y = b;
            thread_local Vec part;
            part.assign(y.begin(), y.begin() + n2);
            pr->solve_field(part);
            std::copy(part.begin(), part.end(), y.begin());
        };
        return map;
    };
    prob.on_accept = [sh, &K, n2](const Vec& x, double) {
        sh->ref = make_reference(Vec(x.begin(), x.begin() + n2), K.grid());
        sh->c_prec = x[n2];
    };
    StabilityOptions sopts = cfg.stability;
    prob.assess = [sh, &K, sopts, n2](const Vec& x, double p, BranchPoint& bp) {
        ModelParams mp = sh->params;
        set_param(mp, sh->name, p);
        WaveState w;
        w.profile.assign(x.begin(), x.begin() + n2);
        w.speed = x[n2];
        StabilityAssessment sa = assess_stability(w, mp, K, sopts);
        bp.speed = w.speed;
        bp.stability = sa.verdict;
        bp.critical = sa.rightmost;
        bp.critical_vec = sa.rightmost_vec;
        return sa.rightmost.real();
    };

    Vec x0(n2 + 1);
    std::copy(start.profile.begin(), start.profile.end(), x0.begin());
    x0[n2] = start.speed;
    Branch b = continue_branch(prob, x0, get_param(p0, cfg.parameter), initial_direction, cfg.cont);
    b.kind = "tw";
    b.parameter_name = cfg.parameter;
    return b;
}

// ---------------------------------------------------------------------------
// MTW branches

Branch continue_mtw_branch(const MtwOrbit& start, const ModelParams& p0, const KernelSet& K,
                           const MtwBranchConfig& cfg, double initial_direction) {
    const Grid& grid = K.grid();
    const int n = grid.n_points;
    const std::size_t n2 = 2 * (std::size_t)n;
    const MtwForm form = cfg.form;
    const bool box = (form == MtwForm::BoxOde || form == MtwForm::BoxDae);
    const bool dae = (form == MtwForm::BoxDae || form == MtwForm::ShootDae);
    const int M = start.n_slices();

    struct Shared {
        ReferenceProfile ref;
        OrbitSection section;
        ModelParams params;
        std::string name;
        double c_prec, T_prec;
    };
    auto sh = std::make_shared<Shared>();
    sh->ref = make_reference(start.slices[0], grid);
    sh->section = make_section(start.slices[0], start.c_bar, p0, K);
    sh->params = p0;
    sh->name = cfg.parameter;
    sh->c_prec = start.c_bar;
    sh->T_prec = start.period;

    Vec x0 = pack_orbit(start);
    const StepperOptions sstep = cfg.solve.stepper;

    ContinuationProblem prob;
    prob.dim_x = (int)x0.size();
    prob.residual = [sh, &K, form, box, dae, n, M, n2, sstep](const Vec& x, double p, Vec& out) {
        ModelParams mp = sh->params;
        set_param(mp, sh->name, p);
        MtwOrbit o = unpack_orbit(x, form, n, M);
        if (o.period <= 1e-6) throw SolveError("mtw continuation: period collapsed");
        switch (form) {
            case MtwForm::BoxOde:
                out = box_residual_ode(o.slices, o.period, o.c_bar, sh->section, sh->ref, mp, K);
                break;
            case MtwForm::BoxDae:
                out = box_residual_dae(o.slices, o.lambdas, o.period, sh->section, sh->ref, mp, K);
                break;
            case MtwForm::ShootOde:
                out = shooting_residual_ode(o.slices[0], o.c_bar, o.period, sh->section, sh->ref,
                                            mp, K, sstep);
                break;
            case MtwForm::ShootDae:
                out = shooting_residual_dae(o.slices[0], o.lambda0, o.period, sh->section,
                                            sh->ref, mp, K, sstep);
                break;
        }
    };
    auto res_copy = prob.residual;
    prob.make_jvp = [res_copy](const Vec& x, double p) {
        auto base = std::make_shared<Vec>(x);
        const double xn = norm2(x);
        return [res_copy, base, p, xn](const Vec& h, Vec& out) {
            const double hn = norm2(h);
            if (hn == 0.0) {
                out.assign(base->size(), 0.0);
                return;
            }
            const double eps = 1e-7 * (1.0 + xn) / hn;
            Vec xp = *base, xm = *base, rp, rm;
            axpy(eps, h, xp);
            axpy(-eps, h, xm);
            res_copy(xp, p, rp);
            res_copy(xm, p, rm);
            out.resize(rp.size());
            for (std::size_t q = 0; q < rp.size(); ++q) out[q] = (rp[q] - rm[q]) / (2.0 * eps);
        };
    };
    if (box) {
        prob.make_precond = [sh, &K, M, n2, box, dae](const Vec& x, double) {
            const std::size_t extra = dae ? (std::size_t)M + 1 : 2;
            return make_box_preconditioner(M, n2, sh->T_prec, sh->c_prec, extra, sh->params,
                                           K.grid());
        };
    }
    prob.on_accept = [sh, &K, form, n, M](const Vec& x, double p) {
        ModelParams mp = sh->params;
        set_param(mp, sh->name, p);
        MtwOrbit o = unpack_orbit(x, form, n, M);
        sh->ref = make_reference(o.slices[0], K.grid());
        sh->section = make_section(o.slices[0], o.c_bar, mp, K);
        sh->c_prec = o.c_bar;
        sh->T_prec = o.period;
    };
    if (cfg.assess_stability) {
        FloquetOptions fopt = cfg.floquet;
        prob.assess = [sh, &K, form, n, M, fopt](const Vec& x, double p, BranchPoint& bp) {
            ModelParams mp = sh->params;
            set_param(mp, sh->name, p);
            MtwOrbit o = unpack_orbit(x, form, n, M);
            bp.period = o.period;
            bp.speed = o.c_bar;
            FloquetReport fr = floquet_multipliers(o, mp, K, fopt);
            bp.stability = fr.verdict;
            double worst = -1.0;
            int excluded = 0;
            for (const auto& m : fr.multipliers) {
                if (std::abs(m.value - 1.0) <= fopt.unit_tol && excluded < 2) {
                    ++excluded;
                    continue;
                }
                if (std::abs(m.value) - 1.0 > worst) {
                    worst = std::abs(m.value) - 1.0;
                    bp.critical = m.value;
                    bp.critical_vec = m.vector;
                }
            }
            return worst > -1.0 ? worst : -1.0;
        };
    } else {
        prob.assess = [form, n, M](const Vec& x, double, BranchPoint& bp) {
            MtwOrbit o = unpack_orbit(x, form, n, M);
            bp.period = o.period;
            bp.speed = o.c_bar;
            return 0.0;
        };
    }

    Branch b = continue_branch(prob, x0, get_param(p0, cfg.parameter), initial_direction,
                               cfg.cont);
    b.kind = box ? "mtw-box" : "mtw-shoot";
    b.parameter_name = cfg.parameter;
    return b;
}

// ---------------------------------------------------------------------------
// Codim-1 curves

namespace {

struct BorderedState {
    std::vector<Cplx> b, q;  // complex borders (Hopf)
    Vec br, qr;              // real borders (Fold)
};

// complex bordered test function for the Hopf matrix A - i omega:
// [A - i w, b; q^H, 0] [w; g] = [0; 1]
Cplx hopf_test_function(const WaveState& wave, double omega, const ModelParams& p,
                        const KernelSet& K, const BorderedState& bs, const GmresOptions& gopt,
                        std::vector<Cplx>* null_out = nullptr) {
    const Grid& grid = K.grid();
    const int n2 = 2 * grid.n_points;
    LinearMapZ A = complexify(wave_operator(wave, p, K));
    const Cplx iw(0.0, omega);

    LinearMapZ sys;
    sys.dim = n2 + 1;
    sys.apply = [&](const std::vector<Cplx>& x, std::vector<Cplx>& y) {
        std::vector<Cplx> xv(x.begin(), x.begin() + n2), Ax;
        A.apply(xv, Ax);
        y.resize(n2 + 1);
        Cplx qx(0.0, 0.0);
        for (int i = 0; i < n2; ++i) {
            y[i] = Ax[i] - iw * xv[i] + x[n2] * bs.b[i];
            qx += std::conj(bs.q[i]) * xv[i];
        }
        y[n2] = qx;
    };
    TransportBlocks<Cplx> blocks(Cplx(-1.0) - iw, Cplx(-1.0 / p.tau) - iw, Cplx(wave.speed),
                                 grid);
    LinearMapZ pc;
    pc.dim = n2 + 1;
    pc.apply = [&blocks, n2](const std::vector<Cplx>& bb, std::vector<Cplx>& y) {
        y = bb;
        std::vector<Cplx> part(y.begin(), y.begin() + n2);
        blocks.solve_field(part);
        std::copy(part.begin(), part.end(), y.begin());
    };
    std::vector<Cplx> rhs(n2 + 1, Cplx(0.0)), sol(n2 + 1, Cplx(0.0));
    rhs[n2] = Cplx(1.0);
    GmresResult r = gmres(sys, rhs, sol, &pc, gopt);
    if (!r.converged && r.rel_residual > 1e-6)
        throw SolveError("hopf_test_function: bordered solve failed (res " +
                         std::to_string(r.rel_residual) + ")");
    if (null_out) null_out->assign(sol.begin(), sol.begin() + n2);
    return sol[n2];
}

// real bordered test on the wave Jacobian [A, dv; phase-row, 0]
double fold_test_function(const WaveState& wave, const ReferenceProfile& ref,
                          const ModelParams& p, const KernelSet& K, const BorderedState& bs,
                          const GmresOptions& gopt, Vec* null_out = nullptr) {
    const Grid& grid = K.grid();
    const int n2 = 2 * grid.n_points;
    DiffOp diff(grid);
    auto lin = std::make_shared<Linearization>(wave.profile, p, K);
    Vec dv;
    diff.apply_field(wave.profile, dv);
    const double c = wave.speed;
    const double dx = grid.dx;

    LinearMap sys;
    sys.dim = n2 + 2;
    sys.apply = [&](const Vec& x, Vec& y) {
        thread_local Vec hv, dh, jh;
        hv.assign(x.begin(), x.begin() + n2);
        lin->apply(hv, jh);
        diff.apply_field(hv, dh);
        y.resize(n2 + 2);
        double ph = 0.0, qx = 0.0;
        for (int i = 0; i < n2; ++i) {
            y[i] = jh[i] + c * dh[i] + x[n2] * dv[i] + x[n2 + 1] * bs.br[i];
            ph += hv[i] * ref.du_hat[i];
            qx += hv[i] * bs.qr[i];
        }
        y[n2] = dx * ph + x[n2 + 1] * bs.br[n2];
        y[n2 + 1] = qx + x[n2] * bs.qr[n2];
    };
    TransportPreconditioner pr(c, p.tau, grid);
    LinearMap pc;
    pc.dim = n2 + 2;
    pc.apply = [&pr, n2](const Vec& bb, Vec& y) {
        y = bb;
        thread_local Vec part;
        part.assign(y.begin(), y.begin() + n2);
        pr.solve_field(part);
        std::copy(part.begin(), part.end(), y.begin());
    };
    Vec rhs(n2 + 2, 0.0), sol(n2 + 2, 0.0);
    rhs[n2 + 1] = 1.0;
    GmresResult r = gmres(sys, rhs, sol, &pc, gopt);
    if (!r.converged && r.rel_residual > 1e-6)
        throw SolveError("fold_test_function: bordered solve failed");
    if (null_out) null_out->assign(sol.begin(), sol.begin() + n2 + 1);
    return sol[n2 + 1];
}

}  // namespace

Branch continue_hopf_curve(const BifPoint& hopf, const ModelParams& p0, const KernelSet& K,
                           const Codim1Options& opts, double initial_direction) {
    const Grid& grid = K.grid();
    const int n2 = 2 * grid.n_points;
    const double dx = grid.dx;
    DiffOp diff(grid);

    struct Shared {
        ReferenceProfile ref;
        BorderedState borders;
        ModelParams base;
        std::string p1name, p2name;
        GmresOptions gopt;
    };
    auto sh = std::make_shared<Shared>();
    sh->base = p0;
    sh->p1name = opts.param1;
    sh->p2name = opts.param2;
    sh->gopt = opts.bordered;

    Vec profile(hopf.state.begin(), hopf.state.begin() + n2);
    sh->ref = make_reference(profile, grid);
    sh->borders.b.resize(n2);
    sh->borders.q.resize(n2);
    if ((int)hopf.eigvec.size() == n2) {
        double nn = 0.0;
        for (auto& z : hopf.eigvec) nn += std::norm(z);
        nn = std::sqrt(nn);
        for (int i = 0; i < n2; ++i) sh->borders.b[i] = sh->borders.q[i] = hopf.eigvec[i] / nn;
    } else {
        std::mt19937 rng(1234);
        std::normal_distribution<double> gauss;
        double nn = 0.0;
        for (int i = 0; i < n2; ++i) {
            sh->borders.b[i] = Cplx(gauss(rng), gauss(rng));
            nn += std::norm(sh->borders.b[i]);
        }
        nn = std::sqrt(nn);
        for (int i = 0; i < n2; ++i) sh->borders.q[i] = (sh->borders.b[i] /= nn);
    }

    // x = [v (2n); c; omega; p2], active parameter p1
    ContinuationProblem prob;
    prob.dim_x = n2 + 3;
    prob.residual = [sh, &K, diff, dx, n2](const Vec& x, double p1, Vec& out) {
        ModelParams mp = sh->base;
        set_param(mp, sh->p1name, p1);
        set_param(mp, sh->p2name, x[n2 + 2]);
        WaveState w;
        w.profile.assign(x.begin(), x.begin() + n2);
        w.speed = x[n2];
        thread_local Vec f, dv;
        rhs_into(w.profile, mp, K, f);
        diff.apply_field(w.profile, dv);
        out.resize(n2 + 3);
        for (int i = 0; i < n2; ++i) out[i] = w.speed * dv[i] + f[i];
        double ph = 0.0;
        for (int i = 0; i < n2; ++i) ph += (w.profile[i] - sh->ref.u_hat[i]) * sh->ref.du_hat[i];
        out[n2] = dx * ph;
        const Cplx g = hopf_test_function(w, x[n2 + 1], mp, K, sh->borders, sh->gopt);
        out[n2 + 1] = g.real();
        out[n2 + 2] = g.imag();
    };
    auto res_copy = prob.residual;
    prob.make_jvp = [res_copy, fd = opts.fd_eps](const Vec& x, double p) {
        auto base = std::make_shared<Vec>(x);
        const double xn = norm2(x);
        return [res_copy, base, p, xn, fd](const Vec& h, Vec& out) {
            const double hn = norm2(h);
            if (hn == 0.0) {
                out.assign(base->size(), 0.0);
                return;
            }
            const double eps = fd * (1.0 + xn) / hn;
            Vec xp = *base, xm = *base, rp, rm;
            axpy(eps, h, xp);
            axpy(-eps, h, xm);
            res_copy(xp, p, rp);
            res_copy(xm, p, rm);
            out.resize(rp.size());
            for (std::size_t q = 0; q < rp.size(); ++q) out[q] = (rp[q] - rm[q]) / (2.0 * eps);
        };
    };
    prob.make_precond = [sh, &K, n2](const Vec& x, double) {
        auto pr = std::make_shared<TransportPreconditioner>(x[n2], sh->base.tau, K.grid());
        LinearMap map;
        map.dim = n2 + 3;
        map.apply = [pr, n2](const Vec& b, Vec& y) {
            y = b;
            thread_local Vec part;
            part.assign(y.begin(), y.begin() + n2);
            pr->solve_field(part);
            std::copy(part.begin(), part.end(), y.begin());
        };
        return map;
    };
    prob.on_accept = [sh, &K, n2](const Vec& x, double p1) {
        sh->ref = make_reference(Vec(x.begin(), x.begin() + n2), K.grid());
        ModelParams mp = sh->base;
        set_param(mp, sh->p1name, p1);
        set_param(mp, sh->p2name, x[n2 + 2]);
        WaveState w;
        w.profile.assign(x.begin(), x.begin() + n2);
        w.speed = x[n2];
        std::vector<Cplx> null;
        hopf_test_function(w, x[n2 + 1], mp, K, sh->borders, sh->gopt, &null);
        double nn = 0.0;
        for (auto& z : null) nn += std::norm(z);
        nn = std::sqrt(nn);
        if (nn > 1e-12)
            for (int i = 0; i < n2; ++i) sh->borders.b[i] = sh->borders.q[i] = null[i] / nn;
    };
    prob.assess = [n2](const Vec& x, double, BranchPoint& bp) {
        bp.speed = x[n2];
        bp.period = 0.0;
        bp.critical = Cplx(0.0, x[n2 + 1]);  // store omega
        return x[n2 + 1];                    // test value: omega (sign change not expected)
    };

    Vec x0(n2 + 3);
    std::copy(hopf.state.begin(), hopf.state.begin() + n2 + 1, x0.begin());
    x0[n2 + 1] = hopf.omega;
    x0[n2 + 2] = get_param(p0, opts.param2);
    if (hopf.p2 != 0.0) x0[n2 + 2] = hopf.p2;
    double p1_0 = get_param(p0, opts.param1);
    if (hopf.p1 != 0.0 && opts.param1 == "tau") p1_0 = hopf.p1;

    // bed in the augmented system at fixed p1 before moving along the curve
    {
        Vec X(x0.size() + 1);
        std::copy(x0.begin(), x0.end(), X.begin());
        X[x0.size()] = p1_0;
        Vec tangent(X.size(), 0.0);
        tangent[x0.size()] = 1.0;
        ContinuationOptions copts = opts.cont;
        NewtonResult nr = correct(prob, X, X, tangent, 0.0, copts.corrector);
        if (!nr.converged)
            throw SolveError("continue_hopf_curve: initial correction failed (" + nr.message +
                             ")");
        std::copy(X.begin(), X.begin() + x0.size(), x0.begin());
        prob.on_accept(x0, p1_0);
    }

    ContinuationOptions copts = opts.cont;
    copts.detect = false;  // omega does not change sign along a Hopf curve
    Branch b = continue_branch(prob, x0, p1_0, initial_direction, copts);
    b.kind = "hopf-curve";
    b.parameter_name = opts.param1;
    return b;
}

Branch continue_fold_curve(const BifPoint& fold, const ModelParams& p0, const KernelSet& K,
                           const Codim1Options& opts, double initial_direction) {
    const Grid& grid = K.grid();
    const int n2 = 2 * grid.n_points;
    const double dx = grid.dx;
    DiffOp diff(grid);

    struct Shared {
        ReferenceProfile ref;
        BorderedState borders;
        ModelParams base;
        std::string p1name, p2name;
        GmresOptions gopt;
    };
    auto sh = std::make_shared<Shared>();
    sh->base = p0;
    sh->p1name = opts.param1;
    sh->p2name = opts.param2;
    sh->gopt = opts.bordered;
    Vec profile(fold.state.begin(), fold.state.begin() + n2);
    sh->ref = make_reference(profile, grid);
    sh->borders.br.assign(n2 + 1, 0.0);
    sh->borders.qr.assign(n2 + 1, 0.0);
    if ((int)fold.eigvec.size() >= n2) {
        double nn = 0.0;
        for (int i = 0; i < n2; ++i) nn += std::norm(fold.eigvec[i]);
        nn = std::sqrt(nn);
        for (int i = 0; i < n2; ++i)
            sh->borders.br[i] = sh->borders.qr[i] = fold.eigvec[i].real() / nn;
    } else {
        std::mt19937 rng(4321);
        std::normal_distribution<double> gauss;
        for (int i = 0; i <= n2; ++i) sh->borders.br[i] = gauss(rng);
        const double nn = norm2(sh->borders.br);
        scal(1.0 / nn, sh->borders.br);
        sh->borders.qr = sh->borders.br;
    }

    // x = [v; c; p2], active parameter p1
    ContinuationProblem prob;
    prob.dim_x = n2 + 2;
    prob.residual = [sh, &K, diff, dx, n2](const Vec& x, double p1, Vec& out) {
        ModelParams mp = sh->base;
        set_param(mp, sh->p1name, p1);
        set_param(mp, sh->p2name, x[n2 + 1]);
        WaveState w;
        w.profile.assign(x.begin(), x.begin() + n2);
        w.speed = x[n2];
        thread_local Vec f, dv;
        rhs_into(w.profile, mp, K, f);
        diff.apply_field(w.profile, dv);
        out.resize(n2 + 2);
        for (int i = 0; i < n2; ++i) out[i] = w.speed * dv[i] + f[i];
        double ph = 0.0;
        for (int i = 0; i < n2; ++i) ph += (w.profile[i] - sh->ref.u_hat[i]) * sh->ref.du_hat[i];
        out[n2] = dx * ph;
        out[n2 + 1] = fold_test_function(w, sh->ref, mp, K, sh->borders, sh->gopt);
    };
    auto res_copy = prob.residual;
    prob.make_jvp = [res_copy, fd = opts.fd_eps](const Vec& x, double p) {
        auto base = std::make_shared<Vec>(x);
        const double xn = norm2(x);
        return [res_copy, base, p, xn, fd](const Vec& h, Vec& out) {
            const double hn = norm2(h);
            if (hn == 0.0) {
                out.assign(base->size(), 0.0);
                return;
            }
            const double eps = fd * (1.0 + xn) / hn;
            Vec xp = *base, xm = *base, rp, rm;
            axpy(eps, h, xp);
            axpy(-eps, h, xm);
            res_copy(xp, p, rp);
            res_copy(xm, p, rm);
            out.resize(rp.size());
            for (std::size_t q = 0; q < rp.size(); ++q) out[q] = (rp[q] - rm[q]) / (2.0 * eps);
        };
    };
    prob.make_precond = [sh, &K, n2](const Vec& x, double) {
        auto pr = std::make_shared<TransportPreconditioner>(x[n2], sh->base.tau, K.grid());
        LinearMap map;
        map.dim = n2 + 2;
        map.apply = [pr, n2](const Vec& b, Vec& y) {
            y = b;
            thread_local Vec part;
            part.assign(y.begin(), y.begin() + n2);
            pr->solve_field(part);
            std::copy(part.begin(), part.end(), y.begin());
        };
        return map;
    };
    prob.on_accept = [sh, &K, n2](const Vec& x, double p1) {
        sh->ref = make_reference(Vec(x.begin(), x.begin() + n2), K.grid());
        ModelParams mp = sh->base;
        set_param(mp, sh->p1name, p1);
        set_param(mp, sh->p2name, x[n2 + 1]);
        WaveState w;
        w.profile.assign(x.begin(), x.begin() + n2);
        w.speed = x[n2];
        Vec null;
        fold_test_function(w, sh->ref, mp, K, sh->borders, sh->gopt, &null);
        const double nn = norm2(null);
        if (nn > 1e-12) {
            null.resize(n2 + 1);
            scal(1.0 / nn, null);
            sh->borders.br = null;
            sh->borders.qr = null;
        }
    };
    prob.assess = [n2](const Vec& x, double, BranchPoint& bp) {
        bp.speed = x[n2];
        return 0.0;
    };

    Vec x0(n2 + 2);
    std::copy(fold.state.begin(), fold.state.begin() + n2 + 1, x0.begin());
    x0[n2 + 1] = fold.p2 != 0.0 ? fold.p2 : get_param(p0, opts.param2);
    const double p1_0 = fold.p1;
    {
        Vec X(x0.size() + 1);
        std::copy(x0.begin(), x0.end(), X.begin());
        X[x0.size()] = p1_0;
        Vec tangent(X.size(), 0.0);
        tangent[x0.size()] = 1.0;
        NewtonResult nr = correct(prob, X, X, tangent, 0.0, opts.cont.corrector);
        if (!nr.converged)
            throw SolveError("continue_fold_curve: initial correction failed (" + nr.message +
                             ")");
        std::copy(X.begin(), X.begin() + x0.size(), x0.begin());
        prob.on_accept(x0, p1_0);
    }
    ContinuationOptions copts = opts.cont;
    copts.detect = false;
    Branch b = continue_branch(prob, x0, p1_0, initial_direction, copts);
    b.kind = "fold-curve";
    b.parameter_name = opts.param1;
    return b;
}

// ---------------------------------------------------------------------------
// Codim-2

BifPoint refine_bt(const Vec& wave_state, double p1, double p2, const Vec& null_guess,
                   const ModelParams& p0, const KernelSet& K, const Codim1Options& opts) {
    const Grid& grid = K.grid();
    const int n2 = 2 * grid.n_points;
    const double dx = grid.dx;
    DiffOp diff(grid);

    ReferenceProfile ref = make_reference(Vec(wave_state.begin(), wave_state.begin() + n2), grid);
    BorderedState borders;
    borders.br.assign(n2 + 1, 0.0);
    if ((int)null_guess.size() >= n2) {
        std::copy(null_guess.begin(), null_guess.begin() + std::min<std::size_t>(n2 + 1,
                  null_guess.size()), borders.br.begin());
    } else {
        std::mt19937 rng(777);
        std::normal_distribution<double> gauss;
        for (int i = 0; i <= n2; ++i) borders.br[i] = gauss(rng);
    }
    scal(1.0 / norm2(borders.br), borders.br);
    borders.qr = borders.br;

    GmresOptions gopt = opts.bordered;

    // doubly bordered Jordan-chain test: g1 singularity, g2 range condition
    auto g12 = [&](const WaveState& w, const ModelParams& mp, double* g1, double* g2) {
        Vec null1;
        *g1 = fold_test_function(w, ref, mp, K, borders, gopt, &null1);
        // second solve with the null vector as right-hand side
        auto lin = std::make_shared<Linearization>(w.profile, mp, K);
        Vec dv;
        diff.apply_field(w.profile, dv);
        const double c = w.speed;
        LinearMap sys;
        sys.dim = n2 + 2;
        sys.apply = [&](const Vec& x, Vec& y) {
            thread_local Vec hv, dh, jh;
            hv.assign(x.begin(), x.begin() + n2);
            lin->apply(hv, jh);
            diff.apply_field(hv, dh);
            y.resize(n2 + 2);
            double ph = 0.0, qx = 0.0;
            for (int i = 0; i < n2; ++i) {
                y[i] = jh[i] + c * dh[i] + x[n2] * dv[i] + x[n2 + 1] * borders.br[i];
                ph += hv[i] * ref.du_hat[i];
                qx += hv[i] * borders.qr[i];
            }
            y[n2] = dx * ph + x[n2 + 1] * borders.br[n2];
            y[n2 + 1] = qx + x[n2] * borders.qr[n2];
        };
        TransportPreconditioner pr(c, mp.tau, grid);
        LinearMap pc;
        pc.dim = n2 + 2;
        pc.apply = [&pr, n2](const Vec& bb, Vec& y) {
            y = bb;
            thread_local Vec part;
            part.assign(y.begin(), y.begin() + n2);
            pr.solve_field(part);
            std::copy(part.begin(), part.end(), y.begin());
        };
        Vec rhs(n2 + 2, 0.0), sol(n2 + 2, 0.0);
        std::copy(null1.begin(), null1.begin() + n2 + 1, rhs.begin());
        GmresResult r = gmres(sys, rhs, sol, &pc, gopt);
        if (!r.converged && r.rel_residual > 1e-6)
            throw SolveError("refine_bt: second bordered solve failed");
        *g2 = sol[n2 + 1];
    };

    // unknowns [v; c; p1; p2]
    Vec x(n2 + 3);
    std::copy(wave_state.begin(), wave_state.begin() + n2 + 1, x.begin());
    x[n2 + 1] = p1;
    x[n2 + 2] = p2;

    auto residual = [&](const Vec& xx, Vec& out) {
        ModelParams mp = p0;
        set_param(mp, opts.param1, xx[n2 + 1]);
        set_param(mp, opts.param2, xx[n2 + 2]);
        WaveState w;
        w.profile.assign(xx.begin(), xx.begin() + n2);
        w.speed = xx[n2];
        thread_local Vec f, dv;
        rhs_into(w.profile, mp, K, f);
        diff.apply_field(w.profile, dv);
        out.resize(n2 + 3);
        for (int i = 0; i < n2; ++i) out[i] = w.speed * dv[i] + f[i];
        double ph = 0.0;
        for (int i = 0; i < n2; ++i) ph += (w.profile[i] - ref.u_hat[i]) * ref.du_hat[i];
        out[n2] = dx * ph;
        double g1, g2;
        g12(w, mp, &g1, &g2);
        out[n2 + 1] = g1;
        out[n2 + 2] = g2;
    };
    JacobianFactory make_jvp = [&](const Vec& xx) {
        auto base = std::make_shared<Vec>(xx);
        const double xn = norm2(xx);
        return [&residual, base, xn, fd = opts.fd_eps](const Vec& h, Vec& out) {
            const double hn = norm2(h);
            if (hn == 0.0) {
                out.assign(base->size(), 0.0);
                return;
            }
            const double eps = fd * (1.0 + xn) / hn;
            Vec xp = *base, xm = *base, rp, rm;
            axpy(eps, h, xp);
            axpy(-eps, h, xm);
            residual(xp, rp);
            residual(xm, rm);
            out.resize(rp.size());
            for (std::size_t q = 0; q < rp.size(); ++q) out[q] = (rp[q] - rm[q]) / (2.0 * eps);
        };
    };
    TransportPreconditioner pr(x[n2], p0.tau, grid);
    LinearMap pc;
    pc.dim = n2 + 3;
    pc.apply = [&pr, n2](const Vec& b, Vec& y) {
        y = b;
        thread_local Vec part;
        part.assign(y.begin(), y.begin() + n2);
        pr.solve_field(part);
        std::copy(part.begin(), part.end(), y.begin());
    };
    NewtonOptions nopt;
    nopt.tol_sup = 1e-9;
    nopt.max_newton = 30;
    NewtonResult nr = newton_krylov(residual, make_jvp, &pc, x, nopt);

    BifPoint out;
    out.kind = BifPoint::Kind::BT;
    out.state.assign(x.begin(), x.begin() + n2 + 1);
    out.p1 = x[n2 + 1];
    out.p2 = x[n2 + 2];
    out.refined = nr.converged;
    out.detection_residual = nr.residual_sup;
    if (!nr.converged)
        throw SolveError("refine_bt: augmented Newton failed (" + nr.message + ")");
    return out;
}

BifPoint detect_codim2_bt(const Branch& hopf_curve, const ModelParams& p0, const KernelSet& K,
                          const Codim1Options& opts) {
    const int n2 = 2 * K.grid().n_points;
    // collect (omega^2, p1, p2) from the end of the curve where omega is smallest
    std::vector<std::array<double, 3>> pts;
    for (const auto& bp : hopf_curve.points) {
        const double omega = bp.state[n2 + 1];
        pts.push_back({omega * omega, bp.parameter, bp.state[n2 + 2]});
    }
    if (pts.size() < 3) throw std::invalid_argument("detect_codim2_bt: curve too short");
    std::sort(pts.begin(), pts.end(),
              [](const auto& a, const auto& b) { return a[0] < b[0]; });
    const int m = std::min<int>(4, (int)pts.size());
    // linear least squares p_i(omega^2) through the m smallest-omega points
    double sw = 0, sww = 0, sp1 = 0, sp2 = 0, swp1 = 0, swp2 = 0;
    for (int i = 0; i < m; ++i) {
        sw += pts[i][0];
        sww += pts[i][0] * pts[i][0];
        sp1 += pts[i][1];
        sp2 += pts[i][2];
        swp1 += pts[i][0] * pts[i][1];
        swp2 += pts[i][0] * pts[i][2];
    }
    const double det = m * sww - sw * sw;
    double p1_bt, p2_bt;
    if (std::abs(det) < 1e-300) {
        p1_bt = pts[0][1];
        p2_bt = pts[0][2];
    } else {
        const double a1 = (m * swp1 - sw * sp1) / det;   // slope
        const double b1 = (sp1 - a1 * sw) / m;           // intercept = value at omega^2 = 0
        const double a2 = (m * swp2 - sw * sp2) / det;
        const double b2 = (sp2 - a2 * sw) / m;
        p1_bt = b1;
        p2_bt = b2;
    }
    // refine from the smallest-omega branch point
    const BranchPoint* best = nullptr;
    double best_w = 1e300;
    for (const auto& bp : hopf_curve.points) {
        const double w = std::abs(bp.state[n2 + 1]);
        if (w < best_w) {
            best_w = w;
            best = &bp;
        }
    }
    Vec wave_state(best->state.begin(), best->state.begin() + n2 + 1);
    Vec null_guess;  // leave empty: refine_bt falls back to a generic border
    BifPoint bt = refine_bt(wave_state, p1_bt, p2_bt, null_guess, p0, K, opts);
    return bt;
}

BifPoint codim1_fold_point(const Branch& curve) {
    const auto& pts = curve.points;
    if (pts.size() < 3) throw std::invalid_argument("codim1_fold_point: curve too short");
    // find the extremum of the active parameter along the curve
    std::size_t k = 0;
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
        const double dl = pts[i].parameter - pts[i - 1].parameter;
        const double dr = pts[i + 1].parameter - pts[i].parameter;
        if (dl * dr < 0.0) {
            k = i;
            break;
        }
    }
    if (k == 0) throw SolveError("codim1_fold_point: no turning point on the curve");
    // parabola through (s, p1) at k-1, k, k+1
    const double s0 = pts[k - 1].arclength, s1 = pts[k].arclength, s2 = pts[k + 1].arclength;
    const double f0 = pts[k - 1].parameter, f1 = pts[k].parameter, f2 = pts[k + 1].parameter;
    const double d1 = (f1 - f0) / (s1 - s0);
    const double d2 = (f2 - f1) / (s2 - s1);
    const double a = (d2 - d1) / (s2 - s0);
    const double sv = 0.5 * (s0 + s1) - d1 / (2.0 * a);
    auto interp = [&](double sq, double g0, double g1v, double g2v) {
        // quadratic Lagrange interpolation
        const double l0 = (sq - s1) * (sq - s2) / ((s0 - s1) * (s0 - s2));
        const double l1 = (sq - s0) * (sq - s2) / ((s1 - s0) * (s1 - s2));
        const double l2 = (sq - s0) * (sq - s1) / ((s2 - s0) * (s2 - s1));
        return l0 * g0 + l1 * g1v + l2 * g2v;
    };
    BifPoint out;
    out.kind = BifPoint::Kind::Fold;
    out.p1 = interp(sv, f0, f1, f2);
    const int np2 = (int)pts[k].state.size() - 1;  // p2 stored as the last state entry
    out.p2 = interp(sv, pts[k - 1].state[np2], pts[k].state[np2], pts[k + 1].state[np2]);
    out.state = pts[k].state;
    out.refined = false;
    return out;
}

// ---------------------------------------------------------------------------
// Branch switching & snaking

MtwOrbit hopf_branch_switch(const BifPoint& hopf, const ModelParams& p0, const KernelSet& K,
                            const BranchSwitchOptions& opts) {
    if (hopf.kind != BifPoint::Kind::Hopf)
        throw std::invalid_argument("hopf_branch_switch: need a Hopf point");
    const Grid& grid = K.grid();
    const int n2 = 2 * grid.n_points;
    WaveState wave;
    wave.profile.assign(hopf.state.begin(), hopf.state.begin() + n2);
    wave.speed = hopf.state[n2];

    EigPair pair;
    pair.value = Cplx(0.0, hopf.omega);
    pair.vector = hopf.eigvec;
    const double sup = norm_inf(wave.profile);
    double amplitude = opts.amplitude_rel * std::max(1e-6, sup);

    ReferenceProfile ref = make_reference(wave.profile, grid);
    std::string last_err;
    for (int trial = 0; trial <= opts.max_halvings; ++trial) {
        MtwOrbit guess = hopf_predictor(wave, pair, amplitude, opts.form, opts.n_slices, grid);
        try {
            if (opts.form == MtwForm::BoxOde || opts.form == MtwForm::BoxDae)
                return solve_mtw_box(guess, opts.form, ref, p0, K, opts.solve);
            return solve_mtw_shooting(guess, opts.form, ref, p0, K, opts.solve);
        } catch (const SolveError& e) {
            last_err = e.what();
            amplitude *= 0.5;
        }
    }
    throw SolveError("hopf_branch_switch: predictor failed after amplitude halvings (" +
                     last_err + ")");
}

SnakingScan snaking_scan(const Branch& mtw_branch, const ModelParams& p0, const KernelSet& K,
                         const std::string& parameter) {
    (void)parameter;
    SnakingScan scan;
    const Grid& grid = K.grid();
    const int n = grid.n_points;
    const bool box = mtw_branch.kind == "mtw-box";
    const MtwForm form = box ? MtwForm::BoxOde : MtwForm::ShootOde;

    const auto& pts = mtw_branch.points;
    scan.l1_norms.resize(pts.size());
    scan.tail_extents.resize(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        int M = 1;
        if (box) M = (int)((pts[i].state.size() - 2) / (2 * (std::size_t)n));
        MtwOrbit o = unpack_orbit(pts[i].state, form, n, M);
        scan.l1_norms[i] = orbit_l1_norm(o, p0, K);
        // tail extent of the section profile: width where |u - u(-L)| exceeds
        // 5 percent of the maximal deviation
        const Vec& s = o.slices[0];
        const double base = s[0];
        double dev = 0.0;
        for (int q = 0; q < n; ++q) dev = std::max(dev, std::abs(s[q] - base));
        int cnt = 0;
        for (int q = 0; q < n; ++q)
            if (std::abs(s[q] - base) > 0.05 * dev) ++cnt;
        scan.tail_extents[i] = cnt * grid.dx;
    }
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
        const double dl = pts[i].parameter - pts[i - 1].parameter;
        const double dr = pts[i + 1].parameter - pts[i].parameter;
        if (dl * dr < 0.0) {
            scan.fold_indices.push_back(i);
            scan.fold_parameters.push_back(pts[i].parameter);
            int M = 1;
            if (box) M = (int)((pts[i].state.size() - 2) / (2 * (std::size_t)n));
            MtwOrbit o = unpack_orbit(pts[i].state, form, n, M);
            scan.fold_sections.push_back(Vec(o.slices[0].begin(), o.slices[0].begin() + n));
        }
    }
    return scan;
}

Vec resample_profile(const Vec& profile, const Grid& from, const Grid& to) {
    const int nf = from.n_points, nt = to.n_points;
    const int ncomp = (int)profile.size() / nf;
    Vec out((std::size_t)ncomp * nt);
    for (int c = 0; c < ncomp; ++c) {
        const double* s = profile.data() + (std::size_t)c * nf;
        double* o = out.data() + (std::size_t)c * nt;
        for (int i = 0; i < nt; ++i) {
            const double pos = (to.nodes[i] + from.half_length) / from.dx;
            if (pos <= 0.0) {
                o[i] = s[0];
                continue;
            }
            if (pos >= nf - 1) {
                o[i] = s[nf - 1];
                continue;
            }
            const int j = (int)std::floor(pos);
            const double w = pos - j;
            auto at = [&](int idx) { return s[std::clamp(idx, 0, nf - 1)]; };
            const double pm1 = at(j - 1), pv0 = at(j), pv1 = at(j + 1), pv2 = at(j + 2);
            o[i] = pv0 + 0.5 * w * (pv1 - pm1 +
                   w * (2 * pm1 - 5 * pv0 + 4 * pv1 - pv2 + w * (3 * (pv0 - pv1) + pv2 - pm1)));
        }
    }
    return out;
}

}  // namespace nfwave
