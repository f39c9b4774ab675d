#include <doctest.h>
#include <map>

#include "testutil.hpp"

using namespace nfwave;
using nftest::bump_profile;
using nftest::random_vec;

TEST_CASE("integrate: linear ODE against the exact exponential") {
    // y' = A y with A = [[-1, 4], [0, -2]]; exact y1 = 5 e^{-t} - 4 e^{-2t}, y2 = e^{-2t}
    ImplicitProblem prob;
    prob.dim = 2;
    prob.rhs = [](double, const Vec& y, Vec& f) {
        f.resize(2);
        f[0] = -y[0] + 4.0 * y[1];
        f[1] = -2.0 * y[1];
    };
    prob.make_jvp = [](double, const Vec&) {
        return [](const Vec& h, Vec& f) {
            f.resize(2);
            f[0] = -h[0] + 4.0 * h[1];
            f[1] = -2.0 * h[1];
        };
    };
    StepperOptions opts;
    opts.rtol = 1e-10;
    opts.atol = 1e-10;
    Trajectory tr = integrate(prob, Vec{1.0, 1.0}, 0.0, 2.0, opts);
    const double t = 2.0;
    CHECK(tr.states.back()[0] ==
          doctest::Approx(5.0 * std::exp(-t) - 4.0 * std::exp(-2 * t)).epsilon(1e-8));
    CHECK(tr.states.back()[1] == doctest::Approx(std::exp(-2 * t)).epsilon(1e-8));
    CHECK(tr.stats.n_accepted > 0);
    Vec mid = tr.at(1.3);
    CHECK(mid[0] == doctest::Approx(5.0 * std::exp(-1.3) - 4.0 * std::exp(-2.6)).epsilon(1e-7));
}

TEST_CASE("integrate: index-1 DAE with mass diag(1,0)") {
    // y1' = -y1, 0 = y1 - y2
    ImplicitProblem prob;
    prob.dim = 2;
    prob.algebraic = {0, 1};
    prob.rhs = [](double, const Vec& y, Vec& f) {
        f.resize(2);
        f[0] = -y[0];
        f[1] = y[0] - y[1];
    };
    prob.make_jvp = [](double, const Vec&) {
        return [](const Vec& h, Vec& f) {
            f.resize(2);
            f[0] = -h[0];
            f[1] = h[0] - h[1];
        };
    };
    StepperOptions opts;
    opts.rtol = 1e-9;
    opts.atol = 1e-9;
    Trajectory tr = integrate(prob, Vec{1.0, 1.0}, 0.0, 3.0, opts);
    CHECK(tr.states.back()[0] == doctest::Approx(std::exp(-3.0)).epsilon(1e-7));
    CHECK(tr.states.back()[1] == doctest::Approx(std::exp(-3.0)).epsilon(1e-7));
    for (const auto& y : tr.states) CHECK(std::abs(y[0] - y[1]) < 1e-8);
}

TEST_CASE("simulate_cauchy holds a clamped equilibrium") {
    ModelParams p;
    Grid g(128, 250.0);
    KernelSet K(p, g);
    auto eqs = clamped_equilibria(p);
    REQUIRE(eqs.size() == 3);
    Field f0(g.n_points);
    for (int i = 0; i < g.n_points; ++i) {
        f0.u(i) = eqs[0].u;
        f0.v(i) = eqs[0].v;
    }
    StepperOptions opts;
    opts.h0 = 0.1;
    Trajectory tr = simulate_cauchy(f0, 0.0, 50.0, p, K, opts);
    double drift = 0.0;
    for (int i = 0; i < g.n_points; ++i) {
        drift = std::max(drift, std::abs(tr.states.back()[i] - eqs[0].u));
        drift = std::max(drift, std::abs(tr.states.back()[g.n_points + i] - eqs[0].v));
    }
    CHECK(drift < 1e-8);
}

TEST_CASE("wave frame with c = 0 reproduces the lab frame") {
    ModelParams p;
    Grid g(96, 150.0);
    KernelSet K(p, g);
    Field f0(g.n_points, bump_profile(g, 0.0, 18.0, 0.4, 0.2));
    StepperOptions opts;
    opts.rtol = 1e-7;
    opts.atol = 1e-7;
    Trajectory a = simulate_cauchy(f0, 0.0, 2.0, p, K, opts);
    Trajectory b = simulate_wave_frame(f0, 0.0, 0.0, 2.0, p, K, opts);
    REQUIRE(a.times.size() == b.times.size());
    for (std::size_t k = 0; k < a.times.size(); ++k) {
        CHECK(a.times[k] == b.times[k]);
        for (std::size_t i = 0; i < a.states[k].size(); ++i)
            CHECK(a.states[k][i] == b.states[k][i]);
    }
}

TEST_CASE("self convergence under tolerance halving") {
    ModelParams p;
    p.theta_i = 0.3869;
    p.tau = 1.3;
    Grid g(128, 150.0);
    KernelSet K(p, g);
    auto eqs = clamped_equilibria(p);
    Vec prof = bump_profile(g, -40.0, 15.0, 0.6, 0.3);
    for (int i = 0; i < g.n_points; ++i) {
        prof[i] += eqs[0].u;
        prof[g.n_points + i] += eqs[0].v;
    }
    Field f0(g.n_points, prof);
    auto run = [&](double tol) {
        StepperOptions o;
        o.rtol = tol;
        o.atol = tol;
        return simulate_cauchy(f0, 0.0, 10.0, p, K, o);
    };
    Trajectory loose = run(1e-6);
    Trajectory tight = run(5e-7);
    double diff = 0.0;
    for (std::size_t i = 0; i < loose.states.back().size(); ++i)
        diff = std::max(diff, std::abs(loose.states.back()[i] - tight.states.back()[i]));
    CHECK(diff < 10.0 * 1e-6);
}

namespace {

// a developed rightward traveling pulse at theta_i = 0.3869, tau = 1.3
// (nucleated once from a biased bump, cached per grid size)
const Vec& developed_pulse(const ModelParams& p, const Grid& g, const KernelSet& K) {
    static std::map<int, Vec> cache;
    Vec& cached = cache[g.n_points];
    if (!cached.empty()) return cached;
    auto eqs = clamped_equilibria(p);
    const int n = g.n_points;
    Vec prof = bump_profile(g, -60.0, 15.0, 0.7, 0.0);
    Vec vpart = bump_profile(g, -72.0, 15.0, 0.0, 0.5);
    axpy(1.0, vpart, prof);
    for (int i = 0; i < n; ++i) {
        prof[i] += eqs[0].u;
        prof[n + i] += eqs[0].v;
    }
    StepperOptions opts;
    opts.rtol = 1e-8;
    opts.atol = 1e-8;
    Trajectory tr = simulate_cauchy(Field(n, prof), 0.0, 6.0, p, K, opts);
    cached = tr.states.back();  // pulse sits around x ~ 70, moving right
    return cached;
}

ModelParams pulse_params() {
    ModelParams p;
    p.theta_i = 0.3869;
    p.tau = 1.3;
    return p;
}

}  // namespace

TEST_CASE("freezing DAE: constraint drift and gamma = integral of lambda") {
    ModelParams p = pulse_params();
    Grid g(192, 200.0);
    KernelSet K(p, g);
    Vec prof = developed_pulse(p, g, K);
    ReferenceProfile ref = make_reference(prof, g);
    FrozenState fs0;
    fs0.profile = prof;
    StepperOptions opts;
    opts.rtol = 1e-8;
    opts.atol = 1e-8;
    Trajectory tr = simulate_freezing_dae(fs0, ref, 0.0, 5.0, p, K, opts);
    const int n2 = 2 * g.n_points;

    double drift = 0.0;
    for (const auto& y : tr.states) {
        double ph = 0.0;
        for (int i = 0; i < n2; ++i) ph += (y[i] - ref.u_hat[i]) * ref.du_hat[i];
        drift = std::max(drift, std::abs(ph * g.dx));
    }
    CHECK(drift < 1e-8);

    // fine-sampled quadrature of the interpolated lambda
    const int m = 4000;
    double acc = 0.0;
    Vec tmp;
    double prev = 0.0;
    for (int k = 0; k <= m; ++k) {
        const double t = tr.t1() * k / m;
        tr.at(t, tmp);
        const double lam = tmp[n2 + 1];
        if (k > 0) acc += 0.5 * (tr.t1() / m) * (lam + prev);
        prev = lam;
    }
    CHECK(std::abs(tr.states.back()[n2] - acc) < 5e-5);
}

TEST_CASE("recover_phase matches the freezing DAE gamma on a pulse run") {
    // the two routes discretize the translation differently, so they agree
    // up to an O(dx^2) rate mismatch; at this resolution that is a few 1e-3
    // of the accumulated phase (they coincide under grid refinement)
    ModelParams p = pulse_params();
    Grid g(384, 200.0);
    KernelSet K(p, g);
    Vec prof = developed_pulse(p, g, K);
    ReferenceProfile ref = make_reference(prof, g);
    StepperOptions opts;
    opts.rtol = 1e-8;
    opts.atol = 1e-8;

    Trajectory lab = simulate_cauchy(Field(g.n_points, prof), 0.0, 2.0, p, K, opts);
    PhaseTrace ph = recover_phase(lab, ref, p, K, opts);
    CHECK(ph.gamma.front() == 0.0);
    // the pulse travels rightward at roughly its wave speed
    CHECK(ph.gamma.back() > 10.0);

    FrozenState fs0;
    fs0.profile = prof;
    Trajectory frozen = simulate_freezing_dae(fs0, ref, 0.0, 2.0, p, K, opts);
    const int n2 = 2 * g.n_points;
    const double dae_gamma = frozen.states.back()[n2];
    CHECK(std::abs(dae_gamma - ph.gamma.back()) / std::abs(dae_gamma) < 5e-3);
}

TEST_CASE("recover_phase trivial cases") {
    ModelParams p;
    p.theta_i = 0.3869;
    p.tau = 1.3;
    Grid g(160, 200.0);
    KernelSet K(p, g);
    const int n = g.n_points;
    auto eqs = clamped_equilibria(p);

    SUBCASE("near-stationary trajectory keeps gamma near zero") {
        // a constant state has d(u) = 0 (denominator vanishes), so use a weak
        // bump on the equilibrium; its drift over the window is tiny
        Vec prof(2 * (std::size_t)n);
        for (int i = 0; i < n; ++i) {
            prof[i] = eqs[0].u;
            prof[n + i] = eqs[0].v;
        }
        Vec weak = bump_profile(g, 10.0, 20.0, 1e-3, 5e-4);
        for (std::size_t q = 0; q < prof.size(); ++q) prof[q] += weak[q];
        ReferenceProfile ref = make_reference(prof, g);
        Trajectory tr;
        Vec f;
        rhs_into(prof, p, K, f);
        for (int k = 0; k < 5; ++k) {
            tr.times.push_back(k * 0.25);
            tr.states.push_back(prof);
            tr.derivs.push_back(f);
        }
        // g(0,0) is tiny but nonzero in general; assert gamma stays small
        PhaseTrace ph = recover_phase(tr, ref, p, K);
        CHECK(std::abs(ph.gamma.back()) < 2e-2);
    }

    SUBCASE("shift helper: zero shift identity and translated bump") {
        Vec prof = bump_profile(g, -30.0, 12.0, 0.5, 0.3);
        for (int i = 0; i < n; ++i) {
            prof[i] += eqs[0].u;
            prof[n + i] += eqs[0].v;
        }
        ReferenceProfile ref = make_reference(prof, g);
        Vec sh;
        shift_samples(ref.du_hat, g, 0.0, sh);
        for (int i = 2; i < n - 2; ++i) {
            CHECK(sh[i] == doctest::Approx(ref.du_hat[i]).epsilon(1e-12));
            CHECK(sh[n + i] == doctest::Approx(ref.du_hat[n + i]).epsilon(1e-12));
        }
        // cubic interpolation error scales with (dx/width)^4
        Vec sh2;
        shift_samples(prof, g, 7.0, sh2);
        Vec direct = bump_profile(g, -30.0 + 7.0, 12.0, 0.5, 0.3);
        for (int i = 0; i < n; ++i) direct[i] += eqs[0].u;
        double err = 0.0;
        for (int i = n / 4; i < 3 * n / 4; ++i) err = std::max(err, std::abs(sh2[i] - direct[i]));
        const double expected = std::pow(g.dx / 12.0, 4) * 0.5;
        CHECK(err < 30.0 * expected);
    }
}

TEST_CASE("projector: annihilation, idempotence, fixed subspace") {
    ModelParams p;
    Grid g(128, 150.0);
    KernelSet K(p, g);
    DiffOp diff(g);
    Vec prof = bump_profile(g, 0.0, 14.0, 0.5, 0.3);
    WaveState w{prof, 2.0};
    ReferenceProfile ref = make_reference(prof, g);
    Vec dv;
    diff.apply_field(prof, dv);

    Vec pd = projector_apply(dv, w, ref, g);
    CHECK(norm2(pd) < 1e-12 * std::max(1.0, norm2(dv)));

    for (int probe = 0; probe < 10; ++probe) {
        Vec x = random_vec(2 * g.n_points);
        Vec px = projector_apply(x, w, ref, g);
        Vec ppx = projector_apply(px, w, ref, g);
        double d = 0.0;
        for (std::size_t i = 0; i < px.size(); ++i) d = std::max(d, std::abs(ppx[i] - px[i]));
        CHECK(d < 1e-12 * std::max(1.0, norm_inf(px)));
        CHECK(std::abs(dot(px, ref.du_hat)) < 1e-10 * norm2(px) * norm2(ref.du_hat));
    }

    Vec y = random_vec(2 * g.n_points);
    axpy(-dot(y, ref.du_hat) / dot(ref.du_hat, ref.du_hat), ref.du_hat, y);
    Vec py = projector_apply(y, w, ref, g);
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(py[i] == doctest::Approx(y[i]).epsilon(1e-10));
}

TEST_CASE("mu_of_v: zero at zero and formula consistency") {
    ModelParams p;
    Grid g(128, 150.0);
    KernelSet K(p, g);
    DiffOp diff(g);
    Vec prof = bump_profile(g, 0.0, 14.0, 0.5, 0.3);
    WaveState w{prof, 1.7};
    ReferenceProfile ref = make_reference(prof, g);

    Vec zero(2 * (std::size_t)g.n_points, 0.0);
    CHECK(mu_of_v(zero, w, ref, p, K) == doctest::Approx(0.0));

    Vec v = random_vec(2 * g.n_points, 0.01);
    const double mu = mu_of_v(v, w, ref, p, K);
    Vec full = w.profile;
    axpy(1.0, v, full);
    Vec f_full, f_base, dvv, dvbar;
    rhs_into(full, p, K, f_full);
    rhs_into(w.profile, p, K, f_base);
    diff.apply_field(v, dvv);
    diff.apply_field(w.profile, dvbar);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        num += ref.du_hat[i] * (w.speed * dvv[i] + f_full[i] - f_base[i]);
        den += ref.du_hat[i] * (dvbar[i] + dvv[i]);
    }
    CHECK(mu == doctest::Approx(-num / den).epsilon(1e-12));
}
