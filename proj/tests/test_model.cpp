#include <doctest.h>

#include "testutil.hpp"

using namespace nfwave;
using nftest::dense_convolve;
using nftest::random_vec;

TEST_CASE("sigmoid values and saturation") {
    CHECK(sigmoid(0.0, 50.0) == doctest::Approx(0.5));
    CHECK(sigmoid(0.1, 50.0) == doctest::Approx(0.9933071490757153).epsilon(1e-12));
    CHECK(sigmoid(-0.1, 50.0) == doctest::Approx(1.0 - 0.9933071490757153).epsilon(1e-10));
    // no overflow for huge arguments
    CHECK(sigmoid(1e6, 50.0) == doctest::Approx(1.0));
    CHECK(sigmoid(-1e6, 50.0) == doctest::Approx(0.0));
    CHECK(std::isfinite(sigmoid(-1e308, 2.0)));
    // strictly increasing
    double prev = -1.0;
    for (double x = -0.5; x <= 0.5; x += 0.01) {
        const double s = sigmoid(x, 50.0);
        CHECK(s > prev);
        CHECK(s > 0.0);
        CHECK(s < 1.0);
        prev = s;
    }
}

TEST_CASE("sigmoid derivatives") {
    CHECK(sigmoid_deriv(0.0, 50.0, 1) == doctest::Approx(12.5));
    CHECK(sigmoid_deriv(0.0, 50.0, 2) == doctest::Approx(0.0));
    // centered finite difference of sigmoid at I = 0.05
    const double eps = 1e-6;
    const double fd = (sigmoid(0.05 + eps, 50.0) - sigmoid(0.05 - eps, 50.0)) / (2 * eps);
    CHECK(sigmoid_deriv(0.05, 50.0, 1) == doctest::Approx(fd).epsilon(1e-6));
    const double fd2 =
        (sigmoid_deriv(0.05 + eps, 50.0, 1) - sigmoid_deriv(0.05 - eps, 50.0, 1)) / (2 * eps);
    CHECK(sigmoid_deriv(0.05, 50.0, 2) == doctest::Approx(fd2).epsilon(1e-5));
}

TEST_CASE("kernels: normalization, symmetry, peak value") {
    ModelParams p;
    Grid g(256, 250.0);
    KernelSet K(p, g);
    // peak of the continuous gaussian before renormalization
    CHECK(1.0 / (10.0 * std::sqrt(2.0 * M_PI)) == doctest::Approx(0.0398942280401433).epsilon(1e-10));
    for (const Vec* k : {&K.k_e(), &K.k_i()}) {
        double mass = 0.0;
        for (double v : *k) mass += v;
        CHECK(std::abs(mass * g.dx - 1.0) < 1e-10);
        const int m = (int)k->size();
        for (int i = 0; i < m; ++i) CHECK((*k)[i] == (*k)[m - 1 - i]);
    }
}

TEST_CASE("kernel width guard") {
    ModelParams p;
    p.sigma_e = 200.0;  // erfc(L/(sigma sqrt 2)) way above 1e-12
    Grid g(128, 250.0);
    CHECK_THROWS_AS(KernelSet(p, g), std::invalid_argument);
}

TEST_CASE("convolution: constant, delta, dense oracle") {
    ModelParams p;
    Grid g(256, 250.0);
    KernelSet K(p, g);
    const int n = g.n_points;

    Vec ones(n, 1.0), out;
    K.convolve_e(ones, out);
    // interior nodes see the full kernel mass
    for (int i = n / 4; i < 3 * n / 4; ++i) CHECK(std::abs(out[i] - 1.0) < 1e-10);

    // random input against the O(N^2) quadrature oracle
    Vec f = random_vec(n);
    K.convolve_i(f, out);
    Vec oracle = dense_convolve(K.k_i(), f, g.dx);
    double err = 0.0;
    for (int i = 0; i < n; ++i) err = std::max(err, std::abs(out[i] - oracle[i]));
    CHECK(err < 1e-10);

    // linearity on random probes
    Vec a = random_vec(n), b = random_vec(n), oa, ob, oab;
    Vec ab(n);
    for (int i = 0; i < n; ++i) ab[i] = 2.0 * a[i] - 3.0 * b[i];
    K.convolve_e(a, oa);
    K.convolve_e(b, ob);
    K.convolve_e(ab, oab);
    for (int i = 0; i < n; ++i)
        CHECK(oab[i] == doctest::Approx(2.0 * oa[i] - 3.0 * ob[i]).epsilon(1e-12));
}

TEST_CASE("d_operator: constants, ramp, Richardson order") {
    ModelParams p;
    SUBCASE("exactness") {
        Grid g(128, 100.0);
        DiffOp d(g);
        Vec c(128, 3.14), out;
        d.apply_component(c, out);
        for (double v : out) CHECK(v == 0.0);
        Vec ramp(g.nodes), dr;
        d.apply_component(ramp, dr);
        for (int i = 1; i < 127; ++i) CHECK(dr[i] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(dr[0] == 0.0);
        CHECK(dr[127] == 0.0);
    }
    SUBCASE("second order in the interior") {
        auto max_err = [&](int n) {
            Grid g(n, 100.0);
            DiffOp d(g);
            Vec f(n), out;
            for (int i = 0; i < n; ++i) f[i] = std::sin(M_PI * g.nodes[i] / 100.0);
            d.apply_component(f, out);
            double err = 0.0;
            for (int i = n / 4; i < 3 * n / 4; ++i) {
                const double exact = M_PI / 100.0 * std::cos(M_PI * g.nodes[i] / 100.0);
                err = std::max(err, std::abs(out[i] - exact));
            }
            return err;
        };
        const double e1 = max_err(201);
        const double e2 = max_err(401);
        CHECK(e1 / e2 > 3.5);
        CHECK(e1 / e2 < 4.5);
    }
}

TEST_CASE("rhs: equilibrium, equivariance, dense oracle") {
    ModelParams p;
    Grid g(256, 250.0);
    KernelSet K(p, g);
    const int n = g.n_points;

    auto eqs = clamped_equilibria(p);
    REQUIRE(eqs.size() == 3);
    Field state(n);
    for (int i = 0; i < n; ++i) {
        state.u(i) = eqs[0].u;
        state.v(i) = eqs[0].v;
    }
    Field f = rhs(state, p, K);
    CHECK(norm_inf(f.data) < 1e-9);

    // translation equivariance on a pulse far from the boundary
    Field pulse(n);
    for (int i = 0; i < n; ++i) {
        const double x = g.nodes[i];
        pulse.u(i) = eqs[0].u + 0.5 * std::exp(-(x * x) / 200.0);
        pulse.v(i) = eqs[0].v + 0.3 * std::exp(-(x * x) / 300.0);
    }
    Field fp = rhs(pulse, p, K);
    const int shift = 5;
    Field shifted(n);
    for (int i = 0; i < n; ++i) {
        const int j = (i - shift + n) % n;
        shifted.u(i) = pulse.u(j);
        shifted.v(i) = pulse.v(j);
    }
    Field fs = rhs(shifted, p, K);
    double err = 0.0;
    for (int i = n / 4; i < 3 * n / 4; ++i) {
        err = std::max(err, std::abs(fs.u(i) - fp.u((i - shift + n) % n)));
        err = std::max(err, std::abs(fs.v(i) - fp.v((i - shift + n) % n)));
    }
    CHECK(err < 1e-10);

    // dense quadrature oracle on a step-profile input
    Field step(n);
    for (int i = 0; i < n; ++i) {
        step.u(i) = g.nodes[i] < 0 ? 0.05 : 0.6;
        step.v(i) = g.nodes[i] < 0 ? 0.01 : 0.3;
    }
    Vec su(step.data.begin(), step.data.begin() + n);
    Vec sv(step.data.begin() + n, step.data.end());
    Vec cu = dense_convolve(K.k_e(), su, g.dx);
    Vec cv = dense_convolve(K.k_i(), sv, g.dx);
    Field fstep = rhs(step, p, K);
    for (int i = 0; i < n; ++i) {
        const double fu = -step.u(i) + sigmoid(p.a_ee * cu[i] - p.a_ei * cv[i] - p.theta_e, p.beta);
        const double fv =
            (-step.v(i) + sigmoid(p.a_ie * cu[i] - p.a_ii * cv[i] - p.theta_i, p.beta)) / p.tau;
        CHECK(std::abs(fstep.u(i) - fu) < 1e-9);
        CHECK(std::abs(fstep.v(i) - fv) < 1e-9);
    }
}

TEST_CASE("jacobian_apply: linearity, finite differences, clamped block") {
    ModelParams p;
    Grid g(200, 250.0);
    KernelSet K(p, g);
    const int n = g.n_points;

    Field state(n);
    for (int i = 0; i < n; ++i) {
        const double x = g.nodes[i];
        state.u(i) = 0.3 * std::exp(-x * x / 500.0) + 0.01;
        state.v(i) = 0.2 * std::exp(-x * x / 800.0) + 0.005;
    }
    Field zero(n);
    Field jz = jacobian_apply(state, zero, p, K);
    CHECK(norm2(jz.data) == 0.0);

    // 20 random probes against centered differences of rhs
    for (int probe = 0; probe < 20; ++probe) {
        Field h(n, random_vec(2 * n, 0.5));
        Field jh = jacobian_apply(state, h, p, K);
        const double eps = 1e-5;
        Field sp(n), sm(n);
        for (std::size_t q = 0; q < state.data.size(); ++q) {
            sp.data[q] = state.data[q] + eps * h.data[q];
            sm.data[q] = state.data[q] - eps * h.data[q];
        }
        Field fp = rhs(sp, p, K), fm = rhs(sm, p, K);
        double num = 0.0, den = 0.0;
        for (std::size_t q = 0; q < jh.data.size(); ++q) {
            const double fd = (fp.data[q] - fm.data[q]) / (2.0 * eps);
            num += (jh.data[q] - fd) * (jh.data[q] - fd);
            den += fd * fd;
        }
        CHECK(std::sqrt(num / den) < 1e-6);
    }

    // at a constant state the jacobian acts on constants as the clamped 2x2 block
    auto eqs = clamped_equilibria(p);
    REQUIRE(!eqs.empty());
    const auto& eq = eqs[2];
    Field cs(n), ch(n);
    for (int i = 0; i < n; ++i) {
        cs.u(i) = eq.u;
        cs.v(i) = eq.v;
        ch.u(i) = 0.7;
        ch.v(i) = -0.4;
    }
    Field jc = jacobian_apply(cs, ch, p, K);
    const double se = sigmoid_deriv(p.a_ee * eq.u - p.a_ei * eq.v - p.theta_e, p.beta, 1);
    const double si = sigmoid_deriv(p.a_ie * eq.u - p.a_ii * eq.v - p.theta_i, p.beta, 1);
    const double expect_u = -0.7 + se * (p.a_ee * 0.7 - p.a_ei * (-0.4));
    const double expect_v = (-(-0.4) + si * (p.a_ie * 0.7 - p.a_ii * (-0.4))) / p.tau;
    for (int i = n / 4; i < 3 * n / 4; ++i) {
        CHECK(jc.u(i) == doctest::Approx(expect_u).epsilon(1e-8));
        CHECK(jc.v(i) == doctest::Approx(expect_v).epsilon(1e-8));
    }
}

TEST_CASE("clamped equilibria at the reference parameters") {
    ModelParams p;  // theta_i = 0.3 defaults
    auto eqs = clamped_equilibria(p);
    REQUIRE(eqs.size() == 3);
    CHECK(eqs[0].u < eqs[1].u);
    CHECK(eqs[1].u < eqs[2].u);
    // golden values from a 50x50-seeded dense 2d Newton (tolerance 1e-12)
    CHECK(eqs[0].u == doctest::Approx(0.002850211376473).epsilon(1e-10));
    CHECK(eqs[0].v == doctest::Approx(0.000000368162570).epsilon(1e-6));
    CHECK(eqs[1].u == doctest::Approx(0.067514349088726).epsilon(1e-10));
    CHECK(eqs[2].u == doctest::Approx(0.227024457492105).epsilon(1e-10));
    CHECK(eqs[2].v == doctest::Approx(0.131528250581067).epsilon(1e-10));
    // residuals at 1e-12
    for (const auto& e : eqs) {
        const double f1 = -e.u + sigmoid(p.a_ee * e.u - p.a_ei * e.v - p.theta_e, p.beta);
        const double f2 = -e.v + sigmoid(p.a_ie * e.u - p.a_ii * e.v - p.theta_i, p.beta);
        CHECK(std::abs(f1) < 1e-12);
        CHECK(std::abs(f2) < 1e-12);
    }
    // at theta_i = 0.3869 there are also three
    ModelParams p2 = p;
    p2.theta_i = 0.3869;
    CHECK(clamped_equilibria(p2).size() == 3);
}

TEST_CASE("parameter validation") {
    ModelParams p;
    p.tau = -1.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = ModelParams{};
    p.sigma_i = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = ModelParams{};
    p.a_ee = -0.1;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
