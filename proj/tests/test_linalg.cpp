#include <doctest.h>

#include <Eigen/Dense>

#include "testutil.hpp"

using namespace nfwave;
using nftest::random_vec;

namespace {

LinearMap dense_map(const Eigen::MatrixXd& A) {
    LinearMap op;
    op.dim = (int)A.rows();
    op.apply = [A](const Vec& x, Vec& y) {
        Eigen::Map<const Eigen::VectorXd> xm(x.data(), x.size());
        Eigen::VectorXd r = A * xm;
        y.assign(r.data(), r.data() + r.size());
    };
    return op;
}

}  // namespace

TEST_CASE("gmres: identity, zero rhs, dense oracle") {
    SUBCASE("identity in one iteration") {
        Eigen::MatrixXd I = Eigen::MatrixXd::Identity(40, 40);
        LinearMap op = dense_map(I);
        Vec b = random_vec(40), x;
        GmresOptions opts;
        GmresResult r = gmres(op, b, x, nullptr, opts);
        CHECK(r.converged);
        CHECK(r.iterations <= 1);
        for (int i = 0; i < 40; ++i) CHECK(x[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
    SUBCASE("zero rhs gives zero solution") {
        Eigen::MatrixXd A = Eigen::MatrixXd::Random(30, 30);
        LinearMap op = dense_map(A);
        Vec b(30, 0.0), x = random_vec(30);
        GmresResult r = gmres(op, b, x, nullptr, GmresOptions{});
        CHECK(r.converged);
        CHECK(norm2(x) == 0.0);
    }
    SUBCASE("64x64 well conditioned matches dense LU") {
        Eigen::MatrixXd A = Eigen::MatrixXd::Random(64, 64) + 10.0 * Eigen::MatrixXd::Identity(64, 64);
        LinearMap op = dense_map(A);
        Vec b = random_vec(64), x;
        GmresOptions opts;
        opts.tol = 1e-12;
        GmresResult r = gmres(op, b, x, nullptr, opts);
        CHECK(r.converged);
        Eigen::Map<const Eigen::VectorXd> bm(b.data(), 64);
        Eigen::VectorXd xd = A.lu().solve(bm);
        for (int i = 0; i < 64; ++i) CHECK(std::abs(x[i] - xd(i)) < 1e-8);
    }
    SUBCASE("non-convergence reported with best residual") {
        // rotation-heavy system, tiny iteration budget
        Eigen::MatrixXd A = Eigen::MatrixXd::Random(60, 60);
        LinearMap op = dense_map(A);
        Vec b = random_vec(60), x;
        GmresOptions opts;
        opts.max_iter = 3;
        opts.tol = 1e-14;
        GmresResult r = gmres(op, b, x, nullptr, opts);
        CHECK(!r.converged);
        CHECK(r.rel_residual > 0.0);
        CHECK(r.iterations <= 3);
    }
    SUBCASE("residual history non-increasing within a cycle") {
        Eigen::MatrixXd A =
            Eigen::MatrixXd::Random(50, 50) + 6.0 * Eigen::MatrixXd::Identity(50, 50);
        LinearMap op = dense_map(A);
        Vec b = random_vec(50), x;
        GmresOptions opts;
        opts.restart = 50;
        GmresResult r = gmres(op, b, x, nullptr, opts);
        for (std::size_t i = 1; i < r.history.size(); ++i)
            CHECK(r.history[i] <= r.history[i - 1] * (1.0 + 1e-12));
    }
}

TEST_CASE("linear map linearity probe") {
    ModelParams p;
    Grid g(128, 250.0);
    KernelSet K(p, g);
    Vec prof = nftest::bump_profile(g, 0.0, 20.0, 0.4, 0.25);
    WaveState w{prof, 2.0};
    LinearMap A = wave_operator(w, p, K);
    Vec x = random_vec(A.dim), y = random_vec(A.dim);
    Vec ax, ay, axy;
    A.apply(x, ax);
    A.apply(y, ay);
    Vec xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xy[i] = 0.3 * x[i] - 1.7 * y[i];
    A.apply(xy, axy);
    double err = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        err += std::pow(axy[i] - (0.3 * ax[i] - 1.7 * ay[i]), 2);
        den += axy[i] * axy[i];
    }
    CHECK(std::sqrt(err / den) < 1e-12);
}

TEST_CASE("transport preconditioner inverts its operator") {
    Grid g(300, 250.0);
    const double tau = 0.82;
    SUBCASE("generic speed") {
        TransportPreconditioner pr = build_preconditioner(2.3, tau, g);
        DiffOp d(g);
        Vec x = random_vec(600);
        Vec y = x;
        pr.solve_field(y);  // y = Pr^{-1} x
        // apply the operator (-I + c d, -I/tau + c d) to y
        Vec du, dv;
        Vec yu(y.begin(), y.begin() + 300), yv(y.begin() + 300, y.end());
        d.apply_component(yu, du);
        d.apply_component(yv, dv);
        for (int i = 0; i < 300; ++i) {
            const double ru = -yu[i] + 2.3 * du[i];
            const double rv = -yv[i] / tau + 2.3 * dv[i];
            CHECK(std::abs(ru - x[i]) < 1e-10);
            CHECK(std::abs(rv - x[300 + i]) < 1e-10);
        }
    }
    SUBCASE("c_prec = 0 reduces to a sign flip on block one") {
        TransportPreconditioner pr = build_preconditioner(0.0, tau, g);
        Vec x = random_vec(600);
        Vec y = x;
        pr.solve_field(y);
        for (int i = 0; i < 300; ++i) CHECK(y[i] == doctest::Approx(-x[i]).epsilon(1e-14));
    }
    SUBCASE("staleness policy") {
        TransportPreconditioner pr = build_preconditioner(2.0, tau, g);
        CHECK(!pr.stale(2.05));
        CHECK(pr.stale(2.2));
    }
}

TEST_CASE("tridiagonal LU with pivoting handles dominance loss") {
    // matrix that forces row swaps: tiny diagonal, large subdiagonal
    const int n = 50;
    std::vector<double> sub(n - 1, 2.0), diag(n, 1e-3), super(n - 1, 1.0);
    TriDiagLU<double> lu(sub, diag, super);
    Vec b = random_vec(n), x = b;
    lu.solve(x);
    // verify by applying the tridiagonal matrix
    for (int i = 0; i < n; ++i) {
        double r = 1e-3 * x[i];
        if (i > 0) r += 2.0 * x[i - 1];
        if (i < n - 1) r += 1.0 * x[i + 1];
        CHECK(r == doctest::Approx(b[i]).epsilon(1e-9));
    }
}

TEST_CASE("newton_krylov: quadratic scalar, instant return, divergence guard") {
    SUBCASE("x^2 - 4 from x0 = 3 converges quadratically to 2") {
        auto residual = [](const Vec& x, Vec& r) {
            r.resize(1);
            r[0] = x[0] * x[0] - 4.0;
        };
        JacobianFactory jac = [](const Vec& x) {
            const double xi = x[0];
            return [xi](const Vec& h, Vec& y) {
                y.resize(1);
                y[0] = 2.0 * xi * h[0];
            };
        };
        Vec x{3.0};
        NewtonOptions opts;
        opts.tol_sup = 1e-12;
        NewtonResult r = newton_krylov(residual, jac, nullptr, x, opts);
        CHECK(r.converged);
        CHECK(x[0] == doctest::Approx(2.0).epsilon(1e-10));
        // quadratic convergence: residual roughly squares each step
        for (std::size_t i = 2; i + 1 < r.residual_history.size(); ++i) {
            const double e0 = r.residual_history[i - 1];
            const double e1 = r.residual_history[i];
            if (e0 < 1e-1 && e1 > 1e-14) CHECK(e1 < 2.0 * e0 * e0);
        }
    }
    SUBCASE("root start returns immediately") {
        auto residual = [](const Vec& x, Vec& r) {
            r.resize(1);
            r[0] = x[0] - 1.0;
        };
        JacobianFactory jac = [](const Vec&) {
            return [](const Vec& h, Vec& y) { y = h; };
        };
        Vec x{1.0};
        NewtonResult r = newton_krylov(residual, jac, nullptr, x, NewtonOptions{});
        CHECK(r.converged);
        CHECK(r.iterations == 0);
    }
    SUBCASE("hopeless problem reports failure") {
        auto residual = [](const Vec& x, Vec& r) {
            r.resize(1);
            r[0] = 1.0 + x[0] * x[0];  // no real root
        };
        JacobianFactory jac = [](const Vec& x) {
            const double xi = x[0];
            return [xi](const Vec& h, Vec& y) {
                y.resize(1);
                y[0] = 2.0 * xi * h[0];
            };
        };
        Vec x{5.0};
        NewtonOptions opts;
        opts.max_newton = 20;
        NewtonResult r = newton_krylov(residual, jac, nullptr, x, opts);
        CHECK(!r.converged);
        CHECK(!r.message.empty());
    }
}

TEST_CASE("arnoldi: diagonal operator, dense oracle, Ritz residuals") {
    SUBCASE("largest of diag(1..n)") {
        const int n = 40;
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) A(i, i) = i + 1.0;
        ArnoldiOptions opts;
        opts.k = 3;
        auto pairs = arnoldi_eigs(dense_map(A), opts);
        REQUIRE(pairs.size() == 3);
        CHECK(pairs[0].value.real() == doctest::Approx(40.0).epsilon(1e-8));
        CHECK(pairs[1].value.real() == doctest::Approx(39.0).epsilon(1e-8));
        CHECK(pairs[2].value.real() == doctest::Approx(38.0).epsilon(1e-7));
    }
    SUBCASE("symmetric random 100x100 matches dense eigensolver") {
        Eigen::MatrixXd B = Eigen::MatrixXd::Random(100, 100);
        Eigen::MatrixXd A = 0.5 * (B + B.transpose());
        ArnoldiOptions opts;
        opts.k = 5;
        opts.subspace = 60;
        auto pairs = arnoldi_eigs(dense_map(A), opts);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
        Eigen::VectorXd ev = es.eigenvalues();
        std::vector<double> mags(ev.data(), ev.data() + 100);
        std::sort(mags.begin(), mags.end(),
                  [](double a, double b) { return std::abs(a) > std::abs(b); });
        REQUIRE(pairs.size() == 5);
        for (int i = 0; i < 5; ++i)
            CHECK(std::abs(pairs[i].value.real() - mags[i]) < 1e-8);
    }
    SUBCASE("Ritz residual bound holds for the returned vectors") {
        Eigen::MatrixXd B = Eigen::MatrixXd::Random(80, 80);
        Eigen::MatrixXd A = 0.5 * (B + B.transpose()) + 4.0 * Eigen::MatrixXd::Identity(80, 80);
        LinearMap op = dense_map(A);
        ArnoldiOptions opts;
        opts.k = 4;
        opts.tol = 1e-9;
        auto pairs = arnoldi_eigs(op, opts);
        for (const auto& p : pairs) {
            CHECK(p.converged);
            CHECK(eig_residual(op, p) < 1e-7);
        }
    }
}

TEST_CASE("shift-invert: nearest eigenvalue and dense agreement") {
    SUBCASE("diag(1,2,3,10) with shift 2.1") {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4, 4);
        A(0, 0) = 1;
        A(1, 1) = 2;
        A(2, 2) = 3;
        A(3, 3) = 10;
        ShiftInvertOptions opts;
        opts.k = 1;
        opts.arnoldi.subspace = 4;
        auto pairs = shift_invert_eigs(dense_map(A), {2.1, 0.0}, nullptr, opts);
        REQUIRE(!pairs.empty());
        CHECK(pairs[0].value.real() == doctest::Approx(2.0).epsilon(1e-9));
    }
    SUBCASE("agrees with direct Arnoldi on a small dense instance") {
        Eigen::MatrixXd B = Eigen::MatrixXd::Random(60, 60);
        Eigen::MatrixXd A = 0.5 * (B + B.transpose());
        ShiftInvertOptions opts;
        opts.k = 4;
        opts.arnoldi.subspace = 40;
        auto si = shift_invert_eigs(dense_map(A), {0.0, 0.0}, nullptr, opts);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
        Eigen::VectorXd ev = es.eigenvalues();
        std::vector<double> close(ev.data(), ev.data() + 60);
        std::sort(close.begin(), close.end(),
                  [](double a, double b) { return std::abs(a) < std::abs(b); });
        REQUIRE((int)si.size() >= 4);
        for (int i = 0; i < 4; ++i) CHECK(std::abs(si[i].value.real() - close[i]) < 1e-8);
    }
}
