#pragma once

// Matrix-free iterative linear algebra: restarted GMRES (right
// preconditioned), the banded transport preconditioner built from
// (-I + c d/dx, -I/tau + c d/dx), a Krylov-Newton driver and Arnoldi
// eigensolvers with an optional shift-invert transform.

#include <complex>
#include <functional>
#include <random>

#include "nfwave/model.hpp"

namespace nfwave {

template <class T>
struct LinearMapT {
    int dim = 0;
    std::function<void(const std::vector<T>&, std::vector<T>&)> apply;
};
using LinearMap = LinearMapT<double>;
using LinearMapZ = LinearMapT<std::complex<double>>;

// Wraps a real operator as a complex one (componentwise, two real applies).
LinearMapZ complexify(const LinearMap& op);

// ---------------------------------------------------------------------------
// GMRES

struct GmresOptions {
    double tol = 1e-8;        // relative residual target
    int max_iter = 500;
    int restart = 100;
};

struct GmresResult {
    bool converged = false;
    double rel_residual = 0.0;
    int iterations = 0;
    Vec history;  // relative residual after each iteration
};

GmresResult gmres(const LinearMap& op, const Vec& rhs, Vec& x, const LinearMap* right_precond,
                  const GmresOptions& opts);
GmresResult gmres(const LinearMapZ& op, const std::vector<std::complex<double>>& rhs,
                  std::vector<std::complex<double>>& x, const LinearMapZ* right_precond,
                  const GmresOptions& opts);

// ---------------------------------------------------------------------------
// Banded solves

// Tridiagonal LU with partial pivoting (one extra superdiagonal of fill).
template <class T>
class TriDiagLU {
public:
    TriDiagLU() = default;
    // factors the matrix with bands (sub, diag, super); throws on a zero pivot
    TriDiagLU(std::vector<T> sub, std::vector<T> diag, std::vector<T> super);
    void solve(std::vector<T>& b) const;
    int size() const { return (int)d_.size(); }

private:
    std::vector<T> dl_, d_, du_, du2_;
    std::vector<unsigned char> piv_;
};

// Block preconditioner (alpha_u I + g d/dx, alpha_v I + g d/dx) acting on a
// stacked two-component field; this family covers the wave preconditioner Pr,
// its spectral shifts and the time stepper stage matrices.
template <class T>
class TransportBlocks {
public:
    TransportBlocks() = default;
    TransportBlocks(T alpha_u, T alpha_v, T g, const Grid& grid);
    void solve_field(std::vector<T>& x) const;  // in place, size 2n
    LinearMapT<T> as_precond() const;
    int n() const { return n_; }

private:
    TriDiagLU<T> lu_u_, lu_v_;
    int n_ = 0;
};

// Pr := (-I + c_prec d/dx, -I/tau + c_prec d/dx), cached banded LU.
class TransportPreconditioner {
public:
    TransportPreconditioner() = default;
    TransportPreconditioner(double c_prec, double tau, const Grid& grid);
    void solve_field(Vec& x) const { blocks_.solve_field(x); }
    LinearMap as_precond() const { return blocks_.as_precond(); }
    double c_prec() const { return c_prec_; }
    bool stale(double c, double threshold = 0.1) const { return std::abs(c - c_prec_) > threshold; }

private:
    TransportBlocks<double> blocks_;
    double c_prec_ = 0.0;
};

TransportPreconditioner build_preconditioner(double c_prec, double tau, const Grid& grid);

// ---------------------------------------------------------------------------
// Newton-Krylov

struct NewtonOptions {
    double tol_sup = 1e-9;      // residual target in the supremum norm
    int max_newton = 25;
    double forcing = 1e-3;      // fixed relative tolerance of the inner solves
    int gmres_max_iter = 600;
    int gmres_restart = 100;
    int max_backtrack = 8;
    bool trace = false;
};

struct NewtonResult {
    bool converged = false;
    int iterations = 0;
    double residual_sup = 0.0;
    Vec residual_history;
    Vec inner_iterations;
    std::string message;
};

// make_jvp(x) returns the directional-derivative operator of the residual
// frozen at x; it is built once per Newton iterate and applied many times
// inside the inner GMRES solve.
using JacobianFactory =
    std::function<std::function<void(const Vec&, Vec&)>(const Vec&)>;

NewtonResult newton_krylov(const std::function<void(const Vec&, Vec&)>& residual,
                           const JacobianFactory& make_jvp, const LinearMap* precond, Vec& x,
                           const NewtonOptions& opts);

// ---------------------------------------------------------------------------
// Eigensolvers

enum class EigWhich { LargestMagnitude, Rightmost };

template <class T>
struct EigPairT {
    std::complex<double> value;
    std::vector<std::complex<double>> vector;
    double residual = 0.0;  // Arnoldi residual estimate, relative
    bool converged = false;
};
using EigPair = EigPairT<double>;

struct ArnoldiOptions {
    int k = 6;
    EigWhich which = EigWhich::LargestMagnitude;
    double tol = 1e-8;
    int subspace = 0;  // 0: max(2k+10, 30)
    int max_restarts = 10;
    unsigned seed = 20240915;
    bool want_vectors = true;
};

std::vector<EigPair> arnoldi_eigs(const LinearMap& op, const ArnoldiOptions& opts);
std::vector<EigPair> arnoldi_eigs_z(const LinearMapZ& op, const ArnoldiOptions& opts);

// Arnoldi on (op - shift I)^{-1}; inner solves by (right preconditioned)
// GMRES, eigenvalues mapped back as shift + 1/theta and re-checked against op.
struct ShiftInvertOptions {
    int k = 6;
    ArnoldiOptions arnoldi;
    GmresOptions inner{1e-10, 2000, 100};
};

std::vector<EigPair> shift_invert_eigs(const LinearMap& op, std::complex<double> shift,
                                       const LinearMapZ* inner_precond,
                                       const ShiftInvertOptions& opts);

// residual ||op x - lambda x|| / ||x|| evaluated with the real operator
double eig_residual(const LinearMap& op, const EigPair& pair);

}  // namespace nfwave
