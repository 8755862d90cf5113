#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <vector>

#include "fiberheat/grid.hpp"

namespace fiberheat {

enum class Preconditioner { Jacobi, SymmetricGaussSeidel };

inline const char* to_string(Preconditioner p) {
    return p == Preconditioner::Jacobi ? "jacobi" : "sgs";
}

struct SolveReport {
    int iterations = 0;
    double rel_residual = 0.0;
    double seconds = 0.0;
    double eps = 0.0;
    int n_psi = 0, n_theta = 0, n_phi = 0;
};

struct AssembleOptions {
    bool spd_probe = true;   // Cholesky probe of a random principal submatrix
    int probe_size = 500;
};

struct SolveOptions {
    Preconditioner precond = Preconditioner::Jacobi;
    double max_iter_factor = 50.0;      // cap = factor * sqrt(#unknowns)
    const ScalarField* initial_guess = nullptr;
};

/// Symmetric sparse stiffness operator for div(√g D ∇T) on a FluxGrid,
/// stored row-compressed over all nodes (no boundary elimination — the
/// Dirichlet mask is applied by the solve). Rows of interior stencils sum
/// to zero exactly, and A = Aᵀ entrywise.
///
/// The scheme is a cell-vertex finite volume: on each coordinate cell the
/// Dirichlet energy ∫√g D^{ab} ∂_a u ∂_b u is approximated by corner
/// quadrature, with the coordinate gradient at a corner built from the two
/// (three in 3D) incident edge differences. Face diffusivities are then
/// arithmetic averages of the corner values of √g D^{ab}, and mixed terms
/// average the two adjacent corner-difference approximations, which makes
/// the assembled matrix symmetric by construction.
class SparseOperator {
   public:
    const FluxGrid* grid = nullptr;
    double eps = 1.0;
    size_t n = 0;
    std::vector<size_t> row_ptr;
    std::vector<int> col;
    std::vector<double> val;
    std::vector<size_t> diag;          // position of a_ii in val
    std::vector<uint8_t> dirichlet;    // 1 on the ψ-extreme layers
    std::vector<double> control_vol;   // √g · coordinate cell · ψ-weight

    size_t interior_count() const {
        size_t c = 0;
        for (auto d : dirichlet) c += (d == 0);
        return c;
    }

    /// y = A x over all rows.
    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        for (size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p)
                s += val[p] * x[col[p]];
            y[i] = s;
        }
    }

    /// y = A x with boundary entries of x treated as zero and boundary
    /// rows of y zeroed (the interior-restricted operator).
    void apply_masked(const std::vector<double>& x, std::vector<double>& y) const {
        for (size_t i = 0; i < n; ++i) {
            if (dirichlet[i]) {
                y[i] = 0.0;
                continue;
            }
            double s = 0.0;
            for (size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
                size_t j = col[p];
                if (!dirichlet[j]) s += val[p] * x[j];
            }
            y[i] = s;
        }
    }

    /// max over entries of |a_ij − a_ji|.
    double symmetry_defect() const {
        double worst = 0.0;
        for (size_t i = 0; i < n; ++i)
            for (size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
                size_t j = col[p];
                if (j < i) continue;
                double aji = 0.0;
                for (size_t q = row_ptr[j]; q < row_ptr[j + 1]; ++q)
                    if (col[q] == static_cast<int>(i)) {
                        aji = val[q];
                        break;
                    }
                worst = std::max(worst, std::abs(val[p] - aji));
            }
        return worst;
    }

    /// max over rows of |Σ_j a_ij| (constants lie in the kernel of the
    /// divergence-form stencil, boundary rows included).
    double max_row_sum() const {
        double worst = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) s += val[p];
            worst = std::max(worst, std::abs(s));
        }
        return worst;
    }

    /// (A T)/V per node: second-order approximation of −div(D∇T) at
    /// interior nodes.
    ScalarField negative_divergence(const ScalarField& T) const {
        check_same_grid(T, *grid);
        ScalarField out(*grid);
        apply(T.v, out.v);
        for (size_t i = 0; i < n; ++i) out.v[i] /= control_vol[i];
        return out;
    }
};

namespace detail {

// Dense Cholesky; returns false if a pivot is non-positive.
inline bool cholesky_in_place(std::vector<double>& a, int m) {
    for (int j = 0; j < m; ++j) {
        double d = a[j * m + j];
        for (int k = 0; k < j; ++k) d -= a[j * m + k] * a[j * m + k];
        if (!(d > 0.0)) return false;
        d = std::sqrt(d);
        a[j * m + j] = d;
        for (int i = j + 1; i < m; ++i) {
            double s = a[i * m + j];
            for (int k = 0; k < j; ++k) s -= a[i * m + k] * a[j * m + k];
            a[i * m + j] = s / d;
        }
    }
    return true;
}

inline void spd_probe(const SparseOperator& A, int probe_size) {
    std::vector<size_t> interior;
    for (size_t i = 0; i < A.n; ++i)
        if (!A.dirichlet[i]) interior.push_back(i);
    int m = std::min<size_t>(probe_size, interior.size());
    if (m == 0) return;
    std::mt19937 rng(0xC0FFEEu);
    std::vector<size_t> pick;
    std::sample(interior.begin(), interior.end(), std::back_inserter(pick), m, rng);
    std::sort(pick.begin(), pick.end());
    std::vector<double> sub(static_cast<size_t>(m) * m, 0.0);
    for (int r = 0; r < m; ++r) {
        size_t i = pick[r];
        for (size_t p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) {
            auto it = std::lower_bound(pick.begin(), pick.end(),
                                       static_cast<size_t>(A.col[p]));
            if (it != pick.end() && *it == static_cast<size_t>(A.col[p]))
                sub[static_cast<size_t>(r) * m + (it - pick.begin())] = A.val[p];
        }
    }
    if (!cholesky_in_place(sub, m))
        throw NonSpdError("Cholesky probe of a principal submatrix failed");
}

}  // namespace detail

/// Assemble the discrete operator for div(b∇_bT + ε∇_b⊥T) = 0 in the
/// tensor form D = ε g⁻¹ + (1−ε) b⊗b. Periodic directions wrap in the
/// stencil; the ψ direction closes one-sidedly (Dirichlet elimination
/// happens at solve time).
inline SparseOperator assemble(const FluxGrid& grid, double eps,
                               const AssembleOptions& opts = {}) {
    if (!(eps > 0.0 && eps <= 1.0))
        throw std::invalid_argument("eps must lie in (0, 1]");
    const FieldModel& field = grid.field();
    const int d = grid.dim();
    const int np = grid.n_psi(), nt = grid.n_theta(), nf = grid.n_phi();
    const size_t N = grid.node_count();

    SparseOperator A;
    A.grid = &grid;
    A.eps = eps;
    A.n = N;

    // Per-node √g·D^{ab} (and √g for control volumes).
    std::vector<double> W(N * 9);
    for (size_t idx = 0; idx < N; ++idx) {
        const PointData& pd = grid.point(idx);
        double D[3][3];
        field.diffusion_tensor(pd, eps, D);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) W[idx * 9 + a * 3 + b] = pd.sqrt_g * D[a][b];
    }

    // Sparsity: 3^d block around each node, ψ clipped, angles wrapped.
    A.row_ptr.assign(N + 1, 0);
    std::vector<int> nbr;
    nbr.reserve(27);
    auto neighbors = [&](int i, int j, int k, std::vector<int>& out) {
        out.clear();
        for (int di = -1; di <= 1; ++di) {
            int ii = i + di;
            if (ii < 0 || ii >= np) continue;
            for (int dj = -1; dj <= 1; ++dj) {
                int jj = (j + dj + nt) % nt;
                if (d == 2) {
                    out.push_back(static_cast<int>(grid.index(ii, jj, 0)));
                } else {
                    for (int dk = -1; dk <= 1; ++dk) {
                        int kk = (k + dk + nf) % nf;
                        out.push_back(static_cast<int>(grid.index(ii, jj, kk)));
                    }
                }
            }
        }
        std::sort(out.begin(), out.end());
    };
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < nt; ++j)
            for (int k = 0; k < nf; ++k) {
                neighbors(i, j, k, nbr);
                A.row_ptr[grid.index(i, j, k) + 1] = nbr.size();
            }
    for (size_t i = 0; i < N; ++i) A.row_ptr[i + 1] += A.row_ptr[i];
    A.col.assign(A.row_ptr.back(), 0);
    A.val.assign(A.row_ptr.back(), 0.0);
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < nt; ++j)
            for (int k = 0; k < nf; ++k) {
                neighbors(i, j, k, nbr);
                size_t r = grid.index(i, j, k);
                std::copy(nbr.begin(), nbr.end(), A.col.begin() + A.row_ptr[r]);
            }

    auto entry = [&](size_t row, int column) -> double& {
        size_t lo = A.row_ptr[row], hi = A.row_ptr[row + 1];
        auto it = std::lower_bound(A.col.begin() + lo, A.col.begin() + hi, column);
        return A.val[it - A.col.begin()];
    };

    // Cell loop: corner-quadrature energy contributions.
    const int ncorner = 1 << d;
    const double h[3] = {grid.h_psi(), grid.h_theta(), grid.h_phi()};
    const double wcell = grid.coord_cell() / ncorner;
    std::vector<size_t> cn(ncorner);
    std::vector<double> E(static_cast<size_t>(ncorner) * ncorner);
    const int cells_k = (d == 3) ? nf : 1;
    for (int i = 0; i + 1 < np; ++i)
        for (int j = 0; j < nt; ++j)
            for (int k = 0; k < cells_k; ++k) {
                for (int c = 0; c < ncorner; ++c) {
                    int ci = i + (c & 1);
                    int cj = (j + ((c >> 1) & 1)) % nt;
                    int ck = (d == 3) ? (k + ((c >> 2) & 1)) % nf : 0;
                    cn[c] = grid.index(ci, cj, ck);
                }
                std::fill(E.begin(), E.end(), 0.0);
                for (int c = 0; c < ncorner; ++c) {
                    const double* Wc = &W[cn[c] * 9];
                    for (int a = 0; a < d; ++a) {
                        int pa = c | (1 << a), ma = c & ~(1 << a);
                        for (int b = 0; b < d; ++b) {
                            double coeff = wcell * Wc[a * 3 + b] / (h[a] * h[b]);
                            if (coeff == 0.0) continue;
                            int pb = c | (1 << b), mb = c & ~(1 << b);
                            E[pa * ncorner + pb] += coeff;
                            E[pa * ncorner + mb] -= coeff;
                            E[ma * ncorner + pb] -= coeff;
                            E[ma * ncorner + mb] += coeff;
                        }
                    }
                }
                for (int p = 0; p < ncorner; ++p)
                    for (int q = 0; q < ncorner; ++q) {
                        double v = E[p * ncorner + q];
                        if (v != 0.0) entry(cn[p], static_cast<int>(cn[q])) += v;
                    }
            }

    A.diag.resize(N);
    for (size_t i = 0; i < N; ++i) {
        size_t lo = A.row_ptr[i], hi = A.row_ptr[i + 1];
        auto it = std::lower_bound(A.col.begin() + lo, A.col.begin() + hi,
                                   static_cast<int>(i));
        A.diag[i] = it - A.col.begin();
    }

    A.dirichlet.assign(N, 0);
    for (int j = 0; j < nt; ++j)
        for (int k = 0; k < nf; ++k) {
            A.dirichlet[grid.index(0, j, k)] = 1;
            A.dirichlet[grid.index(np - 1, j, k)] = 1;
        }

    A.control_vol.resize(N);
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < nt; ++j)
            for (int k = 0; k < nf; ++k) {
                size_t idx = grid.index(i, j, k);
                A.control_vol[idx] =
                    grid.point(idx).sqrt_g * grid.coord_cell() * grid.psi_weight(i);
            }

    if (opts.spd_probe) detail::spd_probe(A, opts.probe_size);
    return A;
}

namespace detail {

// Symmetric Gauss–Seidel preconditioner  M = (D+L) D⁻¹ (D+U),
// restricted to interior rows/columns.
inline void sgs_apply(const SparseOperator& A, const std::vector<double>& r,
                      std::vector<double>& z, std::vector<double>& tmp) {
    const size_t n = A.n;
    for (size_t i = 0; i < n; ++i) {
        if (A.dirichlet[i]) {
            tmp[i] = 0.0;
            continue;
        }
        double s = r[i];
        for (size_t p = A.row_ptr[i]; p < A.row_ptr[i + 1]; ++p) {
            size_t j = A.col[p];
            if (j < i && !A.dirichlet[j]) s -= A.val[p] * tmp[j];
        }
        tmp[i] = s / A.val[A.diag[i]];
    }
    for (size_t i = 0; i < n; ++i)
        if (!A.dirichlet[i]) tmp[i] *= A.val[A.diag[i]];
    for (size_t ii = n; ii-- > 0;) {
        if (A.dirichlet[ii]) {
            z[ii] = 0.0;
            continue;
        }
        double s = tmp[ii];
        for (size_t p = A.row_ptr[ii]; p < A.row_ptr[ii + 1]; ++p) {
            size_t j = A.col[p];
            if (j > ii && !A.dirichlet[j]) s -= A.val[p] * z[j];
        }
        z[ii] = s / A.val[A.diag[ii]];
    }
}

}  // namespace detail

/// Preconditioned conjugate gradients for A T = 0 with T = T± on the
/// ψ-extreme surfaces. Dirichlet values are imposed exactly; the interior
/// solve runs to relative residual ≤ tol. Throws NoConvergenceError when
/// the iteration cap (max_iter_factor·√n) is exceeded.
inline std::pair<ScalarField, SolveReport> solve_temperature(
    const SparseOperator& A, double T_minus, double T_plus, double tol = 1e-10,
    const SolveOptions& opts = {}) {
    if (!(tol > 0.0 && tol < 1.0))
        throw std::invalid_argument("tol must lie in (0, 1)");
    const FluxGrid& grid = *A.grid;
    const size_t n = A.n;
    auto t0 = std::chrono::steady_clock::now();

    // Boundary lift.
    std::vector<double> lift(n, 0.0);
    for (int j = 0; j < grid.n_theta(); ++j)
        for (int k = 0; k < grid.n_phi(); ++k) {
            lift[grid.index(0, j, k)] = T_minus;
            lift[grid.index(grid.n_psi() - 1, j, k)] = T_plus;
        }

    // b = −A·lift on the interior.
    std::vector<double> b(n, 0.0);
    A.apply(lift, b);
    for (size_t i = 0; i < n; ++i) b[i] = A.dirichlet[i] ? 0.0 : -b[i];

    std::vector<double> x(n, 0.0);
    if (opts.initial_guess) {
        check_same_grid(*opts.initial_guess, grid);
        for (size_t i = 0; i < n; ++i)
            if (!A.dirichlet[i]) x[i] = opts.initial_guess->v[i];
    }

    std::vector<double> r(n, 0.0), z(n, 0.0), p(n, 0.0), Ap(n, 0.0), tmp(n, 0.0);
    A.apply_masked(x, r);
    double bnorm = 0.0;
    for (size_t i = 0; i < n; ++i) {
        r[i] = b[i] - r[i];
        bnorm += b[i] * b[i];
    }
    bnorm = std::sqrt(bnorm);

    const size_t n_int = A.interior_count();
    const int max_iter =
        std::max(16, static_cast<int>(opts.max_iter_factor * std::sqrt(double(n_int))));

    auto precondition = [&](const std::vector<double>& rin, std::vector<double>& zout) {
        if (opts.precond == Preconditioner::Jacobi) {
            for (size_t i = 0; i < n; ++i)
                zout[i] = A.dirichlet[i] ? 0.0 : rin[i] / A.val[A.diag[i]];
        } else {
            detail::sgs_apply(A, rin, zout, tmp);
        }
    };

    double rnorm = 0.0;
    for (size_t i = 0; i < n; ++i) rnorm += r[i] * r[i];
    rnorm = std::sqrt(rnorm);

    int iter = 0;
    double rel = (bnorm > 0.0) ? rnorm / bnorm : 0.0;
    if (bnorm > 0.0 && rel > tol) {
        precondition(r, z);
        p = z;
        double rz = 0.0;
        for (size_t i = 0; i < n; ++i) rz += r[i] * z[i];
        while (iter < max_iter) {
            ++iter;
            A.apply_masked(p, Ap);
            double pAp = 0.0;
            for (size_t i = 0; i < n; ++i) pAp += p[i] * Ap[i];
            if (!(pAp > 0.0))
                throw NonSpdError(
                    "CG met a direction of nonpositive curvature: the "
                    "operator is not positive definite on the interior");
            double alpha = rz / pAp;
            rnorm = 0.0;
            for (size_t i = 0; i < n; ++i) {
                x[i] += alpha * p[i];
                r[i] -= alpha * Ap[i];
                rnorm += r[i] * r[i];
            }
            rnorm = std::sqrt(rnorm);
            rel = rnorm / bnorm;
            if (rel <= tol) break;
            precondition(r, z);
            double rz_new = 0.0;
            for (size_t i = 0; i < n; ++i) rz_new += r[i] * z[i];
            double beta = rz_new / rz;
            rz = rz_new;
            for (size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        }
        if (rel > tol)
            throw NoConvergenceError(
                "CG hit the iteration cap at relative residual " +
                    std::to_string(rel),
                iter, rel);
    }

    ScalarField T(grid);
    for (size_t i = 0; i < n; ++i) T.v[i] = x[i] + lift[i];
    T.bc_minus = T_minus;
    T.bc_plus = T_plus;

    SolveReport rep;
    rep.iterations = iter;
    rep.rel_residual = rel;
    rep.eps = A.eps;
    rep.n_psi = grid.n_psi();
    rep.n_theta = grid.n_theta();
    rep.n_phi = grid.n_phi();
    rep.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(T), rep};
}

/// Discrete total heat flux through the surface between ψ-layers k and
/// k+1, for k = 0..n_psi−2. For the converged solution this is constant in
/// k up to the solver residual (the discrete form of dΘ/dψ·Γ = const).
/// Accumulated in extended precision: at strong anisotropy |Φ| is far
/// below the row-entry scale and double accumulation would floor the
/// spread above the solver residual.
inline std::vector<double> flux_profile(const SparseOperator& A, const ScalarField& T) {
    check_same_grid(T, *A.grid);
    const FluxGrid& grid = *A.grid;
    std::vector<double> flux(grid.n_psi() - 1);
    long double acc = 0.0L;
    for (int i = 0; i + 1 < grid.n_psi(); ++i) {
        size_t base = grid.index(i, 0, 0);
        for (size_t s = 0; s < grid.surface_size(); ++s) {
            size_t row = base + s;
            for (size_t p = A.row_ptr[row]; p < A.row_ptr[row + 1]; ++p)
                acc += static_cast<long double>(A.val[p]) * T.v[A.col[p]];
        }
        flux[i] = static_cast<double>(acc);
    }
    return flux;
}

}  // namespace fiberheat
