#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "fiberheat/effective.hpp"
#include "fiberheat/ergodic.hpp"
#include "fiberheat/mde.hpp"
#include "fiberheat/solver.hpp"

namespace fiberheat {

/// Coordinate partials (∂ψ, ∂θ, ∂φ) of a grid function: centered and
/// second order inside (periodic wrap in the angles), one-sided second
/// order on the ψ-extreme surfaces. This is the discrete gradient used for
/// every norm in this module; it vanishes identically in the angle
/// directions on surface-constant data.
inline std::array<std::vector<double>, 3> nodal_gradient(const ScalarField& f) {
    const FluxGrid& g = *f.grid;
    const int np = g.n_psi(), nt = g.n_theta(), nf = g.n_phi();
    std::array<std::vector<double>, 3> out;
    for (auto& a : out) a.assign(g.node_count(), 0.0);
    const double hp = g.h_psi(), ht = g.h_theta(), hf = g.h_phi();

    for (int i = 0; i < np; ++i)
        for (int j = 0; j < nt; ++j)
            for (int k = 0; k < nf; ++k) {
                size_t idx = g.index(i, j, k);
                if (i == 0)
                    out[0][idx] = (-3 * f.v[g.index(0, j, k)] +
                                   4 * f.v[g.index(1, j, k)] -
                                   f.v[g.index(2, j, k)]) /
                                  (2 * hp);
                else if (i == np - 1)
                    out[0][idx] = (3 * f.v[g.index(np - 1, j, k)] -
                                   4 * f.v[g.index(np - 2, j, k)] +
                                   f.v[g.index(np - 3, j, k)]) /
                                  (2 * hp);
                else
                    out[0][idx] =
                        (f.v[g.index(i + 1, j, k)] - f.v[g.index(i - 1, j, k)]) /
                        (2 * hp);
                out[1][idx] = (f.v[g.index(i, (j + 1) % nt, k)] -
                               f.v[g.index(i, (j + nt - 1) % nt, k)]) /
                              (2 * ht);
                if (g.dim() == 3)
                    out[2][idx] = (f.v[g.index(i, j, (k + 1) % nf)] -
                                   f.v[g.index(i, j, (k + nf - 1) % nf)]) /
                                  (2 * hf);
            }
    return out;
}

/// Error norms of ρ = T_ε − T0 plus the non-integrability volume.
/// For perturbed fields the b0-projected norms are also filled.
struct ErrorReport {
    double eps = 0.0;
    double l2_rho = 0.0;
    double hb_rho = 0.0;      // ‖∇_b ρ‖_{L²}
    double hperp_rho = 0.0;   // ‖∇_b⊥ ρ‖_{L²}
    double grad_rho = 0.0;    // ‖∇ρ‖_{L²}
    double h1_rho = 0.0;      // (L2² + ‖∇ρ‖²)^{1/2}
    double hb0_rho = 0.0;     // perturbed kinds only
    double hperp0_rho = 0.0;
    double noninteg_volume = 0.0;
    int n_psi = 0, n_theta = 0, n_phi = 0;
};

namespace detail {

struct GradientSplit {
    double par2 = 0.0;    // (∇_b u)²
    double perp2 = 0.0;   // |∇_b⊥ u|²_g
    double full2 = 0.0;   // |∇u|²_g
};

inline GradientSplit split_gradient(const PointData& pd,
                                    const std::array<double, 3>& b, int dim,
                                    const double du[3]) {
    GradientSplit s;
    double grad_b = 0.0;
    for (int i = 0; i < dim; ++i) grad_b += b[i] * du[i];
    double b_cov[3] = {0, 0, 0};
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) b_cov[i] += pd.g_cov[i][j] * b[j];
    double perp[3];
    for (int i = 0; i < dim; ++i) perp[i] = du[i] - b_cov[i] * grad_b;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
            s.full2 += pd.g_inv[i][j] * du[i] * du[j];
            s.perp2 += pd.g_inv[i][j] * perp[i] * perp[j];
        }
    s.par2 = grad_b * grad_b;
    return s;
}

}  // namespace detail

/// μ(N(ε)): volume of the set where |∇_bT|² ≥ ε|∇_b⊥T|², by node-wise
/// evaluation of the indicator with quadrature weights.
inline double noninteg_volume(const ScalarField& T_eps, const FluxGrid& grid,
                              double eps) {
    check_same_grid(T_eps, grid);
    auto grad = nodal_gradient(T_eps);
    const FieldModel& field = grid.field();
    ScalarField ind(grid);
    for (size_t idx = 0; idx < grid.node_count(); ++idx) {
        const PointData& pd = grid.point(idx);
        auto b = field.unit_b(pd, eps);
        double du[3] = {grad[0][idx], grad[1][idx], grad[2][idx]};
        auto s = detail::split_gradient(pd, b, grid.dim(), du);
        ind.v[idx] = (s.par2 >= eps * s.perp2) ? 1.0 : 0.0;
    }
    return volume_integral(grid, ind);
}

/// Build the full error report for a solved temperature field against the
/// effective profile on the same grid.
inline ErrorReport error_report(const ScalarField& T_eps,
                                const EffectiveProfile& profile,
                                const FluxGrid& grid, double eps) {
    check_same_grid(T_eps, grid);
    if (profile.psi_nodes.size() != static_cast<size_t>(grid.n_psi()))
        throw GridMismatchError("profile does not match the grid psi nodes");
    const FieldModel& field = grid.field();

    ScalarField rho(grid);
    for (int i = 0; i < grid.n_psi(); ++i) {
        size_t base = grid.index(i, 0, 0);
        double t0 = profile.theta_values[i];
        for (size_t s = 0; s < grid.surface_size(); ++s)
            rho.v[base + s] = T_eps.v[base + s] - t0;
    }
    auto grad = nodal_gradient(rho);

    ScalarField rho2(grid), par2(grid), perp2(grid), full2(grid);
    ScalarField par2_0(grid), perp2_0(grid);
    const bool perturbed = field.is_perturbed();
    for (size_t idx = 0; idx < grid.node_count(); ++idx) {
        const PointData& pd = grid.point(idx);
        double du[3] = {grad[0][idx], grad[1][idx], grad[2][idx]};
        auto s = detail::split_gradient(pd, field.unit_b(pd, eps), grid.dim(), du);
        rho2.v[idx] = rho.v[idx] * rho.v[idx];
        par2.v[idx] = s.par2;
        perp2.v[idx] = s.perp2;
        full2.v[idx] = s.full2;
        if (perturbed) {
            auto s0 =
                detail::split_gradient(pd, field.unit_b0(pd, eps), grid.dim(), du);
            par2_0.v[idx] = s0.par2;
            perp2_0.v[idx] = s0.perp2;
        }
    }

    ErrorReport rep;
    rep.eps = eps;
    rep.n_psi = grid.n_psi();
    rep.n_theta = grid.n_theta();
    rep.n_phi = grid.n_phi();
    double l22 = volume_integral(grid, rho2);
    double g2 = volume_integral(grid, full2);
    rep.l2_rho = std::sqrt(l22);
    rep.hb_rho = std::sqrt(volume_integral(grid, par2));
    rep.hperp_rho = std::sqrt(volume_integral(grid, perp2));
    rep.grad_rho = std::sqrt(g2);
    rep.h1_rho = std::sqrt(l22 + g2);
    if (perturbed) {
        rep.hb0_rho = std::sqrt(volume_integral(grid, par2_0));
        rep.hperp0_rho = std::sqrt(volume_integral(grid, perp2_0));
    }
    rep.noninteg_volume = noninteg_volume(T_eps, grid, eps);
    return rep;
}

/// Anisotropic Sobolev norm ‖f‖_{H^(0,γ)} = (∫ ‖f(ψ,·)‖²_{Ḣ^γ(S_ψ)} dψ)^{1/2}
/// with per-surface Fourier norms over the coordinate angles. 3D grids only.
inline double aniso_norm(const ScalarField& f, double gamma) {
    const FluxGrid& g = *f.grid;
    if (g.dim() != 3)
        throw WrongDimensionError("aniso_norm needs a 3D flux grid");
    double sum = 0.0;
    for (int i = 0; i < g.n_psi(); ++i) {
        auto spec = forward_transform(surface_slice(f, i), g.n_theta(), g.n_phi());
        double ns = sobolev_norm(spec, gamma);
        sum += g.psi_weight(i) * ns * ns;
    }
    return std::sqrt(sum * g.h_psi());
}

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Least-squares power-law fit err ≈ e^intercept · eps^slope on log–log.
inline RateFit fit_rate(const std::vector<double>& eps_list,
                        const std::vector<double>& err_list) {
    const size_t n = eps_list.size();
    if (n < 3 || err_list.size() != n)
        throw NonPositiveDataError("need >= 3 (eps, err) pairs");
    for (size_t i = 0; i < n; ++i)
        if (!(eps_list[i] > 0.0) || !(err_list[i] > 0.0))
            throw NonPositiveDataError("rate fit needs positive data");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::vector<double> xs(n), ys(n);
    for (size_t i = 0; i < n; ++i) {
        xs[i] = std::log(eps_list[i]);
        ys[i] = std::log(err_list[i]);
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    RateFit fit;
    double denom = n * sxx - sx * sx;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss_res = 0, ss_tot = 0, ybar = sy / n;
    for (size_t i = 0; i < n; ++i) {
        double pred = fit.intercept + fit.slope * xs[i];
        ss_res += (ys[i] - pred) * (ys[i] - pred);
        ss_tot += (ys[i] - ybar) * (ys[i] - ybar);
    }
    fit.r2 = (ss_tot > 0.0) ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
    return fit;
}

/// Per-surface mean |ρ| tabulated against the truncated Diophantine data
/// of each ψ node. `pass` is ergodicity_constant(ψ) ≤ M_threshold, i.e.
/// the surface passes the truncated Diophantine test at level 2π·M_threshold.
struct SurfaceDiagRow {
    double psi = 0.0;
    double iota = 0.0;
    double mean_abs_rho = 0.0;
    double dio_constant = 0.0;
    bool pass = false;
};

inline std::vector<SurfaceDiagRow> resonant_surface_diagnostic(
    const ScalarField& rho, const FluxGrid& grid, double gamma, int K,
    double M_threshold) {
    check_same_grid(rho, grid);
    const FieldModel& field = grid.field();
    if (!field.is_3d())
        throw WrongKindError("surface diagnostic needs a 3D kind");
    std::vector<SurfaceDiagRow> rows(grid.n_psi());
    for (int i = 0; i < grid.n_psi(); ++i) {
        SurfaceDiagRow& r = rows[i];
        r.psi = grid.psi_nodes()[i];
        r.iota = field.rotational_transform(r.psi);
        double area = surface_integral_fn(grid, i, [](size_t) { return 1.0; });
        double mass = surface_integral_fn(
            grid, i, [&](size_t idx) { return std::abs(rho.v[idx]); });
        r.mean_abs_rho = mass / area;
        r.dio_constant = ergodicity_constant(field, r.psi, gamma, K);
        r.pass = r.dio_constant <= M_threshold;
    }
    return rows;
}

}  // namespace fiberheat
