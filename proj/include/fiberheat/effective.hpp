#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fiberheat/csv.hpp"
#include "fiberheat/grid.hpp"

namespace fiberheat {

namespace detail {

/// Fritsch–Carlson monotone cubic (PCHIP) interpolant on sorted nodes.
class Pchip {
   public:
    Pchip() = default;
    Pchip(std::vector<double> x, std::vector<double> y)
        : x_(std::move(x)), y_(std::move(y)) {
        const size_t n = x_.size();
        d_.assign(n, 0.0);
        if (n < 2) return;
        std::vector<double> h(n - 1), delta(n - 1);
        for (size_t i = 0; i + 1 < n; ++i) {
            h[i] = x_[i + 1] - x_[i];
            delta[i] = (y_[i + 1] - y_[i]) / h[i];
        }
        if (n == 2) {
            d_[0] = d_[1] = delta[0];
            return;
        }
        for (size_t i = 1; i + 1 < n; ++i) {
            if (delta[i - 1] * delta[i] <= 0.0) {
                d_[i] = 0.0;
            } else {
                double w1 = 2.0 * h[i] + h[i - 1];
                double w2 = h[i] + 2.0 * h[i - 1];
                d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d_[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
        d_[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }

    double operator()(double x) const {
        size_t i = locate(x);
        double h = x_[i + 1] - x_[i];
        double t = (x - x_[i]) / h;
        double t2 = t * t, t3 = t2 * t;
        return y_[i] * (2 * t3 - 3 * t2 + 1) + h * d_[i] * (t3 - 2 * t2 + t) +
               y_[i + 1] * (-2 * t3 + 3 * t2) + h * d_[i + 1] * (t3 - t2);
    }

    double derivative(double x) const {
        size_t i = locate(x);
        double h = x_[i + 1] - x_[i];
        double t = (x - x_[i]) / h;
        double t2 = t * t;
        return (y_[i] * (6 * t2 - 6 * t) + h * d_[i] * (3 * t2 - 4 * t + 1) +
                y_[i + 1] * (6 * t - 6 * t2) + h * d_[i + 1] * (3 * t2 - 2 * t)) /
               h;
    }

   private:
    static double edge_slope(double h0, double h1, double del0, double del1) {
        double d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
        if (d * del0 <= 0.0) return 0.0;
        if (del0 * del1 < 0.0 && std::abs(d) > 3.0 * std::abs(del0))
            return 3.0 * del0;
        return d;
    }

    size_t locate(double x) const {
        auto it = std::upper_bound(x_.begin(), x_.end(), x);
        size_t i = (it == x_.begin()) ? 0 : static_cast<size_t>(it - x_.begin()) - 1;
        return std::min(i, x_.size() - 2);
    }

    std::vector<double> x_, y_, d_;
};

}  // namespace detail

/// The homogenized temperature profile Θ(ψ) together with the surface
/// circulation Γ(ψ) = ∫_{S_ψ}|∇ψ| dH and H(ψ) = ∫_{ψ−}^{ψ} ds/Γ(s) that
/// define it:  Θ = T− + (T+ − T−) H(ψ)/H(ψ+).
struct EffectiveProfile {
    std::vector<double> psi_nodes;
    std::vector<double> gamma;
    std::vector<double> H;
    std::vector<double> theta_values;
    double T_minus = 0.0;
    double T_plus = 0.0;

    /// Θ at arbitrary ψ by monotone cubic interpolation of the node values
    /// (preserves the monotonicity invariant off-node).
    double theta_at(double psi) const { return interp_(psi); }
    double dtheta_dpsi(double psi) const { return interp_.derivative(psi); }

    void build_interpolant() {
        interp_ = detail::Pchip(psi_nodes, theta_values);
    }

   private:
    detail::Pchip interp_;
};

/// Core construction from a Γ profile sampled on psi nodes. H is the
/// cumulative trapezoid of 1/Γ; Θ follows from the closed formula, with the
/// boundary values imposed exactly.
inline EffectiveProfile profile_from_gamma(std::vector<double> psi_nodes,
                                           std::vector<double> gamma,
                                           double T_minus, double T_plus) {
    const size_t n = psi_nodes.size();
    if (n < 2 || gamma.size() != n)
        throw std::invalid_argument("profile needs >= 2 matching nodes");
    for (double g : gamma)
        if (!(g > 0.0))
            throw DegenerateGammaError("Gamma <= 0: geometry is degenerate");

    EffectiveProfile p;
    p.psi_nodes = std::move(psi_nodes);
    p.gamma = std::move(gamma);
    p.T_minus = T_minus;
    p.T_plus = T_plus;
    p.H.assign(n, 0.0);
    for (size_t i = 1; i < n; ++i)
        p.H[i] = p.H[i - 1] + 0.5 * (p.psi_nodes[i] - p.psi_nodes[i - 1]) *
                                  (1.0 / p.gamma[i - 1] + 1.0 / p.gamma[i]);
    p.theta_values.resize(n);
    const double span = p.H.back();
    for (size_t i = 0; i < n; ++i)
        p.theta_values[i] = T_minus + (T_plus - T_minus) * p.H[i] / span;
    p.theta_values.front() = T_minus;
    p.theta_values.back() = T_plus;
    p.build_interpolant();
    return p;
}

/// Γ(ψ) from surface quadrature of |∇ψ|, then Θ by the closed formula.
inline EffectiveProfile effective_profile(const FluxGrid& grid, double T_minus,
                                          double T_plus) {
    const int np = grid.n_psi();
    std::vector<double> gamma(np);
    for (int i = 0; i < np; ++i)
        gamma[i] = surface_integral_fn(
            grid, i, [&](size_t idx) { return grid.point(idx).grad_psi; });
    return profile_from_gamma(grid.psi_nodes(), gamma, T_minus, T_plus);
}

/// Nodal T0 = Θ(ψ): constant on each coordinate surface.
inline ScalarField profile_to_field(const EffectiveProfile& p, const FluxGrid& grid) {
    if (p.psi_nodes.size() != static_cast<size_t>(grid.n_psi()))
        throw GridMismatchError("profile was not built on this grid");
    ScalarField T0(grid);
    T0.bc_minus = p.T_minus;
    T0.bc_plus = p.T_plus;
    for (int i = 0; i < grid.n_psi(); ++i) {
        size_t base = grid.index(i, 0, 0);
        std::fill(T0.v.begin() + base, T0.v.begin() + base + grid.surface_size(),
                  p.theta_values[i]);
    }
    return T0;
}

/// Compatibility defect per interior surface (indices 1..n_psi−2): the
/// surface integral of ΔT0/|∇ψ| normalized by the surface measure
/// ∫ dH/|∇ψ|, so values are comparable across surfaces and resolutions.
///
/// ΔT0 is the conservative face-flux Laplacian (arithmetic face averages
/// of √g g^{ψψ}, the same treatment as the solver stencil); integrating it
/// over the slab between faces turns the defect into the imbalance of the
/// discrete heat flux Φ(k±1/2), which vanishes at O(h²).
inline std::vector<double> compatibility_residual(const EffectiveProfile& p,
                                                  const FluxGrid& grid) {
    if (p.psi_nodes.size() != static_cast<size_t>(grid.n_psi()))
        throw GridMismatchError("profile was not built on this grid");
    const int np = grid.n_psi();
    const double hp = grid.h_psi();
    const auto& th = p.theta_values;

    // Total flux through each interior face: the angular derivatives of T0
    // vanish on coordinate surfaces, so only the ψψ term contributes.
    std::vector<double> face_flux(np - 1);
    for (int i = 0; i + 1 < np; ++i) {
        double coeff = 0.0;
        size_t a = grid.index(i, 0, 0), b = grid.index(i + 1, 0, 0);
        for (size_t s = 0; s < grid.surface_size(); ++s) {
            const PointData& lo = grid.point(a + s);
            const PointData& hi = grid.point(b + s);
            coeff += 0.5 * (lo.sqrt_g * lo.g_inv[0][0] + hi.sqrt_g * hi.g_inv[0][0]);
        }
        coeff *= grid.h_theta() * grid.h_phi();
        face_flux[i] = coeff * (th[i + 1] - th[i]) / hp;
    }

    std::vector<double> res(np > 2 ? np - 2 : 0);
    for (int i = 1; i + 1 < np; ++i) {
        double measure = surface_integral_fn(
            grid, i, [&](size_t idx) { return 1.0 / grid.point(idx).grad_psi; });
        res[i - 1] = std::abs(face_flux[i] - face_flux[i - 1]) / (hp * measure);
    }
    return res;
}

/// CSV export: columns psi, gamma, H, theta.
inline void write_profile_csv(const std::string& path, const EffectiveProfile& p) {
    CsvWriter csv(path, {"psi", "gamma", "H", "theta"});
    for (size_t i = 0; i < p.psi_nodes.size(); ++i)
        csv.write_row({csv_num(p.psi_nodes[i]), csv_num(p.gamma[i]),
                       csv_num(p.H[i]), csv_num(p.theta_values[i])});
}

}  // namespace fiberheat
