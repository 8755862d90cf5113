#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "fiberheat/errors.hpp"

namespace fiberheat {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

enum class FieldKind { Annulus2D, Channel2D, TorusIntegrable, TorusPerturbed };

inline const char* to_string(FieldKind k) {
    switch (k) {
        case FieldKind::Annulus2D: return "annulus2d";
        case FieldKind::Channel2D: return "channel2d";
        case FieldKind::TorusIntegrable: return "torus-integrable";
        case FieldKind::TorusPerturbed: return "torus-perturbed";
    }
    return "?";
}

/// Linear rotational-transform profile ι(ψ) = c0 + c1·ψ, with
/// χ0(ψ) = c0·ψ + c1·ψ²/2 so that χ0' = ι.
struct IotaProfile {
    double c0 = 0.0;
    double c1 = 1.0;

    double operator()(double psi) const { return c0 + c1 * psi; }
    double slope() const { return c1; }
    double chi0(double psi) const { return c0 * psi + 0.5 * c1 * psi * psi; }
};

/// Point in flux coordinates. phi is ignored by 2D kinds.
struct FluxPoint {
    double psi = 0.0;
    double theta = 0.0;
    double phi = 0.0;
};

/// Construction parameters for the catalog of field models.
///
/// Parameter schema per kind (also the config-file schema, see config.hpp):
///   annulus2d        psi_min, psi_max        flux label ψ = r, circular levels
///   channel2d        delta                   ψ(x,y) = y + δ sin(2πx) y(1−y), ψ∈[0,1]
///   torus-integrable psi_min, psi_max, major_radius, iota_c0, iota_c1
///   torus-perturbed  as integrable plus amplitude, a_exponent, mode_theta, mode_phi:
///                    χ1 = A (ψ−ψ−)(ψ+−ψ) sin(mode_theta·θ + mode_phi·φ)
struct FieldSpec {
    FieldKind kind = FieldKind::Annulus2D;
    double psi_min = 1.0;
    double psi_max = 2.0;
    double major_radius = 3.0;
    IotaProfile iota{0.0, 1.0};
    double delta = 0.15;
    double amplitude = 0.1;
    double a_exponent = 0.5;
    int mode_theta = 2;
    int mode_phi = -1;
    int validation_samples = 64;

    static FieldSpec annulus(double r_in = 1.0, double r_out = 2.0) {
        FieldSpec s;
        s.kind = FieldKind::Annulus2D;
        s.psi_min = r_in;
        s.psi_max = r_out;
        return s;
    }
    static FieldSpec channel(double delta_ = 0.15) {
        FieldSpec s;
        s.kind = FieldKind::Channel2D;
        s.psi_min = 0.0;
        s.psi_max = 1.0;
        s.delta = delta_;
        return s;
    }
    static FieldSpec torus_integrable(IotaProfile iota_ = {0.0, 1.0},
                                      double psi_lo = 0.5, double psi_hi = 1.5,
                                      double R = 3.0) {
        FieldSpec s;
        s.kind = FieldKind::TorusIntegrable;
        s.psi_min = psi_lo;
        s.psi_max = psi_hi;
        s.major_radius = R;
        s.iota = iota_;
        return s;
    }
    static FieldSpec torus_perturbed(double amplitude_ = 0.1, double a = 0.5,
                                     IotaProfile iota_ = {-0.25, 1.0},
                                     double psi_lo = 0.5, double psi_hi = 1.5,
                                     double R = 3.0) {
        FieldSpec s = torus_integrable(iota_, psi_lo, psi_hi, R);
        s.kind = FieldKind::TorusPerturbed;
        s.amplitude = amplitude_;
        s.a_exponent = a;
        return s;
    }
};

/// Geometry and field data evaluated at one flux-coordinate point.
/// Metric indices are ordered (ψ, θ, φ); 2D kinds use the leading 2×2 block.
struct PointData {
    double g_cov[3][3] = {};   // covariant metric g_ij
    double g_inv[3][3] = {};   // contravariant metric g^ij
    double sqrt_g = 0.0;       // metric Jacobian √g > 0
    double grad_psi = 0.0;     // |∇ψ| = sqrt(g^ψψ)
    double jac = 0.0;          // J = ∇ψ×∇θ(·∇φ), signed
    double iota = 0.0;         // ι(ψ) for 3D kinds
    double chi1 = 0.0;
    double dchi1_dpsi = 0.0;
    double dchi1_dtheta = 0.0;
    double dchi1_dphi = 0.0;
};

namespace detail {

inline double det2(const double e0[3], const double e1[3]) {
    return e0[0] * e1[1] - e0[1] * e1[0];
}

inline double det3(const double e0[3], const double e1[3], const double e2[3]) {
    return e0[0] * (e1[1] * e2[2] - e1[2] * e2[1]) -
           e0[1] * (e1[0] * e2[2] - e1[2] * e2[0]) +
           e0[2] * (e1[0] * e2[1] - e1[1] * e2[0]);
}

// Fill g_cov, g_inv, sqrt_g, grad_psi, jac of `pd` from the embedding
// Jacobian columns e[i] = ∂X/∂coord_i.
inline void metric_from_jacobian(PointData& pd, const double e[3][3], int dim) {
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
            double s = 0.0;
            for (int a = 0; a < 3; ++a) s += e[i][a] * e[j][a];
            pd.g_cov[i][j] = s;
        }
    double det = (dim == 2) ? det2(e[0], e[1]) : det3(e[0], e[1], e[2]);
    if (det == 0.0)
        throw NullPointError("degenerate embedding Jacobian");
    pd.sqrt_g = std::abs(det);
    pd.jac = 1.0 / det;
    if (dim == 2) {
        double d = pd.g_cov[0][0] * pd.g_cov[1][1] - pd.g_cov[0][1] * pd.g_cov[1][0];
        pd.g_inv[0][0] = pd.g_cov[1][1] / d;
        pd.g_inv[1][1] = pd.g_cov[0][0] / d;
        pd.g_inv[0][1] = pd.g_inv[1][0] = -pd.g_cov[0][1] / d;
        pd.g_inv[2][2] = 0.0;
    } else {
        const auto& g = pd.g_cov;
        double d = det3(g[0], g[1], g[2]);
        auto cof = [&](int i, int j) {
            int i1 = (i + 1) % 3, i2 = (i + 2) % 3;
            int j1 = (j + 1) % 3, j2 = (j + 2) % 3;
            return g[i1][j1] * g[i2][j2] - g[i1][j2] * g[i2][j1];
        };
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) {
                pd.g_inv[j][i] = cof(i, j) / d;
                pd.g_inv[i][j] = pd.g_inv[j][i];
            }
    }
    pd.grad_psi = std::sqrt(pd.g_inv[0][0]);
}

}  // namespace detail

/// Analytic model of a fibered (or nearly integrable) magnetic field in
/// straight-field-line flux coordinates, with its embedding metric.
///
/// Immutable after construction; every evaluation is a pure function and
/// safe to call concurrently. Use make_field() to construct with the
/// catalog invariants verified.
class FieldModel {
   public:
    explicit FieldModel(const FieldSpec& spec) : spec_(spec) {}

    const FieldSpec& spec() const { return spec_; }
    FieldKind kind() const { return spec_.kind; }
    int dim() const { return is_3d() ? 3 : 2; }
    bool is_3d() const {
        return spec_.kind == FieldKind::TorusIntegrable ||
               spec_.kind == FieldKind::TorusPerturbed;
    }
    bool is_perturbed() const { return spec_.kind == FieldKind::TorusPerturbed; }
    double psi_min() const { return spec_.psi_min; }
    double psi_max() const { return spec_.psi_max; }

    /// Cartesian position of a flux-coordinate point (z = 0 for 2D kinds).
    std::array<double, 3> embedding(const FluxPoint& p) const {
        check_domain(p);
        double e[3][3];
        return embed(p, e);
    }

    /// Columns e[i] = ∂X/∂(ψ,θ,φ)_i of the embedding Jacobian.
    void embedding_jacobian(const FluxPoint& p, double e[3][3]) const {
        check_domain(p);
        embed(p, e);
    }

    /// Metric, Jacobian and perturbation data at one point.
    PointData point_data(const FluxPoint& p) const {
        check_domain(p);
        PointData pd;
        double e[3][3] = {};
        embed(p, e);
        detail::metric_from_jacobian(pd, e, dim());
        if (is_3d()) {
            pd.iota = spec_.iota(p.psi);
            if (is_perturbed()) {
                double par = (p.psi - spec_.psi_min) * (spec_.psi_max - p.psi);
                double dpar = spec_.psi_min + spec_.psi_max - 2.0 * p.psi;
                double ph = spec_.mode_theta * p.theta + spec_.mode_phi * p.phi;
                double s = std::sin(ph), c = std::cos(ph);
                double A = spec_.amplitude;
                pd.chi1 = A * par * s;
                pd.dchi1_dpsi = A * dpar * s;
                pd.dchi1_dtheta = A * par * spec_.mode_theta * c;
                pd.dchi1_dphi = A * par * spec_.mode_phi * c;
            }
        }
        return pd;
    }

    /// Contravariant components (B^ψ, B^θ, B^φ). For 2D kinds these are
    /// the flux-frame components of B = ∇⊥ψ, i.e. (0, J, 0).
    /// eps enters only through ε^a for TorusPerturbed.
    std::array<double, 3> contravariant_B(const PointData& pd, double eps) const {
        if (!is_3d()) return {0.0, pd.jac, 0.0};
        double e = is_perturbed() ? std::pow(eps, spec_.a_exponent) : 0.0;
        return {-e * pd.dchi1_dtheta * pd.jac,
                (pd.iota + e * pd.dchi1_dpsi) * pd.jac,
                pd.jac};
    }
    std::array<double, 3> contravariant_B(const FluxPoint& p, double eps) const {
        if (eps < 0.0) throw std::invalid_argument("eps must be >= 0");
        return contravariant_B(point_data(p), eps);
    }

    /// |B| from contravariant components and the covariant metric.
    double field_magnitude(const PointData& pd, double eps) const {
        auto B = contravariant_B(pd, eps);
        double s = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) s += pd.g_cov[i][j] * B[i] * B[j];
        return std::sqrt(s);
    }

    /// Contravariant components of the unit vector b = B/|B|.
    std::array<double, 3> unit_b(const PointData& pd, double eps) const {
        auto B = contravariant_B(pd, eps);
        double mag = field_magnitude(pd, eps);
        if (mag == 0.0) throw ZeroFieldError("field magnitude vanishes");
        return {B[0] / mag, B[1] / mag, B[2] / mag};
    }

    /// Contravariant components of b0 = B0/|B|, the integrable part of a
    /// perturbed field normalized by the full magnitude. Equals unit_b for
    /// non-perturbed kinds.
    std::array<double, 3> unit_b0(const PointData& pd, double eps) const {
        if (!is_perturbed()) return unit_b(pd, eps);
        double mag = field_magnitude(pd, eps);
        if (mag == 0.0) throw ZeroFieldError("field magnitude vanishes");
        return {0.0, pd.iota * pd.jac / mag, pd.jac / mag};
    }

    /// Contravariant anisotropic diffusion tensor
    /// D = ε g⁻¹ + (1−ε) b⊗b, the divergence-form rewrite of the flux
    /// b∇_bT + ε∇_b⊥T.
    void diffusion_tensor(const PointData& pd, double eps, double D[3][3]) const {
        if (!(eps > 0.0 && eps <= 1.0))
            throw std::invalid_argument("eps must lie in (0, 1]");
        auto b = unit_b(pd, eps);
        int d = dim();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) D[i][j] = 0.0;
        // Fill the upper triangle and mirror so D is symmetric bitwise
        // (A = Aᵀ exactness downstream depends on it).
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) {
                double bb = b[i] * b[j];
                D[i][j] = eps * pd.g_inv[i][j] + (1.0 - eps) * bb;
                D[j][i] = D[i][j];
            }
    }

    /// ι(ψ) = χ0'(ψ). 3D kinds only.
    double rotational_transform(double psi) const {
        if (!is_3d()) throw WrongKindError("rotational transform requires a 3D kind");
        if (psi < spec_.psi_min - domain_slack() || psi > spec_.psi_max + domain_slack())
            throw OutOfDomainError("psi outside flux range");
        return spec_.iota(psi);
    }

    double chi0(double psi) const {
        if (!is_3d()) throw WrongKindError("chi0 requires a 3D kind");
        return spec_.iota.chi0(psi);
    }

    /// Cartesian components of B (2D kinds: ∇⊥ψ in the plane).
    std::array<double, 3> cartesian_B(const FluxPoint& p, double eps) const {
        PointData pd = point_data(p);
        auto B = contravariant_B(pd, eps);
        double e[3][3];
        embedding_jacobian(p, e);
        std::array<double, 3> out{0.0, 0.0, 0.0};
        for (int i = 0; i < dim(); ++i)
            for (int a = 0; a < 3; ++a) out[a] += B[i] * e[i][a];
        return out;
    }

    /// Channel level-set inversion: the y with ψ(x,y) = ψ at x = θ/2π.
    /// Exact root of the quadratic in y, stable for all δ·sinθ.
    double channel_y(double psi, double theta) const {
        double ds = spec_.delta * std::sin(theta);
        double a = 1.0 + ds;
        double disc = a * a - 4.0 * ds * psi;
        return 2.0 * psi / (a + std::sqrt(disc));
    }

   private:
    friend FieldModel make_field(const FieldSpec&);

    double domain_slack() const {
        return 1e-12 * (spec_.psi_max - spec_.psi_min);
    }

    void check_domain(const FluxPoint& p) const {
        if (p.psi < spec_.psi_min - domain_slack() ||
            p.psi > spec_.psi_max + domain_slack())
            throw OutOfDomainError("psi = " + std::to_string(p.psi) +
                                   " outside flux range");
    }

    std::array<double, 3> embed(const FluxPoint& p, double e[3][3]) const {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) e[i][j] = 0.0;
        switch (spec_.kind) {
            case FieldKind::Annulus2D: {
                double c = std::cos(p.theta), s = std::sin(p.theta);
                e[0][0] = c;
                e[0][1] = s;
                e[1][0] = -p.psi * s;
                e[1][1] = p.psi * c;
                return {p.psi * c, p.psi * s, 0.0};
            }
            case FieldKind::Channel2D: {
                double y = channel_y(p.psi, p.theta);
                double s = std::sin(p.theta), c = std::cos(p.theta);
                double psi_x = two_pi * spec_.delta * c * y * (1.0 - y);
                double psi_y = 1.0 + spec_.delta * s * (1.0 - 2.0 * y);
                e[0][1] = 1.0 / psi_y;
                e[1][0] = 1.0 / two_pi;
                e[1][1] = -psi_x / (two_pi * psi_y);
                return {p.theta / two_pi, y, 0.0};
            }
            case FieldKind::TorusIntegrable:
            case FieldKind::TorusPerturbed: {
                double ct = std::cos(p.theta), st = std::sin(p.theta);
                double cp = std::cos(p.phi), sp = std::sin(p.phi);
                double r = spec_.major_radius + p.psi * ct;
                e[0][0] = ct * cp;
                e[0][1] = ct * sp;
                e[0][2] = st;
                e[1][0] = -p.psi * st * cp;
                e[1][1] = -p.psi * st * sp;
                e[1][2] = p.psi * ct;
                e[2][0] = -r * sp;
                e[2][1] = r * cp;
                return {r * cp, r * sp, p.psi * st};
            }
        }
        throw std::logic_error("unreachable");
    }

    FieldSpec spec_;
};

/// Validate a FieldSpec and return the model. Invariants are checked on a
/// coarse sample lattice (spec.validation_samples per axis):
///   - |∇ψ| > 0 and √g > 0 everywhere (NullPointError);
///   - for the channel, ψ_y > 0 on a Cartesian lattice, which is the
///     graph/nondegeneracy condition for the level sets (NullPointError);
///   - TorusPerturbed: sup|∂θχ1| < 1 (PerturbationTooLargeError) and
///     ∂θχ1 = 0 on the boundary surfaces (BoundaryViolationError).
inline FieldModel make_field(const FieldSpec& spec) {
    if (!(spec.psi_max > spec.psi_min))
        throw std::invalid_argument("psi range is degenerate");
    if (spec.validation_samples < 2)
        throw std::invalid_argument("validation_samples must be >= 2");

    switch (spec.kind) {
        case FieldKind::Annulus2D:
            if (spec.psi_min <= 0.0)
                throw std::invalid_argument("annulus needs psi_min > 0");
            break;
        case FieldKind::Channel2D:
            if (spec.psi_min != 0.0 || spec.psi_max != 1.0)
                throw std::invalid_argument("channel flux range is fixed to [0, 1]");
            break;
        case FieldKind::TorusIntegrable:
        case FieldKind::TorusPerturbed:
            if (spec.psi_min <= 0.0)
                throw std::invalid_argument("torus needs psi_min > 0");
            if (spec.major_radius <= spec.psi_max)
                throw std::invalid_argument("torus needs major_radius > psi_max");
            break;
    }
    if (spec.kind == FieldKind::TorusPerturbed) {
        if (spec.a_exponent < 0.5)
            throw std::invalid_argument("perturbation exponent a must be >= 1/2");
        if (spec.amplitude < 0.0)
            throw std::invalid_argument("amplitude must be >= 0");
        if (spec.mode_theta == 0 && spec.mode_phi == 0)
            throw std::invalid_argument("perturbation mode (0,0) is not a resonance");
    }

    FieldModel field(spec);
    const int n = spec.validation_samples;

    if (spec.kind == FieldKind::Channel2D) {
        // ψ_y = 1 + δ sin(2πx)(1−2y) must stay positive or a null of ∇ψ
        // (and a fold of the level sets) exists.
        for (int i = 0; i < n; ++i) {
            double s = std::sin(two_pi * i / n);
            for (int j = 0; j <= n; ++j) {
                double y = static_cast<double>(j) / n;
                if (1.0 + spec.delta * s * (1.0 - 2.0 * y) <= 1e-10)
                    throw NullPointError(
                        "channel gradient vanishes: delta = " +
                        std::to_string(spec.delta) + " folds the level sets");
            }
        }
    }

    const double dpsi = spec.psi_max - spec.psi_min;
    const int n_phi = field.is_3d() ? n : 1;
    double sup_dchi1 = 0.0;
    for (int i = 0; i < n; ++i) {
        double psi = spec.psi_min + dpsi * i / (n - 1.0);
        for (int j = 0; j < n; ++j) {
            double theta = two_pi * j / n;
            for (int k = 0; k < n_phi; ++k) {
                FluxPoint p{psi, theta, two_pi * k / n_phi};
                PointData pd = field.point_data(p);
                if (!(pd.sqrt_g > 0.0))
                    throw NullPointError("sqrt(g) <= 0 at sampled point");
                if (!(pd.grad_psi > 1e-10))
                    throw NullPointError("|grad psi| vanishes at sampled point");
                sup_dchi1 = std::max(sup_dchi1, std::abs(pd.dchi1_dtheta));
            }
        }
    }

    if (spec.kind == FieldKind::TorusPerturbed) {
        // Exact bound for the catalog shape: sup|∂θχ1| = |p| A (Δψ)²/4.
        double sup_exact =
            std::abs(spec.mode_theta) * spec.amplitude * dpsi * dpsi / 4.0;
        if (sup_exact >= 1.0 || sup_dchi1 >= 1.0)
            throw PerturbationTooLargeError(
                "sup|d_theta chi1| = " + std::to_string(sup_exact) + " >= 1");
        for (double psi : {spec.psi_min, spec.psi_max}) {
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n_phi; ++k) {
                    PointData pd = field.point_data(
                        {psi, two_pi * j / n, two_pi * k / n_phi});
                    if (std::abs(pd.dchi1_dtheta) > 1e-12)
                        throw BoundaryViolationError(
                            "d_theta chi1 != 0 on boundary surface");
                }
        }
    }
    return field;
}

}  // namespace fiberheat
