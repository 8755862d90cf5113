#include <catch_amalgamated.hpp>

#include <random>

#include "fiberheat/field.hpp"

using namespace fiberheat;
using Catch::Approx;

namespace {

// 3x3 symmetric eigenvalues by cyclic Jacobi rotations (test-side oracle).
std::array<double, 3> sym_eigenvalues(double a[3][3], int dim) {
    double m[3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i][j] = (i < dim && j < dim) ? a[i][j] : (i == j);
    for (int sweep = 0; sweep < 50; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < 3; ++p)
            for (int q = p + 1; q < 3; ++q) off += m[p][q] * m[p][q];
        if (off < 1e-30) break;
        for (int p = 0; p < 3; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(m[p][q]) < 1e-300) continue;
                double tau = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                double t = (tau >= 0 ? 1.0 : -1.0) /
                           (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t), s = t * c;
                double mpp = m[p][p], mqq = m[q][q], mpq = m[p][q];
                m[p][p] = c * c * mpp - 2 * s * c * mpq + s * s * mqq;
                m[q][q] = s * s * mpp + 2 * s * c * mpq + c * c * mqq;
                m[p][q] = m[q][p] = 0.0;
                for (int r = 0; r < 3; ++r) {
                    if (r == p || r == q) continue;
                    double mrp = m[r][p], mrq = m[r][q];
                    m[r][p] = m[p][r] = c * mrp - s * mrq;
                    m[r][q] = m[q][r] = s * mrp + c * mrq;
                }
            }
    }
    std::array<double, 3> ev{m[0][0], m[1][1], m[2][2]};
    std::sort(ev.begin(), ev.end());
    return ev;
}

FluxPoint random_point(const FieldModel& f, std::mt19937& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    // stay slightly inside the closed range
    double psi = f.psi_min() + (0.05 + 0.9 * U(rng)) * (f.psi_max() - f.psi_min());
    return {psi, two_pi * U(rng), two_pi * U(rng)};
}

}  // namespace

TEST_CASE("annulus model: radial flux label", "[field]") {
    FieldModel f = make_field(FieldSpec::annulus());
    std::mt19937 rng(7);
    for (int i = 0; i < 200; ++i) {
        PointData pd = f.point_data(random_point(f, rng));
        CHECK(pd.grad_psi == Approx(1.0).margin(1e-12));
        CHECK(pd.sqrt_g > 0.0);
    }
}

TEST_CASE("channel with large delta has a null point and is rejected", "[field]") {
    CHECK_THROWS_AS(make_field(FieldSpec::channel(5.0)), NullPointError);
    // Oracle: the analytic gradient vanishes exactly at (x, y) = (1/4, 3/5).
    double delta = 5.0, x = 0.25, y = 0.6;
    double psi_x = two_pi * delta * std::cos(two_pi * x) * y * (1 - y);
    double psi_y = 1.0 + delta * std::sin(two_pi * x) * (1 - 2 * y);
    CHECK(std::hypot(psi_x, psi_y) < 1e-14);
    // The default shaping is fine.
    CHECK_NOTHROW(make_field(FieldSpec::channel(0.15)));
}

TEST_CASE("perturbed torus validation", "[field]") {
    FieldModel f = make_field(FieldSpec::torus_perturbed(0.1, 0.5));
    // Symbolic bound: sup|∂θχ1| = |p| A (Δψ)²/4 = 2·0.1/4 = 0.05 < 1.
    std::mt19937 rng(11);
    double sup = 0.0;
    for (int i = 0; i < 500; ++i)
        sup = std::max(sup, std::abs(f.point_data(random_point(f, rng)).dchi1_dtheta));
    CHECK(sup <= 0.05 + 1e-12);
    for (double psi : {f.psi_min(), f.psi_max()})
        CHECK(f.point_data({psi, 1.234, 2.345}).dchi1_dtheta == 0.0);

    CHECK_THROWS_AS(make_field(FieldSpec::torus_perturbed(2.0, 0.5)),
                    PerturbationTooLargeError);
    CHECK_THROWS_AS(make_field(FieldSpec::torus_perturbed(0.1, 0.3)),
                    std::invalid_argument);
}

TEST_CASE("contravariant B components", "[field]") {
    SECTION("annulus: B = grad-perp psi, (0,1) at (x,y)=(1,0)") {
        FieldModel f = make_field(FieldSpec::annulus());
        auto B = f.cartesian_B({1.0, 0.0, 0.0}, 0.0);
        CHECK(B[0] == Approx(0.0).margin(1e-15));
        CHECK(B[1] == Approx(1.0).margin(1e-15));
        // B·∇ψ = 0: for the radial label ∇ψ = (cosθ, sinθ).
        std::mt19937 rng(3);
        for (int i = 0; i < 100; ++i) {
            FluxPoint p = random_point(f, rng);
            auto Bc = f.cartesian_B(p, 0.0);
            double dot = Bc[0] * std::cos(p.theta) + Bc[1] * std::sin(p.theta);
            CHECK(std::abs(dot) < 1e-14);
        }
    }
    SECTION("integrable torus: B^psi vanishes exactly") {
        FieldModel f = make_field(FieldSpec::torus_integrable());
        std::mt19937 rng(5);
        for (int i = 0; i < 200; ++i) {
            auto B = f.contravariant_B(random_point(f, rng), 0.37);
            CHECK(B[0] == 0.0);
        }
    }
    SECTION("perturbed torus: B^psi against finite differences of chi") {
        FieldModel f = make_field(FieldSpec::torus_perturbed(0.1, 0.5));
        const double eps = 0.01, e = std::sqrt(eps), h = 1e-6;
        std::mt19937 rng(9);
        for (int i = 0; i < 50; ++i) {
            FluxPoint p = random_point(f, rng);
            PointData pd = f.point_data(p);
            double chip = f.point_data({p.psi, p.theta + h, p.phi}).chi1;
            double chim = f.point_data({p.psi, p.theta - h, p.phi}).chi1;
            double fd = (chip - chim) / (2 * h);
            auto B = f.contravariant_B(pd, eps);
            CHECK(B[0] == Approx(-e * fd * pd.jac).margin(1e-8));
        }
        // At (mid, π/4, 0) the phase 2θ−φ = π/2 makes ∂θχ1 = 0.
        FluxPoint mid{1.0, std::numbers::pi / 4.0, 0.0};
        auto B = f.contravariant_B(mid, eps);
        CHECK(std::abs(B[0]) < 1e-15);
    }
}

TEST_CASE("diffusion tensor", "[field]") {
    SECTION("eps = 1 collapses to the inverse metric") {
        FieldModel f = make_field(FieldSpec::torus_integrable());
        std::mt19937 rng(13);
        for (int i = 0; i < 50; ++i) {
            PointData pd = f.point_data(random_point(f, rng));
            double D[3][3];
            f.diffusion_tensor(pd, 1.0, D);
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b)
                    CHECK(D[a][b] == Approx(pd.g_inv[a][b]).margin(1e-14));
        }
    }
    SECTION("annulus aligned frame: D = diag(eps, 1) at (1, 0)") {
        FieldModel f = make_field(FieldSpec::annulus());
        PointData pd = f.point_data({1.0, 0.0, 0.0});
        double D[3][3];
        f.diffusion_tensor(pd, 0.01, D);
        CHECK(D[0][0] == Approx(0.01).margin(1e-15));
        CHECK(D[1][1] == Approx(1.0).margin(1e-15));
        CHECK(std::abs(D[0][1]) < 1e-15);
    }
    SECTION("eigenvalues of D·g lie in [eps, 1]") {
        // Dense eigensolve oracle at 100 random points: the spectrum of the
        // mixed tensor is exactly {eps (d−1 times), 1}.
        const double eps = 1e-4;
        for (auto spec : {FieldSpec::torus_perturbed(), FieldSpec::channel()}) {
            FieldModel f = make_field(spec);
            std::mt19937 rng(17);
            for (int i = 0; i < 100; ++i) {
                PointData pd = f.point_data(random_point(f, rng));
                double D[3][3], L[3][3] = {}, C[3][3] = {};
                f.diffusion_tensor(pd, eps, D);
                // Cholesky of g, then C = Lᵀ D L shares eigenvalues with D·g.
                int d = f.dim();
                for (int a = 0; a < d; ++a)
                    for (int b = 0; b <= a; ++b) {
                        double s = pd.g_cov[a][b];
                        for (int k = 0; k < b; ++k) s -= L[a][k] * L[b][k];
                        L[a][b] = (a == b) ? std::sqrt(s) : s / L[b][b];
                    }
                for (int a = 0; a < d; ++a)
                    for (int b = 0; b < d; ++b) {
                        double s = 0;
                        for (int p = 0; p < d; ++p)
                            for (int q = 0; q < d; ++q)
                                s += L[p][a] * D[p][q] * L[q][b];
                        C[a][b] = s;
                    }
                auto ev = sym_eigenvalues(C, d);
                for (int a = 3 - d; a < 3; ++a) {
                    CHECK(ev[a] >= eps * (1 - 1e-10));
                    CHECK(ev[a] <= 1.0 + 1e-10);
                }
                CHECK(ev[2] == Approx(1.0).epsilon(1e-10));
            }
        }
    }
    SECTION("positive definiteness via Cholesky at 1e4 random points") {
        FieldModel f = make_field(FieldSpec::torus_perturbed());
        std::mt19937 rng(23);
        std::uniform_real_distribution<double> Ueps(0.0, 1.0);
        for (int i = 0; i < 10000; ++i) {
            PointData pd = f.point_data(random_point(f, rng));
            double eps = std::pow(10.0, -5.0 * Ueps(rng));
            double D[3][3], L[3][3] = {};
            f.diffusion_tensor(pd, eps, D);
            bool ok = true;
            for (int a = 0; a < 3 && ok; ++a)
                for (int b = 0; b <= a && ok; ++b) {
                    double s = D[a][b];
                    for (int k = 0; k < b; ++k) s -= L[a][k] * L[b][k];
                    if (a == b) {
                        ok = s > 0.0;
                        L[a][a] = std::sqrt(std::max(s, 0.0));
                    } else {
                        L[a][b] = s / L[b][b];
                    }
                }
            REQUIRE(ok);
        }
    }
    SECTION("D·dpsi = eps g^{-1} dpsi for fibered kinds") {
        for (auto spec : {FieldSpec::annulus(), FieldSpec::channel(),
                          FieldSpec::torus_integrable()}) {
            FieldModel f = make_field(spec);
            std::mt19937 rng(29);
            for (int i = 0; i < 50; ++i) {
                PointData pd = f.point_data(random_point(f, rng));
                double D[3][3];
                f.diffusion_tensor(pd, 0.37, D);
                for (int a = 0; a < f.dim(); ++a)
                    CHECK(D[a][0] == Approx(0.37 * pd.g_inv[a][0]).margin(1e-13));
            }
        }
    }
}

TEST_CASE("rotational transform", "[field]") {
    FieldModel quad = make_field(FieldSpec::torus_integrable({0.0, 1.0}));
    CHECK(quad.rotational_transform(1.5) == Approx(1.5).margin(1e-15));

    const double golden = 1.6180339887498949;
    FieldModel lin = make_field(FieldSpec::torus_integrable({golden, 0.0}));
    CHECK(lin.rotational_transform(0.7) == Approx(golden).margin(1e-15));

    // Finite-difference oracle against chi0 at 1000 samples.
    const double h = 1e-5;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        double psi = 0.51 + 0.98 * i / 1000.0;
        double fd = (quad.chi0(psi + h) - quad.chi0(psi - h)) / (2 * h);
        worst = std::max(worst, std::abs(fd - quad.rotational_transform(psi)));
    }
    CHECK(worst <= 1e-8);

    FieldModel f2 = make_field(FieldSpec::annulus());
    CHECK_THROWS_AS(f2.rotational_transform(1.5), WrongKindError);
}

TEST_CASE("discrete divergence of sqrt(g) B vanishes at second order", "[field]") {
    auto div_residual = [](const FieldModel& f, int n) {
        const double eps = 0.01;
        const double hp = (f.psi_max() - f.psi_min()) / n;
        const double ha = two_pi / n;
        double worst = 0.0;
        auto sgB = [&](double psi, double th, double ph, int comp) {
            PointData pd = f.point_data({psi, th, ph});
            return pd.sqrt_g * f.contravariant_B(pd, eps)[comp];
        };
        const int n_phi = f.is_3d() ? 8 : 1;
        for (int i = 1; i < n; ++i)
            for (int j = 0; j < 8; ++j)
                for (int k = 0; k < n_phi; ++k) {
                    double psi = f.psi_min() + i * hp;
                    double th = j * (two_pi / 8), ph = k * (two_pi / n_phi);
                    double d =
                        (sgB(psi + hp, th, ph, 0) - sgB(psi - hp, th, ph, 0)) /
                        (2 * hp);
                    d += (sgB(psi, th + ha, ph, 1) - sgB(psi, th - ha, ph, 1)) /
                         (2 * ha);
                    if (f.is_3d())
                        d += (sgB(psi, th, ph + ha, 2) - sgB(psi, th, ph - ha, 2)) /
                             (2 * ha);
                    worst = std::max(worst, std::abs(d));
                }
        return worst;
    };
    for (auto spec : {FieldSpec::annulus(), FieldSpec::channel(),
                      FieldSpec::torus_integrable(), FieldSpec::torus_perturbed()}) {
        FieldModel f = make_field(spec);
        double r1 = div_residual(f, 32), r2 = div_residual(f, 64);
        INFO(to_string(f.kind()) << " residuals " << r1 << " " << r2);
        CHECK((r2 < 1e-13 || std::log2(r1 / r2) >= 1.9));
    }
}

TEST_CASE("domain checks", "[field]") {
    FieldModel f = make_field(FieldSpec::annulus());
    CHECK_THROWS_AS(f.point_data({2.5, 0.0, 0.0}), OutOfDomainError);
    CHECK_THROWS_AS(f.contravariant_B(FluxPoint{0.5, 0.0, 0.0}, 0.0),
                    OutOfDomainError);
    CHECK_THROWS_AS(make_field(FieldSpec::annulus(2.0, 1.0)), std::invalid_argument);
}
