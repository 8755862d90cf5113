#include <catch_amalgamated.hpp>

#include "fiberheat/effective.hpp"

using namespace fiberheat;
using Catch::Approx;

TEST_CASE("constant Gamma gives the linear profile", "[effective]") {
    std::vector<double> psi(21), gamma(21, 4.2);
    for (int i = 0; i < 21; ++i) psi[i] = 1.0 + 0.05 * i;
    auto p = profile_from_gamma(psi, gamma, 0.0, 1.0);
    for (int i = 0; i < 21; ++i)
        CHECK(p.theta_values[i] == Approx((psi[i] - 1.0) / 1.0).margin(1e-14));
}

TEST_CASE("annulus log profile", "[effective]") {
    FieldModel f = make_field(FieldSpec::annulus());
    auto node_error = [&](int n) {
        FluxGrid g(f, n, 16);
        auto p = effective_profile(g, 0.0, 1.0);
        double worst = 0.0;
        for (int i = 0; i < n; ++i)
            worst = std::max(worst,
                             std::abs(p.theta_values[i] -
                                      std::log(p.psi_nodes[i]) / std::log(2.0)));
        return worst;
    };
    double e1 = node_error(65), e2 = node_error(129);
    CHECK(e1 <= 1e-4);
    CHECK(std::log2(e1 / e2) >= 1.9);

    FluxGrid g(f, 129, 16);
    auto p = effective_profile(g, 0.0, 1.0);
    CHECK(p.theta_at(std::sqrt(2.0)) == Approx(0.5).margin(1e-5));
    CHECK(p.theta_values.front() == 0.0);
    CHECK(p.theta_values.back() == 1.0);
}

TEST_CASE("equal boundary temperatures give a constant profile", "[effective]") {
    FieldModel f = make_field(FieldSpec::channel());
    FluxGrid g(f, 33, 32);
    auto p = effective_profile(g, 5.0, 5.0);
    for (double t : p.theta_values) CHECK(t == Approx(5.0).margin(1e-14));
    CHECK(p.theta_at(0.371) == Approx(5.0).margin(1e-14));
}

TEST_CASE("Theta is invariant under rescaling Gamma", "[effective]") {
    FieldModel f = make_field(FieldSpec::channel());
    FluxGrid g(f, 33, 32);
    auto p = effective_profile(g, -1.0, 2.0);
    std::vector<double> scaled = p.gamma;
    for (auto& x : scaled) x *= 3.7;
    auto q = profile_from_gamma(p.psi_nodes, scaled, -1.0, 2.0);
    for (size_t i = 0; i < p.theta_values.size(); ++i)
        CHECK(q.theta_values[i] == Approx(p.theta_values[i]).margin(1e-13));
}

TEST_CASE("monotonicity follows the temperature drop", "[effective]") {
    FieldModel f = make_field(FieldSpec::torus_integrable());
    FluxGrid g(f, 33, 12, 12);
    for (auto [tm, tp] : {std::pair{0.0, 1.0}, std::pair{2.0, -1.0}}) {
        auto p = effective_profile(g, tm, tp);
        double sign = (tp > tm) ? 1.0 : -1.0;
        for (size_t i = 1; i < p.theta_values.size(); ++i)
            CHECK(sign * (p.theta_values[i] - p.theta_values[i - 1]) > 0.0);
        // interpolant preserves monotonicity off-node
        for (int s = 0; s < 200; ++s) {
            double psi = 0.5 + s * (1.0 / 200.0);
            CHECK(sign * p.dtheta_dpsi(psi) >= 0.0);
        }
    }
}

TEST_CASE("2D Gamma equals the circulation of B along the level set", "[effective]") {
    FieldModel f = make_field(FieldSpec::annulus());
    FluxGrid g(f, 17, 64);
    auto p = effective_profile(g, 0.0, 1.0);
    for (int i : {0, 8, 16}) {
        double r = p.psi_nodes[i];
        // line integral of the Cartesian field along the circle of radius r
        double circ = 0.0;
        int n = g.n_theta();
        for (int j = 0; j < n; ++j) {
            double th = two_pi * j / n;
            auto B = f.cartesian_B({r, th, 0.0}, 0.0);
            double tx = -r * std::sin(th), ty = r * std::cos(th);
            circ += (B[0] * tx + B[1] * ty) * (two_pi / n);
        }
        CHECK(circ == Approx(p.gamma[i]).epsilon(1e-8));
    }
}

TEST_CASE("degenerate Gamma is rejected", "[effective]") {
    std::vector<double> psi = {0.0, 0.5, 1.0}, gamma = {1.0, 0.0, 1.0};
    CHECK_THROWS_AS(profile_from_gamma(psi, gamma, 0.0, 1.0),
                    DegenerateGammaError);
}

TEST_CASE("compatibility residual", "[effective]") {
    SECTION("constant profile gives exactly zero") {
        FieldModel f = make_field(FieldSpec::channel());
        FluxGrid g(f, 17, 16);
        auto p = effective_profile(g, 3.0, 3.0);
        for (double r : compatibility_residual(p, g)) CHECK(r == 0.0);
    }
    SECTION("annulus: below the 1e-4 target at n=128, second order") {
        FieldModel f = make_field(FieldSpec::annulus());
        auto worst = [&](int n) {
            FluxGrid g(f, n, 16);
            auto p = effective_profile(g, 0.0, 1.0);
            double w = 0.0;
            for (double r : compatibility_residual(p, g)) w = std::max(w, r);
            return w;
        };
        double r64 = worst(65), r128 = worst(129);
        INFO("r64=" << r64 << " r128=" << r128);
        CHECK(r128 <= 1e-4);
        CHECK(std::log2(r64 / r128) >= 1.9);
    }
    SECTION("wavy channel: second order under refinement") {
        FieldModel f = make_field(FieldSpec::channel(0.15));
        auto worst = [&](int n) {
            FluxGrid g(f, n, n);
            auto p = effective_profile(g, 0.0, 1.0);
            double w = 0.0;
            for (double r : compatibility_residual(p, g)) w = std::max(w, r);
            return w;
        };
        double r1 = worst(33), r2 = worst(65);
        INFO("r1=" << r1 << " r2=" << r2);
        CHECK(std::log2(r1 / r2) >= 1.9);
    }
}
