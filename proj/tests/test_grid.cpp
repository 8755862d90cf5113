#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <random>

#include "fiberheat/grid.hpp"

using namespace fiberheat;
using Catch::Approx;

TEST_CASE("surface integrals against closed forms", "[fluxgeom]") {
    SECTION("annulus circumference Gamma(r) = 2 pi r") {
        FieldModel f = make_field(FieldSpec::annulus());
        FluxGrid g(f, 17, 24);
        for (int i : {0, 8, 16}) {
            double r = g.psi_nodes()[i];
            double got = surface_integral_fn(
                g, i, [&](size_t idx) { return g.point(idx).grad_psi; });
            CHECK(got == Approx(two_pi * r).epsilon(1e-12));
        }
    }
    SECTION("torus surface area 4 pi^2 R r") {
        FieldModel f = make_field(FieldSpec::torus_integrable());
        FluxGrid g(f, 9, 16, 16);
        for (int i : {0, 4, 8}) {
            double r = g.psi_nodes()[i];
            double got = surface_integral_fn(g, i, [](size_t) { return 1.0; });
            CHECK(got ==
                  Approx(4.0 * std::numbers::pi * std::numbers::pi * 3.0 * r)
                      .epsilon(1e-10));
        }
    }
    SECTION("zero integrand") {
        FieldModel f = make_field(FieldSpec::channel());
        FluxGrid g(f, 9, 8);
        CHECK(surface_integral_fn(g, 4, [](size_t) { return 0.0; }) == 0.0);
    }
    SECTION("index out of range") {
        FieldModel f = make_field(FieldSpec::annulus());
        FluxGrid g(f, 9, 8);
        std::vector<double> vals(g.surface_size(), 1.0);
        CHECK_THROWS_AS(surface_integral(g, 9, vals), IndexOutOfRangeError);
    }
}

TEST_CASE("volume integrals against closed forms", "[fluxgeom]") {
    SECTION("annulus area pi (r2^2 - r1^2) = 3 pi") {
        FieldModel f = make_field(FieldSpec::annulus());
        FluxGrid g(f, 33, 16);
        ScalarField one(g, 1.0);
        CHECK(volume_integral(g, one) ==
              Approx(3.0 * std::numbers::pi).epsilon(1e-10));
    }
    SECTION("torus shell volume 2 pi^2 R (r2^2 - r1^2) = 12 pi^2") {
        FieldModel f = make_field(FieldSpec::torus_integrable());
        FluxGrid g(f, 9, 12, 12);
        ScalarField one(g, 1.0);
        CHECK(volume_integral(g, one) ==
              Approx(12.0 * std::numbers::pi * std::numbers::pi).epsilon(1e-8));
    }
    SECTION("zero field") {
        FieldModel f = make_field(FieldSpec::annulus());
        FluxGrid g(f, 9, 8);
        ScalarField z(g);
        CHECK(volume_integral(g, z) == 0.0);
    }
}

TEST_CASE("co-area consistency: nested quadrature equals direct sum", "[fluxgeom]") {
    for (auto spec : {FieldSpec::channel(), FieldSpec::torus_perturbed()}) {
        FieldModel f = make_field(spec);
        FluxGrid g(f, 17, 12, f.dim() == 3 ? 12 : 1);
        ScalarField u(g);
        std::mt19937 rng(41);
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        for (auto& v : u.v) v = U(rng);
        double direct = volume_integral(g, u);
        double nested = 0.0;
        for (int i = 0; i < g.n_psi(); ++i)
            nested += g.psi_weight(i) * g.h_psi() *
                      surface_integral_fn(g, i, [&](size_t idx) {
                          return u.v[idx] / g.point(idx).grad_psi;
                      });
        CHECK(nested == Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("periodic quadrature is spectrally accurate", "[fluxgeom]") {
    FieldModel f = make_field(FieldSpec::annulus());
    auto integrate = [&](int n_theta) {
        FluxGrid g(f, 3, n_theta);
        return surface_integral_fn(g, 1, [&](size_t idx) {
            double theta = g.theta_nodes()[idx / g.n_phi() % g.n_theta()];
            return std::exp(std::sin(theta));
        });
    };
    double ref = integrate(512);
    double e8 = std::abs(integrate(8) - ref);
    double e16 = std::abs(integrate(16) - ref);
    INFO("e8=" << e8 << " e16=" << e16);
    CHECK(e8 >= 100.0 * e16);  // far faster than any fixed power of h
}

TEST_CASE("co-area derivative identity", "[fluxgeom]") {
    SECTION("annulus, F = 1: dGamma/dpsi = 2 pi, residual at roundoff") {
        FieldModel f = make_field(FieldSpec::annulus());
        FluxGrid g(f, 33, 16);
        ScalarField one(g, 1.0);
        auto res = gamma_derivative_residual(g, one);
        for (double r : res) CHECK(r < 1e-11);
        std::vector<double> I(g.n_psi());
        for (int i = 0; i < g.n_psi(); ++i) I[i] = surface_integral(g, i, one);
        for (int i = 1; i + 1 < g.n_psi(); ++i)
            CHECK((I[i + 1] - I[i - 1]) / (2 * g.h_psi()) ==
                  Approx(two_pi).epsilon(1e-12));
    }
    SECTION("F = 0 gives exactly zero") {
        FieldModel f = make_field(FieldSpec::channel());
        FluxGrid g(f, 17, 16);
        ScalarField z(g);
        for (double r : gamma_derivative_residual(g, z)) CHECK(r == 0.0);
    }
    SECTION("torus, F = psi^2: second-order refinement") {
        FieldModel f = make_field(FieldSpec::torus_integrable());
        auto worst = [&](int np, int na) {
            FluxGrid g(f, np, na, na);
            ScalarField F(g);
            for (int i = 0; i < g.n_psi(); ++i) {
                double v = g.psi_nodes()[i] * g.psi_nodes()[i];
                size_t base = g.index(i, 0, 0);
                std::fill(F.v.begin() + base,
                          F.v.begin() + base + g.surface_size(), v);
            }
            double w = 0.0;
            for (double r : gamma_derivative_residual(g, F)) w = std::max(w, r);
            return w;
        };
        double r1 = worst(33, 32), r2 = worst(65, 64);
        INFO("r1=" << r1 << " r2=" << r2);
        CHECK((r2 <= 1e-10 || std::log2(r1 / r2) >= 1.9));
    }
    SECTION("channel: nonorthogonal metric gives a second-order residual") {
        FieldModel f = make_field(FieldSpec::channel(0.15));
        auto worst = [&](int np, int na) {
            FluxGrid g(f, np, na);
            ScalarField F(g);
            for (int i = 0; i < g.n_psi(); ++i)
                for (int j = 0; j < g.n_theta(); ++j) {
                    FluxPoint p = g.coord(i, j);
                    F.v[g.index(i, j)] =
                        p.psi * p.psi + 0.25 * std::cos(p.theta);
                }
            double w = 0.0;
            for (double r : gamma_derivative_residual(g, F)) w = std::max(w, r);
            return w;
        };
        double r1 = worst(33, 32), r2 = worst(65, 64);
        INFO("r1=" << r1 << " r2=" << r2);
        CHECK(std::log2(r1 / r2) >= 1.9);
    }
}

TEST_CASE("scalar field serialization round trip", "[fluxgeom]") {
    FieldModel f = make_field(FieldSpec::torus_integrable());
    FluxGrid g(f, 7, 8, 8);
    ScalarField u(g);
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> U(-5.0, 5.0);
    for (auto& v : u.v) v = U(rng);

    auto dir = std::filesystem::temp_directory_path() / "fiberheat_grid_test";
    std::filesystem::create_directories(dir);
    std::string path = (dir / "field.bin").string();
    write_scalar_field(path, u);
    ScalarField back = read_scalar_field(path, g);
    for (size_t i = 0; i < u.size(); ++i) REQUIRE(back.v[i] == u.v[i]);

    FluxGrid other(f, 7, 8, 12);
    CHECK_THROWS_AS(read_scalar_field(path, other), GridMismatchError);

    write_scalar_field_csv((dir / "field.csv").string(), u);
    CHECK(std::filesystem::file_size(dir / "field.csv") > 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("grid structure invariants", "[fluxgeom]") {
    FieldModel f = make_field(FieldSpec::channel());
    FluxGrid g(f, 21, 16);
    CHECK(g.psi_nodes().front() == 0.0);
    CHECK(g.psi_nodes().back() == 1.0);
    for (int i = 1; i < g.n_psi(); ++i)
        CHECK(g.psi_nodes()[i] - g.psi_nodes()[i - 1] ==
              Approx(g.h_psi()).margin(1e-14));
    for (size_t idx = 0; idx < g.node_count(); ++idx) {
        CHECK(g.point(idx).sqrt_g > 0.0);
        CHECK(g.point(idx).grad_psi > 0.0);
    }
    // g^{psi psi} = |grad psi|^2 ties the cached metric to the embedding.
    for (size_t idx = 0; idx < g.node_count(); idx += 7)
        CHECK(g.point(idx).g_inv[0][0] ==
              Approx(g.point(idx).grad_psi * g.point(idx).grad_psi).epsilon(1e-12));
}
