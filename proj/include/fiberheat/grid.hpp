#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fiberheat/field.hpp"

namespace fiberheat {

/// Structured tensor grid over flux coordinates (ψ, θ[, φ]) with cached
/// per-node metric data. psi nodes are uniform and include both endpoints;
/// angle nodes are uniform on [0, 2π). n_phi = 1 for 2D kinds.
///
/// Immutable after construction. Node storage order is ψ-major, then θ,
/// then φ: index = (i·n_theta + j)·n_phi + k.
class FluxGrid {
   public:
    FluxGrid(const FieldModel& field, int n_psi, int n_theta, int n_phi = 1)
        : field_(field), n_psi_(n_psi), n_theta_(n_theta), n_phi_(n_phi) {
        if (field.dim() == 2 && n_phi != 1)
            throw WrongDimensionError("2D kinds need n_phi = 1");
        if (field.dim() == 3 && n_phi < 4)
            throw WrongDimensionError("3D kinds need n_phi >= 4");
        if (n_psi < 3 || n_theta < 4)
            throw WrongDimensionError("grid needs n_psi >= 3, n_theta >= 4");

        psi_nodes_.resize(n_psi);
        const double lo = field.psi_min(), hi = field.psi_max();
        for (int i = 0; i < n_psi; ++i)
            psi_nodes_[i] = lo + (hi - lo) * i / (n_psi - 1.0);
        psi_nodes_.front() = lo;
        psi_nodes_.back() = hi;
        theta_nodes_.resize(n_theta);
        for (int j = 0; j < n_theta; ++j) theta_nodes_[j] = two_pi * j / n_theta;
        phi_nodes_.resize(n_phi);
        for (int k = 0; k < n_phi; ++k) phi_nodes_[k] = two_pi * k / n_phi;

        point_.reserve(static_cast<size_t>(n_psi) * n_theta * n_phi);
        for (int i = 0; i < n_psi; ++i)
            for (int j = 0; j < n_theta; ++j)
                for (int k = 0; k < n_phi; ++k)
                    point_.push_back(field.point_data(
                        {psi_nodes_[i], theta_nodes_[j], phi_nodes_[k]}));
    }

    const FieldModel& field() const { return field_; }
    int dim() const { return field_.dim(); }
    int n_psi() const { return n_psi_; }
    int n_theta() const { return n_theta_; }
    int n_phi() const { return n_phi_; }
    size_t node_count() const { return point_.size(); }
    size_t surface_size() const { return static_cast<size_t>(n_theta_) * n_phi_; }

    double h_psi() const { return (psi_nodes_.back() - psi_nodes_.front()) / (n_psi_ - 1.0); }
    double h_theta() const { return two_pi / n_theta_; }
    double h_phi() const { return field_.dim() == 3 ? two_pi / n_phi_ : 1.0; }
    /// Coordinate-space cell volume (dψ·dθ in 2D, dψ·dθ·dφ in 3D).
    double coord_cell() const { return h_psi() * h_theta() * h_phi(); }

    const std::vector<double>& psi_nodes() const { return psi_nodes_; }
    const std::vector<double>& theta_nodes() const { return theta_nodes_; }
    const std::vector<double>& phi_nodes() const { return phi_nodes_; }

    size_t index(int i, int j, int k = 0) const {
        return (static_cast<size_t>(i) * n_theta_ + j) * n_phi_ + k;
    }
    const PointData& point(size_t idx) const { return point_[idx]; }
    const PointData& point(int i, int j, int k = 0) const { return point_[index(i, j, k)]; }

    FluxPoint coord(int i, int j, int k = 0) const {
        return {psi_nodes_[i], theta_nodes_[j], phi_nodes_[k]};
    }

    /// Trapezoidal weight of psi node i (1/2 at the ends).
    double psi_weight(int i) const {
        return (i == 0 || i == n_psi_ - 1) ? 0.5 : 1.0;
    }

   private:
    FieldModel field_;
    int n_psi_, n_theta_, n_phi_;
    std::vector<double> psi_nodes_, theta_nodes_, phi_nodes_;
    std::vector<PointData> point_;
};

/// Grid-sampled scalar (temperature, residual, ...). Holds one value per
/// node in the grid's storage order. The grid must outlive the field.
struct ScalarField {
    const FluxGrid* grid = nullptr;
    std::vector<double> v;
    double bc_minus = 0.0;  // tags for the ψ-extreme Dirichlet surfaces
    double bc_plus = 0.0;

    ScalarField() = default;
    explicit ScalarField(const FluxGrid& g, double fill = 0.0)
        : grid(&g), v(g.node_count(), fill) {}

    double& operator[](size_t i) { return v[i]; }
    double operator[](size_t i) const { return v[i]; }
    size_t size() const { return v.size(); }
};

inline void check_same_grid(const ScalarField& f, const FluxGrid& grid) {
    if (f.grid != &grid || f.v.size() != grid.node_count())
        throw GridMismatchError("scalar field does not live on this grid");
}

/// ∫_{S_ψ} u dH^{d−1} over the coordinate surface psi_index, by the
/// periodic trapezoidal (= spectrally accurate) rule. The integrand is
/// given per surface node in (θ,φ) order. The area element is
/// √g·|∇ψ|·dθ·dφ, which is exact for coordinate slices of the embedding.
inline double surface_integral(const FluxGrid& grid, int psi_index,
                               std::span<const double> integrand) {
    if (psi_index < 0 || psi_index >= grid.n_psi())
        throw IndexOutOfRangeError("psi_index out of range");
    if (integrand.size() != grid.surface_size())
        throw GridMismatchError("integrand is not a surface sample");
    double sum = 0.0;
    size_t base = grid.index(psi_index, 0, 0);
    for (size_t s = 0; s < integrand.size(); ++s) {
        const PointData& pd = grid.point(base + s);
        sum += integrand[s] * pd.sqrt_g * pd.grad_psi;
    }
    return sum * grid.h_theta() * grid.h_phi();
}

/// Same, with the integrand evaluated from a full grid function.
inline double surface_integral(const FluxGrid& grid, int psi_index,
                               const ScalarField& f) {
    check_same_grid(f, grid);
    size_t base = grid.index(psi_index, 0, 0);
    return surface_integral(
        grid, psi_index,
        std::span<const double>(f.v.data() + base, grid.surface_size()));
}

/// Surface integral of a callable sampled at surface nodes.
template <class F>
double surface_integral_fn(const FluxGrid& grid, int psi_index, F&& fn) {
    std::vector<double> vals(grid.surface_size());
    size_t s = 0;
    for (int j = 0; j < grid.n_theta(); ++j)
        for (int k = 0; k < grid.n_phi(); ++k, ++s)
            vals[s] = fn(grid.index(psi_index, j, k));
    return surface_integral(grid, psi_index, vals);
}

/// ∫_D f dμ as the ψ-trapezoid of surface integrals of f/|∇ψ| (the co-area
/// formula); identical arithmetic to the direct √g-weighted node sum.
inline double volume_integral(const FluxGrid& grid, const ScalarField& f) {
    check_same_grid(f, grid);
    double total = 0.0;
    for (int i = 0; i < grid.n_psi(); ++i) {
        double layer = 0.0;
        size_t base = grid.index(i, 0, 0);
        for (size_t s = 0; s < grid.surface_size(); ++s) {
            const PointData& pd = grid.point(base + s);
            layer += f.v[base + s] * pd.sqrt_g;
        }
        total += grid.psi_weight(i) * layer;
    }
    return total * grid.coord_cell();
}

/// Total domain volume ∫_D dμ.
inline double domain_volume(const FluxGrid& grid) {
    ScalarField one(grid, 1.0);
    return volume_integral(grid, one);
}

/// Residual of the co-area derivative identity
///   d/dψ ∫_{S_ψ} F dH = ∫_{S_ψ} div(∇ψ/|∇ψ|·F) / |∇ψ| dH
/// per interior surface (index 1..n_psi−2). The right-hand weight 1/|∇ψ|
/// comes out of the divergence-theorem/co-area derivation; the two sides
/// coincide without it only where |∇ψ| ≡ 1.
///
/// div X is evaluated at nodes in product-rule form
/// ∂_iX^i + X^i ∂_i(ln √g) with centered differences, so the residual is a
/// genuine O(h²) consistency diagnostic of the cached geometry.
inline std::vector<double> gamma_derivative_residual(const FluxGrid& grid,
                                                     const ScalarField& F) {
    check_same_grid(F, grid);
    const int np = grid.n_psi(), nt = grid.n_theta(), nf = grid.n_phi();
    const double hp = grid.h_psi();

    // Surface integrals of F on every slice.
    std::vector<double> I(np);
    for (int i = 0; i < np; ++i) I[i] = surface_integral(grid, i, F);

    // X^i = F g^{iψ} / |∇ψ| per node.
    auto X = [&](size_t idx, int comp) {
        const PointData& pd = grid.point(idx);
        return F.v[idx] * pd.g_inv[comp][0] / pd.grad_psi;
    };
    auto sg = [&](size_t idx) { return grid.point(idx).sqrt_g; };

    std::vector<double> res(np > 2 ? np - 2 : 0);
    std::vector<double> integrand(grid.surface_size());
    for (int i = 1; i + 1 < np; ++i) {
        size_t s = 0;
        for (int j = 0; j < nt; ++j) {
            int jp = (j + 1) % nt, jm = (j + nt - 1) % nt;
            for (int k = 0; k < nf; ++k, ++s) {
                int kp = (k + 1) % nf, km = (k + nf - 1) % nf;
                size_t c = grid.index(i, j, k);
                size_t ip = grid.index(i + 1, j, k), im = grid.index(i - 1, j, k);
                size_t tp = grid.index(i, jp, k), tm = grid.index(i, jm, k);
                double d = (X(ip, 0) - X(im, 0)) / (2.0 * hp) +
                           X(c, 0) * (sg(ip) - sg(im)) / (2.0 * hp * sg(c));
                d += (X(tp, 1) - X(tm, 1)) / (2.0 * grid.h_theta()) +
                     X(c, 1) * (sg(tp) - sg(tm)) / (2.0 * grid.h_theta() * sg(c));
                if (grid.dim() == 3) {
                    size_t pp = grid.index(i, j, kp), pm = grid.index(i, j, km);
                    d += (X(pp, 2) - X(pm, 2)) / (2.0 * grid.h_phi()) +
                         X(c, 2) * (sg(pp) - sg(pm)) / (2.0 * grid.h_phi() * sg(c));
                }
                integrand[s] = d / grid.point(c).grad_psi;
            }
        }
        double dI = (I[i + 1] - I[i - 1]) / (2.0 * hp);
        res[i - 1] = std::abs(dI - surface_integral(grid, i, integrand));
    }
    return res;
}

/// One surface slice of a grid function, in (θ,φ) order.
inline std::vector<double> surface_slice(const ScalarField& f, int psi_index) {
    const FluxGrid& g = *f.grid;
    if (psi_index < 0 || psi_index >= g.n_psi())
        throw IndexOutOfRangeError("psi_index out of range");
    size_t base = g.index(psi_index, 0, 0);
    return std::vector<double>(f.v.begin() + base,
                               f.v.begin() + base + g.surface_size());
}

// --- serialization ---------------------------------------------------------

/// Binary scalar-field file: a small text header followed by raw little-
/// endian float64 values in (ψ-major, θ, φ) node order.
inline void write_scalar_field(const std::string& path, const ScalarField& f) {
    const FluxGrid& g = *f.grid;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << "fiberheat-scalar v1\n"
        << "kind " << to_string(g.field().kind()) << "\n"
        << "dims " << g.n_psi() << " " << g.n_theta() << " " << g.n_phi() << "\n"
        << "psi_range " << g.field().psi_min() << " " << g.field().psi_max()
        << "\n"
        << "data\n";
    out.write(reinterpret_cast<const char*>(f.v.data()),
              static_cast<std::streamsize>(f.v.size() * sizeof(double)));
}

/// CSV export for small grids: one row per node in storage order.
inline void write_scalar_field_csv(const std::string& path, const ScalarField& f) {
    const FluxGrid& g = *f.grid;
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << "psi,theta,phi,value\n";
    char buf[32];
    auto put = [&](double x, char sep) {
        auto r = std::to_chars(buf, buf + sizeof(buf), x);
        out.write(buf, r.ptr - buf);
        out.put(sep);
    };
    for (int i = 0; i < g.n_psi(); ++i)
        for (int j = 0; j < g.n_theta(); ++j)
            for (int k = 0; k < g.n_phi(); ++k) {
                put(g.psi_nodes()[i], ',');
                put(g.theta_nodes()[j], ',');
                put(g.phi_nodes()[k], ',');
                put(f.v[g.index(i, j, k)], '\n');
            }
}

/// Read back a scalar field written by write_scalar_field. The header must
/// match the grid's kind and dimensions.
inline ScalarField read_scalar_field(const std::string& path, const FluxGrid& grid) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::string line;
    std::getline(in, line);
    if (line != "fiberheat-scalar v1") throw Error(path + ": bad magic line");
    std::string kind;
    int np = 0, nt = 0, nf = 0;
    double lo = 0, hi = 0;
    while (std::getline(in, line) && line != "data") {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "kind") ls >> kind;
        else if (key == "dims") ls >> np >> nt >> nf;
        else if (key == "psi_range") ls >> lo >> hi;
        else throw Error(path + ": unknown header key " + key);
    }
    if (kind != to_string(grid.field().kind()) || np != grid.n_psi() ||
        nt != grid.n_theta() || nf != grid.n_phi())
        throw GridMismatchError(path + ": header does not match grid");
    ScalarField f(grid);
    in.read(reinterpret_cast<char*>(f.v.data()),
            static_cast<std::streamsize>(f.v.size() * sizeof(double)));
    if (!in) throw Error(path + ": truncated data section");
    return f;
}

}  // namespace fiberheat
