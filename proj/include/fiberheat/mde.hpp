#pragma once

#include <fftw3.h>

#include <complex>
#include <mutex>
#include <vector>

#include "fiberheat/csv.hpp"
#include "fiberheat/field.hpp"

namespace fiberheat {

/// Truncated Fourier coefficients of a real function on one flux surface,
/// modes e^{i(mθ + nφ)} for |m|,|n| ≤ K. û(−m,−n) = conj û(m,n) for real
/// data. The parallel derivative of the J-normalized field B/J acts
/// mode-wise as multiplication by −2πi(m + ι(ψ)n).
struct SurfaceSpectrum {
    int K = 0;
    double psi = 0.0;
    std::vector<std::complex<double>> c;  // (2K+1)² values, m-major

    SurfaceSpectrum() = default;
    explicit SurfaceSpectrum(int K_, double psi_ = 0.0)
        : K(K_), psi(psi_), c(static_cast<size_t>(2 * K_ + 1) * (2 * K_ + 1)) {}

    int side() const { return 2 * K + 1; }
    std::complex<double>& at(int m, int n) {
        return c[static_cast<size_t>(m + K) * side() + (n + K)];
    }
    std::complex<double> at(int m, int n) const {
        return c[static_cast<size_t>(m + K) * side() + (n + K)];
    }
};

namespace detail {

// FFTW plan creation is not thread safe; execution of private plans is.
inline std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

// Work in fftw_malloc'd buffers: plan algorithm selection depends on the
// buffer alignment, and reproducible rounding needs the aligned code path
// every time.
inline void dft_2d(std::vector<std::complex<double>>& data, int n0, int n1,
                   int sign) {
    const size_t n = data.size();
    fftw_complex* buf;
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        buf = fftw_alloc_complex(n);
        plan = fftw_plan_dft_2d(n0, n1, buf, buf, sign, FFTW_ESTIMATE);
    }
    for (size_t i = 0; i < n; ++i) {
        buf[i][0] = data[i].real();
        buf[i][1] = data[i].imag();
    }
    fftw_execute(plan);
    for (size_t i = 0; i < n; ++i) data[i] = {buf[i][0], buf[i][1]};
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(plan);
        fftw_free(buf);
    }
}

}  // namespace detail

/// DFT of surface samples (θ-major, φ fastest, as produced by
/// surface_slice):  û(m,n) = (1/(NθNφ)) Σ u e^{−i(mθ_j + nφ_l)}.
/// K defaults to the largest symmetric band the grid resolves.
inline SurfaceSpectrum forward_transform(const std::vector<double>& values,
                                         int n_theta, int n_phi, int K = -1,
                                         double psi = 0.0) {
    if (n_theta < 4 || n_phi < 4)
        throw WrongDimensionError("surface transform needs two angle directions");
    if (values.size() != static_cast<size_t>(n_theta) * n_phi)
        throw GridMismatchError("sample count does not match surface dims");
    if (K < 0) K = (std::min(n_theta, n_phi) - 1) / 2;
    if (2 * K + 1 > n_theta || 2 * K + 1 > n_phi)
        throw WrongDimensionError("mode cutoff exceeds grid resolution");

    std::vector<std::complex<double>> work(values.begin(), values.end());
    detail::dft_2d(work, n_theta, n_phi, FFTW_FORWARD);

    SurfaceSpectrum s(K, psi);
    const double norm = 1.0 / (static_cast<double>(n_theta) * n_phi);
    for (int m = -K; m <= K; ++m) {
        int jm = (m + n_theta) % n_theta;
        for (int n = -K; n <= K; ++n) {
            int jn = (n + n_phi) % n_phi;
            s.at(m, n) = work[static_cast<size_t>(jm) * n_phi + jn] * norm;
        }
    }
    return s;
}

/// Inverse of forward_transform: u = Σ û(m,n) e^{i(mθ + nφ)} sampled on the
/// n_theta × n_phi grid. Exact round trip for band-limited data.
inline std::vector<double> inverse_transform(const SurfaceSpectrum& s, int n_theta,
                                             int n_phi) {
    if (2 * s.K + 1 > n_theta || 2 * s.K + 1 > n_phi)
        throw WrongDimensionError("target grid cannot hold the spectrum");
    std::vector<std::complex<double>> work(static_cast<size_t>(n_theta) * n_phi);
    for (int m = -s.K; m <= s.K; ++m) {
        int jm = (m + n_theta) % n_theta;
        for (int n = -s.K; n <= s.K; ++n) {
            int jn = (n + n_phi) % n_phi;
            work[static_cast<size_t>(jm) * n_phi + jn] = s.at(m, n);
        }
    }
    detail::dft_2d(work, n_theta, n_phi, FFTW_BACKWARD);
    std::vector<double> out(work.size());
    for (size_t i = 0; i < work.size(); ++i) out[i] = work[i].real();
    return out;
}

/// Mode-wise action of the normalized parallel derivative ∇_{B/J}:
/// multiplication by −2πi(m + ιn).
inline SurfaceSpectrum apply_parallel_symbol(const SurfaceSpectrum& s, double iota) {
    SurfaceSpectrum out(s.K, s.psi);
    for (int m = -s.K; m <= s.K; ++m)
        for (int n = -s.K; n <= s.K; ++n)
            out.at(m, n) =
                std::complex<double>(0.0, -two_pi * (m + iota * n)) * s.at(m, n);
    return out;
}

/// Homogeneous Sobolev norm (Σ_{k≠0} |k|^{2γ} |û(k)|²)^{1/2}.
inline double sobolev_norm(const SurfaceSpectrum& s, double gamma) {
    double sum = 0.0;
    for (int m = -s.K; m <= s.K; ++m)
        for (int n = -s.K; n <= s.K; ++n) {
            if (m == 0 && n == 0) continue;
            double k2 = static_cast<double>(m) * m + static_cast<double>(n) * n;
            sum += std::pow(k2, gamma) * std::norm(s.at(m, n));
        }
    return std::sqrt(sum);
}

struct MdeOptions {
    double resonance_tol = 1e-12;   // |m + ιn| below this is a resonance
    double mean_tol = 1e-10;        // solvability check on V̂(0,0)
    int oversample = 2;             // sampling grid = oversample·(2K+1)
};

/// Solve the magnetic differential equation div_{S_ψ}(B′w) = v on the
/// surface S_ψ by Fourier division:  ŵ = (i/2π) V̂/(m + ιn) with
/// V = J|∇ψ|·v folded in pointwise on a sampling grid. Applying the
/// parallel symbol to the result reproduces V̂ exactly on represented
/// modes. Throws NotSolvableError when V has nonzero mean and
/// SmallDivisorError on resonant surfaces, reporting the offending mode.
inline SurfaceSpectrum solve_mde(const FieldModel& field, double psi,
                                 const SurfaceSpectrum& v,
                                 const MdeOptions& opts = {}) {
    if (!field.is_3d() || field.is_perturbed())
        throw WrongKindError("solve_mde needs a 3D integrable field");
    const double iota = field.rotational_transform(psi);
    const int K = v.K;

    // Scan modes from low to high |(m,n)| so a resonance is reported at its
    // primitive (m,n).
    std::vector<std::pair<int, int>> modes;
    modes.reserve(static_cast<size_t>(2 * K + 1) * (2 * K + 1) - 1);
    for (int m = -K; m <= K; ++m)
        for (int n = -K; n <= K; ++n)
            if (m != 0 || n != 0) modes.emplace_back(m, n);
    std::sort(modes.begin(), modes.end(), [](auto a, auto b) {
        long na = long(a.first) * a.first + long(a.second) * a.second;
        long nb = long(b.first) * b.first + long(b.second) * b.second;
        if (na != nb) return na < nb;
        if (a.first != b.first) return a.first > b.first;
        return a.second > b.second;
    });
    for (auto [m, n] : modes)
        if (std::abs(m + iota * n) <= opts.resonance_tol)
            throw SmallDivisorError(
                "resonant surface: |m + iota n| ~ 0 at (m,n) = (" +
                    std::to_string(m) + "," + std::to_string(n) + ")",
                m, n);

    // Fold V = J|∇ψ|·v pointwise, then return to mode space.
    const int N = std::max(16, opts.oversample * (2 * K + 1));
    std::vector<double> vals = inverse_transform(v, N, N);
    for (int j = 0; j < N; ++j)
        for (int l = 0; l < N; ++l) {
            PointData pd =
                field.point_data({psi, two_pi * j / N, two_pi * l / N});
            vals[static_cast<size_t>(j) * N + l] *= pd.jac * pd.grad_psi;
        }
    SurfaceSpectrum V = forward_transform(vals, N, N, K, psi);

    double vmax = 0.0;
    for (const auto& z : V.c) vmax = std::max(vmax, std::abs(z));
    if (std::abs(V.at(0, 0)) > opts.mean_tol * (1.0 + vmax))
        throw NotSolvableError("V = J|grad psi| v has nonzero surface mean");

    SurfaceSpectrum w(K, psi);
    const std::complex<double> i_over_2pi(0.0, 1.0 / two_pi);
    for (int m = -K; m <= K; ++m)
        for (int n = -K; n <= K; ++n) {
            if (m == 0 && n == 0) continue;
            w.at(m, n) = i_over_2pi * V.at(m, n) / (m + iota * n);
        }
    return w;
}

/// The V̂ spectrum that solve_mde inverts (exposed for verification).
inline SurfaceSpectrum mde_rhs_spectrum(const FieldModel& field, double psi,
                                        const SurfaceSpectrum& v,
                                        const MdeOptions& opts = {}) {
    const int K = v.K;
    const int N = std::max(16, opts.oversample * (2 * K + 1));
    std::vector<double> vals = inverse_transform(v, N, N);
    for (int j = 0; j < N; ++j)
        for (int l = 0; l < N; ++l) {
            PointData pd =
                field.point_data({psi, two_pi * j / N, two_pi * l / N});
            vals[static_cast<size_t>(j) * N + l] *= pd.jac * pd.grad_psi;
        }
    return forward_transform(vals, N, N, K, psi);
}

/// CSV export of a spectrum: columns m, n, re, im.
inline void write_spectrum_csv(const std::string& path, const SurfaceSpectrum& s) {
    CsvWriter csv(path, {"m", "n", "re", "im"});
    for (int m = -s.K; m <= s.K; ++m)
        for (int n = -s.K; n <= s.K; ++n)
            csv.write_row({csv_num(m), csv_num(n), csv_num(s.at(m, n).real()),
                           csv_num(s.at(m, n).imag())});
}

}  // namespace fiberheat
