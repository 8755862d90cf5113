#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fiberheat/csv.hpp"
#include "fiberheat/field.hpp"

namespace fiberheat {

/// One excluded interval: the ψ for which |m + ι(ψ)n| < 1/(M|(m,n)|^γ).
struct DioInterval {
    double lo = 0.0, hi = 0.0;
    int m = 0, n = 0;
    double width() const { return hi - lo; }
};

/// Excluded set of a rotational-transform profile at Diophantine level
/// (γ, M), truncated to |m|,|n| ≤ K. Reported measures are inner
/// approximations of the full excluded set (mode tails contribute width
/// O(K^{−γ}), negligible for γ > 2).
struct DiophantineReport {
    double gamma = 0.0;
    double M = 0.0;
    int K = 0;
    std::vector<DioInterval> intervals;               // clipped to the ψ range
    double excluded_measure = 0.0;                    // measure of the union
    std::vector<std::pair<double, double>> constants; // sampled (ψ, M(ψ))
};

namespace detail {

inline void require_monotone_iota(const FieldModel& field) {
    if (!field.is_3d())
        throw WrongKindError("Diophantine machinery needs a 3D kind");
    // Sampled monotonicity check of ι(ψ).
    const int n = 64;
    double prev = field.rotational_transform(field.psi_min());
    double sign = 0.0;
    for (int i = 1; i <= n; ++i) {
        double psi = field.psi_min() +
                     (field.psi_max() - field.psi_min()) * i / double(n);
        double cur = field.rotational_transform(psi);
        double d = cur - prev;
        if (d == 0.0) throw NonMonotoneIotaError("iota is not strictly monotone");
        if (sign == 0.0) sign = d > 0 ? 1.0 : -1.0;
        else if (d * sign <= 0.0)
            throw NonMonotoneIotaError("iota is not strictly monotone");
        prev = cur;
    }
}

// ψ with ι(ψ) = target, by bisection on the monotone profile; clamps to the
// domain ends when the target lies outside the ι range.
inline double invert_iota(const FieldModel& field, double target) {
    double lo = field.psi_min(), hi = field.psi_max();
    double ilo = field.rotational_transform(lo);
    double ihi = field.rotational_transform(hi);
    bool increasing = ihi > ilo;
    double vlo = increasing ? ilo : ihi;
    double vhi = increasing ? ihi : ilo;
    if (target <= vlo) return increasing ? lo : hi;
    if (target >= vhi) return increasing ? hi : lo;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double v = field.rotational_transform(mid);
        bool left = increasing ? (v < target) : (v > target);
        if (left) lo = mid;
        else hi = mid;
        if (hi - lo <= 1e-15 * (field.psi_max() - field.psi_min())) break;
    }
    return 0.5 * (lo + hi);
}

inline double union_measure(std::vector<DioInterval> iv) {
    std::sort(iv.begin(), iv.end(),
              [](const DioInterval& a, const DioInterval& b) { return a.lo < b.lo; });
    double total = 0.0, cur_lo = 0.0, cur_hi = -1.0;
    bool open = false;
    for (const auto& s : iv) {
        if (!open || s.lo > cur_hi) {
            if (open) total += cur_hi - cur_lo;
            cur_lo = s.lo;
            cur_hi = s.hi;
            open = true;
        } else {
            cur_hi = std::max(cur_hi, s.hi);
        }
    }
    if (open) total += cur_hi - cur_lo;
    return total;
}

}  // namespace detail

/// The truncated sharp ergodicity constant of the surface S_ψ:
///   M(ψ) = max_{0<|(m,n)|≤K} |(m,n)|^{−γ} / (2π|m + ι(ψ)n|),
/// the norm constant of ∇_{B/J}⁻¹ from Ḣ^{−γ} to L². Returns +inf when a
/// represented mode is resonant (the operator has kernel there). For 2D
/// kinds the operator reduces to a single angle with symbol 2πim and the
/// constant is 1/(2π), attained at |m| = 1.
inline double ergodicity_constant(const FieldModel& field, double psi, double gamma,
                                  int K) {
    if (K < 1) throw std::invalid_argument("K must be >= 1");
    if (!field.is_3d()) return 1.0 / two_pi;
    const double iota = field.rotational_transform(psi);
    double best = 0.0;
    for (int m = -K; m <= K; ++m)
        for (int n = -K; n <= K; ++n) {
            if (m == 0 && n == 0) continue;
            double div = std::abs(m + iota * n);
            if (div < 1e-14) return std::numeric_limits<double>::infinity();
            double k2 = static_cast<double>(m) * m + static_cast<double>(n) * n;
            best = std::max(best, std::pow(k2, -0.5 * gamma) / (two_pi * div));
        }
    return best;
}

/// All excluded intervals for |m|,|n| ≤ K at level (γ, M), solved from the
/// monotone ι profile, plus the union measure. The n = 0 family excludes
/// everything only when |m|^{1+γ} < 1/M, which cannot happen for M ≥ 1.
inline DiophantineReport excluded_intervals(const FieldModel& field, double gamma,
                                            double M, int K) {
    if (!(gamma > 2.0)) throw std::invalid_argument("gamma must be > 2");
    if (!(M > 0.0)) throw std::invalid_argument("M must be > 0");
    if (K < 1) throw std::invalid_argument("K must be >= 1");
    detail::require_monotone_iota(field);

    DiophantineReport rep;
    rep.gamma = gamma;
    rep.M = M;
    rep.K = K;

    const double psi_lo = field.psi_min(), psi_hi = field.psi_max();
    for (int m = -K; m <= K; ++m) {
        // n = 0: |m| < 1/(M|m|^γ) would exclude the whole interval.
        if (m != 0 && std::abs(m) < std::pow(M * std::pow(std::abs(m), gamma), -1.0))
            rep.intervals.push_back({psi_lo, psi_hi, m, 0});
        for (int n = -K; n <= K; ++n) {
            if (n == 0) continue;
            double norm = std::hypot(double(m), double(n));
            double r = 1.0 / (M * std::pow(norm, gamma));
            double center = -double(m) / n;
            double half = r / std::abs(double(n));
            double a = detail::invert_iota(field, center - half);
            double b = detail::invert_iota(field, center + half);
            if (a > b) std::swap(a, b);
            a = std::max(a, psi_lo);
            b = std::min(b, psi_hi);
            if (b > a) rep.intervals.push_back({a, b, m, n});
        }
    }
    rep.excluded_measure = detail::union_measure(rep.intervals);

    const int n_sample = 101;
    for (int i = 0; i < n_sample; ++i) {
        double psi = psi_lo + (psi_hi - psi_lo) * i / (n_sample - 1.0);
        rep.constants.emplace_back(psi,
                                   ergodicity_constant(field, psi, gamma, K));
    }
    return rep;
}

/// Direct evaluation of the truncated Diophantine condition — the
/// brute-force oracle for interval membership. Thresholds are precomputed
/// per (m,n); when every threshold is below 1/2 (always for M ≥ 3) only
/// the integer nearest to −ιn can violate the condition at a given n, so
/// one test costs O(K) instead of O(K²).
class DiophantineTest {
   public:
    DiophantineTest(double gamma, double M, int K) : M_(M), K_(K) {
        thr_.resize(static_cast<size_t>(K + 1) * (2 * K + 1));
        double worst = 0.0;
        for (int n = 0; n <= K; ++n)
            for (int m = -K; m <= K; ++m) {
                if (m == 0 && n == 0) continue;
                double norm2 = static_cast<double>(m) * m +
                               static_cast<double>(n) * n;
                double t = 1.0 / (M * std::pow(norm2, 0.5 * gamma));
                thr_[static_cast<size_t>(n) * (2 * K + 1) + (m + K)] = t;
                worst = std::max(worst, t);
            }
        fast_ = worst < 0.5;
    }

    bool pass(double iota) const {
        // n = 0 family: |m| < 1/(M |m|^γ), possible only for M < 1.
        if (thr(0, 1) > 1.0 || thr(0, -1) > 1.0) return false;
        if (fast_) {
            for (int n = 1; n <= K_; ++n) {
                double x = iota * n;
                int m = static_cast<int>(std::lround(-x));
                if (std::abs(m) <= K_ && std::abs(m + x) < thr(n, m)) return false;
            }
            return true;
        }
        for (int n = 1; n <= K_; ++n)
            for (int m = -K_; m <= K_; ++m)
                if (std::abs(m + iota * n) < thr(n, m)) return false;
        return true;
    }

   private:
    double thr(int n, int m) const {
        return thr_[static_cast<size_t>(n) * (2 * K_ + 1) + (m + K_)];
    }
    double M_;
    int K_;
    bool fast_;
    std::vector<double> thr_;
};

inline bool diophantine_pass(const FieldModel& field, double psi, double gamma,
                             double M, int K) {
    return DiophantineTest(gamma, M, K).pass(field.rotational_transform(psi));
}

struct ErgodicityRow {
    double M = 0.0;
    double excluded_measure = 0.0;
    double scaled = 0.0;  // M^c · μ
};

struct ErgodicityCheck {
    double gamma = 0.0, c = 0.0;
    int K = 0;
    std::vector<ErgodicityRow> rows;
    bool decreasing = true;  // M^c·μ decreasing along the M list
};

/// Evaluate M^c·μ(N(γ,M)) along an increasing M list, with μ approximated
/// by the truncated excluded measure (an inner approximation of the
/// non-ergodic set). The ergodicity condition holds when the scaled
/// sequence decays.
inline ErgodicityCheck check_ergodicity_condition(const FieldModel& field,
                                                  double gamma, double c,
                                                  const std::vector<double>& M_list,
                                                  int K) {
    if (M_list.size() < 2 || !std::is_sorted(M_list.begin(), M_list.end()))
        throw std::invalid_argument("M_list must be increasing with >= 2 entries");
    detail::require_monotone_iota(field);
    ErgodicityCheck out;
    out.gamma = gamma;
    out.c = c;
    out.K = K;
    for (double M : M_list) {
        auto rep = excluded_intervals(field, gamma, M, K);
        out.rows.push_back({M, rep.excluded_measure,
                            std::pow(M, c) * rep.excluded_measure});
    }
    for (size_t i = 1; i < out.rows.size(); ++i)
        if (out.rows[i].scaled > out.rows[i - 1].scaled) out.decreasing = false;
    return out;
}

/// CSV exports for the scan experiment.
inline void write_intervals_csv(const std::string& path, const DiophantineReport& r) {
    CsvWriter csv(path, {"psi_lo", "psi_hi", "m", "n"});
    for (const auto& iv : r.intervals)
        csv.write_row({csv_num(iv.lo), csv_num(iv.hi), csv_num(iv.m), csv_num(iv.n)});
}

inline void write_constants_csv(const std::string& path, const DiophantineReport& r) {
    CsvWriter csv(path, {"psi", "constant"});
    for (const auto& [psi, c] : r.constants)
        csv.write_row({csv_num(psi), csv_num(c)});
}

}  // namespace fiberheat
