#pragma once

#include <atomic>
#include <exception>
#include <filesystem>
#include <iostream>
#include <random>
#include <thread>

#include "fiberheat/analysis.hpp"
#include "fiberheat/config.hpp"
#include "fiberheat/version.hpp"

namespace fiberheat {

namespace detail {

/// Dispatch tasks 0..n−1 to a pool of `workers` threads. Each task owns
/// its solve end to end; the first exception is rethrown after the join.
template <class Fn>
void run_parallel(int n_tasks, int workers, Fn&& fn) {
    if (workers <= 1 || n_tasks <= 1) {
        for (int i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    const int w = std::min(workers, n_tasks);
    for (int t = 0; t < w; ++t)
        pool.emplace_back([&] {
            int i;
            while ((i = next.fetch_add(1)) < n_tasks) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct SolveLogRow {
    std::string model;
    double eps = 0.0;
    int n_psi = 0, n_theta = 0, n_phi = 0;
    int iters = 0;
    double residual = 0.0;
    double seconds = 0.0;
};

/// Wall-clock values go to this log only; it is excluded from the
/// byte-determinism contract of the data CSVs.
inline void write_solve_log(const std::string& path,
                            const std::vector<SolveLogRow>& rows) {
    CsvWriter csv(path, {"model", "eps", "n_psi", "n_theta", "n_phi", "iters",
                         "residual", "seconds"});
    for (const auto& r : rows)
        csv.write_row({r.model, csv_num(r.eps), csv_num(r.n_psi),
                       csv_num(r.n_theta), csv_num(r.n_phi), csv_num(r.iters),
                       csv_num(r.residual), csv_num(r.seconds)});
}

inline void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << body;
}

inline std::string plot_preamble() {
    return "#!/usr/bin/env python3\n"
           "# Reads the CSVs next to this script and renders the experiment "
           "figures.\n"
           "import csv, math, os, sys\n"
           "import matplotlib\n"
           "matplotlib.use('Agg')\n"
           "import matplotlib.pyplot as plt\n"
           "here = os.path.dirname(os.path.abspath(__file__))\n"
           "def load(name):\n"
           "    with open(os.path.join(here, name)) as f:\n"
           "        rows = list(csv.DictReader(f))\n"
           "    return rows\n";
}

}  // namespace detail

/// Everything one experiment run produced, for the manifest.
struct RunResult {
    std::string directory;
    std::vector<std::string> files;
};

namespace detail {

inline void finish_run(const ExperimentConfig& cfg, RunResult& run) {
    std::sort(run.files.begin(), run.files.end());
    std::ostringstream m;
    m << "fiberheat " << version_string << "\n"
      << "experiment " << cfg.experiment << "\n"
      << "config_hash " << config_hash(cfg) << "\n";
    for (const auto& f : run.files) m << "file " << f << "\n";
    write_text_file(run.directory + "/manifest.txt", m.str());
}

inline std::string prepare_dir(const ExperimentConfig& cfg) {
    std::string dir = cfg.resolved_output_dir() + "/" + cfg.experiment;
    std::filesystem::create_directories(dir);
    return dir;
}

struct SweepEntry {
    ErrorReport report;
    SolveReport solve;
    double max_node_err = 0.0;
};

/// Assemble + warm-started solve + error report for one (field, grid, eps).
inline SweepEntry run_solve(const FluxGrid& grid, const EffectiveProfile& prof,
                            const ExperimentConfig& cfg, double eps) {
    SparseOperator A = assemble(grid, eps);
    ScalarField T0 = profile_to_field(prof, grid);
    SolveOptions so;
    so.precond = cfg.precond;
    so.max_iter_factor = cfg.max_iter_factor;
    so.initial_guess = &T0;
    auto [T, rep] = solve_temperature(A, cfg.T_minus, cfg.T_plus, cfg.solver_tol, so);
    SweepEntry e;
    e.report = error_report(T, prof, grid, eps);
    e.solve = rep;
    for (size_t i = 0; i < T.v.size(); ++i)
        e.max_node_err = std::max(e.max_node_err, std::abs(T.v[i] - T0.v[i]));
    return e;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Individual experiments. Each returns the produced files (relative names).
// ---------------------------------------------------------------------------

/// Exactness on the rotationally symmetric annulus: T_ε equals Θ(ψ) up to
/// discretization error, independent of ε, at second order.
inline RunResult run_annulus2d(const ExperimentConfig& cfg, std::ostream& log) {
    RunResult run;
    run.directory = detail::prepare_dir(cfg);
    FieldModel field = make_field(cfg.field);

    struct Row {
        int n = 0;
        double eps = 0, h = 0, max_err = 0, bound = 0;
    };
    std::vector<Row> rows;
    std::vector<detail::SolveLogRow> slog;
    const int n_fine = cfg.n_psi;
    const int n_coarse = cfg.n_psi / 2;
    for (int n : {n_coarse, n_fine}) {
        FluxGrid grid(field, n, n);
        EffectiveProfile prof = effective_profile(grid, cfg.T_minus, cfg.T_plus);
        double h = grid.h_psi();
        // ‖Θ''‖∞ from second differences of the node values.
        double theta_pp = 0.0;
        for (int i = 1; i + 1 < n; ++i)
            theta_pp = std::max(theta_pp,
                                std::abs(prof.theta_values[i + 1] -
                                         2 * prof.theta_values[i] +
                                         prof.theta_values[i - 1]) /
                                    (h * h));
        for (double eps : cfg.eps_list) {
            auto e = detail::run_solve(grid, prof, cfg, eps);
            rows.push_back({n, eps, h, e.max_node_err, 5.0 * h * h * theta_pp});
            slog.push_back({to_string(field.kind()), eps, n, n, 1,
                            e.solve.iterations, e.solve.rel_residual,
                            e.solve.seconds});
            log << "  annulus n=" << n << " eps=" << eps
                << " max|T-Theta|=" << e.max_node_err << "\n";
        }
        if (n == n_fine) {
            write_profile_csv(run.directory + "/profile.csv", prof);
            run.files.push_back("profile.csv");
        }
    }

    {
        CsvWriter csv(run.directory + "/results.csv",
                      {"n", "eps", "h", "max_err", "bound"});
        for (const auto& r : rows)
            csv.write_row({csv_num(r.n), csv_num(r.eps), csv_num(r.h),
                           csv_num(r.max_err), csv_num(r.bound)});
        run.files.push_back("results.csv");
    }
    {
        CsvWriter csv(run.directory + "/summary.csv",
                      {"eps", "richardson_slope", "within_bound"});
        for (size_t i = 0; i < cfg.eps_list.size(); ++i) {
            const Row& coarse = rows[i];
            const Row& fine = rows[i + cfg.eps_list.size()];
            double slope = std::log(coarse.max_err / fine.max_err) /
                           std::log(coarse.h / fine.h);
            bool ok = coarse.max_err <= coarse.bound && fine.max_err <= fine.bound;
            csv.write_row({csv_num(coarse.eps), csv_num(slope), ok ? "1" : "0"});
        }
        run.files.push_back("summary.csv");
    }
    detail::write_solve_log(run.directory + "/solve_log.csv", slog);
    run.files.push_back("solve_log.csv");
    detail::write_text_file(
        run.directory + "/plot_annulus2d.py",
        detail::plot_preamble() +
            "rows = load('results.csv')\n"
            "for n in sorted({r['n'] for r in rows}):\n"
            "    sub = [r for r in rows if r['n'] == n]\n"
            "    plt.loglog([float(r['eps']) for r in sub], [float(r['max_err']) "
            "for r in sub], 'o-', label=f'n={n}')\n"
            "plt.xlabel('eps'); plt.ylabel('max |T - Theta|'); plt.legend()\n"
            "plt.title('annulus exactness: error is eps-independent, O(h^2)')\n"
            "plt.savefig(os.path.join(here, 'annulus2d.png'), dpi=150)\n");
    run.files.push_back("plot_annulus2d.py");
    detail::finish_run(cfg, run);
    return run;
}

/// Convergence-rate sweep shared by channel2d and torus-integrable.
inline RunResult run_rate_sweep(const ExperimentConfig& cfg, std::ostream& log) {
    RunResult run;
    run.directory = detail::prepare_dir(cfg);
    FieldModel field = make_field(cfg.field);
    FluxGrid grid(field, cfg.n_psi, cfg.n_theta, field.dim() == 3 ? cfg.n_phi : 1);
    EffectiveProfile prof = effective_profile(grid, cfg.T_minus, cfg.T_plus);
    write_profile_csv(run.directory + "/profile.csv", prof);
    run.files.push_back("profile.csv");

    const int n = static_cast<int>(cfg.eps_list.size());
    std::vector<detail::SweepEntry> entries(n);
    detail::run_parallel(n, cfg.workers, [&](int i) {
        entries[i] = detail::run_solve(grid, prof, cfg, cfg.eps_list[i]);
    });

    std::vector<detail::SolveLogRow> slog;
    {
        CsvWriter csv(run.directory + "/results.csv",
                      {"eps", "l2", "hb", "hperp", "grad", "h1", "noninteg_volume"});
        for (int i = 0; i < n; ++i) {
            const ErrorReport& r = entries[i].report;
            csv.write_row({csv_num(r.eps), csv_num(r.l2_rho), csv_num(r.hb_rho),
                           csv_num(r.hperp_rho), csv_num(r.grad_rho),
                           csv_num(r.h1_rho), csv_num(r.noninteg_volume)});
            slog.push_back({to_string(field.kind()), r.eps, r.n_psi, r.n_theta,
                            r.n_phi, entries[i].solve.iterations,
                            entries[i].solve.rel_residual, entries[i].solve.seconds});
            log << "  " << cfg.experiment << " eps=" << r.eps << " H1=" << r.h1_rho
                << " iters=" << entries[i].solve.iterations << "\n";
        }
        run.files.push_back("results.csv");
    }
    {
        std::vector<double> errs(n);
        for (int i = 0; i < n; ++i) errs[i] = entries[i].report.h1_rho;
        RateFit fit = fit_rate(cfg.eps_list, errs);
        CsvWriter csv(run.directory + "/summary.csv",
                      {"quantity", "slope", "intercept", "r2"});
        csv.write_row({"h1", csv_num(fit.slope), csv_num(fit.intercept),
                       csv_num(fit.r2)});
        run.files.push_back("summary.csv");
        log << "  fitted H1 slope = " << fit.slope << " (r2 = " << fit.r2 << ")\n";
    }
    detail::write_solve_log(run.directory + "/solve_log.csv", slog);
    run.files.push_back("solve_log.csv");
    detail::write_text_file(
        run.directory + "/plot_" + cfg.experiment + ".py",
        detail::plot_preamble() +
            "rows = load('results.csv')\n"
            "eps = [float(r['eps']) for r in rows]\n"
            "for q in ('l2', 'hb', 'hperp', 'h1'):\n"
            "    plt.loglog(eps, [float(r[q]) for r in rows], 'o-', label=q)\n"
            "fit = load('summary.csv')[0]\n"
            "plt.loglog(eps, [math.exp(float(fit['intercept'])) * "
            "e**float(fit['slope']) for e in eps], 'k--', "
            "label=f\"fit slope {float(fit['slope']):.3f}\")\n"
            "plt.xlabel('eps'); plt.ylabel('error norm'); plt.legend()\n"
            "plt.title('" + cfg.experiment + " convergence to the effective "
            "profile')\n"
            "plt.savefig(os.path.join(here, '" + cfg.experiment + ".png'), "
            "dpi=150)\n");
    run.files.push_back("plot_" + cfg.experiment + ".py");
    detail::finish_run(cfg, run);
    return run;
}

/// Norm sweeps for the perturbed torus: families over the
/// perturbation exponent a (fixed amplitude) and over the amplitude
/// (a = 1/2), plus the per-surface resonance diagnostic.
inline RunResult run_torus_perturbed(const ExperimentConfig& cfg, std::ostream& log) {
    RunResult run;
    run.directory = detail::prepare_dir(cfg);

    struct Family {
        double a, amplitude;
    };
    std::vector<Family> families;
    for (double a : cfg.a_exponents) families.push_back({a, cfg.field.amplitude});
    for (double A : cfg.amplitudes) families.push_back({cfg.field.a_exponent, A});

    struct Row {
        Family fam;
        ErrorReport rep;
        SolveReport solve;
    };
    const int n_eps = static_cast<int>(cfg.eps_list.size());
    std::vector<Row> rows(families.size() * n_eps);
    std::vector<detail::SolveLogRow> slog(rows.size());

    for (size_t f = 0; f < families.size(); ++f) {
        FieldSpec fs = cfg.field;
        fs.a_exponent = families[f].a;
        fs.amplitude = families[f].amplitude;
        FieldModel field = make_field(fs);
        FluxGrid grid(field, cfg.n_psi, cfg.n_theta, cfg.n_phi);
        EffectiveProfile prof = effective_profile(grid, cfg.T_minus, cfg.T_plus);
        detail::run_parallel(n_eps, cfg.workers, [&](int i) {
            auto e = detail::run_solve(grid, prof, cfg, cfg.eps_list[i]);
            rows[f * n_eps + i] = {families[f], e.report, e.solve};
            slog[f * n_eps + i] = {to_string(field.kind()), cfg.eps_list[i],
                                   cfg.n_psi, cfg.n_theta, cfg.n_phi,
                                   e.solve.iterations, e.solve.rel_residual,
                                   e.solve.seconds};
        });
        log << "  family a=" << families[f].a << " A=" << families[f].amplitude
            << " done\n";
    }

    {
        CsvWriter csv(run.directory + "/results.csv",
                      {"a", "amplitude", "eps", "l2", "hb", "hperp", "hb0",
                       "hperp0", "h1", "noninteg_volume"});
        for (const auto& r : rows)
            csv.write_row({csv_num(r.fam.a), csv_num(r.fam.amplitude),
                           csv_num(r.rep.eps), csv_num(r.rep.l2_rho),
                           csv_num(r.rep.hb_rho), csv_num(r.rep.hperp_rho),
                           csv_num(r.rep.hb0_rho), csv_num(r.rep.hperp0_rho),
                           csv_num(r.rep.h1_rho), csv_num(r.rep.noninteg_volume)});
        run.files.push_back("results.csv");
    }
    {
        CsvWriter csv(run.directory + "/summary.csv",
                      {"a", "amplitude", "quantity", "slope", "r2"});
        for (size_t f = 0; f < families.size(); ++f) {
            auto fit_of = [&](auto getter, const char* name) {
                std::vector<double> e(n_eps), v(n_eps);
                for (int i = 0; i < n_eps; ++i) {
                    e[i] = rows[f * n_eps + i].rep.eps;
                    v[i] = getter(rows[f * n_eps + i].rep);
                }
                RateFit fit = fit_rate(e, v);
                csv.write_row({csv_num(families[f].a), csv_num(families[f].amplitude),
                               name, csv_num(fit.slope), csv_num(fit.r2)});
            };
            fit_of([](const ErrorReport& r) { return r.l2_rho; }, "l2");
            fit_of([](const ErrorReport& r) { return r.hb0_rho; }, "hb0");
            fit_of([](const ErrorReport& r) { return r.hperp0_rho; }, "hperp0");
        }
        run.files.push_back("summary.csv");
    }

    // Resonance diagnostic at the smallest eps of the default-amplitude,
    // a = 1/2 family (recorded, not asserted).
    {
        FieldSpec fs = cfg.field;
        fs.a_exponent = 0.5;
        FieldModel field = make_field(fs);
        FluxGrid grid(field, cfg.n_psi, cfg.n_theta, cfg.n_phi);
        EffectiveProfile prof = effective_profile(grid, cfg.T_minus, cfg.T_plus);
        SparseOperator A = assemble(grid, cfg.eps_list.back());
        ScalarField T0 = profile_to_field(prof, grid);
        SolveOptions so;
        so.precond = cfg.precond;
        so.max_iter_factor = cfg.max_iter_factor;
        so.initial_guess = &T0;
        auto [T, rep] =
            solve_temperature(A, cfg.T_minus, cfg.T_plus, cfg.solver_tol, so);
        ScalarField rho(grid);
        for (size_t i = 0; i < rho.size(); ++i) rho.v[i] = T.v[i] - T0.v[i];
        // Uniform grids sample iota at rationals whose denominators divide
        // n_psi-1; keep the mode truncation below that so the flag column
        // registers low-order resonances only, not every node.
        int diag_K = std::min(cfg.K, std::max(4, (cfg.n_psi - 1) / 3 + 1));
        auto diag =
            resonant_surface_diagnostic(rho, grid, cfg.gamma, diag_K, 10.0);
        CsvWriter csv(run.directory + "/diagnostic.csv",
                      {"psi", "iota", "mean_abs_rho", "dio_constant", "pass"});
        for (const auto& d : diag)
            csv.write_row({csv_num(d.psi), csv_num(d.iota), csv_num(d.mean_abs_rho),
                           csv_num(d.dio_constant), d.pass ? "1" : "0"});
        run.files.push_back("diagnostic.csv");
    }

    detail::write_solve_log(run.directory + "/solve_log.csv", slog);
    run.files.push_back("solve_log.csv");
    detail::write_text_file(
        run.directory + "/plot_torus-perturbed.py",
        detail::plot_preamble() +
            "rows = load('results.csv')\n"
            "fams = sorted({(r['a'], r['amplitude']) for r in rows})\n"
            "for a, A in fams:\n"
            "    sub = [r for r in rows if r['a'] == a and r['amplitude'] == A]\n"
            "    plt.loglog([float(r['eps']) for r in sub], [float(r['hperp0']) "
            "for r in sub], 'o-', label=f'a={a} A={A}')\n"
            "plt.xlabel('eps'); plt.ylabel('|grad_b0_perp rho|_L2'); "
            "plt.legend()\n"
            "plt.title('perturbed torus: norm sweeps')\n"
            "plt.savefig(os.path.join(here, 'torus-perturbed.png'), dpi=150)\n");
    run.files.push_back("plot_torus-perturbed.py");
    detail::finish_run(cfg, run);
    return run;
}

/// Diophantine excluded sets: interval tables, measure scaling in M, the
/// sharp constants, and the brute-force membership cross-check.
inline RunResult run_diophantine_scan(const ExperimentConfig& cfg, std::ostream& log) {
    RunResult run;
    run.directory = detail::prepare_dir(cfg);
    FieldModel field = make_field(cfg.field);

    std::vector<DiophantineReport> reports;
    for (double M : cfg.M_list)
        reports.push_back(excluded_intervals(field, cfg.gamma, M, cfg.K));

    write_intervals_csv(run.directory + "/intervals.csv", reports.front());
    run.files.push_back("intervals.csv");
    write_constants_csv(run.directory + "/constants.csv", reports.front());
    run.files.push_back("constants.csv");

    {
        CsvWriter csv(run.directory + "/measures.csv",
                      {"M", "n_intervals", "excluded_measure", "M_mu", "Mc_mu",
                       "width_sum_bound"});
        for (const auto& r : reports) {
            double width_sum = 0.0;
            for (const auto& iv : r.intervals) width_sum += iv.width();
            csv.write_row({csv_num(r.M), csv_num(r.intervals.size()),
                           csv_num(r.excluded_measure),
                           csv_num(r.M * r.excluded_measure),
                           csv_num(std::pow(r.M, cfg.c_exponent) * r.excluded_measure),
                           csv_num(width_sum)});
            log << "  M=" << r.M << " mu=" << r.excluded_measure
                << " M*mu=" << r.M * r.excluded_measure << "\n";
        }
        run.files.push_back("measures.csv");
    }

    // Brute-force membership: uniform samples against the interval union.
    {
        const DiophantineReport& r = reports.front();
        auto sorted = r.intervals;
        std::sort(sorted.begin(), sorted.end(),
                  [](const DioInterval& a, const DioInterval& b) { return a.lo < b.lo; });
        long mismatches = 0;
        const int N = cfg.brute_force_samples;
        DiophantineTest direct(cfg.gamma, r.M, cfg.K);
        for (int s = 0; s < N; ++s) {
            double psi = field.psi_min() + (field.psi_max() - field.psi_min()) *
                                               (s + 0.5) / N;
            bool in_union = false;
            for (const auto& iv : sorted) {
                if (iv.lo > psi) break;
                if (psi <= iv.hi) {
                    in_union = true;
                    break;
                }
            }
            bool fails = !direct.pass(field.rotational_transform(psi));
            if (in_union != fails) ++mismatches;
        }
        CsvWriter csv(run.directory + "/scan.csv", {"M", "samples", "mismatches"});
        csv.write_row({csv_num(r.M), csv_num(N), csv_num(mismatches)});
        run.files.push_back("scan.csv");
        log << "  brute-force scan: " << mismatches << " mismatches over " << N
            << " samples\n";
    }

    detail::write_text_file(
        run.directory + "/plot_diophantine-scan.py",
        detail::plot_preamble() +
            "rows = load('measures.csv')\n"
            "M = [float(r['M']) for r in rows]\n"
            "plt.loglog(M, [float(r['excluded_measure']) for r in rows], 'o-', "
            "label='mu(excluded)')\n"
            "plt.loglog(M, [float(r['width_sum_bound']) for r in rows], 's--', "
            "label='sum of widths')\n"
            "plt.xlabel('M'); plt.ylabel('measure'); plt.legend()\n"
            "plt.title('Diophantine excluded measure ~ 1/M')\n"
            "plt.savefig(os.path.join(here, 'diophantine-scan.png'), dpi=150)\n");
    run.files.push_back("plot_diophantine-scan.py");
    detail::finish_run(cfg, run);
    return run;
}

/// Fourier inversion of the magnetic differential equation on a strongly
/// Diophantine surface, plus the resonant counterexample.
inline RunResult run_mde_demo(const ExperimentConfig& cfg, std::ostream& log) {
    RunResult run;
    run.directory = detail::prepare_dir(cfg);
    FieldModel field = make_field(cfg.field);
    const double psi0 = 0.5 * (field.psi_min() + field.psi_max());
    const int K = cfg.K;

    std::mt19937 rng(20260809u);
    std::uniform_real_distribution<double> U(-1.0, 1.0);

    CsvWriter res(run.directory + "/residuals.csv",
                  {"trial", "forward_residual_rel", "v_mean_abs", "norm_w_l2",
                   "norm_V_hgamma", "inversion_bound_ok"});
    double worst = 0.0;
    for (int trial = 0; trial < cfg.mde_trials; ++trial) {
        // Random mean-free data: draw V̂ with V̂(0,0) = 0 and smooth decay,
        // then pull v = V/(J|∇ψ|) back to a spectrum.
        SurfaceSpectrum V(K, psi0);
        for (int m = 0; m <= K; ++m)
            for (int n = -K; n <= K; ++n) {
                if (m == 0 && n <= 0) continue;
                double decay = std::pow(1.0 + m * m + n * n, -1.5);
                std::complex<double> z(U(rng) * decay, U(rng) * decay);
                V.at(m, n) = z;
                V.at(-m, -n) = std::conj(z);
            }
        const int N = std::max(16, 2 * (2 * K + 1));
        std::vector<double> vals = inverse_transform(V, N, N);
        for (int j = 0; j < N; ++j)
            for (int l = 0; l < N; ++l) {
                PointData pd =
                    field.point_data({psi0, two_pi * j / N, two_pi * l / N});
                vals[static_cast<size_t>(j) * N + l] /= pd.jac * pd.grad_psi;
            }
        SurfaceSpectrum v = forward_transform(vals, N, N, K, psi0);

        SurfaceSpectrum w = solve_mde(field, psi0, v);
        SurfaceSpectrum Vref = mde_rhs_spectrum(field, psi0, v);
        SurfaceSpectrum Vback =
            apply_parallel_symbol(w, field.rotational_transform(psi0));
        double dmax = 0.0, vmax = 0.0;
        for (int m = -K; m <= K; ++m)
            for (int n = -K; n <= K; ++n) {
                if (m == 0 && n == 0) continue;  // solvability null mode
                dmax = std::max(dmax, std::abs(Vback.at(m, n) - Vref.at(m, n)));
                vmax = std::max(vmax, std::abs(Vref.at(m, n)));
            }
        double rel = dmax / vmax;
        worst = std::max(worst, rel);
        // Inversion estimate ‖w‖_{L²} ≤ 2πM(ψ)·‖V‖_{Ḣ^γ} at the truncated level.
        double Mpsi = ergodicity_constant(field, psi0, cfg.gamma, K);
        double lhs = sobolev_norm(w, 0.0);
        double rhs = 2.0 * std::numbers::pi * Mpsi * sobolev_norm(Vref, cfg.gamma);
        res.write_row({csv_num(trial), csv_num(rel),
                       csv_num(std::abs(Vref.at(0, 0))), csv_num(lhs),
                       csv_num(sobolev_norm(Vref, cfg.gamma)),
                       lhs <= rhs ? "1" : "0"});
        if (trial == 0) {
            write_spectrum_csv(run.directory + "/v_spectrum.csv", v);
            write_spectrum_csv(run.directory + "/w_spectrum.csv", w);
            run.files.push_back("v_spectrum.csv");
            run.files.push_back("w_spectrum.csv");
        }
    }
    run.files.push_back("residuals.csv");
    log << "  worst forward residual over trials: " << worst << "\n";

    // Resonant surface: ι = 1/2 must raise SmallDivisor at mode (1,−2).
    {
        FieldSpec fs = cfg.field;
        fs.iota = {0.5, 0.0};
        FieldModel resonant = make_field(fs);
        std::string caught = "none";
        int cm = 0, cn = 0;
        try {
            SurfaceSpectrum v(4, psi0);
            v.at(1, -2) = 1.0;
            v.at(-1, 2) = 1.0;
            solve_mde(resonant, psi0, v);
        } catch (const SmallDivisorError& e) {
            caught = "SmallDivisor";
            cm = e.m;
            cn = e.n;
        }
        CsvWriter csv(run.directory + "/resonance.csv", {"iota", "error", "m", "n"});
        csv.write_row({csv_num(0.5), caught, csv_num(cm), csv_num(cn)});
        run.files.push_back("resonance.csv");
    }

    detail::write_text_file(
        run.directory + "/plot_mde-demo.py",
        detail::plot_preamble() +
            "rows = load('residuals.csv')\n"
            "plt.semilogy([int(r['trial']) for r in rows], "
            "[float(r['forward_residual_rel']) for r in rows], 'o')\n"
            "plt.xlabel('trial'); plt.ylabel('relative forward residual')\n"
            "plt.title('MDE inversion: forward symbol reproduces V')\n"
            "plt.savefig(os.path.join(here, 'mde-demo.png'), dpi=150)\n");
    run.files.push_back("plot_mde-demo.py");
    detail::finish_run(cfg, run);
    return run;
}

/// Non-integrability volume: the integrable decay and the perturbed
/// amplitude scan.
inline RunResult run_noninteg_volume(const ExperimentConfig& cfg, std::ostream& log) {
    RunResult run;
    run.directory = detail::prepare_dir(cfg);

    struct Row {
        std::string kind;
        double a = 0, amplitude = 0, eps = 0, mu = 0, frac = 0;
    };
    std::vector<Row> rows;
    std::vector<detail::SolveLogRow> slog;
    const int n_eps = static_cast<int>(cfg.eps_list.size());

    auto sweep = [&](const FieldSpec& fs, const std::string& label, double a,
                     double A) {
        FieldModel field = make_field(fs);
        FluxGrid grid(field, cfg.n_psi, cfg.n_theta, cfg.n_phi);
        EffectiveProfile prof = effective_profile(grid, cfg.T_minus, cfg.T_plus);
        double vol = domain_volume(grid);
        std::vector<Row> local(n_eps);
        std::vector<detail::SolveLogRow> llog(n_eps);
        detail::run_parallel(n_eps, cfg.workers, [&](int i) {
            auto e = detail::run_solve(grid, prof, cfg, cfg.eps_list[i]);
            double mu = e.report.noninteg_volume;
            local[i] = {label, a, A, cfg.eps_list[i], mu, mu / vol};
            llog[i] = {label, cfg.eps_list[i], cfg.n_psi, cfg.n_theta, cfg.n_phi,
                       e.solve.iterations, e.solve.rel_residual, e.solve.seconds};
        });
        rows.insert(rows.end(), local.begin(), local.end());
        slog.insert(slog.end(), llog.begin(), llog.end());
        log << "  " << label << " a=" << a << " A=" << A << " done\n";
    };

    {
        FieldSpec fs = FieldSpec::torus_integrable(
            cfg.field.iota, cfg.field.psi_min, cfg.field.psi_max,
            cfg.field.major_radius);
        sweep(fs, "integrable", 0.0, 0.0);
    }
    for (double A : cfg.amplitudes) {
        FieldSpec fs = cfg.field;
        fs.amplitude = A;
        sweep(fs, "perturbed", fs.a_exponent, A);
    }

    {
        CsvWriter csv(run.directory + "/results.csv",
                      {"kind", "a", "amplitude", "eps", "mu", "mu_over_volume"});
        for (const auto& r : rows)
            csv.write_row({r.kind, csv_num(r.a), csv_num(r.amplitude),
                           csv_num(r.eps), csv_num(r.mu), csv_num(r.frac)});
        run.files.push_back("results.csv");
    }
    {
        CsvWriter csv(run.directory + "/summary.csv",
                      {"amplitude", "mu_smallest_eps", "plateau_ratio", "C_over_A2"});
        for (double A : cfg.amplitudes) {
            std::vector<double> mus;
            for (const auto& r : rows)
                if (r.kind == "perturbed" && r.amplitude == A) mus.push_back(r.mu);
            double m1 = mus[mus.size() - 2], m2 = mus.back();
            double ratio = (m1 == 0.0 && m2 == 0.0)
                               ? 1.0
                               : (std::max(m1, m2) /
                                  std::max(std::min(m1, m2), 1e-300));
            csv.write_row({csv_num(A), csv_num(m2), csv_num(ratio),
                           csv_num(m2 / (A * A))});
        }
        run.files.push_back("summary.csv");
    }
    detail::write_solve_log(run.directory + "/solve_log.csv", slog);
    run.files.push_back("solve_log.csv");
    detail::write_text_file(
        run.directory + "/plot_noninteg-volume.py",
        detail::plot_preamble() +
            "rows = load('results.csv')\n"
            "keys = sorted({(r['kind'], r['amplitude']) for r in rows})\n"
            "for kind, A in keys:\n"
            "    sub = [r for r in rows if r['kind'] == kind and r['amplitude'] "
            "== A]\n"
            "    plt.semilogx([float(r['eps']) for r in sub], [float(r['mu']) "
            "for r in sub], 'o-', label=f'{kind} A={A}')\n"
            "plt.xlabel('eps'); plt.ylabel('mu(N(eps))'); plt.legend()\n"
            "plt.title('non-integrability volume')\n"
            "plt.savefig(os.path.join(here, 'noninteg-volume.png'), dpi=150)\n");
    run.files.push_back("plot_noninteg-volume.py");
    detail::finish_run(cfg, run);
    return run;
}

/// Geometric identity self-tests (quadrature consistency, co-area
/// derivative, compatibility residual) on every catalog model.
inline RunResult run_geometry_selftest(const ExperimentConfig& cfg,
                                       std::ostream& log) {
    RunResult run;
    run.directory = detail::prepare_dir(cfg);
    CsvWriter csv(run.directory + "/results.csv",
                  {"model", "check", "coarse", "fine", "order", "pass"});

    auto check_model = [&](const FieldSpec& fs) {
        FieldModel field = make_field(fs);
        const bool is3d = field.dim() == 3;
        const int np1 = is3d ? 17 : 33, na1 = is3d ? 16 : 32;
        const int np2 = 2 * np1 - 1, na2 = 2 * na1;
        FluxGrid g1(field, np1, na1, is3d ? na1 : 1);
        FluxGrid g2(field, np2, na2, is3d ? na2 : 1);
        const char* name = to_string(field.kind());

        // 1. co-area consistency: nested quadrature vs direct √g sum.
        {
            ScalarField f(g1);
            for (int i = 0; i < g1.n_psi(); ++i)
                for (int j = 0; j < g1.n_theta(); ++j)
                    for (int k = 0; k < g1.n_phi(); ++k) {
                        FluxPoint p = g1.coord(i, j, k);
                        f.v[g1.index(i, j, k)] =
                            std::cos(p.theta) + p.psi * p.psi;
                    }
            double direct = volume_integral(g1, f);
            double nested = 0.0;
            for (int i = 0; i < g1.n_psi(); ++i)
                nested += g1.psi_weight(i) * g1.h_psi() *
                          surface_integral_fn(g1, i, [&](size_t idx) {
                              return f.v[idx] / g1.point(idx).grad_psi;
                          });
            double rel = std::abs(nested - direct) /
                         std::max(1.0, std::abs(direct));
            csv.write_row({name, "coarea_consistency", csv_num(rel), csv_num(rel),
                           "", rel <= 1e-12 ? "1" : "0"});
        }
        // 2. spectral surface quadrature: doubling the angle resolution
        // shrinks the error of an analytic integrand by >= 100x.
        {
            auto weighted = [&](int nsub) {
                FluxGrid gs(field, 3, nsub, is3d ? nsub : 1);
                return surface_integral_fn(gs, 1, [&](size_t idx) {
                    double theta =
                        gs.theta_nodes()[(idx / gs.n_phi()) % gs.n_theta()];
                    return std::exp(std::sin(theta));
                });
            };
            double ref = weighted(256);
            double e1 = std::abs(weighted(8) - ref);
            double e2 = std::abs(weighted(16) - ref);
            bool ok = e1 >= 100.0 * e2 || e2 <= 1e-13 * std::abs(ref);
            csv.write_row({name, "spectral_quadrature", csv_num(e1), csv_num(e2),
                           "", ok ? "1" : "0"});
        }
        // Richardson order of a per-surface residual, compared at the
        // shared psi surfaces of the nested pair (np2 = 2 np1 - 1).
        auto shared_order = [&](const std::vector<double>& r1,
                                const std::vector<double>& r2, double& c1,
                                double& c2) {
            c1 = c2 = 0.0;
            for (size_t i = 1; i + 1 < static_cast<size_t>(np1); ++i) {
                c1 = std::max(c1, r1[i - 1]);
                c2 = std::max(c2, r2[2 * i - 1]);
            }
            return std::log2(c1 / c2);
        };
        // 3. co-area derivative identity at order >= 2.
        {
            auto resid = [&](const FluxGrid& g) {
                ScalarField F(g);
                for (int i = 0; i < g.n_psi(); ++i)
                    for (int j = 0; j < g.n_theta(); ++j)
                        for (int k = 0; k < g.n_phi(); ++k) {
                            FluxPoint p = g.coord(i, j, k);
                            F.v[g.index(i, j, k)] =
                                p.psi * p.psi + 0.25 * std::cos(p.theta);
                        }
                return gamma_derivative_residual(g, F);
            };
            double r1, r2;
            double order = shared_order(resid(g1), resid(g2), r1, r2);
            bool ok = order >= 1.9 || r2 <= 1e-10;
            csv.write_row({name, "coarea_derivative", csv_num(r1), csv_num(r2),
                           csv_num(order), ok ? "1" : "0"});
        }
        // 4. compatibility residual at order >= 2.
        {
            auto resid = [&](const FluxGrid& g) {
                EffectiveProfile prof = effective_profile(g, 0.0, 1.0);
                return compatibility_residual(prof, g);
            };
            double r1, r2;
            double order = shared_order(resid(g1), resid(g2), r1, r2);
            bool ok = order >= 1.9 || r2 <= 1e-10;
            csv.write_row({name, "compatibility_residual", csv_num(r1),
                           csv_num(r2), csv_num(order), ok ? "1" : "0"});
        }
        log << "  " << name << " checks done\n";
    };

    check_model(FieldSpec::annulus());
    check_model(FieldSpec::channel());
    check_model(FieldSpec::torus_integrable());
    check_model(FieldSpec::torus_perturbed());
    run.files.push_back("results.csv");

    detail::write_text_file(
        run.directory + "/plot_geometry-selftest.py",
        detail::plot_preamble() +
            "rows = load('results.csv')\n"
            "labels = [r['model'] + ':' + r['check'] for r in rows]\n"
            "vals = [float(r['fine']) if r['fine'] else 0 for r in rows]\n"
            "plt.barh(labels, vals)\n"
            "plt.xscale('log'); plt.xlabel('fine-grid residual')\n"
            "plt.tight_layout()\n"
            "plt.savefig(os.path.join(here, 'geometry-selftest.png'), dpi=150)\n");
    run.files.push_back("plot_geometry-selftest.py");
    detail::finish_run(cfg, run);
    return run;
}

/// Dispatch a validated config to its experiment. Deterministic given the
/// config: fixed seeds, fixed iteration order, wall-clock values only in
/// solve_log.csv.
inline RunResult run_experiment(const ExperimentConfig& cfg,
                                std::ostream& log = std::cout) {
    validate_config(cfg);
    log << "running experiment '" << cfg.experiment << "' -> "
        << cfg.resolved_output_dir() << "/" << cfg.experiment << "\n";
    if (cfg.experiment == "annulus2d") return run_annulus2d(cfg, log);
    if (cfg.experiment == "channel2d" || cfg.experiment == "torus-integrable")
        return run_rate_sweep(cfg, log);
    if (cfg.experiment == "torus-perturbed") return run_torus_perturbed(cfg, log);
    if (cfg.experiment == "diophantine-scan") return run_diophantine_scan(cfg, log);
    if (cfg.experiment == "mde-demo") return run_mde_demo(cfg, log);
    if (cfg.experiment == "noninteg-volume") return run_noninteg_volume(cfg, log);
    if (cfg.experiment == "geometry-selftest")
        return run_geometry_selftest(cfg, log);
    throw ConfigError("unknown experiment '" + cfg.experiment + "'");
}

}  // namespace fiberheat
