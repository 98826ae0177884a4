#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dcrm/flows.hpp"
#include "dcrm/observables.hpp"
#include "dcrm/parallel.hpp"
#include "dcrm/stats.hpp"

namespace dcrm {

// ---------------------------------------------------------------------------
// Tail estimation and bounds
// ---------------------------------------------------------------------------

// tail(rho) = fraction of values with |v - center| > rho, plus the 95%
// Dvoretzky-Kiefer-Wolfowitz sampling margin (constant across the grid).
inline std::pair<Vec, Vec> empirical_tail(std::span<const double> values, double center,
                                          std::span<const double> rho_grid) {
    if (values.empty()) throw input_error("empirical_tail: no values");
    for (std::size_t i = 0; i < rho_grid.size(); ++i) {
        if (!(rho_grid[i] > 0.0) || (i > 0 && !(rho_grid[i] > rho_grid[i - 1])))
            throw input_error("empirical_tail: rho grid must be increasing and positive");
    }
    const double margin =
        std::sqrt(std::log(2.0 / 0.05) / (2.0 * static_cast<double>(values.size())));
    Vec tail(rho_grid.size(), 0.0), dkw(rho_grid.size(), margin);
    for (double v : values) {
        const double d = std::abs(v - center);
        for (std::size_t i = 0; i < rho_grid.size(); ++i) {
            if (d > rho_grid[i])
                tail[i] += 1.0;
            else
                break;  // grid increasing: no later point can be exceeded
        }
    }
    for (double& t : tail) t /= static_cast<double>(values.size());
    return {std::move(tail), std::move(dkw)};
}

// ln of the Gaussian concentration bound (1/2) exp(-rho^2 / (2 sigma^2)),
// kept in log space to survive arbitrarily sharp concentration.
inline double gaussian_bound_log(double rho, double sigma_f) {
    if (!(sigma_f > 0.0)) throw input_error("gaussian_bound_log: sigma_f must be positive");
    if (rho < 0.0) throw input_error("gaussian_bound_log: rho must be nonnegative");
    return std::log(0.5) - rho * rho / (2.0 * sigma_f * sigma_f);
}

// ln of the complexity-scaled bound (1/2) exp(-coeff N^2).
inline double scaled_bound_log(unsigned n, double coeff = 32.0) {
    if (n < 1) throw input_error("scaled_bound_log: n must be >= 1");
    const double dn = static_cast<double>(n);
    return std::log(0.5) - coeff * dn * dn;
}

// Least-squares fit of ln(tail) = a - c rho^2 over points with tail strictly
// inside (0, 1); returns (c, r^2).
inline std::pair<double, double> fit_concentration_exponent(std::span<const double> rho_grid,
                                                            std::span<const double> tail) {
    if (rho_grid.size() != tail.size())
        throw dimension_error("fit_concentration_exponent: grid/tail length mismatch");
    Vec xs, ys;
    for (std::size_t i = 0; i < tail.size(); ++i) {
        if (tail[i] > 0.0 && tail[i] < 1.0) {
            xs.push_back(rho_grid[i] * rho_grid[i]);
            ys.push_back(std::log(tail[i]));
        }
    }
    if (xs.size() < 3)
        throw fit_degenerate("fit_concentration_exponent: fewer than 3 measurable points");
    const LinearFit f = fit_line(xs, ys);
    return {-f.slope, f.r_squared};
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ConcentrationReport {
    Vec rho_grid;
    Vec empirical_tail;
    Vec dkw_margin;
    Vec bound_log;
    double fitted_exponent = std::numeric_limits<double>::quiet_NaN();
    double fit_r_squared = std::numeric_limits<double>::quiet_NaN();
    double sigma_f = 0.0;
    double m_f = 0.0;
    bool verdict = false;
    std::size_t count = 0;
};

struct ReductionReport {
    double dispersion_before = 0.0;
    double dispersion_after = 0.0;
    double contraction_ratio = 0.0;
    double predicted_ratio = 1.0;
    double ratio_stderr = 0.0;
    bool verdict = false;
    std::size_t count = 0;
};

struct ExperimentOptions {
    std::size_t rho_points = 40;
    double rho_span_sigmas = 4.0;
    bool center_median = false;  // use the median instead of the mean as M_f
    double ut_step = 0.01;
    unsigned threads = 1;
};

namespace detail {

// Sample member i, advance it through the given schedule segments, and
// return the lifted observable value.  Members never coexist in memory, so
// large (N, count) runs stay cheap; the counter-based sampler makes the
// result identical to materializing the whole ensemble first.
inline Vec streamed_values(const ModelSpec& spec, const DiagonalObservable& obs,
                           std::size_t count, std::span<const ScheduleSegment> segs,
                           const ExperimentOptions& opts) {
    Vec values(count);
    parallel_for(count, opts.threads, [&](std::size_t i) {
        PhaseState st = sample_state(spec.measure, spec.n_factors, spec.seed, i);
        if (!segs.empty()) advance_segments(st, spec, segs, opts.ut_step);
        values[i] = lift_diagonal(obs, st);
    });
    return values;
}

}  // namespace detail

// Runs the internal dynamics to t_horizon, evaluates the lifted observable
// on every member, and compares the empirical tails with the Gaussian
// concentration bound at the sample dispersion.
inline ConcentrationReport concentration_experiment(const ModelSpec& spec,
                                                    const DiagonalObservable& obs,
                                                    std::size_t count,
                                                    const ExperimentOptions& opts = {}) {
    if (count < 1000) throw input_error("concentration_experiment: count must be >= 1000");
    spec.validate();
    const auto segs = flatten_schedule(spec.schedule);
    ConcentrationReport rep;
    rep.count = count;
    const Vec values = detail::streamed_values(spec, obs, count, segs, opts);
    rep.m_f = opts.center_median ? sample_median(values) : sample_mean(values);
    rep.sigma_f = sample_sd(values);
    if (!(rep.sigma_f > 0.0))
        throw input_error("concentration_experiment: observable has zero dispersion");

    rep.rho_grid.resize(opts.rho_points);
    for (std::size_t j = 0; j < opts.rho_points; ++j)
        rep.rho_grid[j] = opts.rho_span_sigmas * rep.sigma_f *
                          static_cast<double>(j + 1) / static_cast<double>(opts.rho_points);
    auto [tail, dkw] = empirical_tail(values, rep.m_f, rep.rho_grid);
    rep.empirical_tail = std::move(tail);
    rep.dkw_margin = std::move(dkw);
    rep.bound_log.resize(rep.rho_grid.size());
    for (std::size_t j = 0; j < rep.rho_grid.size(); ++j)
        rep.bound_log[j] = gaussian_bound_log(rep.rho_grid[j], rep.sigma_f);

    try {
        const auto [c, r2] = fit_concentration_exponent(rep.rho_grid, rep.empirical_tail);
        rep.fitted_exponent = c;
        rep.fit_r_squared = r2;
    } catch (const fit_degenerate&) {
        // Tails sharper than the grid can resolve; exponent left as NaN.
    }

    rep.verdict = true;
    for (std::size_t j = 0; j < rep.rho_grid.size(); ++j) {
        if (rep.empirical_tail[j] > std::exp(rep.bound_log[j]) + rep.dkw_margin[j]) {
            rep.verdict = false;
            break;
        }
    }
    return rep;
}

// Dispersion of the lifted observable at the start and end of the first
// concentration segment (with no such segment, across the whole schedule).
inline ReductionReport reduction_experiment(const ModelSpec& spec,
                                            const DiagonalObservable& obs, std::size_t count,
                                            const ExperimentOptions& opts = {}) {
    if (count < 2) throw input_error("reduction_experiment: count must be >= 2");
    spec.validate();
    const auto segs = flatten_schedule(spec.schedule);
    std::size_t conc = segs.size();
    for (std::size_t i = 0; i < segs.size(); ++i) {
        if (segs[i].kind == RegimeKind::concentration) {
            conc = i;
            break;
        }
    }
    // Measurement window: the first concentration segment when one exists,
    // otherwise the whole schedule (a null experiment for regime catalogs
    // without reduction).
    const bool has_conc = conc < segs.size();
    const std::span<const ScheduleSegment> prefix(segs.data(), has_conc ? conc : 0);
    const std::span<const ScheduleSegment> window =
        has_conc ? std::span(&segs[conc], 1) : std::span<const ScheduleSegment>(segs);
    const double t_c = has_conc ? segs[conc].duration : 0.0;

    Vec before(count), after(count);
    parallel_for(count, opts.threads, [&](std::size_t i) {
        PhaseState st = sample_state(spec.measure, spec.n_factors, spec.seed, i);
        if (!prefix.empty()) advance_segments(st, spec, prefix, opts.ut_step);
        before[i] = lift_diagonal(obs, st);
        if (!window.empty()) advance_segments(st, spec, window, opts.ut_step);
        after[i] = lift_diagonal(obs, st);
    });

    ReductionReport rep;
    rep.count = count;
    rep.dispersion_before = sample_sd(before);
    if (!(rep.dispersion_before > 0.0))
        throw input_error("reduction_experiment: zero dispersion before concentration");
    rep.dispersion_after = sample_sd(after);
    rep.contraction_ratio = rep.dispersion_after / rep.dispersion_before;
    rep.predicted_ratio = std::exp(-spec.schedule.contraction_rate * t_c);
    // Standard error of a dispersion ratio from two n-sample estimates,
    // treating them as independent (conservative for this paired setup).
    rep.ratio_stderr = rep.contraction_ratio / std::sqrt(static_cast<double>(count - 1));
    rep.verdict = rep.contraction_ratio <= rep.predicted_ratio * 1.1;
    return rep;
}

}  // namespace dcrm
