#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "dcrm/concentration.hpp"
#include "dcrm/flows.hpp"
#include "dcrm/observables.hpp"
#include "dcrm/parallel.hpp"
#include "dcrm/stats.hpp"

namespace dcrm {

// ---------------------------------------------------------------------------
// Subsystems and observable coordinates
// ---------------------------------------------------------------------------

struct SubsystemSpec {
    std::string name;
    std::vector<std::size_t> factor_indices;
};

struct SystemPartition {
    SubsystemSpec a, b, s;
};

inline SystemPartition partition_systems(std::size_t n_factors, std::size_t n_a,
                                         std::size_t n_b) {
    if (n_a < 1 || n_b < 1) throw input_error("partition_systems: subsystems must be nonempty");
    if (n_a + n_b != n_factors)
        throw input_error("partition_systems: n_a + n_b must equal n_factors");
    SystemPartition p;
    p.a.name = "A";
    p.b.name = "B";
    p.s.name = "S";
    p.a.factor_indices.resize(n_a);
    std::iota(p.a.factor_indices.begin(), p.a.factor_indices.end(), std::size_t{0});
    p.b.factor_indices.resize(n_b);
    std::iota(p.b.factor_indices.begin(), p.b.factor_indices.end(), n_a);
    p.s.factor_indices.resize(n_factors);
    std::iota(p.s.factor_indices.begin(), p.s.factor_indices.end(), std::size_t{0});
    return p;
}

// Mean of the mu-th position coordinate over the system's factors
// (mu in 1..4); a (1/sqrt(|system|))-Lipschitz function of the state.
inline double observable_coordinate(const PhaseState& state, const SubsystemSpec& system,
                                    std::size_t mu) {
    if (mu < 1 || mu > 4) throw input_error("observable_coordinate: mu must be in 1..4");
    if (system.factor_indices.empty())
        throw input_error("observable_coordinate: empty system");
    const std::size_t n = state.n_factors();
    double s = 0.0;
    for (std::size_t k : system.factor_indices) {
        if (k >= n) throw dimension_error("observable_coordinate: factor index out of range");
        s += state.u[k * kConfigDim + (mu - 1)];
    }
    return s / static_cast<double>(system.factor_indices.size());
}

// ---------------------------------------------------------------------------
// Center-of-mass reference dynamics: dM/dtau = h(tau)
// ---------------------------------------------------------------------------

struct ConstantCom {
    std::array<double, 4> value{};
};

struct SinusoidalCom {
    std::array<double, 4> base{};
    std::array<double, 4> amplitude{};
    double frequency = 1.0;
    double phase = 0.0;
};

struct PiecewiseCom {
    // (start_tau, value); the active value is the last segment started.
    std::vector<std::pair<double, std::array<double, 4>>> segments;
};

using ComFunction = std::variant<ConstantCom, SinusoidalCom, PiecewiseCom>;

inline std::array<double, 4> com_rate(const ComFunction& h, double tau) {
    return std::visit(
        [&](const auto& f) -> std::array<double, 4> {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, ConstantCom>) {
                return f.value;
            } else if constexpr (std::is_same_v<T, SinusoidalCom>) {
                std::array<double, 4> v;
                const double s = std::sin(f.frequency * tau + f.phase);
                for (std::size_t i = 0; i < 4; ++i) v[i] = f.base[i] + f.amplitude[i] * s;
                return v;
            } else {
                if (f.segments.empty())
                    throw input_error("piecewise com function: no segments");
                std::array<double, 4> v = f.segments.front().second;
                for (const auto& [start, val] : f.segments)
                    if (start <= tau) v = val;
                return v;
            }
        },
        h);
}

namespace detail {

// Left-limit rate: a piecewise segment starting exactly at tau is not yet
// active.  Substeps end on breakpoints, so their final stage must see the
// outgoing segment's value.
inline std::array<double, 4> com_rate_left(const ComFunction& h, double tau) {
    if (const auto* pw = std::get_if<PiecewiseCom>(&h)) {
        if (pw->segments.empty()) throw input_error("piecewise com function: no segments");
        std::array<double, 4> v = pw->segments.front().second;
        for (const auto& [start, val] : pw->segments)
            if (start < tau) v = val;
        return v;
    }
    return com_rate(h, tau);
}

inline void com_rk4_step(std::array<double, 4>& m, const ComFunction& h, double tau,
                         double dt) {
    const auto k1 = com_rate(h, tau);
    const auto k2 = com_rate(h, tau + dt / 2);
    const auto k4 = com_rate_left(h, tau + dt);
    for (std::size_t i = 0; i < 4; ++i)
        m[i] += dt / 6.0 * (k1[i] + 4.0 * k2[i] + k4[i]);
}

inline std::vector<double> com_breakpoints(const ComFunction& h) {
    std::vector<double> pts;
    if (const auto* pw = std::get_if<PiecewiseCom>(&h))
        for (const auto& [start, val] : pw->segments) pts.push_back(start);
    return pts;
}

}  // namespace detail

// Integrates the system-independent reference ODE over the grid.  The rate
// depends on tau only, so RK4 reduces to Simpson quadrature; piecewise rates
// are split at their breakpoints and substeps are capped at 1e-2.
inline std::vector<std::array<double, 4>> com_trajectory(const std::array<double, 4>& m0,
                                                         const ComFunction& h,
                                                         std::span<const double> tau_grid) {
    if (tau_grid.empty()) throw input_error("com_trajectory: empty tau grid");
    for (std::size_t i = 1; i < tau_grid.size(); ++i)
        if (!(tau_grid[i] > tau_grid[i - 1]))
            throw input_error("com_trajectory: tau grid must be increasing");
    const auto breaks = detail::com_breakpoints(h);
    std::vector<std::array<double, 4>> out;
    out.reserve(tau_grid.size());
    std::array<double, 4> m = m0;
    out.push_back(m);
    for (std::size_t j = 1; j < tau_grid.size(); ++j) {
        double lo = tau_grid[j - 1];
        const double hi = tau_grid[j];
        std::vector<double> cuts;
        for (double b : breaks)
            if (b > lo && b < hi) cuts.push_back(b);
        cuts.push_back(hi);
        for (double cut : cuts) {
            const double span = cut - lo;
            const auto nsub = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::ceil(span / 1e-2 - 1e-12)));
            const double dt = span / static_cast<double>(nsub);
            for (std::size_t s = 0; s < nsub; ++s)
                detail::com_rk4_step(m, h, lo + static_cast<double>(s) * dt, dt);
            lo = cut;
        }
        out.push_back(m);
    }
    return out;
}

// ---------------------------------------------------------------------------
// WEP experiment
// ---------------------------------------------------------------------------

struct SystemSeries {
    std::string name;
    // [tau index][mu-1]
    std::vector<std::array<double, 4>> mean, sd, se;
};

struct WepReport {
    Vec tau_grid;
    std::vector<std::array<double, 4>> com_reference;
    SystemSeries a, b, s;
    double eotvos = 0.0;
    double tail_exponent = std::numeric_limits<double>::quiet_NaN();
    bool verdict = false;
    std::size_t count = 0, n_a = 0, n_b = 0;
};

inline constexpr double kEotvosFloor = 1e-30;

struct WepOptions {
    double ut_step = 0.01;
    unsigned threads = 1;
    std::size_t rho_points = 40;
    double rho_span_sigmas = 4.0;
};

// Free fall here means no factor exchange between system and environment:
// the drift acting during the tau evolution is the common rate h extended to
// every factor's position block, so every member shares one displacement
// history and the reference COM never sees the subsystem split.
inline WepReport wep_experiment(const ModelSpec& spec, std::size_t n_a, std::size_t n_b,
                                const ComFunction& h, std::span<const double> tau_grid,
                                std::size_t count, const WepOptions& opts = {}) {
    if (count < 2) throw input_error("wep_experiment: count must be >= 2");
    spec.validate();
    const SystemPartition part = partition_systems(spec.n_factors, n_a, n_b);
    const std::size_t grid_n = tau_grid.size();

    std::array<double, 4> m0;
    for (std::size_t i = 0; i < 4; ++i) m0[i] = spec.measure.mean[i];
    const auto com_ref = com_trajectory(m0, h, tau_grid);

    const auto segs = flatten_schedule(spec.schedule);
    // Per-member observable values: [member][system][tau][mu], flattened.
    const std::size_t stride_sys = grid_n * 4;
    std::vector<double> xvals(count * 3 * stride_sys);
    const SubsystemSpec* systems[3] = {&part.a, &part.b, &part.s};

    parallel_for(count, opts.threads, [&](std::size_t i) {
        PhaseState st = sample_state(spec.measure, spec.n_factors, spec.seed, i);
        if (!segs.empty()) advance_segments(st, spec, segs, opts.ut_step);
        st.tau = tau_grid[0];
        double* slot = xvals.data() + i * 3 * stride_sys;
        for (std::size_t j = 0; j < grid_n; ++j) {
            if (j > 0) {
                // Common drift increment for every factor's position block.
                for (std::size_t mu = 0; mu < 4; ++mu) {
                    const double d = com_ref[j][mu] - com_ref[j - 1][mu];
                    for (std::size_t k = 0; k < spec.n_factors; ++k)
                        st.u[k * kConfigDim + mu] += d;
                }
                st.tau = tau_grid[j];
            }
            for (std::size_t sys = 0; sys < 3; ++sys)
                for (std::size_t mu = 1; mu <= 4; ++mu)
                    slot[sys * stride_sys + j * 4 + (mu - 1)] =
                        observable_coordinate(st, *systems[sys], mu);
        }
    });

    WepReport rep;
    rep.tau_grid.assign(tau_grid.begin(), tau_grid.end());
    rep.com_reference = com_ref;
    rep.count = count;
    rep.n_a = n_a;
    rep.n_b = n_b;

    auto reduce_system = [&](std::size_t sys, const std::string& name) {
        SystemSeries out;
        out.name = name;
        out.mean.resize(grid_n);
        out.sd.resize(grid_n);
        out.se.resize(grid_n);
        Vec scratch(count);
        for (std::size_t j = 0; j < grid_n; ++j) {
            for (std::size_t mu = 0; mu < 4; ++mu) {
                for (std::size_t i = 0; i < count; ++i)
                    scratch[i] = xvals[i * 3 * stride_sys + sys * stride_sys + j * 4 + mu];
                out.mean[j][mu] = sample_mean(scratch);
                out.sd[j][mu] = sample_sd(scratch);
                out.se[j][mu] = out.sd[j][mu] / std::sqrt(static_cast<double>(count));
            }
        }
        return out;
    };
    rep.a = reduce_system(0, "A");
    rep.b = reduce_system(1, "B");
    rep.s = reduce_system(2, "S");

    rep.verdict = true;
    for (std::size_t j = 0; j < grid_n; ++j) {
        for (std::size_t mu = 0; mu < 4; ++mu) {
            const double diff = std::abs(rep.a.mean[j][mu] - rep.b.mean[j][mu]);
            const double se = std::sqrt(rep.a.se[j][mu] * rep.a.se[j][mu] +
                                        rep.b.se[j][mu] * rep.b.se[j][mu]);
            if (diff > 5.0 * se) rep.verdict = false;
            const double denom =
                std::abs(rep.a.mean[j][mu]) + std::abs(rep.b.mean[j][mu]) + kEotvosFloor;
            rep.eotvos = std::max(rep.eotvos, 2.0 * diff / denom);
        }
    }

    // Deviation-tail exponent of the full system at the final grid point,
    // pooled over mu and fitted against rho^2 / (2 L_p^2).
    Vec dev;
    dev.reserve(count * 4);
    const std::size_t jlast = grid_n - 1;
    for (std::size_t mu = 0; mu < 4; ++mu)
        for (std::size_t i = 0; i < count; ++i)
            dev.push_back(std::abs(xvals[i * 3 * stride_sys + 2 * stride_sys + jlast * 4 + mu] -
                                   rep.s.mean[jlast][mu]));
    const double dev_sd = sample_sd(dev);
    if (dev_sd > 0.0) {
        Vec grid(opts.rho_points);
        for (std::size_t j = 0; j < opts.rho_points; ++j)
            grid[j] = opts.rho_span_sigmas * dev_sd * static_cast<double>(j + 1) /
                      static_cast<double>(opts.rho_points);
        auto [tail, dkw] = empirical_tail(dev, 0.0, grid);
        (void)dkw;
        try {
            const auto [c, r2] = fit_concentration_exponent(grid, tail);
            (void)r2;
            rep.tail_exponent = 2.0 * spec.length_scale * spec.length_scale * c;
        } catch (const fit_degenerate&) {
        }
    }
    return rep;
}

}  // namespace dcrm
