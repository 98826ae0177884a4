#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dcrm/core.hpp"
#include "dcrm/observables.hpp"
#include "dcrm/parallel.hpp"

namespace dcrm {

// ---------------------------------------------------------------------------
// U_tau dynamics: du/dtau = beta, dp/dtau = -(d beta/d u)^T p
// ---------------------------------------------------------------------------

struct Trajectory {
    std::vector<PhaseState> samples;  // each state carries its tau
    double step = 0.0;
};

namespace detail {

struct PhaseDeriv {
    Vec du, dp;
};

inline PhaseDeriv utau_rhs(const ModelSpec& spec, double t, double tau,
                           const Vec& u, const Vec& p) {
    PhaseDeriv d;
    d.du = evaluate_beta(spec.beta, t, tau, u, spec.eta_weights);
    d.dp = beta_jacobian_transpose_apply(spec.beta, t, tau, u, p, spec.eta_weights);
    for (double& x : d.dp) x = -x;
    return d;
}

}  // namespace detail

// One classical RK4 step; internal time is frozen, tau advances by dtau.
inline PhaseState step_utau(const PhaseState& state, const ModelSpec& spec, double dtau) {
    if (!(dtau > 0.0)) throw input_error("step_utau: dtau must be positive");
    const double h = dtau, t = state.t, tau = state.tau;
    const std::size_t n = state.u.size();

    auto at = [&](const Vec& base_u, const Vec& base_p, const detail::PhaseDeriv& k,
                  double f, Vec& out_u, Vec& out_p) {
        out_u.resize(n);
        out_p.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            out_u[i] = base_u[i] + f * k.du[i];
            out_p[i] = base_p[i] + f * k.dp[i];
        }
    };

    const auto k1 = detail::utau_rhs(spec, t, tau, state.u, state.p);
    Vec us, ps;
    at(state.u, state.p, k1, h / 2, us, ps);
    const auto k2 = detail::utau_rhs(spec, t, tau + h / 2, us, ps);
    at(state.u, state.p, k2, h / 2, us, ps);
    const auto k3 = detail::utau_rhs(spec, t, tau + h / 2, us, ps);
    at(state.u, state.p, k3, h, us, ps);
    const auto k4 = detail::utau_rhs(spec, t, tau + h, us, ps);

    PhaseState next = state;
    for (std::size_t i = 0; i < n; ++i) {
        next.u[i] += h / 6 * (k1.du[i] + 2 * k2.du[i] + 2 * k3.du[i] + k4.du[i]);
        next.p[i] += h / 6 * (k1.dp[i] + 2 * k2.dp[i] + 2 * k3.dp[i] + k4.dp[i]);
    }
    next.tau = tau + h;
    if (!all_finite(next.u) || !all_finite(next.p))
        throw numeric_overflow("step_utau: non-finite state");
    return next;
}

// Fixed-step integration recording every state; the final sample lands on
// tau_end exactly (the last step may be shorter).
inline Trajectory integrate_utau(const PhaseState& state, const ModelSpec& spec,
                                 double tau_end, double dtau) {
    if (!(tau_end > state.tau)) throw input_error("integrate_utau: tau_end must exceed tau");
    if (!(dtau > 0.0)) throw input_error("integrate_utau: dtau must be positive");
    Trajectory traj;
    traj.step = dtau;
    traj.samples.push_back(state);
    const double tau0 = state.tau;
    const double span = tau_end - tau0;
    const auto nfull = static_cast<std::size_t>(std::floor(span / dtau * (1.0 + 1e-12)));
    for (std::size_t i = 1; i <= nfull; ++i) {
        PhaseState next = step_utau(traj.samples.back(), spec, dtau);
        next.tau = tau0 + static_cast<double>(i) * dtau;  // grid, not accumulation
        traj.samples.push_back(std::move(next));
    }
    const double reached = tau0 + static_cast<double>(nfull) * dtau;
    if (tau_end - reached > 1e-12 * std::max(1.0, std::abs(tau_end))) {
        PhaseState next = step_utau(traj.samples.back(), spec, tau_end - reached);
        next.tau = tau_end;
        traj.samples.push_back(std::move(next));
    } else {
        traj.samples.back().tau = tau_end;
    }
    return traj;
}

// ---------------------------------------------------------------------------
// U_t regime maps
// ---------------------------------------------------------------------------

enum class RegimeKind { ergodic, concentration, expansion };

struct ScheduleSegment {
    RegimeKind kind;
    double duration;
    double t_start;
};

inline std::vector<ScheduleSegment> flatten_schedule(const RegimeSchedule& sched) {
    std::vector<ScheduleSegment> segs;
    double t = 0.0;
    for (const auto& c : sched.cycles) {
        if (c.ergodic > 0) segs.push_back({RegimeKind::ergodic, c.ergodic, t});
        t += c.ergodic;
        if (c.concentration > 0) segs.push_back({RegimeKind::concentration, c.concentration, t});
        t += c.concentration;
        if (c.expansion > 0) segs.push_back({RegimeKind::expansion, c.expansion, t});
        t += c.expansion;
    }
    return segs;
}

namespace detail {

inline double anchor_at(const RegimeSchedule& s, std::size_t i) {
    return s.anchor.empty() ? 0.0 : s.anchor[i];
}

// Volume-preserving stir: a chain of shears (each coordinate shifted by a
// function of the next one) followed by plane rotations.  Every elementary
// map has unit Jacobian determinant.
inline void ergodic_map(PhaseState& st, const RegimeSchedule& s, double dt) {
    Vec& u = st.u;
    const std::size_t n = u.size();
    const double a = dt * s.stir_amplitude;
    for (std::size_t j = 0; j < n; ++j) {
        const double phase = 6.283185307179586 *
            std::fmod(static_cast<double>(j + 1) * 0.6180339887498949, 1.0);
        u[j] += a * std::sin(s.stir_frequency * u[(j + 1) % n] + phase);
    }
    const double th = dt * s.stir_rotation;
    const double c = std::cos(th), sn = std::sin(th);
    for (std::size_t i = 0; i + 1 < n; i += 2) {
        const double x = u[i], y = u[i + 1];
        u[i] = c * x - sn * y;
        u[i + 1] = sn * x + c * y;
    }
}

inline void concentration_map(PhaseState& st, const RegimeSchedule& s, double dt) {
    const double c = std::exp(-s.contraction_rate * dt);
    if (s.target == ConcentrationTarget::anchor) {
        for (std::size_t i = 0; i < st.u.size(); ++i) {
            const double a = anchor_at(s, i);
            st.u[i] = a + c * (st.u[i] - a);
        }
    } else {
        Vec proj = project_to_sigma(st.u, s.sphere_radius);
        for (std::size_t i = 0; i < st.u.size(); ++i)
            st.u[i] = proj[i] + c * (st.u[i] - proj[i]);
    }
    for (double& p : st.p) p *= c;
}

inline void expansion_map(PhaseState& st, const RegimeSchedule& s, double dt) {
    const double e = std::exp(s.expansion_rate * dt);
    for (std::size_t i = 0; i < st.u.size(); ++i) {
        const double a = anchor_at(s, i);
        st.u[i] = a + e * (st.u[i] - a);
    }
}

inline void apply_regime(PhaseState& st, const RegimeSchedule& s, RegimeKind kind, double dt) {
    switch (kind) {
        case RegimeKind::ergodic: ergodic_map(st, s, dt); break;
        case RegimeKind::concentration: concentration_map(st, s, dt); break;
        case RegimeKind::expansion: expansion_map(st, s, dt); break;
    }
}

}  // namespace detail

// Applies the map of the regime active at state.t for the whole dt.
inline PhaseState step_ut(const PhaseState& state, const ModelSpec& spec, double dt) {
    if (!(dt > 0.0)) throw input_error("step_ut: dt must be positive");
    if (state.t + dt > spec.t_horizon * (1.0 + 1e-12) + 1e-15)
        throw schedule_exhausted("step_ut: step ends past t_horizon");
    const auto segs = flatten_schedule(spec.schedule);
    const ScheduleSegment* active = nullptr;
    for (const auto& seg : segs) {
        if (state.t >= seg.t_start - 1e-12 &&
            state.t < seg.t_start + seg.duration - 1e-12) {
            active = &seg;
            break;
        }
    }
    if (active == nullptr) throw schedule_exhausted("step_ut: no active regime at t");
    PhaseState next = state;
    detail::apply_regime(next, spec.schedule, active->kind, dt);
    next.t = state.t + dt;
    return next;
}

// Advances one member through a run of segments with step-size chopping at
// segment boundaries; t is realigned to the exact boundary after each
// segment so accumulation error cannot leak across regimes.
inline void advance_segments(PhaseState& st, const ModelSpec& spec,
                             std::span<const ScheduleSegment> segs, double dt) {
    if (!(dt > 0.0)) throw input_error("advance_segments: dt must be positive");
    for (const auto& seg : segs) {
        double remaining = seg.duration;
        while (remaining > 1e-15) {
            const double h = std::min(dt, remaining);
            detail::apply_regime(st, spec.schedule, seg.kind, h);
            remaining -= h;
        }
        st.t = seg.t_start + seg.duration;
    }
}

// Advances every member through the full schedule to t_horizon.  Members
// evolve independently; with threads > 1 the result is identical to the
// sequential order because each member writes only its own slot.
inline Ensemble run_cycle(const Ensemble& ensemble, const ModelSpec& spec, double dt,
                          unsigned threads = 1) {
    for (const auto& m : ensemble.members)
        if (m.t != 0.0) throw input_error("run_cycle: members must start at t = 0");
    const auto segs = flatten_schedule(spec.schedule);
    Ensemble out = ensemble;
    parallel_for(out.members.size(), threads, [&](std::size_t i) {
        advance_segments(out.members[i], spec, segs, dt);
        out.members[i].t = spec.t_horizon;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Lipschitz certification
// ---------------------------------------------------------------------------

struct LipschitzCertificate {
    double estimate = 0.0;
    PhaseState witness_x, witness_y;
    std::size_t pairs_tested = 0;
    bool passed = false;
};

inline constexpr double kLipschitzTolerance = 1e-9;

// Empirical Lipschitz constant of a phase-space map: supremum of the
// displacement ratio over sampled point pairs.
template <typename Flow>
LipschitzCertificate estimate_lipschitz(Flow&& flow, const MeasureSpec& sampler,
                                        std::size_t n_factors, std::size_t pairs,
                                        std::uint64_t seed) {
    if (pairs < 1) throw input_error("estimate_lipschitz: pairs must be >= 1");
    LipschitzCertificate cert;
    std::uint64_t next_index = 0;
    const std::uint64_t index_budget = 4 * static_cast<std::uint64_t>(pairs) + 16;
    for (std::size_t i = 0; i < pairs; ++i) {
        PhaseState x, y;
        double d = 0.0;
        do {
            if (next_index + 2 > index_budget)
                throw estimation_failed("estimate_lipschitz: sampled pairs all degenerate");
            x = sample_state(sampler, n_factors, seed, next_index++);
            y = sample_state(sampler, n_factors, seed, next_index++);
            d = phase_distance(x, y);
        } while (d < 1e-300);
        const double r = phase_distance(flow(x), flow(y)) / d;
        if (r > cert.estimate) {
            cert.estimate = r;
            cert.witness_x = x;
            cert.witness_y = y;
        }
        ++cert.pairs_tested;
    }
    cert.passed = cert.estimate <= 1.0 + kLipschitzTolerance;
    return cert;
}

// The time-s map of a single regime, as a flow usable by the certifier.
inline std::function<PhaseState(const PhaseState&)> regime_flow(const ModelSpec& spec,
                                                                RegimeKind kind, double s) {
    return [&spec, kind, s](const PhaseState& st) {
        PhaseState out = st;
        detail::apply_regime(out, spec.schedule, kind, s);
        return out;
    };
}

// Max |H| over members: the classical residual of the emergent constraint.
inline double hamiltonian_residual(const Ensemble& e, const ModelSpec& spec) {
    double r = 0.0;
    for (const auto& m : e.members) r = std::max(r, std::abs(hamiltonian_at(m, spec)));
    return r;
}

}  // namespace dcrm
