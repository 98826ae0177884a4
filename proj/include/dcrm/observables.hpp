#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dcrm/core.hpp"
#include "dcrm/rng.hpp"

namespace dcrm {

// ---------------------------------------------------------------------------
// Product-measure sampling
// ---------------------------------------------------------------------------

struct Ensemble {
    std::vector<PhaseState> members;
    MeasureSpec measure;
    std::uint64_t seed = 0;
};

// Fill one factor's 16-block (8 configuration + 8 momentum entries) from the
// stream keyed by (seed, member, factor).  Independent of evaluation order.
inline void sample_factor_block(const MeasureSpec& m, std::uint64_t seed,
                                std::uint64_t member, std::uint64_t factor,
                                std::span<double> block16) {
    CounterStream s(seed, member, factor);
    for (std::size_t j = 0; j < 8; ++j) {
        double z0, z1;
        s.normal_pair(j, z0, z1);
        block16[2 * j] = m.mean[2 * j] + m.sigma[2 * j] * z0;
        block16[2 * j + 1] = m.mean[2 * j + 1] + m.sigma[2 * j + 1] * z1;
    }
}

inline PhaseState sample_state(const MeasureSpec& m, std::size_t n_factors,
                               std::uint64_t seed, std::uint64_t member) {
    PhaseState st;
    st.u.resize(kConfigDim * n_factors);
    st.p.resize(kConfigDim * n_factors);
    std::array<double, kPhaseDim> block;
    for (std::size_t k = 0; k < n_factors; ++k) {
        sample_factor_block(m, seed, member, k, block);
        for (std::size_t i = 0; i < kConfigDim; ++i) {
            st.u[k * kConfigDim + i] = block[i];
            st.p[k * kConfigDim + i] = block[kConfigDim + i];
        }
    }
    return st;
}

inline Ensemble sample_ensemble(const MeasureSpec& m, std::size_t n_factors,
                                std::size_t count, std::uint64_t seed) {
    if (count < 1) throw input_error("sample_ensemble: count must be >= 1");
    Ensemble e;
    e.measure = m;
    e.seed = seed;
    e.members.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        e.members.push_back(sample_state(m, n_factors, seed, i));
    return e;
}

// ---------------------------------------------------------------------------
// Diagonal observables
// ---------------------------------------------------------------------------

// Base functions act on one factor's 16-block (u_k, p_k); every catalog
// entry is 1-Lipschitz there (its exact constant is recorded).

struct CoordinateBase {
    std::size_t index = 0;  // 0..15
};

// Distance of the configuration part to the equilibrium hypersurface,
// divided by sqrt(2) so the gradient norm stays <= 1.
struct SigmaDistanceBase {
    double sphere_radius = 1.0;
};

struct BumpBase {
    std::array<double, kPhaseDim> center{};
    double width = 1.0;  // Lipschitz constant is exp(-1/2)/width
};

struct AffineBase {
    std::array<double, kPhaseDim> weights{};
    double offset = 0.0;
};

using ObservableBase =
    std::variant<CoordinateBase, SigmaDistanceBase, BumpBase, AffineBase>;

enum class Aggregator { mean, sum_over_sqrt_n, single_factor };

inline double eval_base(const ObservableBase& base, std::span<const double> block16) {
    return std::visit(
        [&](const auto& b) -> double {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, CoordinateBase>) {
                if (b.index >= kPhaseDim)
                    throw dimension_error("coordinate base: index out of range");
                return block16[b.index];
            } else if constexpr (std::is_same_v<T, SigmaDistanceBase>) {
                double r2 = 0.0;
                for (std::size_t i = 0; i < 4; ++i) r2 += block16[i] * block16[i];
                const double a = std::sqrt(r2) - b.sphere_radius;
                double y2 = 0.0;
                for (std::size_t i = 5; i < 8; ++i) y2 += block16[i] * block16[i];
                const double c = block16[4] - std::sqrt(1.0 + y2);
                return std::sqrt(a * a + c * c) * 0.7071067811865475244;
            } else if constexpr (std::is_same_v<T, BumpBase>) {
                double r2 = 0.0;
                for (std::size_t i = 0; i < kPhaseDim; ++i) {
                    const double d = block16[i] - b.center[i];
                    r2 += d * d;
                }
                return std::exp(-r2 / (2.0 * b.width * b.width));
            } else {
                double s = b.offset;
                for (std::size_t i = 0; i < kPhaseDim; ++i) s += b.weights[i] * block16[i];
                return s;
            }
        },
        base);
}

inline double base_lipschitz_constant(const ObservableBase& base) {
    return std::visit(
        [](const auto& b) -> double {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, CoordinateBase>) {
                return 1.0;
            } else if constexpr (std::is_same_v<T, SigmaDistanceBase>) {
                return 1.0;
            } else if constexpr (std::is_same_v<T, BumpBase>) {
                return std::exp(-0.5) / b.width;
            } else {
                double s = 0.0;
                for (double w : b.weights) s += w * w;
                return std::sqrt(s);
            }
        },
        base);
}

struct DiagonalObservable {
    ObservableBase base;
    Aggregator aggregator = Aggregator::mean;
    std::size_t factor = 0;  // used by single_factor
    double claimed_lipschitz = 1.0;  // base-function constant
    std::string name;

    // Lipschitz constant of the lift as a function on the 16N-space.
    double lift_lipschitz(std::size_t n_factors) const {
        if (aggregator == Aggregator::mean)
            return claimed_lipschitz / std::sqrt(static_cast<double>(n_factors));
        return claimed_lipschitz;
    }
};

// Builds an observable and spot-checks the claimed constant on a fixed set
// of sampled block pairs.
inline DiagonalObservable make_observable(ObservableBase base, Aggregator agg,
                                          std::size_t factor = 0, std::string name = {}) {
    DiagonalObservable obs;
    obs.base = std::move(base);
    obs.aggregator = agg;
    obs.factor = factor;
    obs.claimed_lipschitz = base_lipschitz_constant(obs.base);
    obs.name = std::move(name);
    if (!(obs.claimed_lipschitz >= 0.0) || obs.claimed_lipschitz > 1.0 + 1e-12)
        throw input_error("observable base must be 1-Lipschitz on its factor");

    CounterStream s(0x0b5e7fCA7ull, 0, 0);
    std::array<double, kPhaseDim> x, y;
    std::uint64_t w = 0;
    for (int pair = 0; pair < 256; ++pair) {
        for (std::size_t i = 0; i < kPhaseDim; ++i) {
            double z0, z1;
            s.normal_pair(w++, z0, z1);
            x[i] = 2.0 * z0;
            y[i] = 2.0 * z1;
        }
        double d2 = 0.0;
        for (std::size_t i = 0; i < kPhaseDim; ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
        const double d = std::sqrt(d2);
        if (d < 1e-12) continue;
        const double df = std::abs(eval_base(obs.base, x) - eval_base(obs.base, y));
        if (df > obs.claimed_lipschitz * d * (1.0 + 1e-9))
            throw input_error("observable base violates its claimed Lipschitz constant");
    }
    return obs;
}

// ---------------------------------------------------------------------------
// Lift and expectation
// ---------------------------------------------------------------------------

inline double lift_diagonal(const DiagonalObservable& obs, const PhaseState& state) {
    const std::size_t n = state.n_factors();
    if (n == 0 || state.p.size() != state.u.size())
        throw dimension_error("lift_diagonal: inconsistent state");
    std::array<double, kPhaseDim> block;
    if (obs.aggregator == Aggregator::single_factor) {
        if (obs.factor >= n)
            throw dimension_error("lift_diagonal: factor index out of range");
        const std::size_t k = obs.factor;
        for (std::size_t i = 0; i < kConfigDim; ++i) {
            block[i] = state.u[k * kConfigDim + i];
            block[kConfigDim + i] = state.p[k * kConfigDim + i];
        }
        return eval_base(obs.base, block);
    }
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < kConfigDim; ++i) {
            block[i] = state.u[k * kConfigDim + i];
            block[kConfigDim + i] = state.p[k * kConfigDim + i];
        }
        s += eval_base(obs.base, block);
    }
    const double dn = static_cast<double>(n);
    return obs.aggregator == Aggregator::mean ? s / dn : s / std::sqrt(dn);
}

// Monte Carlo mean and standard error; stderr is absent for one member.
inline std::pair<double, std::optional<double>> expectation(const DiagonalObservable& obs,
                                                            const Ensemble& e) {
    if (e.members.empty()) throw input_error("expectation: empty ensemble");
    const std::size_t n = e.members.size();
    double sum = 0.0;
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) {
        vals[i] = lift_diagonal(obs, e.members[i]);
        sum += vals[i];
    }
    const double mean = sum / static_cast<double>(n);
    if (n == 1) return {mean, std::nullopt};
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return {mean, sd / std::sqrt(static_cast<double>(n))};
}

// Permutation-invariance surrogate for diffeomorphism-independence of
// averages: true when relabeling factors leaves the lift unchanged.
inline bool well_definedness_check(const DiagonalObservable& obs, const PhaseState& state,
                                   std::span<const std::size_t> permutation) {
    const std::size_t n = state.n_factors();
    if (permutation.size() != n)
        throw input_error("well_definedness_check: permutation size mismatch");
    std::vector<bool> seen(n, false);
    for (std::size_t k : permutation) {
        if (k >= n || seen[k]) throw input_error("well_definedness_check: not a permutation");
        seen[k] = true;
    }
    PhaseState perm;
    perm.u.resize(state.u.size());
    perm.p.resize(state.p.size());
    perm.t = state.t;
    perm.tau = state.tau;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < kConfigDim; ++i) {
            perm.u[k * kConfigDim + i] = state.u[permutation[k] * kConfigDim + i];
            perm.p[k * kConfigDim + i] = state.p[permutation[k] * kConfigDim + i];
        }
    }
    return std::abs(lift_diagonal(obs, perm) - lift_diagonal(obs, state)) <= 1e-12;
}

}  // namespace dcrm
