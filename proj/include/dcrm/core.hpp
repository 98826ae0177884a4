#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "dcrm/errors.hpp"
#include "dcrm/vec.hpp"

namespace dcrm {

// Each fundamental degree of freedom carries 8 configuration coordinates
// (4 position x^0..x^3, then 4 velocity y^0..y^3) plus 8 conjugate momenta.
inline constexpr std::size_t kConfigDim = 8;
inline constexpr std::size_t kPhaseDim = 16;

// ---------------------------------------------------------------------------
// Metric norm
// ---------------------------------------------------------------------------

// Diagonal metric norm with a 16-periodic weight pattern: entry j of v is
// weighted by w[j mod 16].  Accepts any vector made of whole 8-blocks, so it
// covers both configuration vectors (8 per factor) and full phase vectors
// (16 per factor).
inline double eta_norm(std::span<const double> eta_weights, std::span<const double> v) {
    if (eta_weights.size() != kPhaseDim)
        throw dimension_error("eta_norm: weight vector must have length 16");
    if (v.size() % kConfigDim != 0)
        throw dimension_error("eta_norm: vector length must be a multiple of 8");
    double s = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j)
        s += eta_weights[j % kPhaseDim] * v[j] * v[j];
    return std::sqrt(s);
}

// H = sum_n beta^n p_n.
inline double randers_hamiltonian(std::span<const double> beta, std::span<const double> p) {
    if (beta.size() != p.size())
        throw dimension_error("randers_hamiltonian: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < beta.size(); ++i) s += beta[i] * p[i];
    return s;
}

// ---------------------------------------------------------------------------
// Equilibrium hypersurface
// ---------------------------------------------------------------------------

// Per factor: velocity block (y^0, y⃗) is lifted to the unit hyperboloid
// y^0 = sqrt(1 + |y⃗|^2); position block is rescaled to the sphere of the
// given radius.  Undefined when a position block vanishes.
inline void project_factor_to_sigma(std::span<double> block, double sphere_radius) {
    double r2 = 0.0;
    for (std::size_t i = 0; i < 4; ++i) r2 += block[i] * block[i];
    if (r2 == 0.0)
        throw projection_undefined("project_to_sigma: zero position block");
    const double f = sphere_radius / std::sqrt(r2);
    for (std::size_t i = 0; i < 4; ++i) block[i] *= f;
    double y2 = 0.0;
    for (std::size_t i = 5; i < 8; ++i) y2 += block[i] * block[i];
    block[4] = std::sqrt(1.0 + y2);
}

inline Vec project_to_sigma(std::span<const double> u, double sphere_radius) {
    if (u.size() % kConfigDim != 0)
        throw dimension_error("project_to_sigma: length must be a multiple of 8");
    Vec out(u.begin(), u.end());
    for (std::size_t k = 0; k < out.size() / kConfigDim; ++k)
        project_factor_to_sigma(std::span<double>(out).subspan(k * kConfigDim, kConfigDim),
                                sphere_radius);
    return out;
}

// ---------------------------------------------------------------------------
// Drift-field catalog
// ---------------------------------------------------------------------------

enum class BetaMode { raw, squashed };

// beta(t, tau, u) = value; u-independent.
struct ConstantField {
    Vec value;  // length 8N
};

// Per-factor linear field beta_k = A u_k with one antisymmetric 8x8
// generator repeated over all factors (row-major storage).
struct RotationalField {
    std::array<double, 64> generator{};
};

// beta = -rate (u - anchor).
struct ContractionField {
    Vec anchor;  // length 8N
    double rate = 1.0;
};

// beta = -rate (u - proj_sigma(u)); tube_radius is certification metadata
// marking how far from the hypersurface the field is meant to be trusted.
struct SigmaContractionField {
    double rate = 1.0;
    double tube_radius = 1.0;
    double sphere_radius = 1.0;
};

// Time-dependent blend weight w(t, tau).
struct BlendWeight {
    double base = 1.0;
    double tau_amp = 0.0, tau_freq = 0.0, tau_phase = 0.0;
    double t_amp = 0.0, t_freq = 0.0, t_phase = 0.0;

    double at(double t, double tau) const {
        double w = base;
        if (tau_amp != 0.0) w += tau_amp * std::sin(tau_freq * tau + tau_phase);
        if (t_amp != 0.0) w += t_amp * std::sin(t_freq * t + t_phase);
        return w;
    }
};

using LeafField = std::variant<ConstantField, RotationalField, ContractionField,
                               SigmaContractionField>;

// Weighted sum of leaf fields; weights may depend on both times.
struct BlendedField {
    std::vector<std::pair<BlendWeight, LeafField>> parts;
};

using BetaVariant = std::variant<ConstantField, RotationalField, ContractionField,
                                 SigmaContractionField, BlendedField>;

struct BetaFieldSpec {
    BetaVariant variant = ConstantField{};
    BetaMode mode = BetaMode::raw;
};

namespace detail {

inline void eval_leaf(const ConstantField& f, double, double, std::span<const double> u,
                      std::span<double> out, double w) {
    if (f.value.size() != u.size())
        throw dimension_error("constant field: value length mismatch");
    for (std::size_t i = 0; i < u.size(); ++i) out[i] += w * f.value[i];
}

inline void eval_leaf(const RotationalField& f, double, double, std::span<const double> u,
                      std::span<double> out, double w) {
    const std::size_t n = u.size() / kConfigDim;
    for (std::size_t k = 0; k < n; ++k) {
        const double* uk = u.data() + k * kConfigDim;
        double* ok = out.data() + k * kConfigDim;
        for (std::size_t i = 0; i < kConfigDim; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < kConfigDim; ++j) s += f.generator[i * 8 + j] * uk[j];
            ok[i] += w * s;
        }
    }
}

inline void eval_leaf(const ContractionField& f, double, double, std::span<const double> u,
                      std::span<double> out, double w) {
    if (f.anchor.size() != u.size())
        throw dimension_error("contraction field: anchor length mismatch");
    for (std::size_t i = 0; i < u.size(); ++i)
        out[i] += -w * f.rate * (u[i] - f.anchor[i]);
}

inline void eval_leaf(const SigmaContractionField& f, double, double, std::span<const double> u,
                      std::span<double> out, double w) {
    Vec proj = project_to_sigma(u, f.sphere_radius);
    for (std::size_t i = 0; i < u.size(); ++i)
        out[i] += -w * f.rate * (u[i] - proj[i]);
}

// out += w * (d beta/d u)^T v for each leaf.
inline void jac_t_leaf(const ConstantField&, double, double, std::span<const double>,
                       std::span<const double>, std::span<double>, double) {}

inline void jac_t_leaf(const RotationalField& f, double, double, std::span<const double> u,
                       std::span<const double> v, std::span<double> out, double w) {
    const std::size_t n = u.size() / kConfigDim;
    for (std::size_t k = 0; k < n; ++k) {
        const double* vk = v.data() + k * kConfigDim;
        double* ok = out.data() + k * kConfigDim;
        for (std::size_t i = 0; i < kConfigDim; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < kConfigDim; ++j) s += f.generator[j * 8 + i] * vk[j];
            ok[i] += w * s;
        }
    }
}

inline void jac_t_leaf(const ContractionField& f, double, double, std::span<const double> u,
                       std::span<const double> v, std::span<double> out, double w) {
    if (f.anchor.size() != u.size())
        throw dimension_error("contraction field: anchor length mismatch");
    for (std::size_t i = 0; i < u.size(); ++i) out[i] += -w * f.rate * v[i];
}

// Projection Jacobian, transposed, per factor:
//   position x -> R x/|x|:      J^T w = (R/r) (w - x̂ (x̂·w))     (symmetric)
//   velocity (y0, y⃗) -> (h, y⃗): (J^T w)_{y0} = 0, (J^T w)_i = w_{y0} y_i/h + w_i
inline void jac_t_leaf(const SigmaContractionField& f, double, double, std::span<const double> u,
                       std::span<const double> v, std::span<double> out, double w) {
    const std::size_t n = u.size() / kConfigDim;
    for (std::size_t k = 0; k < n; ++k) {
        const double* uk = u.data() + k * kConfigDim;
        const double* vk = v.data() + k * kConfigDim;
        double* ok = out.data() + k * kConfigDim;
        double r2 = 0.0;
        for (std::size_t i = 0; i < 4; ++i) r2 += uk[i] * uk[i];
        if (r2 == 0.0)
            throw projection_undefined("sigma contraction: zero position block");
        const double r = std::sqrt(r2);
        double xdotv = 0.0;
        for (std::size_t i = 0; i < 4; ++i) xdotv += uk[i] * vk[i];
        const double fr = f.sphere_radius / r;
        for (std::size_t i = 0; i < 4; ++i) {
            const double jt = fr * (vk[i] - uk[i] * xdotv / r2);
            ok[i] += -w * f.rate * (vk[i] - jt);
        }
        double y2 = 0.0;
        for (std::size_t i = 5; i < 8; ++i) y2 += uk[i] * uk[i];
        const double h = std::sqrt(1.0 + y2);
        // y0 component: J^T contributes 0 there.
        ok[4] += -w * f.rate * vk[4];
        for (std::size_t i = 5; i < 8; ++i) {
            const double jt = vk[4] * uk[i] / h + vk[i];
            ok[i] += -w * f.rate * (vk[i] - jt);
        }
    }
}

inline void eval_variant(const BetaVariant& var, double t, double tau,
                         std::span<const double> u, std::span<double> out) {
    std::visit(
        [&](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, BlendedField>) {
                for (const auto& [wt, leaf] : f.parts) {
                    const double w = wt.at(t, tau);
                    std::visit([&](const auto& g) { eval_leaf(g, t, tau, u, out, w); }, leaf);
                }
            } else {
                eval_leaf(f, t, tau, u, out, 1.0);
            }
        },
        var);
}

inline void jac_t_variant(const BetaVariant& var, double t, double tau,
                          std::span<const double> u, std::span<const double> v,
                          std::span<double> out) {
    std::visit(
        [&](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, BlendedField>) {
                for (const auto& [wt, leaf] : f.parts) {
                    const double w = wt.at(t, tau);
                    std::visit([&](const auto& g) { jac_t_leaf(g, t, tau, u, v, out, w); },
                               leaf);
                }
            } else {
                jac_t_leaf(f, t, tau, u, v, out, 1.0);
            }
        },
        var);
}

// Squash scale s(n) = tanh(n)/n, saturated just below 1 so the metric norm
// of the squashed field stays strictly under 1 in floating point.
inline constexpr double kSquashCeiling = 1.0 - 1e-12;

inline void squash_scale(double n, double& s, double& ds_over_n) {
    if (n < 1e-6) {
        // tanh(n)/n = 1 - n^2/3 + O(n^4); s'(n)/n -> -2/3.
        s = 1.0 - n * n / 3.0;
        ds_over_n = -2.0 / 3.0;
        return;
    }
    const double th = std::tanh(n);
    if (th >= kSquashCeiling) {
        s = kSquashCeiling / n;
        ds_over_n = -kSquashCeiling / (n * n * n);
        return;
    }
    s = th / n;
    const double sech2 = 1.0 - th * th;
    ds_over_n = (n * sech2 - th) / (n * n * n);
}

}  // namespace detail

// Evaluate the drift field at (t, tau, u).  In squashed mode the raw value
// is rescaled by tanh(|beta|)/|beta| so the metric bound |beta| < 1 holds by
// construction; in raw mode a value with |beta| >= 1 is rejected.
inline Vec evaluate_beta(const BetaFieldSpec& spec, double t, double tau,
                         std::span<const double> u, std::span<const double> eta_weights) {
    if (!all_finite(u))
        throw input_error("evaluate_beta: non-finite configuration");
    Vec out(u.size(), 0.0);
    detail::eval_variant(spec.variant, t, tau, u, out);
    const double n = eta_norm(eta_weights, out);
    if (spec.mode == BetaMode::raw) {
        if (n >= 1.0) throw constraint_violation(n);
        return out;
    }
    double s, ds_over_n;
    detail::squash_scale(n, s, ds_over_n);
    scale(out, s);
    return out;
}

// (d beta/d u)^T v for the mode-adjusted field.  For the squashed field
// b~ = s(n) b with n = |b|_eta:
//   J~^T v = s J^T v + (s'(n)/n) (b·v) J^T (W b),   W = diag(eta weights).
inline Vec beta_jacobian_transpose_apply(const BetaFieldSpec& spec, double t, double tau,
                                         std::span<const double> u, std::span<const double> v,
                                         std::span<const double> eta_weights) {
    if (v.size() != u.size())
        throw dimension_error("beta_jacobian_transpose_apply: length mismatch");
    if (spec.mode == BetaMode::raw) {
        Vec out(u.size(), 0.0);
        detail::jac_t_variant(spec.variant, t, tau, u, v, out);
        return out;
    }
    Vec braw(u.size(), 0.0);
    detail::eval_variant(spec.variant, t, tau, u, braw);
    const double n = eta_norm(eta_weights, braw);
    double s, ds_over_n;
    detail::squash_scale(n, s, ds_over_n);

    Vec jt_v(u.size(), 0.0);
    detail::jac_t_variant(spec.variant, t, tau, u, v, jt_v);

    Vec wb(u.size());
    for (std::size_t j = 0; j < u.size(); ++j)
        wb[j] = eta_weights[j % kPhaseDim] * braw[j];
    Vec jt_wb(u.size(), 0.0);
    detail::jac_t_variant(spec.variant, t, tau, u, wb, jt_wb);

    const double bv = dot(braw, v);
    Vec out(u.size());
    for (std::size_t j = 0; j < u.size(); ++j)
        out[j] = s * jt_v[j] + ds_over_n * bv * jt_wb[j];
    return out;
}

// ---------------------------------------------------------------------------
// Schedule, measure, model
// ---------------------------------------------------------------------------

// One internal-time cycle: ergodic stir, then contraction, then expansion.
struct CyclePhases {
    double ergodic = 0.0;
    double concentration = 0.0;
    double expansion = 0.0;
};

enum class ConcentrationTarget { anchor, sigma };

// The internal dynamics catalog is a design choice: the ergodic regime is a
// volume-preserving shear/rotate stir, the concentration regime contracts
// exponentially toward an anchor point (or toward the hypersurface), and the
// expansion regime dilates away from the anchor.  Momenta contract during
// concentration only.
struct RegimeSchedule {
    std::vector<CyclePhases> cycles;
    double contraction_rate = 1.0;
    double expansion_rate = 1.0;
    ConcentrationTarget target = ConcentrationTarget::anchor;
    Vec anchor;                    // length 8N; empty means the origin
    double sphere_radius = 1.0;    // sigma-target projection radius
    double stir_amplitude = 0.1;   // ergodic shear strength per unit time
    double stir_frequency = 2.5;   // ergodic shear wavenumber
    double stir_rotation = 0.7;    // ergodic plane-rotation rate

    double total_duration() const {
        double s = 0.0;
        for (const auto& c : cycles) s += c.ergodic + c.concentration + c.expansion;
        return s;
    }
};

// Per-factor product Gaussian: independent 16-blocks, one (mean, sigma)
// pattern shared by all factors.
struct MeasureSpec {
    std::array<double, kPhaseDim> mean{};
    std::array<double, kPhaseDim> sigma{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
};

struct ModelSpec {
    std::size_t n_factors = 1;
    std::array<double, kPhaseDim> eta_weights{1, 1, 1, 1, 1, 1, 1, 1,
                                              1, 1, 1, 1, 1, 1, 1, 1};
    BetaFieldSpec beta;
    RegimeSchedule schedule;
    MeasureSpec measure;
    std::uint64_t seed = 0;
    double t_horizon = 0.0;
    double length_scale = 1.0;

    std::size_t dim() const { return kConfigDim * n_factors; }

    void validate() const {
        if (n_factors < 1) throw input_error("n_factors must be >= 1");
        for (double w : eta_weights)
            if (!(w > 0.0)) throw input_error("eta_weights must all be positive");
        if (!(t_horizon >= 0.0)) throw input_error("t_horizon must be nonnegative");
        if (!(length_scale > 0.0)) throw input_error("length_scale must be positive");
        for (double s : measure.sigma)
            if (!(s > 0.0)) throw input_error("measure sigma must all be positive");
        if (!(schedule.contraction_rate > 0.0) || !(schedule.expansion_rate > 0.0))
            throw input_error("schedule rates must be positive");
        for (const auto& c : schedule.cycles)
            if (c.ergodic < 0 || c.concentration < 0 || c.expansion < 0)
                throw input_error("cycle durations must be nonnegative");
        if (!schedule.anchor.empty() && schedule.anchor.size() != dim())
            throw dimension_error("schedule anchor length must be 8*n_factors");
        const double total = schedule.total_duration();
        if (std::abs(total - t_horizon) > 1e-9 * std::max(1.0, std::abs(t_horizon)))
            throw input_error("schedule total duration must equal t_horizon");
    }
};

// One point of the 16N-dimensional phase space with its two times.
struct PhaseState {
    Vec u;  // length 8N
    Vec p;  // length 8N
    double t = 0.0;
    double tau = 0.0;

    std::size_t n_factors() const { return u.size() / kConfigDim; }
};

// Euclidean distance on the flattened (u, p) vector.
inline double phase_distance(const PhaseState& a, const PhaseState& b) {
    if (a.u.size() != b.u.size() || a.p.size() != b.p.size())
        throw dimension_error("phase_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.u.size(); ++i) {
        const double d = a.u[i] - b.u[i];
        s += d * d;
    }
    for (std::size_t i = 0; i < a.p.size(); ++i) {
        const double d = a.p[i] - b.p[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// Hamiltonian of a state under the model's drift field.
inline double hamiltonian_at(const PhaseState& s, const ModelSpec& spec) {
    Vec beta = evaluate_beta(spec.beta, s.t, s.tau, s.u, spec.eta_weights);
    return randers_hamiltonian(beta, s.p);
}

}  // namespace dcrm
