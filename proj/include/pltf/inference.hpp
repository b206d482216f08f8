#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pltf/contract.hpp"
#include "pltf/model.hpp"
#include "pltf/rng.hpp"
#include "pltf/special.hpp"
#include "pltf/tensor.hpp"

namespace pltf {

/// Variational state of one factor: the posterior is elementwise
/// Gamma(shape C, scale D), E = C*D is the arithmetic mean and
/// L = exp(digamma(C))*D the geometric mean. EM stores its point estimate
/// in E (with L mirroring it); clamped factors carry their fixed values in
/// both E and L and are never updated.
struct FactorState {
    NamedTensor C;
    NamedTensor D;
    NamedTensor E;
    NamedTensor L;
};

enum class Method { EM, VB };
enum class EmPriorMode { Flat, Full };

struct FitConfig {
    Method method = Method::VB;
    std::size_t max_iters = 2000;
    double tol = 0.0; // relative trace change; 0 disables early stopping
    std::uint64_t seed = 0;
    EmPriorMode em_prior_mode = EmPriorMode::Flat;
};

struct FitResult {
    std::vector<FactorState> states;
    std::vector<double> bound_trace;      // VB, one entry per iteration
    std::vector<double> divergence_trace; // EM, one entry per iteration
    std::size_t iterations_run = 0;
    bool converged = false;
    std::uint64_t seed = 0;

    double final_score(Method m) const {
        if (m == Method::VB) return bound_trace.back();
        return -divergence_trace.back();
    }
};

struct LatentStats {
    NamedTensor P;        // cell probabilities over the full index set V
    NamedTensor S_expect; // expected latent counts over V
};

namespace detail {

inline std::vector<const NamedTensor*>
e_views(const std::vector<FactorState>& states) {
    std::vector<const NamedTensor*> v;
    v.reserve(states.size());
    for (const auto& s : states) v.push_back(&s.E);
    return v;
}

inline std::vector<const NamedTensor*>
l_views(const std::vector<FactorState>& states) {
    std::vector<const NamedTensor*> v;
    v.reserve(states.size());
    for (const auto& s : states) v.push_back(&s.L);
    return v;
}

struct InferContext {
    const PltfModel* model = nullptr;
    const Observation* obs = nullptr;
    std::vector<IndexDef> out; // observed index defs
    NamedTensor mx;            // M * X, constant across iterations
    double lgamma_term = 0.0;  // sum over masked-in cells of logGamma(X+1)
};

inline InferContext make_context(const PltfModel& model,
                                 const Observation& obs) {
    InferContext ctx;
    ctx.model = &model;
    ctx.obs = &obs;
    ctx.out = model.observed_indices();
    ctx.mx = hadamard(obs.M, obs.X);
    for (std::size_t i = 0; i < obs.X.size(); ++i)
        if (obs.M[i] == 1.0) ctx.lgamma_term += log_gamma(obs.X[i] + 1.0);
    return ctx;
}

// One VB epoch given the reconstruction X_hat_L of the epoch's start state.
// All C, D, E updates run first (E refreshed in place, so later factors see
// the new means); the L refresh follows once every shape is final.
inline void vb_sweep(std::vector<FactorState>& states, const InferContext& ctx,
                     const NamedTensor& xl) {
    const PltfModel& model = *ctx.model;
    const NamedTensor ratio = safe_div(ctx.mx, xl); // M * X / X_hat_L
    auto lp = l_views(states);
    auto ep = e_views(states);
    const std::span<const NamedTensor* const> lspan(lp), espan(ep);

    for (std::size_t a = 0; a < states.size(); ++a) {
        const FactorSpec& spec = model.factors[a];
        if (spec.clamped) continue;
        FactorState& st = states[a];
        const NamedTensor dl = delta(a, ratio, lspan);
        const NamedTensor de = delta(a, ctx.obs->M, espan);
        const NamedTensor& A = spec.prior.a;
        const NamedTensor& B = spec.prior.b;
        for (std::size_t i = 0; i < st.C.size(); ++i) {
            st.C[i] = A[i] + st.L[i] * dl[i];
            st.D[i] = 1.0 / (A[i] / B[i] + de[i]);
            st.E[i] = st.C[i] * st.D[i];
        }
    }
    for (std::size_t a = 0; a < states.size(); ++a) {
        if (model.factors[a].clamped) continue;
        FactorState& st = states[a];
        for (std::size_t i = 0; i < st.L.size(); ++i)
            st.L[i] = std::exp(digamma(st.C[i])) * st.D[i];
    }
}

// Variational bound given reconstructions from the current state.
inline double bound_given(const std::vector<FactorState>& states,
                          const InferContext& ctx, const NamedTensor& xl,
                          const NamedTensor& xe) {
    const NamedTensor& X = ctx.obs->X;
    const NamedTensor& M = ctx.obs->M;
    double data = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (M[i] != 1.0) continue;
        if (X[i] > 0.0) {
            if (!(xl[i] > 0.0))
                throw SingularModelError(
                    "zero geometric-mean intensity under observed count " +
                    std::to_string(X[i]) + " at cell " + X.cell_name(i));
            data += X[i] * std::log(xl[i]);
        }
        data -= xe[i];
    }
    data -= ctx.lgamma_term;

    double prior = 0.0;
    for (std::size_t a = 0; a < states.size(); ++a) {
        const FactorSpec& spec = ctx.model->factors[a];
        if (spec.clamped) continue;
        const FactorState& st = states[a];
        const NamedTensor& A = spec.prior.a;
        const NamedTensor& B = spec.prior.b;
        for (std::size_t i = 0; i < st.C.size(); ++i)
            prior -= gamma_kl(st.C[i], st.D[i], A[i], B[i] / A[i]);
    }
    double bound = data + prior;
    if (!std::isfinite(bound))
        throw SingularModelError("variational bound is not finite");
    return bound;
}

// One EM epoch. The reconstruction is refreshed before every factor's
// update; `xhat` must be fresh on entry and is fresh again on exit.
inline void em_sweep(std::vector<FactorState>& states, const InferContext& ctx,
                     EmPriorMode mode, NamedTensor& xhat) {
    const PltfModel& model = *ctx.model;
    auto ep = e_views(states);
    const std::span<const NamedTensor* const> espan(ep);
    bool fresh = true;
    for (std::size_t a = 0; a < states.size(); ++a) {
        const FactorSpec& spec = model.factors[a];
        if (spec.clamped) continue;
        if (!fresh) xhat = full_product(espan, ctx.out);
        const NamedTensor ratio = safe_div(ctx.mx, xhat);
        const NamedTensor dl = delta(a, ratio, espan);
        const NamedTensor dm = delta(a, ctx.obs->M, espan);
        FactorState& st = states[a];
        if (mode == EmPriorMode::Flat) {
            for (std::size_t i = 0; i < st.E.size(); ++i) {
                if (dm[i] == 0.0) {
                    if (dl[i] != 0.0)
                        throw SingularModelError(
                            "factor '" + spec.name +
                            "' update has positive numerator over a zero "
                            "denominator at " +
                            st.E.cell_name(i));
                    st.E[i] = 0.0;
                } else {
                    st.E[i] *= dl[i] / dm[i];
                }
            }
        } else {
            const NamedTensor& A = spec.prior.a;
            const NamedTensor& B = spec.prior.b;
            // the (A-1) numerator term goes negative for A < 1; clamp at 0
            // to keep the estimate in the parameter domain
            for (std::size_t i = 0; i < st.E.size(); ++i) {
                double num = (A[i] - 1.0) + st.E[i] * dl[i];
                if (num < 0.0) num = 0.0;
                st.E[i] = num / (A[i] / B[i] + dm[i]);
            }
        }
        fresh = false;
    }
    xhat = full_product(espan, ctx.out);
}

// Point-estimate bookkeeping for EM results: L mirrors E, C/D degenerate.
inline void em_sync_state(std::vector<FactorState>& states,
                          const PltfModel& model) {
    for (std::size_t a = 0; a < states.size(); ++a) {
        if (model.factors[a].clamped) continue;
        FactorState& st = states[a];
        st.L = st.E;
        st.C = NamedTensor(st.E.indices(), 1.0, true);
        st.D = st.E;
    }
}

inline double relative_change(double cur, double prev) {
    double denom = std::abs(prev);
    if (denom == 0.0) denom = 1.0;
    return std::abs(cur - prev) / denom;
}

} // namespace detail

/// Generalized KL divergence between data and reconstruction on masked-in
/// cells: sum of M * (X log(X/X_hat) - X + X_hat), with 0 log 0 = 0.
/// The true value is non-negative; rounding noise from an exact fit is
/// floored at 0.
inline double kl_divergence(const NamedTensor& X, const NamedTensor& x_hat,
                            const NamedTensor& M) {
    detail::require_same_shape(X, x_hat, "kl_divergence");
    detail::require_same_shape(X, M, "kl_divergence");
    double d = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (M[i] != 1.0) continue;
        if (X[i] > 0.0) {
            if (!(x_hat[i] > 0.0))
                throw SingularModelError(
                    "zero intensity under observed count " +
                    std::to_string(X[i]) + " at cell " + X.cell_name(i));
            d += X[i] * std::log(X[i] / x_hat[i]) - X[i] + x_hat[i];
        } else {
            d += x_hat[i];
        }
    }
    return d > 0.0 ? d : 0.0;
}

/// Draw the initial factor states: E and L are independent samples from the
/// prior Gamma(A, B/A) per Algorithm requirements; C and D are back-filled
/// so that E = C*D holds exactly (the first sweep overwrites them anyway).
/// Clamped factors are set to their fixed values. Draw order is factor
/// declaration order, E before L, row-major within each array.
inline std::vector<FactorState> init_factors(const PltfModel& model,
                                             std::uint64_t seed) {
    Engine eng(seed);
    std::vector<FactorState> states;
    states.reserve(model.factors.size());
    for (const auto& f : model.factors) {
        FactorState st;
        if (f.clamped) {
            st.E = *f.fixed_values;
            st.L = *f.fixed_values;
            st.C = NamedTensor(f.indices, 1.0, true);
            st.D = *f.fixed_values;
            states.push_back(std::move(st));
            continue;
        }
        NamedTensor e(f.indices, 0.0, true);
        NamedTensor l(f.indices, 0.0, true);
        const NamedTensor& A = f.prior.a;
        const NamedTensor& B = f.prior.b;
        for (std::size_t i = 0; i < e.size(); ++i)
            e[i] = draw_gamma(eng, A[i], B[i] / A[i]);
        for (std::size_t i = 0; i < l.size(); ++i)
            l[i] = draw_gamma(eng, A[i], B[i] / A[i]);
        st.C = A;
        st.D = NamedTensor(f.indices, 0.0, true);
        for (std::size_t i = 0; i < e.size(); ++i) st.D[i] = e[i] / A[i];
        st.E = std::move(e);
        st.L = std::move(l);
        states.push_back(std::move(st));
    }
    return states;
}

/// One variational epoch on `states` (in place).
inline void vb_step(std::vector<FactorState>& states, const PltfModel& model,
                    const Observation& obs) {
    auto ctx = detail::make_context(model, obs);
    auto lp = detail::l_views(states);
    NamedTensor xl = full_product(std::span<const NamedTensor* const>(lp),
                                  std::span<const IndexDef>(ctx.out));
    detail::vb_sweep(states, ctx, xl);
}

/// One EM epoch on `states` (in place); the point estimate lives in E.
inline void em_step(std::vector<FactorState>& states, const PltfModel& model,
                    const Observation& obs,
                    EmPriorMode mode = EmPriorMode::Flat) {
    auto ctx = detail::make_context(model, obs);
    auto ep = detail::e_views(states);
    NamedTensor xhat = full_product(std::span<const NamedTensor* const>(ep),
                                    std::span<const IndexDef>(ctx.out));
    detail::em_sweep(states, ctx, mode, xhat);
    detail::em_sync_state(states, model);
}

/// Variational lower bound on the log marginal likelihood at the current
/// state: the masked Poisson data term evaluated through the geometric and
/// arithmetic reconstructions, minus the Gamma-Gamma KL of every unclamped
/// factor element against its prior.
inline double compute_bound(const std::vector<FactorState>& states,
                            const PltfModel& model, const Observation& obs) {
    auto ctx = detail::make_context(model, obs);
    auto lp = detail::l_views(states);
    auto ep = detail::e_views(states);
    NamedTensor xl = full_product(std::span<const NamedTensor* const>(lp),
                                  std::span<const IndexDef>(ctx.out));
    NamedTensor xe = full_product(std::span<const NamedTensor* const>(ep),
                                  std::span<const IndexDef>(ctx.out));
    return detail::bound_given(states, ctx, xl, xe);
}

/// Materialize the multinomial cell probabilities P(v) and the expected
/// latent counts <S(v)> over the full index set V. Testing utility: refuses
/// joint sizes above `max_cells`. Cross-checks the factored form of the
/// sufficient statistics against the direct marginal before returning.
inline LatentStats latent_stats(const std::vector<FactorState>& states,
                                const PltfModel& model, const Observation& obs,
                                std::size_t max_cells = 1000000) {
    const std::size_t joint = model.joint_size();
    if (joint > max_cells)
        throw ValidationError("latent_stats: joint configuration count " +
                              std::to_string(joint) + " exceeds the guard of " +
                              std::to_string(max_cells));
    auto ctx = detail::make_context(model, obs);
    auto lp = detail::l_views(states);
    const std::span<const NamedTensor* const> lspan(lp);
    NamedTensor lam = full_product(lspan, std::span<const IndexDef>(model.indices));
    NamedTensor xl = full_product(lspan, std::span<const IndexDef>(ctx.out));

    LatentStats stats{NamedTensor(model.indices, 0.0, true),
                      NamedTensor(model.indices, 0.0, true)};

    // stride of each joint axis inside the observed arrays (0 for latent)
    std::vector<std::size_t> obs_stride(model.indices.size(), 0);
    for (std::size_t a = 0; a < model.indices.size(); ++a)
        if (auto j = xl.axis_of(model.indices[a].name); j >= 0)
            obs_stride[a] = xl.stride(std::size_t(j));

    // per-factor marginal of M*<S>, accumulated while walking the joint
    std::vector<NamedTensor> direct_marginal;
    std::vector<std::vector<std::size_t>> fac_stride(states.size());
    for (std::size_t f = 0; f < states.size(); ++f) {
        direct_marginal.emplace_back(model.factors[f].indices, 0.0, true);
        fac_stride[f].assign(model.indices.size(), 0);
        for (std::size_t a = 0; a < model.indices.size(); ++a)
            if (auto j = direct_marginal[f].axis_of(model.indices[a].name);
                j >= 0)
                fac_stride[f][a] = direct_marginal[f].stride(std::size_t(j));
    }

    std::vector<std::size_t> counters(model.indices.size(), 0);
    std::size_t ooff = 0;
    std::vector<std::size_t> foff(states.size(), 0);
    for (std::size_t cell = 0;;) {
        double p = xl[ooff] > 0.0 ? lam[cell] / xl[ooff] : 0.0;
        stats.P[cell] = p;
        double s = obs.X[ooff] * p;
        stats.S_expect[cell] = s;
        if (obs.M[ooff] == 1.0)
            for (std::size_t f = 0; f < states.size(); ++f)
                direct_marginal[f][foff[f]] += s;
        if (++cell >= joint) break;
        for (std::size_t ax = model.indices.size(); ax-- > 0;) {
            ooff += obs_stride[ax];
            for (std::size_t f = 0; f < states.size(); ++f)
                foff[f] += fac_stride[f][ax];
            if (++counters[ax] < model.indices[ax].cardinality) break;
            ooff -= obs_stride[ax] * model.indices[ax].cardinality;
            for (std::size_t f = 0; f < states.size(); ++f)
                foff[f] -= fac_stride[f][ax] * model.indices[ax].cardinality;
            counters[ax] = 0;
        }
    }

    // factored identity: the masked marginal of <S> must equal
    // L_alpha * Delta_L_alpha(M * X / X_hat_L)
    const NamedTensor ratio = safe_div(ctx.mx, xl);
    for (std::size_t a = 0; a < states.size(); ++a) {
        NamedTensor factored = hadamard(states[a].L, delta(a, ratio, lspan));
        for (std::size_t i = 0; i < factored.size(); ++i) {
            double lhs = direct_marginal[a][i];
            double rhs = factored[i];
            double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
            if (std::abs(lhs - rhs) > 1e-9 * scale)
                throw Error("latent_stats: factored sufficient statistic "
                            "disagrees with the direct marginal for factor '" +
                            model.factors[a].name + "' at " +
                            factored.cell_name(i));
        }
    }
    return stats;
}

/// Run the configured inference method to max_iters (or until the relative
/// change of the monitored trace drops below tol). Deterministic per seed.
inline FitResult fit(const PltfModel& model, const Observation& obs,
                     const FitConfig& cfg) {
    require_valid(model);
    if (cfg.max_iters < 1)
        throw ValidationError("fit: max_iters must be at least 1");
    auto ctx = detail::make_context(model, obs);
    FitResult res;
    res.seed = cfg.seed;
    res.states = init_factors(model, cfg.seed);

    auto rethrow_at = [](const SingularModelError& e, std::size_t iter) {
        throw SingularModelError(std::string(e.what()) + " (iteration " +
                                 std::to_string(iter) + ")");
    };

    if (cfg.method == Method::VB) {
        auto lp = detail::l_views(res.states);
        auto ep = detail::e_views(res.states);
        const std::span<const NamedTensor* const> lspan(lp), espan(ep);
        const std::span<const IndexDef> out(ctx.out);
        for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
            NamedTensor xl = full_product(lspan, out);
            NamedTensor xe = full_product(espan, out);
            if (it > 1) {
                // bound of the state reached after iteration it-1
                double b;
                try {
                    b = detail::bound_given(res.states, ctx, xl, xe);
                } catch (const SingularModelError& e) {
                    rethrow_at(e, it - 1);
                    throw;
                }
                res.bound_trace.push_back(b);
                std::size_t n = res.bound_trace.size();
                if (cfg.tol > 0.0 && n >= 2 &&
                    detail::relative_change(res.bound_trace[n - 1],
                                            res.bound_trace[n - 2]) < cfg.tol) {
                    res.iterations_run = it - 1;
                    res.converged = true;
                    return res;
                }
            }
            try {
                detail::vb_sweep(res.states, ctx, xl);
            } catch (const SingularModelError& e) {
                rethrow_at(e, it);
            }
        }
        NamedTensor xl = full_product(lspan, out);
        NamedTensor xe = full_product(espan, out);
        try {
            res.bound_trace.push_back(
                detail::bound_given(res.states, ctx, xl, xe));
        } catch (const SingularModelError& e) {
            rethrow_at(e, cfg.max_iters);
        }
        res.iterations_run = cfg.max_iters;
        return res;
    }

    // EM
    auto ep = detail::e_views(res.states);
    const std::span<const NamedTensor* const> espan(ep);
    const std::span<const IndexDef> out(ctx.out);
    NamedTensor xhat = full_product(espan, out);
    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        try {
            detail::em_sweep(res.states, ctx, cfg.em_prior_mode, xhat);
            res.divergence_trace.push_back(
                kl_divergence(obs.X, xhat, obs.M));
        } catch (const SingularModelError& e) {
            rethrow_at(e, it);
        }
        res.iterations_run = it;
        std::size_t n = res.divergence_trace.size();
        if (cfg.tol > 0.0 && n >= 2 &&
            detail::relative_change(res.divergence_trace[n - 1],
                                    res.divergence_trace[n - 2]) < cfg.tol) {
            res.converged = true;
            break;
        }
    }
    detail::em_sync_state(res.states, model);
    return res;
}

} // namespace pltf
