#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pltf/tensor.hpp"

namespace pltf {

/// Elementwise Gamma prior over a factor. `a` is the shape array and `b`
/// the prior-mean array; the sampling convention is Gamma(shape a,
/// scale b/a), so the prior mean is b and the standard deviation b/sqrt(a).
/// Stored as full arrays because the updates index them per element;
/// scalar settings are broadcast at build time.
struct GammaPrior {
    NamedTensor a;
    NamedTensor b;

    static GammaPrior broadcast(const std::vector<IndexDef>& shape,
                                double a_scalar, double b_scalar) {
        return {NamedTensor(shape, a_scalar, true),
                NamedTensor(shape, b_scalar, true)};
    }
};

/// One factor of the factorization: its index set, prior, and an optional
/// clamp (fixed values that no update touches).
struct FactorSpec {
    std::string name;
    std::vector<IndexDef> indices;
    GammaPrior prior;
    bool clamped = false;
    std::optional<NamedTensor> fixed_values; // required when clamped
};

/// Declarative factorization structure: the index universe V, the observed
/// subset V0, and the factor list. Immutable once built; validate() reports
/// every violated invariant rather than stopping at the first.
struct PltfModel {
    std::vector<IndexDef> indices;      // V, in declaration order
    std::vector<std::string> observed;  // names of V0, in data axis order
    std::vector<FactorSpec> factors;

    std::vector<IndexDef> observed_indices() const {
        std::vector<IndexDef> defs;
        for (const auto& name : observed)
            for (const auto& ix : indices)
                if (ix.name == name) defs.push_back(ix);
        return defs;
    }

    std::size_t observed_size() const { return shape_size(observed_indices()); }

    std::size_t joint_size() const {
        return shape_size(std::span<const IndexDef>(indices));
    }

    bool is_observed(std::string_view name) const {
        for (const auto& o : observed)
            if (o == name) return true;
        return false;
    }
};

inline std::vector<std::string> validate(const PltfModel& model) {
    std::vector<std::string> violations;
    auto known = [&](std::string_view name) {
        for (const auto& ix : model.indices)
            if (ix.name == name) return true;
        return false;
    };
    auto card_of = [&](std::string_view name) -> std::size_t {
        for (const auto& ix : model.indices)
            if (ix.name == name) return ix.cardinality;
        return 0;
    };
    auto in_some_factor = [&](std::string_view name) {
        for (const auto& f : model.factors)
            for (const auto& ix : f.indices)
                if (ix.name == name) return true;
        return false;
    };

    for (std::size_t a = 0; a < model.indices.size(); ++a) {
        if (model.indices[a].cardinality == 0)
            violations.push_back("index '" + model.indices[a].name +
                                 "' has zero cardinality");
        for (std::size_t b = a + 1; b < model.indices.size(); ++b)
            if (model.indices[a].name == model.indices[b].name)
                violations.push_back("duplicate index '" +
                                     model.indices[a].name + "'");
    }

    for (const auto& name : model.observed) {
        if (!known(name))
            violations.push_back("observed index '" + name +
                                 "' not declared in the model");
        else if (!in_some_factor(name))
            violations.push_back("observed index '" + name +
                                 "' appears in no factor; the reconstruction "
                                 "cannot vary along it");
    }

    for (const auto& ix : model.indices)
        if (!model.is_observed(ix.name) && !in_some_factor(ix.name))
            violations.push_back("index '" + ix.name +
                                 "' is neither observed nor used by a factor");

    if (model.factors.empty()) violations.push_back("model has no factors");
    bool any_unclamped = false;
    for (const auto& f : model.factors) {
        if (!f.clamped) any_unclamped = true;
        if (f.indices.empty())
            violations.push_back("factor '" + f.name + "' has no indices");
        for (std::size_t a = 0; a < f.indices.size(); ++a) {
            const auto& ix = f.indices[a];
            if (!known(ix.name))
                violations.push_back("factor '" + f.name +
                                     "' references unknown index '" + ix.name +
                                     "'");
            else if (card_of(ix.name) != ix.cardinality)
                violations.push_back("factor '" + f.name + "' gives index '" +
                                     ix.name + "' cardinality " +
                                     std::to_string(ix.cardinality) +
                                     ", model declares " +
                                     std::to_string(card_of(ix.name)));
            for (std::size_t b = a + 1; b < f.indices.size(); ++b)
                if (ix.name == f.indices[b].name)
                    violations.push_back("factor '" + f.name +
                                         "' repeats index '" + ix.name + "'");
        }
        auto check_prior = [&](const NamedTensor& p, const char* label) {
            if (p.indices() != f.indices) {
                violations.push_back("factor '" + f.name + "' prior " + label +
                                     " is not shaped like the factor");
                return;
            }
            for (std::size_t i = 0; i < p.size(); ++i)
                if (!(p[i] > 0.0)) {
                    violations.push_back("factor '" + f.name + "' prior " +
                                         label + " must be strictly positive");
                    break;
                }
        };
        check_prior(f.prior.a, "shape A");
        check_prior(f.prior.b, "mean B");
        if (f.clamped) {
            if (!f.fixed_values)
                violations.push_back("clamped factor '" + f.name +
                                     "' has no fixed values");
            else if (f.fixed_values->indices() != f.indices)
                violations.push_back("clamped factor '" + f.name +
                                     "' fixed values are mis-shaped");
        }
    }
    if (!model.factors.empty() && !any_unclamped)
        violations.push_back("every factor is clamped; nothing to infer");

    return violations;
}

inline void require_valid(const PltfModel& model) {
    auto v = validate(model);
    if (v.empty()) return;
    std::string msg = "invalid model:";
    for (const auto& s : v) msg += "\n  - " + s;
    throw ValidationError(msg);
}

/// CP structure over a three-way observation: X(i,j,k) ~ sum_r of
/// Z1(i,r) Z2(j,r) Z3(k,r). Default priors follow A=0.5, B=10.
inline PltfModel build_cp(std::size_t dim_i, std::size_t dim_j,
                          std::size_t dim_k, std::size_t rank,
                          double prior_a = 0.5, double prior_b = 10.0) {
    if (dim_i == 0 || dim_j == 0 || dim_k == 0 || rank == 0)
        throw ValidationError("build_cp: all cardinalities must be >= 1");
    PltfModel m;
    m.indices = {{"i", dim_i}, {"j", dim_j}, {"k", dim_k}, {"r", rank}};
    m.observed = {"i", "j", "k"};
    auto factor = [&](const char* name, const IndexDef& obs) {
        std::vector<IndexDef> shape{obs, {"r", rank}};
        return FactorSpec{name, shape,
                          GammaPrior::broadcast(shape, prior_a, prior_b),
                          false, std::nullopt};
    };
    m.factors = {factor("Z1", m.indices[0]), factor("Z2", m.indices[1]),
                 factor("Z3", m.indices[2])};
    return m;
}

/// Tucker structure: X(i,j,k) ~ sum over p,q,r of
/// Z1(i,p) Z2(j,q) Z3(k,r) Z4(p,q,r), Z4 being the core.
inline PltfModel build_tucker(std::size_t dim_i, std::size_t dim_j,
                              std::size_t dim_k, std::size_t p, std::size_t q,
                              std::size_t r, double prior_a = 0.5,
                              double prior_b = 10.0) {
    if (dim_i == 0 || dim_j == 0 || dim_k == 0 || p == 0 || q == 0 || r == 0)
        throw ValidationError("build_tucker: all cardinalities must be >= 1");
    PltfModel m;
    m.indices = {{"i", dim_i}, {"j", dim_j}, {"k", dim_k},
                 {"p", p},     {"q", q},     {"r", r}};
    m.observed = {"i", "j", "k"};
    auto factor = [&](const char* name, std::vector<IndexDef> shape) {
        return FactorSpec{name, shape,
                          GammaPrior::broadcast(shape, prior_a, prior_b),
                          false, std::nullopt};
    };
    m.factors = {factor("Z1", {m.indices[0], m.indices[3]}),
                 factor("Z2", {m.indices[1], m.indices[4]}),
                 factor("Z3", {m.indices[2], m.indices[5]}),
                 factor("Z4", {m.indices[3], m.indices[4], m.indices[5]})};
    return m;
}

/// Observation bundle: the data tensor X and the 0/1 mask M, both over the
/// model's observed indices. Immutable after construction.
struct Observation {
    NamedTensor X;
    NamedTensor M;

    Observation(const PltfModel& model, NamedTensor x, NamedTensor m)
        : X(std::move(x)), M(std::move(m)) {
        auto obs = model.observed_indices();
        if (X.indices() != obs)
            throw ValidationError(
                "observation X axes do not match the model's observed indices");
        if (M.indices() != obs)
            throw ValidationError(
                "mask M axes do not match the model's observed indices");
        for (std::size_t i = 0; i < X.size(); ++i) {
            if (!std::isfinite(X[i]) || X[i] < 0.0)
                throw ValidationError("X must be finite and non-negative; bad "
                                      "value at " +
                                      X.cell_name(i));
            if (M[i] != 0.0 && M[i] != 1.0)
                throw ValidationError("mask must be 0/1; bad value at " +
                                      M.cell_name(i));
        }
        X.set_nonneg(true);
        M.set_nonneg(true);
    }

    static Observation fully_observed(const PltfModel& model, NamedTensor x) {
        NamedTensor ones(model.observed_indices(), 1.0, true);
        return Observation(model, std::move(x), std::move(ones));
    }

    std::size_t observed_cell_count() const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < M.size(); ++i)
            if (M[i] == 1.0) ++n;
        return n;
    }
};

} // namespace pltf
