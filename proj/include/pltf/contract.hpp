#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pltf/tensor.hpp"

namespace pltf {

namespace detail {

struct LoopAxis {
    std::size_t card = 0;
    std::size_t sa = 0; // stride in left operand, 0 when absent
    std::size_t sb = 0; // stride in right operand
};

inline bool contains(std::span<const IndexDef> defs, std::string_view name) {
    for (const auto& d : defs)
        if (d.name == name) return true;
    return false;
}

inline bool contains(const std::vector<std::string>& names,
                     std::string_view name) {
    return std::find(names.begin(), names.end(), name) != names.end();
}

inline void check_card(const IndexDef& a, std::size_t card) {
    if (a.cardinality != card)
        throw ValidationError("cardinality mismatch on shared index '" +
                              a.name + "': " + std::to_string(a.cardinality) +
                              " vs " + std::to_string(card));
}

// Sum of a[..]*b[..] over the given axes, innermost axis last.
// Loop order is fixed, so the accumulation order is reproducible.
inline double accumulate_cell(const double* pa, const double* pb,
                              std::span<const LoopAxis> sum) {
    if (sum.empty()) return pa[0] * pb[0];
    const LoopAxis& in = sum.back();
    double acc = 0.0;
    if (sum.size() == 1) {
        for (std::size_t t = 0; t < in.card; ++t)
            acc += pa[t * in.sa] * pb[t * in.sb];
        return acc;
    }
    const std::size_t n_outer = sum.size() - 1;
    std::size_t counters[24] = {0};
    std::size_t aoff = 0, boff = 0;
    bool done = false;
    while (!done) {
        const double* qa = pa + aoff;
        const double* qb = pb + boff;
        for (std::size_t t = 0; t < in.card; ++t)
            acc += qa[t * in.sa] * qb[t * in.sb];
        done = true;
        for (std::size_t ax = n_outer; ax-- > 0;) {
            aoff += sum[ax].sa;
            boff += sum[ax].sb;
            if (++counters[ax] < sum[ax].card) {
                done = false;
                break;
            }
            aoff -= sum[ax].card * sum[ax].sa;
            boff -= sum[ax].card * sum[ax].sb;
            counters[ax] = 0;
        }
    }
    return acc;
}

// Multiply two tensors, marginalizing every axis whose name is not in
// `keep`. Output axes are ordered: kept axes of `a` first (in a's order),
// then kept axes found only in `b`.
inline NamedTensor pairwise_contract(const NamedTensor& a,
                                     const NamedTensor& b,
                                     const std::vector<std::string>& keep) {
    std::vector<IndexDef> out_defs;
    std::vector<LoopAxis> out_axes, sum_axes;

    auto classify = [&](const IndexDef& def, std::size_t sa, std::size_t sb) {
        LoopAxis ax{def.cardinality, sa, sb};
        if (contains(keep, def.name)) {
            out_defs.push_back(def);
            out_axes.push_back(ax);
        } else {
            sum_axes.push_back(ax);
        }
    };

    for (std::size_t i = 0; i < a.order(); ++i) {
        const IndexDef& def = a.index(i);
        std::size_t sb = 0;
        if (auto j = b.axis_of(def.name); j >= 0) {
            check_card(b.index(std::size_t(j)), def.cardinality);
            sb = b.stride(std::size_t(j));
        }
        classify(def, a.stride(i), sb);
    }
    for (std::size_t j = 0; j < b.order(); ++j) {
        const IndexDef& def = b.index(j);
        if (a.axis_of(def.name) >= 0) continue;
        classify(def, 0, b.stride(j));
    }

    if (out_axes.size() + sum_axes.size() > 24)
        throw ValidationError("contraction exceeds 24 distinct indices");

    NamedTensor r(out_defs, 0.0, a.nonneg() && b.nonneg());
    double* pr = r.data();
    const double* pa = a.data();
    const double* pb = b.data();
    const std::size_t out_size = r.size();
    const std::span<const LoopAxis> sum_span(sum_axes);

    std::size_t counters[24] = {0};
    std::size_t aoff = 0, boff = 0;
    for (std::size_t cell = 0;;) {
        pr[cell] = accumulate_cell(pa + aoff, pb + boff, sum_span);
        if (++cell >= out_size) break;
        std::size_t ax = out_axes.size();
        while (ax-- > 0) {
            aoff += out_axes[ax].sa;
            boff += out_axes[ax].sb;
            if (++counters[ax] < out_axes[ax].card) break;
            aoff -= out_axes[ax].card * out_axes[ax].sa;
            boff -= out_axes[ax].card * out_axes[ax].sb;
            counters[ax] = 0;
        }
    }
    return r;
}

// Bring `t` to exactly the axes in `out`: marginalize extra axes, reorder,
// and (when allowed) broadcast output axes absent from `t`.
inline NamedTensor finalize_to(NamedTensor t, std::span<const IndexDef> out,
                               bool allow_broadcast) {
    bool exact = t.order() == out.size();
    for (std::size_t a = 0; exact && a < out.size(); ++a)
        exact = t.index(a) == out[a];
    if (exact) return t;

    // marginalize axes not requested
    bool extra = false;
    for (const auto& def : t.indices())
        if (!contains(out, def.name)) extra = true;
    if (extra) {
        std::vector<IndexDef> kept;
        for (std::size_t a = 0; a < t.order(); ++a)
            if (contains(out, t.index(a).name)) kept.push_back(t.index(a));
        NamedTensor reduced(kept, 0.0, t.nonneg());
        // per-axis contribution of t's walk order into the reduced offset
        std::vector<std::size_t> rstride(t.order(), 0);
        for (std::size_t a = 0; a < t.order(); ++a)
            for (std::size_t j = 0; j < kept.size(); ++j)
                if (kept[j].name == t.index(a).name)
                    rstride[a] = reduced.stride(j);
        std::vector<std::size_t> counters(t.order(), 0);
        std::size_t roff = 0;
        const double* pt = t.data();
        double* pr = reduced.data();
        for (std::size_t flat = 0;;) {
            pr[roff] += pt[flat];
            if (++flat >= t.size()) break;
            std::size_t ax = t.order();
            while (ax-- > 0) {
                roff += rstride[ax];
                if (++counters[ax] < t.index(ax).cardinality) break;
                roff -= rstride[ax] * t.index(ax).cardinality;
                counters[ax] = 0;
            }
        }
        t = std::move(reduced);
    }

    // permute / broadcast into the requested order
    NamedTensor r(std::vector<IndexDef>(out.begin(), out.end()), 0.0,
                  t.nonneg());
    std::vector<std::size_t> src_stride(out.size(), 0);
    for (std::size_t a = 0; a < out.size(); ++a) {
        auto j = t.axis_of(out[a].name);
        if (j >= 0) {
            check_card(out[a], t.index(std::size_t(j)).cardinality);
            src_stride[a] = t.stride(std::size_t(j));
        } else if (!allow_broadcast) {
            throw ValidationError("output index '" + out[a].name +
                                  "' absent from every factor");
        }
    }
    std::vector<std::size_t> counters(out.size(), 0);
    std::size_t soff = 0;
    const double* pt = t.data();
    double* pr = r.data();
    for (std::size_t cell = 0;;) {
        pr[cell] = pt[soff];
        if (++cell >= r.size()) break;
        std::size_t ax = out.size();
        while (ax-- > 0) {
            soff += src_stride[ax];
            if (++counters[ax] < out[ax].cardinality) break;
            soff -= src_stride[ax] * out[ax].cardinality;
            counters[ax] = 0;
        }
    }
    return r;
}

inline NamedTensor contract_chain(std::span<const NamedTensor* const> tensors,
                                  std::span<const IndexDef> out,
                                  bool allow_broadcast) {
    if (tensors.empty())
        throw ValidationError("contraction over an empty tensor list");
    // shared names must agree on cardinality across the whole chain
    {
        std::vector<IndexDef> seen(out.begin(), out.end());
        for (const NamedTensor* t : tensors)
            for (const auto& def : t->indices()) {
                bool found = false;
                for (const auto& s : seen)
                    if (s.name == def.name) {
                        check_card(s, def.cardinality);
                        found = true;
                    }
                if (!found) seen.push_back(def);
            }
    }
    if (tensors.size() == 1)
        return finalize_to(*tensors[0], out, allow_broadcast);

    // Left fold in the given order. An axis survives a step only while a
    // later operand or the output still mentions it.
    NamedTensor acc = *tensors[0];
    for (std::size_t t = 1; t < tensors.size(); ++t) {
        std::vector<std::string> keep;
        for (const auto& def : out)
            if (!detail::contains(keep, def.name)) keep.push_back(def.name);
        for (std::size_t u = t + 1; u < tensors.size(); ++u)
            for (const auto& def : tensors[u]->indices())
                if (!detail::contains(keep, def.name)) keep.push_back(def.name);
        acc = pairwise_contract(acc, *tensors[t], keep);
    }
    return finalize_to(std::move(acc), out, allow_broadcast);
}

} // namespace detail

/// Collapse the product of `factors` onto `out_indices`:
///
///   result(v_out) = sum over all settings of the remaining indices of
///                   prod_alpha factor_alpha(v_alpha)
///
/// Factors are combined pairwise in the order given, each axis being summed
/// out at the earliest step where no later factor or output index needs it.
/// All loop orders are fixed, so results are reproducible run to run.
inline NamedTensor full_product(std::span<const NamedTensor* const> factors,
                                std::span<const IndexDef> out_indices) {
    for (const auto& def : out_indices) {
        bool found = false;
        for (const NamedTensor* t : factors)
            if (t->axis_of(def.name) >= 0) found = true;
        if (!found)
            throw ValidationError("output index '" + def.name +
                                  "' absent from every factor");
    }
    return detail::contract_chain(factors, out_indices, false);
}

inline NamedTensor full_product(const std::vector<NamedTensor>& factors,
                                const std::vector<IndexDef>& out_indices) {
    std::vector<const NamedTensor*> ptrs;
    ptrs.reserve(factors.size());
    for (const auto& f : factors) ptrs.push_back(&f);
    return full_product(std::span<const NamedTensor* const>(ptrs),
                        std::span<const IndexDef>(out_indices));
}

/// The Delta contraction: an object shaped like factor `alpha` whose entry
/// at v_alpha sums Q(v_0) times the product of all *other* factors over
/// every setting of the indices outside factor alpha.
///
/// Axes of factor alpha that appear in no other operand are broadcast: the
/// summand does not vary along them.
inline NamedTensor delta(std::size_t alpha, const NamedTensor& q,
                         std::span<const NamedTensor* const> factors) {
    if (alpha >= factors.size())
        throw ValidationError("delta: factor position " +
                              std::to_string(alpha) + " out of range");
    std::vector<const NamedTensor*> chain;
    chain.reserve(factors.size());
    chain.push_back(&q);
    for (std::size_t i = 0; i < factors.size(); ++i)
        if (i != alpha) chain.push_back(factors[i]);
    return detail::contract_chain(
        chain, std::span<const IndexDef>(factors[alpha]->indices()), true);
}

inline NamedTensor delta(std::size_t alpha, const NamedTensor& q,
                         const std::vector<NamedTensor>& factors) {
    std::vector<const NamedTensor*> ptrs;
    ptrs.reserve(factors.size());
    for (const auto& f : factors) ptrs.push_back(&f);
    return delta(alpha, q, std::span<const NamedTensor* const>(ptrs));
}

} // namespace pltf
