#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <numeric>
#include <string>
#include <vector>

#include "pltf/inference.hpp"
#include "pltf/model.hpp"
#include "pltf/rng.hpp"

namespace pltf {

/// Ground truth produced by the synthetic generator.
struct GeneratedData {
    NamedTensor X;                    // observation over V0
    std::vector<NamedTensor> factors; // true factors, one per CP factor
};

/// Draw a CP instance: factors sampled elementwise from Gamma(A, B/A),
/// X taken as the exact reconstruction or Poisson-sampled around it.
inline GeneratedData generate_cp(const std::vector<std::size_t>& dims,
                                 std::size_t rank, double prior_a,
                                 double prior_b, std::uint64_t seed,
                                 bool poisson) {
    if (dims.empty() || rank == 0)
        throw ValidationError("generate_cp: dims and rank must be >= 1");
    for (std::size_t d : dims)
        if (d == 0) throw ValidationError("generate_cp: zero dimension");

    std::vector<IndexDef> observed;
    for (std::size_t a = 0; a < dims.size(); ++a)
        observed.push_back({dims.size() == 3
                                ? std::string(1, "ijk"[a])
                                : "i" + std::to_string(a),
                            dims[a]});
    IndexDef latent{"r", rank};

    Engine eng(seed);
    GeneratedData out;
    for (std::size_t a = 0; a < dims.size(); ++a) {
        NamedTensor z({observed[a], latent}, 0.0, true);
        for (std::size_t i = 0; i < z.size(); ++i)
            z[i] = draw_gamma(eng, prior_a, prior_b / prior_a);
        out.factors.push_back(std::move(z));
    }
    out.X = full_product(out.factors, observed);
    if (poisson) {
        for (std::size_t i = 0; i < out.X.size(); ++i)
            out.X[i] = draw_poisson(eng, out.X[i]);
    }
    return out;
}

/// Replace every positive entry by 1. Mirrors the link-prediction data
/// construction where an entry marks the presence of a relation.
inline NamedTensor binarize(const NamedTensor& t) {
    NamedTensor r(t.indices(), 0.0, true);
    for (std::size_t i = 0; i < t.size(); ++i) r[i] = t[i] > 0.0 ? 1.0 : 0.0;
    return r;
}

/// Train/test split of the observed cells: a 0/1 training mask plus the
/// list of held-out cells. Labels are bound later, from whatever tensor the
/// evaluation scores against.
struct HoldoutSplit {
    struct TestCell {
        std::vector<std::size_t> cell;
        int label = -1;
    };
    NamedTensor train_mask;
    std::vector<TestCell> test_cells;
};

/// Hold out round(fraction * cell count) cells chosen uniformly without
/// replacement; deterministic per seed. Held-out cells are reported in
/// ascending row-major order.
inline HoldoutSplit make_holdout(const std::vector<IndexDef>& observed,
                                 double missing_fraction, std::uint64_t seed) {
    if (!(missing_fraction >= 0.0) || missing_fraction >= 1.0)
        throw ValidationError("make_holdout: fraction must lie in [0, 1)");
    HoldoutSplit split;
    split.train_mask = NamedTensor(observed, 1.0, true);
    const std::size_t n = split.train_mask.size();
    const auto m = static_cast<std::size_t>(
        std::llround(missing_fraction * static_cast<double>(n)));
    if (m == 0) return split;

    std::vector<std::size_t> cells(n);
    std::iota(cells.begin(), cells.end(), std::size_t{0});
    Engine eng(seed);
    for (std::size_t t = 0; t < m; ++t) {
        std::uniform_int_distribution<std::size_t> pick(t, n - 1);
        std::swap(cells[t], cells[pick(eng)]);
    }
    cells.resize(m);
    std::sort(cells.begin(), cells.end());
    for (std::size_t flat : cells) {
        split.train_mask[flat] = 0.0;
        split.test_cells.push_back({split.train_mask.unravel(flat), -1});
    }
    return split;
}

/// Area under the ROC curve via midranks: the probability that a uniformly
/// random positive outscores a uniformly random negative, ties worth 0.5.
inline double auc(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ValidationError("auc: scores and labels differ in length");
    std::size_t n_pos = 0, n_neg = 0;
    for (int l : labels) {
        if (l == 1)
            ++n_pos;
        else if (l == 0)
            ++n_neg;
        else
            throw ValidationError("auc: labels must be 0 or 1");
    }
    if (n_pos == 0 || n_neg == 0)
        throw ValidationError("auc: need at least one positive and one "
                              "negative label");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a,
                                                     std::size_t b) {
        return scores[a] < scores[b];
    });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (double(i + 1) + double(j)); // 1-based
        for (std::size_t t = i; t < j; ++t)
            if (labels[order[t]] == 1) rank_sum_pos += midrank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * double(n_pos) * double(n_pos + 1);
    return u / (double(n_pos) * double(n_neg));
}

/// Per-order sweep outcome: the best score across restarts decides, ties
/// broken toward the smaller order.
struct SweepReport {
    struct Entry {
        std::size_t order = 0;
        std::uint64_t restart_seed = 0;
        double score = 0.0; // bound for VB, negative divergence for EM
    };
    std::vector<std::size_t> orders;
    std::vector<std::vector<Entry>> per_order; // [order][restart]
    std::vector<double> best_bound;            // max score per order
    std::size_t selected_order = 0;
};

using ModelBuilder = std::function<PltfModel(std::size_t order)>;

/// Fit every candidate order with `restarts` independent initializations
/// and report the best score per order. Restart seeds derive from the
/// config seed, order, and restart number alone, so the report does not
/// depend on evaluation order; `threads > 1` fans the independent fits out.
inline SweepReport sweep_order(const ModelBuilder& builder,
                               const Observation& obs, std::size_t r_min,
                               std::size_t r_max, std::size_t restarts,
                               const FitConfig& config,
                               std::size_t threads = 1) {
    if (r_min < 1 || r_max < r_min)
        throw ValidationError("sweep_order: need 1 <= r_min <= r_max");
    if (restarts < 1)
        throw ValidationError("sweep_order: restarts must be >= 1");

    SweepReport report;
    for (std::size_t r = r_min; r <= r_max; ++r) report.orders.push_back(r);
    report.per_order.assign(report.orders.size(), {});

    auto run_cell = [&](std::size_t order,
                        std::size_t restart) -> SweepReport::Entry {
        FitConfig cell_cfg = config;
        cell_cfg.seed = mix_seed(config.seed, order, restart);
        try {
            PltfModel model = builder(order);
            Observation cell_obs(model, obs.X, obs.M);
            FitResult res = fit(model, cell_obs, cell_cfg);
            return {order, cell_cfg.seed, res.final_score(config.method)};
        } catch (const Error& e) {
            throw Error("order " + std::to_string(order) + ", restart " +
                        std::to_string(restart) + ": " + e.what());
        }
    };

    if (threads <= 1) {
        for (std::size_t oi = 0; oi < report.orders.size(); ++oi)
            for (std::size_t s = 0; s < restarts; ++s)
                report.per_order[oi].push_back(run_cell(report.orders[oi], s));
    } else {
        std::vector<std::pair<std::size_t, std::size_t>> cells;
        for (std::size_t oi = 0; oi < report.orders.size(); ++oi)
            for (std::size_t s = 0; s < restarts; ++s) cells.push_back({oi, s});
        for (auto& row : report.per_order) row.resize(restarts);
        std::size_t next = 0;
        while (next < cells.size()) {
            std::vector<std::future<SweepReport::Entry>> batch;
            std::vector<std::pair<std::size_t, std::size_t>> slots;
            for (std::size_t t = 0; t < threads && next < cells.size();
                 ++t, ++next) {
                auto [oi, s] = cells[next];
                slots.push_back({oi, s});
                batch.push_back(std::async(std::launch::async, run_cell,
                                           report.orders[oi], s));
            }
            for (std::size_t t = 0; t < batch.size(); ++t)
                report.per_order[slots[t].first][slots[t].second] =
                    batch[t].get();
        }
    }

    report.best_bound.resize(report.orders.size());
    for (std::size_t oi = 0; oi < report.orders.size(); ++oi) {
        double best = report.per_order[oi][0].score;
        for (const auto& e : report.per_order[oi])
            best = std::max(best, e.score);
        report.best_bound[oi] = best;
    }
    std::size_t best_oi = 0;
    for (std::size_t oi = 1; oi < report.orders.size(); ++oi)
        if (report.best_bound[oi] > report.best_bound[best_oi]) best_oi = oi;
    report.selected_order = report.orders[best_oi];
    return report;
}

/// Fit on the training mask, reconstruct from the fitted factors (E views),
/// score the held-out cells, and return the AUC against labels taken from
/// x_full binarized at > 0.
inline double link_prediction_run(const PltfModel& model,
                                  const NamedTensor& x_full,
                                  const HoldoutSplit& split,
                                  const FitConfig& config) {
    if (split.test_cells.empty())
        throw ValidationError("link_prediction_run: the split holds out no "
                              "cells; nothing to score");
    Observation obs(model, x_full, split.train_mask);
    FitResult res = fit(model, obs, config);
    auto ep = detail::e_views(res.states);
    NamedTensor xhat =
        full_product(std::span<const NamedTensor* const>(ep),
                     std::span<const IndexDef>(model.observed_indices()));
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(split.test_cells.size());
    labels.reserve(split.test_cells.size());
    for (const auto& tc : split.test_cells) {
        std::size_t off = xhat.offset(tc.cell);
        scores.push_back(xhat[off]);
        labels.push_back(x_full[x_full.offset(tc.cell)] > 0.0 ? 1 : 0);
    }
    return auc(scores, labels);
}

} // namespace pltf
