// Command-line front end: generate / fit / select / eval-links.
//
// Every run writes a manifest.json into the output directory before any
// numeric work starts and finalizes it (artifacts, per-phase wall clock)
// on success. Given identical inputs, flags, and seed, every command
// reproduces its numeric outputs byte for byte.
//
// Exit codes: 0 success, 1 usage error, 2 invalid input or model,
// 3 numerical/singular failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pltf/pltf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Manifest {
    std::string command;
    json config;
    json inputs = json::object();
    std::uint64_t seed = 0;
    std::vector<std::string> artifacts;
    std::map<std::string, double> phases_seconds;
    std::string path;

    void add_input(const std::string& label, const std::string& file) {
        inputs[label] = {{"path", file}, {"digest", pltf::file_digest(file)}};
    }

    void write() const {
        json j{{"command", command},
               {"config", config},
               {"inputs", inputs},
               {"seed", seed},
               {"artifacts", artifacts},
               {"phases_seconds", phases_seconds}};
        std::ofstream os(path);
        if (!os) throw pltf::IoError("cannot open for writing: " + path);
        os << j.dump(2) << '\n';
    }
};

struct PhaseTimer {
    Manifest& manifest;
    std::string phase;
    Clock::time_point start = Clock::now();
    PhaseTimer(Manifest& m, std::string p) : manifest(m), phase(std::move(p)) {}
    ~PhaseTimer() {
        manifest.phases_seconds[phase] =
            std::chrono::duration<double>(Clock::now() - start).count();
    }
};

std::string prepare_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw pltf::IoError("cannot create output directory " + out +
                                ": " + ec.message());
    return out;
}

// Flags mirror the config-file keys; a flag given on the command line
// overrides the file value.
struct ModelFlags {
    std::string config_path;
    std::string model;
    std::vector<std::string> dims;
    std::size_t rank = 0;
    std::vector<std::size_t> core_dims;
    std::string custom_factors;
    double prior_a = 0.5;
    double prior_b = 10.0;

    void attach(CLI::App* cmd, bool with_structure) {
        cmd->add_option("--config", config_path,
                        "Model config file (key = value lines)");
        cmd->add_option("--a", prior_a, "Gamma prior shape (key prior_a)")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--b", prior_b, "Gamma prior mean (key prior_b)")
            ->check(CLI::PositiveNumber);
        if (with_structure) {
            cmd->add_option("--model", model, "cp | tucker | custom");
            cmd->add_option("--dims", dims,
                            "Observed dimensions (or name:card for custom)");
            cmd->add_option("--rank", rank, "CP latent cardinality");
            cmd->add_option("--core-dims", core_dims,
                            "Tucker core cardinalities (key core_dims)");
            cmd->add_option("--custom-factors", custom_factors,
                            "Custom factor index lists (key custom_factors)");
        }
    }

    pltf::KeyValues resolve(const CLI::App* cmd,
                            const std::vector<std::size_t>& data_dims) const {
        pltf::KeyValues kv;
        if (!config_path.empty())
            kv = pltf::parse_key_values_file(config_path);
        auto passed = [&](const char* name) {
            auto* opt = cmd->get_option_no_throw(name);
            return opt != nullptr && opt->count() > 0;
        };
        if (passed("--model")) kv["model"] = model;
        if (passed("--rank")) kv["rank"] = std::to_string(rank);
        if (passed("--a") || !kv.count("prior_a"))
            kv["prior_a"] = pltf::format_double(prior_a);
        if (passed("--b") || !kv.count("prior_b"))
            kv["prior_b"] = pltf::format_double(prior_b);
        if (passed("--dims")) {
            std::string d;
            for (const auto& t : dims) d += t + " ";
            kv["dims"] = d;
        } else if (!kv.count("dims") && !data_dims.empty()) {
            std::string d;
            for (auto t : data_dims) d += std::to_string(t) + " ";
            kv["dims"] = d;
        }
        if (passed("--core-dims")) {
            std::string d;
            for (auto t : core_dims) d += std::to_string(t) + " ";
            kv["core_dims"] = d;
        }
        if (passed("--custom-factors")) kv["custom_factors"] = custom_factors;
        return kv;
    }
};

json kv_to_json(const pltf::KeyValues& kv) {
    json j = json::object();
    for (const auto& [k, v] : kv) j[k] = v;
    return j;
}

pltf::NamedTensor load_tensor(const std::string& path,
                              const std::vector<pltf::IndexDef>& axes) {
    auto coo = pltf::read_coo_file(path);
    pltf::rename_indices(coo, axes);
    return coo.materialize();
}

struct LoadedObservation {
    pltf::PltfModel model;
    pltf::NamedTensor X;
    pltf::NamedTensor M;
};

LoadedObservation load_observation(const CLI::App* cmd,
                                   const ModelFlags& flags,
                                   const std::string& data_path,
                                   const std::string& mask_path,
                                   Manifest& manifest,
                                   const pltf::KeyValues& forced = {}) {
    auto data_coo = pltf::read_coo_file(data_path);
    std::vector<std::size_t> data_dims;
    for (const auto& ix : data_coo.indices)
        data_dims.push_back(ix.cardinality);

    auto kv = flags.resolve(cmd, data_dims);
    for (const auto& [k, v] : forced) kv[k] = v;
    manifest.config["model_config"] = kv_to_json(kv);
    pltf::PltfModel model = pltf::model_from_config(kv);
    pltf::require_valid(model);

    auto obs_defs = model.observed_indices();
    pltf::rename_indices(data_coo, obs_defs);
    pltf::NamedTensor x = data_coo.materialize();

    pltf::NamedTensor mask(obs_defs, 1.0, true);
    if (!mask_path.empty()) {
        mask = load_tensor(mask_path, obs_defs);
        manifest.add_input("mask", mask_path);
    }
    manifest.add_input("data", data_path);
    return {std::move(model), std::move(x), std::move(mask)};
}

// ---------------------------------------------------------------- generate

int run_generate(const std::vector<std::size_t>& dims, std::size_t rank,
                 double a, double b, std::uint64_t seed, bool poisson,
                 const std::string& out) {
    prepare_out_dir(out);
    Manifest manifest;
    manifest.command = "generate";
    manifest.path = out + "/manifest.json";
    manifest.seed = seed;
    manifest.config = {{"dims", dims},   {"rank", rank},
                       {"a", a},         {"b", b},
                       {"seed", seed},   {"poisson", poisson}};
    manifest.write();

    pltf::GeneratedData gen;
    {
        PhaseTimer t(manifest, "generate");
        gen = pltf::generate_cp(dims, rank, a, b, seed, poisson);
    }
    {
        PhaseTimer t(manifest, "write");
        pltf::write_coo_file(out + "/X.coo", gen.X);
        manifest.artifacts.push_back(out + "/X.coo");
        for (std::size_t f = 0; f < gen.factors.size(); ++f) {
            std::string p =
                out + "/Z" + std::to_string(f + 1) + "_true.coo";
            pltf::write_coo_file(p, gen.factors[f]);
            manifest.artifacts.push_back(p);
        }
    }
    manifest.write();
    double total = 0.0;
    for (double v : gen.X.values()) total += v;
    std::cout << "generate dims=";
    for (std::size_t i = 0; i < dims.size(); ++i)
        std::cout << (i ? "x" : "") << dims[i];
    std::cout << " rank=" << rank << " seed=" << seed << " mass=" << total
              << " out=" << out << "\n";
    return 0;
}

// --------------------------------------------------------------------- fit

int run_fit(const CLI::App* cmd, const ModelFlags& flags,
            const std::string& data_path, const std::string& mask_path,
            const std::string& method, const std::string& em_prior,
            std::size_t iters, double tol, std::uint64_t seed, bool write_l,
            const std::string& out) {
    prepare_out_dir(out);
    Manifest manifest;
    manifest.command = "fit";
    manifest.path = out + "/manifest.json";
    manifest.seed = seed;
    manifest.config = {{"method", method},   {"em_prior", em_prior},
                       {"iters", iters},     {"tol", tol},
                       {"seed", seed},       {"write_l", write_l}};

    LoadedObservation loaded;
    {
        PhaseTimer t(manifest, "load");
        loaded = load_observation(cmd, flags, data_path, mask_path, manifest);
    }
    manifest.write();

    pltf::FitConfig cfg;
    cfg.method = method == "vb" ? pltf::Method::VB : pltf::Method::EM;
    cfg.em_prior_mode = em_prior == "full" ? pltf::EmPriorMode::Full
                                           : pltf::EmPriorMode::Flat;
    cfg.max_iters = iters;
    cfg.tol = tol;
    cfg.seed = seed;

    pltf::Observation obs(loaded.model, loaded.X, loaded.M);
    pltf::FitResult res;
    {
        PhaseTimer t(manifest, "fit");
        res = pltf::fit(loaded.model, obs, cfg);
    }
    {
        PhaseTimer t(manifest, "write");
        auto paths =
            pltf::write_factor_files(out, loaded.model, res.states, write_l);
        manifest.artifacts = paths;
        const bool vb = cfg.method == pltf::Method::VB;
        pltf::write_trace_csv(out + "/trace.csv",
                              vb ? "bound" : "divergence",
                              vb ? res.bound_trace : res.divergence_trace);
        manifest.artifacts.push_back(out + "/trace.csv");
    }
    manifest.write();
    const double score = cfg.method == pltf::Method::VB
                             ? res.bound_trace.back()
                             : res.divergence_trace.back();
    std::cout << "fit method=" << method << " iters=" << res.iterations_run
              << " converged=" << (res.converged ? 1 : 0)
              << (cfg.method == pltf::Method::VB ? " bound=" : " divergence=")
              << pltf::format_double(score) << " out=" << out << "\n";
    return 0;
}

// ------------------------------------------------------------------ select

int run_select(const CLI::App* cmd, const ModelFlags& flags,
               const std::string& data_path, const std::string& mask_path,
               std::size_t rmin, std::size_t rmax, std::size_t restarts,
               std::size_t iters, std::uint64_t seed, std::size_t threads,
               const std::string& out) {
    prepare_out_dir(out);
    Manifest manifest;
    manifest.command = "select";
    manifest.path = out + "/manifest.json";
    manifest.seed = seed;
    manifest.config = {{"rmin", rmin},         {"rmax", rmax},
                       {"restarts", restarts}, {"iters", iters},
                       {"seed", seed},         {"threads", threads}};

    LoadedObservation loaded;
    {
        PhaseTimer t(manifest, "load");
        // the sweep builds its own CP model per order; the probe model only
        // shapes the observation and carries the priors
        loaded = load_observation(cmd, flags, data_path, mask_path, manifest,
                                  {{"model", "cp"}, {"rank", "1"}});
    }
    manifest.write();

    const auto obs_defs = loaded.model.observed_indices();
    const double a = loaded.model.factors[0].prior.a[0];
    const double b = loaded.model.factors[0].prior.b[0];
    pltf::ModelBuilder builder = [&](std::size_t r) {
        return pltf::build_cp(obs_defs[0].cardinality, obs_defs[1].cardinality,
                              obs_defs[2].cardinality, r, a, b);
    };

    pltf::FitConfig cfg;
    cfg.max_iters = iters;
    cfg.seed = seed;
    pltf::Observation obs(loaded.model, loaded.X, loaded.M);
    pltf::SweepReport report;
    {
        PhaseTimer t(manifest, "sweep");
        report = pltf::sweep_order(builder, obs, rmin, rmax, restarts, cfg,
                                   threads);
    }
    {
        PhaseTimer t(manifest, "write");
        pltf::write_sweep_csv(out + "/sweep.csv", report);
        manifest.artifacts.push_back(out + "/sweep.csv");
    }
    manifest.write();
    std::size_t oi = 0;
    while (report.orders[oi] != report.selected_order) ++oi;
    std::cout << "selected_order=" << report.selected_order << " best_bound="
              << pltf::format_double(report.best_bound[oi]) << " out=" << out
              << "\n";
    return 0;
}

// -------------------------------------------------------------- eval-links

int run_eval_links(const ModelFlags& flags, const std::string& data_path,
                   const std::vector<double>& missing,
                   const std::vector<std::string>& methods,
                   const std::vector<std::size_t>& ranks, std::size_t seeds,
                   std::size_t iters, std::uint64_t seed, std::size_t threads,
                   const std::string& out) {
    prepare_out_dir(out);
    Manifest manifest;
    manifest.command = "eval-links";
    manifest.path = out + "/manifest.json";
    manifest.seed = seed;
    manifest.config = {{"missing", missing}, {"methods", methods},
                       {"ranks", ranks},     {"seeds", seeds},
                       {"iters", iters},     {"seed", seed},
                       {"threads", threads}, {"a", flags.prior_a},
                       {"b", flags.prior_b}};
    manifest.add_input("data", data_path);
    manifest.write();

    auto data_coo = pltf::read_coo_file(data_path);
    if (data_coo.indices.size() != 3)
        throw pltf::ValidationError("eval-links expects a three-way tensor");
    std::vector<std::size_t> d;
    for (const auto& ix : data_coo.indices) d.push_back(ix.cardinality);

    for (const auto& m : methods)
        if (m != "em" && m != "vb")
            throw pltf::ValidationError("unknown method '" + m + "'");

    // UCLAF-style links: any positive entry is a present link
    auto probe = pltf::build_cp(d[0], d[1], d[2], 1, flags.prior_a,
                                flags.prior_b);
    auto obs_defs = probe.observed_indices();
    pltf::rename_indices(data_coo, obs_defs);
    const pltf::NamedTensor xbin = pltf::binarize(data_coo.materialize());

    struct Row {
        double fraction;
        std::string method;
        std::size_t rank;
        std::size_t seed_idx;
        double auc = -1.0; // negative marks a degenerate single-class split
    };
    std::vector<Row> rows;
    for (double rawf : missing) {
        const double f = rawf >= 1.0 ? rawf / 100.0 : rawf;
        if (!(f >= 0.0) || f >= 1.0)
            throw pltf::ValidationError("missing fraction " +
                                        std::to_string(rawf) +
                                        " outside [0, 100)");
        for (const auto& m : methods)
            for (std::size_t r : ranks)
                for (std::size_t s = 0; s < seeds; ++s)
                    rows.push_back({f, m, r, s});
    }

    auto run_row = [&](Row row) -> Row {
        const std::uint64_t split_seed =
            pltf::mix_seed(seed, std::uint64_t(row.fraction * 1e6),
                           row.seed_idx);
        auto split = pltf::make_holdout(obs_defs, row.fraction, split_seed);
        auto model = pltf::build_cp(d[0], d[1], d[2], row.rank, flags.prior_a,
                                    flags.prior_b);
        pltf::FitConfig cfg;
        cfg.method = row.method == "vb" ? pltf::Method::VB : pltf::Method::EM;
        cfg.max_iters = iters;
        cfg.seed = pltf::mix_seed(split_seed, row.method == "vb" ? 1 : 2,
                                  row.rank);
        try {
            row.auc = pltf::link_prediction_run(model, xbin, split, cfg);
        } catch (const pltf::ValidationError&) {
            row.auc = -1.0; // single-class holdout: reported, not fatal
        }
        return row;
    };

    {
        PhaseTimer t(manifest, "grid");
        if (threads <= 1) {
            for (auto& row : rows) row = run_row(row);
        } else {
            std::size_t next = 0;
            while (next < rows.size()) {
                std::vector<std::future<Row>> batch;
                std::size_t base = next;
                for (std::size_t t2 = 0; t2 < threads && next < rows.size();
                     ++t2, ++next)
                    batch.push_back(
                        std::async(std::launch::async, run_row, rows[next]));
                for (std::size_t t2 = 0; t2 < batch.size(); ++t2)
                    rows[base + t2] = batch[t2].get();
            }
        }
    }
    {
        PhaseTimer t(manifest, "write");
        std::ofstream os(out + "/auc.csv");
        if (!os) throw pltf::IoError("cannot open for writing: " + out +
                                     "/auc.csv");
        os << "run,seed,missing_fraction,method,rank,auc\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            os << i << ',' << rows[i].seed_idx << ','
               << pltf::format_double(rows[i].fraction) << ','
               << rows[i].method << ',' << rows[i].rank << ',';
            if (rows[i].auc < 0.0)
                os << "nan";
            else
                os << pltf::format_double(rows[i].auc);
            os << '\n';
        }
        manifest.artifacts.push_back(out + "/auc.csv");
    }
    manifest.write();
    std::cout << "eval-links rows=" << rows.size() << " out=" << out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic latent tensor factorization with a KL/Poisson "
                 "observation model: multiplicative EM and variational Bayes, "
                 "model-order selection, link-prediction evaluation"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Draw a synthetic CP tensor");
    std::vector<std::size_t> g_dims;
    std::size_t g_rank = 1;
    double g_a = 0.5, g_b = 10.0;
    std::uint64_t g_seed = 0;
    bool g_poisson = false;
    std::string g_out = "gen_out";
    gen->add_option("--dims", g_dims, "Observed dimensions")->required();
    gen->add_option("--rank", g_rank, "True latent cardinality")->required();
    gen->add_option("--a", g_a, "Gamma shape for the true factors");
    gen->add_option("--b", g_b, "Gamma mean for the true factors");
    gen->add_option("--seed", g_seed, "RNG seed");
    gen->add_flag("--poisson", g_poisson,
                  "Sample counts around the intensity instead of copying it");
    gen->add_option("--out", g_out, "Output directory");

    // fit
    auto* fitc = app.add_subcommand("fit", "Fit one model to one tensor");
    ModelFlags fit_flags;
    std::string f_data, f_mask, f_method = "vb", f_em_prior = "flat";
    std::size_t f_iters = 2000;
    double f_tol = 0.0;
    std::uint64_t f_seed = 0;
    bool f_write_l = false;
    std::string f_out = "fit_out";
    fitc->add_option("--data", f_data, "COO tensor file")->required();
    fitc->add_option("--mask", f_mask,
                     "COO 0/1 mask file (defaults to fully observed)");
    fit_flags.attach(fitc, true);
    fitc->add_option("--method", f_method, "vb | em")
        ->check(CLI::IsMember({"vb", "em"}));
    fitc->add_option("--em-prior", f_em_prior,
                     "EM update form: flat (multiplicative) or full (with "
                     "prior terms)")
        ->check(CLI::IsMember({"flat", "full"}));
    fitc->add_option("--iters", f_iters, "Iteration count");
    fitc->add_option("--tol", f_tol,
                     "Relative trace-change stop (0 runs all iterations)");
    fitc->add_option("--seed", f_seed, "RNG seed");
    fitc->add_flag("--write-l", f_write_l,
                   "Also write the geometric-mean factor views");
    fitc->add_option("--out", f_out, "Output directory");

    // select
    auto* sel = app.add_subcommand("select",
                                   "Sweep CP model orders and pick the best "
                                   "variational bound");
    ModelFlags sel_flags;
    std::string s_data, s_mask;
    std::size_t s_rmin = 1, s_rmax = 10, s_restarts = 10, s_iters = 2000;
    std::uint64_t s_seed = 0;
    std::size_t s_threads = 1;
    std::string s_out = "select_out";
    sel->add_option("--data", s_data, "COO tensor file")->required();
    sel->add_option("--mask", s_mask, "COO 0/1 mask file");
    sel_flags.attach(sel, false);
    sel->add_option("--rmin", s_rmin, "Smallest order")->required();
    sel->add_option("--rmax", s_rmax, "Largest order")->required();
    sel->add_option("--restarts", s_restarts, "Random restarts per order");
    sel->add_option("--iters", s_iters, "Iterations per fit");
    sel->add_option("--seed", s_seed, "Base RNG seed");
    sel->add_option("--threads", s_threads, "Parallel fits");
    sel->add_option("--out", s_out, "Output directory");

    // eval-links
    auto* ev = app.add_subcommand("eval-links",
                                  "Link-prediction AUC over a (missing x "
                                  "method x rank x seed) grid");
    ModelFlags ev_flags;
    std::string e_data;
    std::vector<double> e_missing;
    std::vector<std::string> e_methods{"em", "vb"};
    std::vector<std::size_t> e_ranks{2};
    std::size_t e_seeds = 10, e_iters = 500;
    std::uint64_t e_seed = 0;
    std::size_t e_threads = 1;
    std::string e_out = "links_out";
    ev->add_option("--data", e_data, "COO tensor file (binarized at > 0)")
        ->required();
    ev->add_option("--missing", e_missing,
                   "Missing percentages (40 60 80) or fractions")
        ->required();
    ev->add_option("--methods", e_methods, "Subset of {em, vb}");
    ev->add_option("--ranks", e_ranks, "Model orders to evaluate");
    ev->add_option("--seeds", e_seeds, "Number of holdout/restart seeds");
    ev->add_option("--iters", e_iters, "Iterations per fit");
    ev->add_option("--a", ev_flags.prior_a, "Gamma prior shape")
        ->check(CLI::PositiveNumber);
    ev->add_option("--b", ev_flags.prior_b, "Gamma prior mean")
        ->check(CLI::PositiveNumber);
    ev->add_option("--seed", e_seed, "Base RNG seed");
    ev->add_option("--threads", e_threads, "Parallel grid cells");
    ev->add_option("--out", e_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed())
            return run_generate(g_dims, g_rank, g_a, g_b, g_seed, g_poisson,
                                g_out);
        if (fitc->parsed())
            return run_fit(fitc, fit_flags, f_data, f_mask, f_method,
                           f_em_prior, f_iters, f_tol, f_seed, f_write_l,
                           f_out);
        if (sel->parsed())
            return run_select(sel, sel_flags, s_data, s_mask, s_rmin, s_rmax,
                              s_restarts, s_iters, s_seed, s_threads, s_out);
        if (ev->parsed())
            return run_eval_links(ev_flags, e_data, e_missing, e_methods,
                                  e_ranks, e_seeds, e_iters, e_seed, e_threads,
                                  e_out);
    } catch (const pltf::SingularModelError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const pltf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
