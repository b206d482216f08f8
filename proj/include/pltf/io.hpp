#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "pltf/coo.hpp"
#include "pltf/eval.hpp"
#include "pltf/inference.hpp"

namespace pltf {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Trace CSV: header `iter,<name>`, one row per iteration, 1-based.
inline void write_trace_csv(const std::string& path, const std::string& name,
                            const std::vector<double>& values) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "iter," << name << '\n';
    for (std::size_t i = 0; i < values.size(); ++i)
        os << (i + 1) << ',' << format_double(values[i]) << '\n';
    if (!os) throw IoError("write failed: " + path);
}

/// One COO file per factor: <dir>/<factor>_E.coo holding the mean view,
/// plus <factor>_L.coo when write_l is set.
inline std::vector<std::string> write_factor_files(
    const std::string& dir, const PltfModel& model,
    const std::vector<FactorState>& states, bool write_l) {
    std::vector<std::string> paths;
    for (std::size_t a = 0; a < states.size(); ++a) {
        std::string base = dir + "/" + model.factors[a].name;
        write_coo_file(base + "_E.coo", states[a].E);
        paths.push_back(base + "_E.coo");
        if (write_l) {
            write_coo_file(base + "_L.coo", states[a].L);
            paths.push_back(base + "_L.coo");
        }
    }
    return paths;
}

/// Sweep CSV: `order,restart,bound` rows followed by a summary comment.
inline void write_sweep_csv(const std::string& path,
                            const SweepReport& report) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "order,restart,bound\n";
    for (std::size_t oi = 0; oi < report.orders.size(); ++oi)
        for (std::size_t s = 0; s < report.per_order[oi].size(); ++s)
            os << report.orders[oi] << ',' << s << ','
               << format_double(report.per_order[oi][s].score) << '\n';
    os << "# selected_order=" << report.selected_order << '\n';
    if (!os) throw IoError("write failed: " + path);
}

/// FNV-1a content digest used in run manifests.
inline std::string file_digest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
        for (std::streamsize i = 0; i < is.gcount(); ++i)
            h = (h ^ static_cast<unsigned char>(buf[i])) *
                0x100000001b3ULL;
        if (!is) break;
    }
    char out[32];
    std::snprintf(out, sizeof out, "fnv1a:%016llx",
                  static_cast<unsigned long long>(h));
    return out;
}

} // namespace pltf
