#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "pltf/tensor.hpp"

namespace pltf {

/// Sparse coordinate-list carrier for tensor file I/O.
///
/// Text format: first line `dims <n1> <n2> ... <nk>`, then one line per
/// entry `<i1> <i2> ... <ik> <value>` with 0-based indices. Lines starting
/// with `#` are comments. Cells not listed materialize as 0.
struct CooTable {
    struct Entry {
        std::vector<std::size_t> cell;
        double value = 0.0;
    };

    std::vector<IndexDef> indices;
    std::vector<Entry> entries;

    NamedTensor materialize() const {
        NamedTensor t(indices, 0.0);
        for (const auto& e : entries) t[t.offset(e.cell)] = e.value;
        return t;
    }
};

inline CooTable coo_from_tensor(const NamedTensor& t) {
    CooTable coo;
    coo.indices = t.indices();
    for (std::size_t flat = 0; flat < t.size(); ++flat)
        if (t[flat] != 0.0) coo.entries.push_back({t.unravel(flat), t[flat]});
    return coo;
}

inline void write_coo(std::ostream& os, const CooTable& coo) {
    os << "dims";
    for (const auto& ix : coo.indices) os << ' ' << ix.cardinality;
    os << '\n';
    char buf[64];
    for (const auto& e : coo.entries) {
        std::string line;
        for (std::size_t v : e.cell) {
            line += std::to_string(v);
            line += ' ';
        }
        std::snprintf(buf, sizeof buf, "%.17g", e.value);
        os << line << buf << '\n';
    }
}

inline void write_coo_file(const std::string& path, const CooTable& coo) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_coo(os, coo);
    if (!os) throw IoError("write failed: " + path);
}

inline void write_coo_file(const std::string& path, const NamedTensor& t) {
    write_coo_file(path, coo_from_tensor(t));
}

/// Parse COO text. Index names are assigned d0, d1, ... and are normally
/// rebound by the caller (rename_indices) to match a model's index set.
inline CooTable read_coo(std::istream& is, const std::string& origin = "<stream>") {
    CooTable coo;
    std::string line;
    std::size_t lineno = 0;
    bool have_dims = false;
    std::unordered_set<std::size_t> seen;
    std::vector<std::size_t> strides;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue; // blank
        auto fail = [&](const std::string& what) {
            throw IoError(origin + ":" + std::to_string(lineno) + ": " + what);
        };
        if (!have_dims) {
            if (first != "dims") fail("expected 'dims' header line");
            std::size_t card = 0;
            std::size_t axis = 0;
            while (ls >> card) {
                if (card == 0) fail("zero cardinality in dims");
                coo.indices.push_back({"d" + std::to_string(axis++), card});
            }
            if (coo.indices.empty()) fail("dims line lists no cardinalities");
            strides.assign(coo.indices.size(), 1);
            for (std::size_t a = coo.indices.size(); a-- > 1;)
                strides[a - 1] = strides[a] * coo.indices[a].cardinality;
            have_dims = true;
            continue;
        }
        CooTable::Entry e;
        e.cell.resize(coo.indices.size());
        std::istringstream es(line);
        std::size_t flat = 0;
        for (std::size_t a = 0; a < coo.indices.size(); ++a) {
            long long v = -1;
            if (!(es >> v)) fail("too few fields in entry");
            if (v < 0 ||
                std::size_t(v) >= coo.indices[a].cardinality)
                fail("index " + std::to_string(v) + " out of range for axis " +
                     std::to_string(a));
            e.cell[a] = std::size_t(v);
            flat += e.cell[a] * strides[a];
        }
        if (!(es >> e.value)) fail("missing value field");
        std::string extra;
        if (es >> extra) fail("trailing garbage '" + extra + "'");
        if (!seen.insert(flat).second)
            fail("duplicate cell" + std::string(" in entry list"));
        coo.entries.push_back(std::move(e));
    }
    if (!have_dims) throw IoError(origin + ": empty file, no dims header");
    return coo;
}

inline CooTable read_coo_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    return read_coo(is, path);
}

/// Rebind the axis names of a freshly parsed table (cardinalities must match).
inline void rename_indices(CooTable& coo, const std::vector<IndexDef>& names) {
    if (names.size() != coo.indices.size())
        throw ValidationError("rename_indices: expected " +
                              std::to_string(names.size()) + " axes, file has " +
                              std::to_string(coo.indices.size()));
    for (std::size_t a = 0; a < names.size(); ++a) {
        if (names[a].cardinality != coo.indices[a].cardinality)
            throw ValidationError(
                "axis " + std::to_string(a) + " ('" + names[a].name +
                "') expects cardinality " +
                std::to_string(names[a].cardinality) + ", file has " +
                std::to_string(coo.indices[a].cardinality));
        coo.indices[a].name = names[a].name;
    }
}

} // namespace pltf
