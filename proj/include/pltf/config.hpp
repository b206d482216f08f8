#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pltf/model.hpp"

namespace pltf {

/// Flat `key = value` text, `#` comments, later keys override earlier ones.
/// Recognized keys: model (cp|tucker|custom), dims, rank, core_dims,
/// prior_a, prior_b, custom_factors.
using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

} // namespace detail

inline KeyValues parse_key_values(std::istream& is,
                                  const std::string& origin = "<config>") {
    static const char* known[] = {"model",   "dims",    "rank",
                                  "core_dims", "prior_a", "prior_b",
                                  "custom_factors"};
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw IoError(origin + ":" + std::to_string(lineno) +
                          ": expected 'key = value'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok)
            throw IoError(origin + ":" + std::to_string(lineno) +
                          ": unknown key '" + key + "'");
        kv[key] = value;
    }
    return kv;
}

inline KeyValues parse_key_values_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    return parse_key_values(is, path);
}

namespace detail {

inline std::size_t parse_card(const std::string& tok, const std::string& ctx) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(tok, &pos);
    } catch (...) {
        throw ValidationError(ctx + ": '" + tok + "' is not a cardinality");
    }
    if (pos != tok.size() || v == 0)
        throw ValidationError(ctx + ": '" + tok + "' is not a cardinality");
    return static_cast<std::size_t>(v);
}

// "name:card" or a bare cardinality (auto-named d<position>)
inline IndexDef parse_dim_token(const std::string& tok, std::size_t position,
                                const std::string& ctx) {
    auto colon = tok.find(':');
    if (colon == std::string::npos)
        return {"d" + std::to_string(position), parse_card(tok, ctx)};
    std::string name = trim(tok.substr(0, colon));
    if (name.empty()) throw ValidationError(ctx + ": empty index name");
    return {name, parse_card(trim(tok.substr(colon + 1)), ctx)};
}

} // namespace detail

/// Build the declared model. Custom structures list their factors as
/// semicolon-separated index lists; a latent index fixes its cardinality
/// with name:card at first mention, e.g.
///   model = custom
///   dims = i:30 j:30 k:30
///   custom_factors = i, r:5 ; j, r ; k, r
inline PltfModel model_from_config(const KeyValues& kv) {
    auto get = [&](const char* key, const std::string& fallback) {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    };
    const std::string kind = get("model", "cp");
    const double prior_a = std::stod(get("prior_a", "0.5"));
    const double prior_b = std::stod(get("prior_b", "10"));
    if (!(prior_a > 0.0) || !(prior_b > 0.0))
        throw ValidationError("prior_a and prior_b must be positive");

    auto dims_tokens = [&]() {
        std::istringstream ds(get("dims", ""));
        std::vector<std::string> toks;
        std::string t;
        while (ds >> t) toks.push_back(t);
        if (toks.empty()) throw ValidationError("config: 'dims' is required");
        return toks;
    };

    if (kind == "cp" || kind == "tucker") {
        auto toks = dims_tokens();
        if (toks.size() != 3)
            throw ValidationError("config: " + kind +
                                  " models take exactly three dims");
        std::size_t d[3];
        for (int a = 0; a < 3; ++a)
            d[a] = detail::parse_card(toks[a], "dims");
        if (kind == "cp") {
            auto it = kv.find("rank");
            if (it == kv.end())
                throw ValidationError("config: cp models require 'rank'");
            return build_cp(d[0], d[1], d[2],
                            detail::parse_card(it->second, "rank"), prior_a,
                            prior_b);
        }
        auto it = kv.find("core_dims");
        if (it == kv.end())
            throw ValidationError("config: tucker models require 'core_dims'");
        std::istringstream cs(it->second);
        std::vector<std::size_t> core;
        std::string t;
        while (cs >> t) core.push_back(detail::parse_card(t, "core_dims"));
        if (core.size() != 3)
            throw ValidationError("config: core_dims takes three entries");
        return build_tucker(d[0], d[1], d[2], core[0], core[1], core[2],
                            prior_a, prior_b);
    }

    if (kind != "custom")
        throw ValidationError("config: model must be cp, tucker, or custom");

    PltfModel m;
    auto toks = dims_tokens();
    for (std::size_t a = 0; a < toks.size(); ++a) {
        IndexDef def = detail::parse_dim_token(toks[a], a, "dims");
        m.indices.push_back(def);
        m.observed.push_back(def.name);
    }
    auto spec = kv.find("custom_factors");
    if (spec == kv.end())
        throw ValidationError("config: custom models require 'custom_factors'");
    auto card_of = [&](const std::string& name) -> std::size_t {
        for (const auto& ix : m.indices)
            if (ix.name == name) return ix.cardinality;
        return 0;
    };
    std::size_t fnum = 0;
    for (const auto& flist : detail::split(spec->second, ';')) {
        ++fnum;
        std::vector<IndexDef> shape;
        for (const auto& tok : detail::split(flist, ',')) {
            if (tok.empty())
                throw ValidationError("config: empty index in factor " +
                                      std::to_string(fnum));
            auto colon = tok.find(':');
            std::string name =
                colon == std::string::npos ? tok
                                           : detail::trim(tok.substr(0, colon));
            std::size_t card = card_of(name);
            if (colon != std::string::npos) {
                std::size_t stated = detail::parse_card(
                    detail::trim(tok.substr(colon + 1)), "custom_factors");
                if (card == 0) {
                    m.indices.push_back({name, stated});
                    card = stated;
                } else if (card != stated) {
                    throw ValidationError("config: index '" + name +
                                          "' redeclared with cardinality " +
                                          std::to_string(stated));
                }
            }
            if (card == 0)
                throw ValidationError(
                    "config: latent index '" + name +
                    "' needs a cardinality (name:card) at first mention");
            shape.push_back({name, card});
        }
        m.factors.push_back({"Z" + std::to_string(fnum), shape,
                             GammaPrior::broadcast(shape, prior_a, prior_b),
                             false, std::nullopt});
    }
    return m;
}

} // namespace pltf
