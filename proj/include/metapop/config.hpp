/*
   Copyright 2026 The metapop Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "metapop/model.hpp"
#include "metapop/models.hpp"

namespace metapop {

using Json = nlohmann::json;

/// Malformed or inadmissible model configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& builtin_models() {
    static const std::vector<std::string> ids = {"metz-gyllenberg-1", "metz-gyllenberg-2", "kretzschmar"};
    return ids;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t h) {
    std::ostringstream o;
    o << std::hex;
    o.width(16);
    o.fill('0');
    o << h;
    return o.str();
}

using ModelParams = std::variant<MG1Params, MG2Params, KretzschmarParams>;

struct LoadedModel {
    std::string family;
    ModelParams params;
    Json config;     ///< configuration as given (built-ins: {"model": id})
    Json canonical;  ///< fully expanded parameters; hashed
    std::uint64_t hash = 0;
    ModelDefinition model;

    int cap() const { return model.types().cap(); }
    std::string hash_hex() const { return hex64(hash); }
};

namespace detail {

struct ConfigReader {
    std::string where;  // file name for messages

    [[noreturn]] void fail(const std::string& path, const std::string& what) const {
        throw ConfigError(where + ": " + (path.empty() ? "/" : path) + ": " + what);
    }

    void allow_keys(const Json& j, const std::string& path, const std::set<std::string>& keys) const {
        if (!j.is_object()) fail(path, "expected an object");
        for (const auto& [k, v] : j.items())
            if (!keys.count(k)) fail(path + "/" + k, "unknown field");
    }

    double number(const Json& j, const std::string& path, double lo = 0.0,
                  double hi = std::numeric_limits<double>::infinity()) const {
        if (!j.is_number()) fail(path, "expected a number");
        const double v = j.get<double>();
        if (!std::isfinite(v) || v < lo || v > hi) {
            std::ostringstream o;
            o << "value " << v << " outside [" << lo << ", " << hi << "]";
            fail(path, o.str());
        }
        return v;
    }

    int integer(const Json& j, const std::string& path, int lo) const {
        if (!j.is_number_integer()) fail(path, "expected an integer");
        const int v = j.get<int>();
        if (v < lo) fail(path, "must be at least " + std::to_string(lo));
        return v;
    }

    /// Per-occupancy rate table i = 0..cap: a number (constant), an array of
    /// cap + 1 entries, or {"form": "constant", "value"} /
    /// {"form": "linear-decline", "scale", "K"} for scale (1 - i/K)_+.
    std::vector<double> table(const Json& j, const std::string& path, int cap, double hi) const {
        std::vector<double> out(static_cast<std::size_t>(cap) + 1);
        if (j.is_number()) {
            std::fill(out.begin(), out.end(), number(j, path, 0.0, hi));
        } else if (j.is_array()) {
            if (j.size() != out.size())
                fail(path, "expected " + std::to_string(out.size()) + " entries (cap + 1), got " + std::to_string(j.size()));
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = number(j[i], path + "/" + std::to_string(i), 0.0, hi);
        } else if (j.is_object()) {
            if (!j.contains("form") || !j["form"].is_string()) fail(path + "/form", "expected a form name");
            const auto form = j["form"].get<std::string>();
            if (form == "constant") {
                allow_keys(j, path, {"form", "value"});
                if (!j.contains("value")) fail(path + "/value", "missing");
                std::fill(out.begin(), out.end(), number(j["value"], path + "/value", 0.0, hi));
            } else if (form == "linear-decline") {
                allow_keys(j, path, {"form", "scale", "K"});
                if (!j.contains("scale") || !j.contains("K")) fail(path, "linear-decline needs scale and K");
                const double a = number(j["scale"], path + "/scale", 0.0, hi);
                const double K = number(j["K"], path + "/K", 1e-12);
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * std::max(0.0, 1.0 - static_cast<double>(i) / K);
            } else {
                fail(path + "/form", "unknown form '" + form + "' (constant, linear-decline)");
            }
        } else {
            fail(path, "expected a number, an array or a form object");
        }
        return out;
    }
};

inline Json mg1_json(const MG1Params& p) {
    return {{"lambda", p.lambda}, {"mu", p.mu}, {"gamma", p.gamma}, {"d", p.disp}, {"s", p.settle},
            {"alpha", p.alpha},   {"mu_D", p.mu_D}, {"reserve", p.reserve}};
}

inline Json mg2_variety_json(const MG2Params& p, int v) {
    return {{"lambda", p.lambda[v]}, {"mu", p.mu[v]}, {"d", p.disp[v]}, {"s", p.settle[v]},
            {"mu_D", p.mu_D[v]},     {"reserve", p.reserve[v]}};
}

inline Json kretzschmar_json(const KretzschmarParams& p) {
    return {{"beta", p.beta}, {"theta", p.theta}, {"kappa", p.kappa}, {"alpha", p.alpha},
            {"mu", p.mu},     {"lambda", p.lambda}, {"c", p.c},       {"reserve", p.reserve}};
}

inline LoadedModel build(const Json& config, const std::string& where, std::optional<int> cap_override) {
    ConfigReader rd{where};
    rd.allow_keys(config, "", {"model", "cap", "params", "name"});
    if (!config.contains("model") || !config["model"].is_string()) rd.fail("/model", "expected one of the built-in families");
    LoadedModel out;
    out.family = config["model"].get<std::string>();
    out.config = config;
    const Json params = config.contains("params") ? config["params"] : Json::object();
    auto cap_or = [&](int dflt) {
        if (cap_override) return *cap_override;
        return config.contains("cap") ? rd.integer(config["cap"], "/cap", 1) : dflt;
    };

    if (out.family == "metz-gyllenberg-1") {
        rd.allow_keys(params, "/params", {"lambda", "mu", "gamma", "d", "s", "alpha", "mu_D", "reserve"});
        const int cap = cap_or(8);
        MG1Params p = MG1Params::defaults(cap);
        auto tab = [&](const char* key, std::vector<double>& dst, double hi) {
            if (params.contains(key)) dst = rd.table(params[key], std::string("/params/") + key, cap, hi);
        };
        const double inf = std::numeric_limits<double>::infinity();
        tab("lambda", p.lambda, inf);
        tab("mu", p.mu, inf);
        tab("gamma", p.gamma, inf);
        tab("d", p.disp, 1.0);
        tab("s", p.settle, 1.0);
        if (params.contains("alpha")) p.alpha = rd.number(params["alpha"], "/params/alpha");
        if (params.contains("mu_D")) p.mu_D = rd.number(params["mu_D"], "/params/mu_D");
        if (params.contains("reserve")) p.reserve = rd.number(params["reserve"], "/params/reserve", 1e-12);
        out.params = p;
        out.canonical = {{"model", out.family}, {"cap", cap}, {"params", mg1_json(p)}};
        out.model = make_mg1(p);
    } else if (out.family == "metz-gyllenberg-2") {
        rd.allow_keys(params, "/params", {"resident", "invader", "gamma", "alpha"});
        const int cap = cap_or(6);
        MG2Params p = mg2_defaults(cap);
        const double inf = std::numeric_limits<double>::infinity();
        for (int v = 0; v < 2; ++v) {
            const char* who = v == 0 ? "resident" : "invader";
            if (!params.contains(who)) continue;
            const Json& q = params[who];
            const std::string base = std::string("/params/") + who;
            rd.allow_keys(q, base, {"lambda", "mu", "d", "s", "mu_D", "reserve"});
            if (q.contains("lambda")) p.lambda[v] = rd.table(q["lambda"], base + "/lambda", cap, inf);
            if (q.contains("mu")) p.mu[v] = rd.table(q["mu"], base + "/mu", cap, inf);
            if (q.contains("d")) p.disp[v] = rd.table(q["d"], base + "/d", cap, 1.0);
            if (q.contains("s")) p.settle[v] = rd.table(q["s"], base + "/s", cap, 1.0);
            if (q.contains("mu_D")) p.mu_D[v] = rd.number(q["mu_D"], base + "/mu_D");
            if (q.contains("reserve")) p.reserve[v] = rd.number(q["reserve"], base + "/reserve", 1e-12);
        }
        if (params.contains("gamma")) p.gamma = rd.table(params["gamma"], "/params/gamma", cap, inf);
        if (params.contains("alpha")) p.alpha = rd.number(params["alpha"], "/params/alpha");
        out.params = p;
        out.canonical = {{"model", out.family},
                         {"cap", cap},
                         {"params",
                          {{"resident", mg2_variety_json(p, 0)},
                           {"invader", mg2_variety_json(p, 1)},
                           {"gamma", p.gamma},
                           {"alpha", p.alpha}}}};
        out.model = make_mg2(p);
    } else if (out.family == "kretzschmar") {
        rd.allow_keys(params, "/params", {"beta", "theta", "kappa", "alpha", "mu", "lambda", "c", "reserve"});
        KretzschmarParams p;
        p.cap = cap_or(20);
        auto num = [&](const char* key, double& dst, double lo, double hi) {
            if (params.contains(key)) dst = rd.number(params[key], std::string("/params/") + key, lo, hi);
        };
        const double inf = std::numeric_limits<double>::infinity();
        num("beta", p.beta, 0.0, inf);
        num("theta", p.theta, 0.0, 1.0);
        num("kappa", p.kappa, 0.0, inf);
        num("alpha", p.alpha, 0.0, inf);
        num("mu", p.mu, 0.0, inf);
        num("lambda", p.lambda, 0.0, inf);
        num("c", p.c, 1e-12, inf);
        num("reserve", p.reserve, 1e-12, inf);
        out.params = p;
        out.canonical = {{"model", out.family}, {"cap", p.cap}, {"params", kretzschmar_json(p)}};
        out.model = make_kretzschmar(p);
    } else {
        rd.fail("/model", "unknown model '" + out.family + "'");
    }
    if (config.contains("name")) {
        if (!config["name"].is_string()) rd.fail("/name", "expected a string");
        out.model.name = config["name"].get<std::string>();
    }
    const auto report = validate_model(out.model);
    if (!report.ok()) throw ConfigError(where + ": model rejected: " + report.summary());
    out.hash = fnv1a(out.canonical.dump());
    return out;
}

inline std::size_t line_of(const std::string& text, std::size_t byte) {
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + std::min(byte, text.size()), '\n'));
}

}  // namespace detail

/// Parses a model configuration given as JSON text.
inline LoadedModel load_model_json(const std::string& text, const std::string& where = "<config>",
                                   std::optional<int> cap = std::nullopt) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(where + ":" + std::to_string(detail::line_of(text, e.byte)) + ": " + e.what());
    }
    return detail::build(j, where, cap);
}

/// A built-in model id or the path of a JSON configuration file.
inline LoadedModel load_model(const std::string& source, std::optional<int> cap = std::nullopt) {
    for (const auto& id : builtin_models())
        if (source == id) return detail::build(Json{{"model", id}}, id, cap);
    std::ifstream in(source);
    if (!in) throw ConfigError(source + ": not a built-in model and not a readable file");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_model_json(ss.str(), source, cap);
}

/// Same configuration at another cap (rate tables given as arrays cannot be
/// re-capped and raise ConfigError).
inline LoadedModel with_cap(const LoadedModel& m, int cap) {
    return detail::build(m.config, m.config.value("name", m.family) + " at cap " + std::to_string(cap), cap);
}

}  // namespace metapop
