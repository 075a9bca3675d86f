#pragma once

#include "sdlab/gram_models.hpp"
#include "sdlab/noise_theory.hpp"
#include "sdlab/oracle.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace sdlab {

using json = nlohmann::json;

struct ExperimentConfig {
    GramModel gram;
    std::string corruption_kind = "symmetric";
    double eta = 0.0;
    std::string corruption_matrix_path;
    double lambda = 3.125e-4;
    int rounds = 3;
    std::vector<std::string> modes = {"closed_form", "pll", "theory"};
    std::vector<double> sweep_eta;
    std::vector<int> sweep_n;
    std::vector<std::pair<double, double>> schedule;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    SolverConfig solver;
    double tau = 1.0;
    std::string features_path;
    std::string superclass_path;

    bool has_mode(const std::string& m) const { return std::find(modes.begin(), modes.end(), m) != modes.end(); }
};

inline json to_json(const ExperimentConfig& c) {
    json g = {{"case", case_name(c.gram.kind)},
              {"K", c.gram.K},
              {"n", c.gram.n},
              {"c", c.gram.c},
              {"d", c.gram.d},
              {"e", c.gram.e},
              {"omega", c.gram.omega},
              {"superclasses", c.gram.superclasses ? c.gram.superclasses->assignments : std::vector<int>{}},
              {"perturbation", c.gram.perturbation}};
    json sched = json::array();
    for (auto [cc, dd] : c.schedule) sched.push_back({cc, dd});
    return json{{"gram", g},
                {"corruption", {{"kind", c.corruption_kind}, {"eta", c.eta}, {"matrix_path", c.corruption_matrix_path}}},
                {"lambda", c.lambda},
                {"rounds", c.rounds},
                {"modes", c.modes},
                {"sweep", {{"eta", c.sweep_eta}, {"n", c.sweep_n}}},
                {"schedule", sched},
                {"seed", c.seed},
                {"output_dir", c.output_dir},
                {"solver",
                 {{"learning_rate", c.solver.learning_rate},
                  {"max_iterations", c.solver.max_iterations},
                  {"tolerance", c.solver.tolerance},
                  {"method", method_name(c.solver.method)},
                  {"warm_start", c.solver.warm_start}}},
                {"tau", c.tau},
                {"ingest", {{"features_path", c.features_path}, {"superclass_path", c.superclass_path}}}};
}

namespace detail {

// every leaf of `patch` must exist in `schema`
inline void check_keys(const json& patch, const json& schema, const std::string& prefix) {
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!schema.contains(it.key())) throw ValidationError("unknown config key '" + key + "'");
        if (it->is_object() && schema[it.key()].is_object()) check_keys(*it, schema[it.key()], key);
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

} // namespace detail

inline ExperimentConfig from_json(const json& j) {
    try {
        ExperimentConfig c;
        detail::check_keys(j, to_json(c), "");
        if (j.contains("gram")) {
            const json& g = j["gram"];
            std::string cs = case_name(c.gram.kind);
            detail::read(g, "case", cs);
            c.gram.kind = parse_case(cs);
            detail::read(g, "K", c.gram.K);
            detail::read(g, "n", c.gram.n);
            detail::read(g, "c", c.gram.c);
            detail::read(g, "d", c.gram.d);
            detail::read(g, "e", c.gram.e);
            detail::read(g, "omega", c.gram.omega);
            detail::read(g, "perturbation", c.gram.perturbation);
            std::vector<int> sc;
            detail::read(g, "superclasses", sc);
            if (!sc.empty()) c.gram.superclasses = SuperclassMap(sc);
        }
        if (j.contains("corruption")) {
            const json& k = j["corruption"];
            detail::read(k, "kind", c.corruption_kind);
            detail::read(k, "eta", c.eta);
            detail::read(k, "matrix_path", c.corruption_matrix_path);
        }
        detail::read(j, "lambda", c.lambda);
        detail::read(j, "rounds", c.rounds);
        detail::read(j, "modes", c.modes);
        if (j.contains("sweep")) {
            detail::read(j["sweep"], "eta", c.sweep_eta);
            detail::read(j["sweep"], "n", c.sweep_n);
        }
        if (j.contains("schedule"))
            for (const auto& e : j["schedule"]) {
                if (!e.is_array() || e.size() != 2) throw ValidationError("schedule entries must be [c, d] pairs");
                c.schedule.emplace_back(e[0].get<double>(), e[1].get<double>());
            }
        detail::read(j, "seed", c.seed);
        detail::read(j, "output_dir", c.output_dir);
        if (j.contains("solver")) {
            const json& s = j["solver"];
            detail::read(s, "learning_rate", c.solver.learning_rate);
            detail::read(s, "max_iterations", c.solver.max_iterations);
            detail::read(s, "tolerance", c.solver.tolerance);
            detail::read(s, "warm_start", c.solver.warm_start);
            std::string m = method_name(c.solver.method);
            detail::read(s, "method", m);
            c.solver.method = parse_solver_method(m);
        }
        detail::read(j, "tau", c.tau);
        if (j.contains("ingest")) {
            detail::read(j["ingest"], "features_path", c.features_path);
            detail::read(j["ingest"], "superclass_path", c.superclass_path);
        }
        return c;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
}

// "a.b.c=value"; value parsed as JSON, else taken as a string
inline void apply_override(json& doc, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + assignment + "' is not key=value");
    std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        auto dot = key.find('.', start);
        std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ValidationError("override key '" + key + "' has an empty segment");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
        node = &(*node)[part];
        start = dot + 1;
    }
}

inline void validate_config(const ExperimentConfig& c) {
    c.gram.validate();
    require(c.lambda > 0.0, "lambda must be positive");
    require(c.rounds >= 0, "rounds must be >= 0");
    require(c.tau > 0.0, "tau must be positive");
    c.solver.validate();
    for (const auto& m : c.modes)
        require(m == "closed_form" || m == "oracle" || m == "pll" || m == "theory", "unknown mode '" + m + "'");
    require(std::is_sorted(c.sweep_eta.begin(), c.sweep_eta.end()), "sweep.eta must be sorted ascending");
    require(std::is_sorted(c.sweep_n.begin(), c.sweep_n.end()), "sweep.n must be sorted ascending");
    for (const std::string* p : {&c.corruption_matrix_path, &c.features_path, &c.superclass_path})
        require(p->empty() || std::filesystem::exists(*p), "referenced file '" + *p + "' does not exist");
}

inline ExperimentConfig load_config(const json& doc, const std::vector<std::string>& overrides) {
    json d = doc;
    for (const auto& o : overrides) apply_override(d, o);
    ExperimentConfig c = from_json(d);
    validate_config(c);
    return c;
}

} // namespace sdlab
