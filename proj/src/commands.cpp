#include "sdlab/commands.hpp"

#include "sdlab/io.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <numbers>
#include <thread>

namespace fs = std::filesystem;

namespace sdlab {

namespace {

template <class T, class F>
std::vector<T> parallel_map(std::size_t count, F fn) {
    std::vector<T> out(count);
    std::vector<std::exception_ptr> errs(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < count;) {
            try {
                out[i] = fn(i);
            } catch (...) {
                errs[i] = std::current_exception();
            }
        }
    };
    unsigned nw = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), unsigned(count)));
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < nw; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
    return out;
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.output_dir);
    return (fs::path(cfg.output_dir) / name).string();
}

void emit(CommandResult& res, const ExperimentConfig& cfg, const std::string& name, const std::string& text) {
    std::string p = out_path(cfg, name);
    io::write_file(p, text);
    res.files.push_back(p);
}

GramModel model_of(const ExperimentConfig& cfg) {
    GramModel m = cfg.gram;
    m.seed = cfg.seed;
    return m;
}

EigenSystem eigensystem_of(const GramModel& m, const Matrix& G) {
    return m.perturbation == 0.0 ? analytic_eigensystem(m) : numeric_eigensystem(G);
}

Vector output_of(int y, int yhat, const CorruptionMatrix& C, const TheoryConstants& tc, int t) {
    return tc.kind == GramCase::V ? extended_output(y, yhat, C, tc, t) : closed_form_output(y, yhat, C, tc, t);
}

Vector pll_of(int y, int yhat, const CorruptionMatrix& C, const TheoryConstants& tc) {
    return pll_premise(C, y) ? pll_output(y, yhat, C, tc).y : pll_population_output(y, yhat, C, tc);
}

json pairs_json(const std::vector<std::pair<int, int>>& v) {
    json a = json::array();
    for (auto [k, j] : v) a.push_back({k, j});
    return a;
}

} // namespace

CorruptionMatrix corruption_from_config(const ExperimentConfig& cfg, double eta) {
    CorruptionKind kind = parse_corruption_kind(cfg.corruption_kind);
    if (kind == CorruptionKind::Explicit) {
        require(!cfg.corruption_matrix_path.empty(), "explicit corruption needs corruption.matrix_path");
        return io::parse_corruption_csv(io::read_file(cfg.corruption_matrix_path));
    }
    return make_corruption(kind, eta, cfg.gram.K, cfg.gram.superclasses);
}

double class_dispersion(const OutputMatrix& om, const std::vector<int>& true_labels, int k) {
    std::vector<int> idx;
    for (int i = 0; i < om.size(); ++i)
        if (true_labels[i] == k) idx.push_back(i);
    double best = 0.0;
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b)
            best = std::max(best, (om.Y.col(idx[a]) - om.Y.col(idx[b])).cwiseAbs().maxCoeff());
    return best;
}

std::pair<double, double> simplex_projection(const Vector& y) {
    const double K = double(y.size());
    double x = 0.0, z = 0.0;
    for (Eigen::Index k = 0; k < y.size(); ++k) {
        double a = 2.0 * std::numbers::pi * double(k) / K;
        x += y(k) * std::cos(a);
        z += y(k) * std::sin(a);
    }
    return {x, z};
}

CommandResult cmd_trajectory(const ExperimentConfig& cfg) {
    CommandResult res;
    GramModel m = model_of(cfg);
    const int K = m.K, n = m.n;
    CorruptionMatrix C = corruption_from_config(cfg, cfg.eta);
    LabelAssignment la = realize_labels(C, n, cfg.seed);
    Matrix G = build_gram(m);
    EigenSystem eig = eigensystem_of(m, G);
    auto traj = trajectory(OutputMatrix{la.one_hot(), 0}, eig, cfg.lambda, K, n, cfg.rounds);

    emit(res, cfg, "labels.csv", io::labels_csv(la));
    emit(res, cfg, "corruption.csv", io::corruption_csv(C));
    for (const auto& om : traj) emit(res, cfg, "round_" + std::to_string(om.round) + ".csv", io::output_csv({om}));

    std::string proj = "round,sample_index,true_label,given_label";
    for (int k = 0; k < K; ++k) proj += ",y" + std::to_string(k);
    proj += ",x,y\n";
    std::string disp = "round,class_index,max_pairwise_linf\n";
    std::string eigs = "round,index,gram_eigenvalue,operator_eigenvalue\n";
    json report = {{"rounds", json::array()}};
    for (const auto& om : traj) {
        for (int i = 0; i < om.size(); ++i) {
            proj += std::to_string(om.round) + "," + std::to_string(i) + "," + std::to_string(la.true_labels[i]) + "," +
                    std::to_string(la.given_labels[i]);
            for (int k = 0; k < K; ++k) proj += "," + io::num(om.Y(k, i));
            auto [x, z] = simplex_projection(om.Y.col(i));
            proj += "," + io::num(x) + "," + io::num(z) + "\n";
        }
        for (int k = 0; k < K; ++k)
            disp += std::to_string(om.round) + "," + std::to_string(k) + "," +
                    io::num(class_dispersion(om, la.true_labels, k)) + "\n";
        Vector w = operator_eigenvalues(eig, cfg.lambda, K, n, om.round);
        for (int i = 0; i < eig.size(); ++i)
            eigs += std::to_string(om.round) + "," + std::to_string(i) + "," + io::num(eig.values(i)) + "," +
                    io::num(w(i)) + "\n";
        report["rounds"].push_back({{"round", om.round},
                                    {"min_entry", om.min_entry()},
                                    {"max_column_sum_error", om.max_column_sum_error()},
                                    {"accuracy", argmax_accuracy(om, la.true_labels)}});
    }
    emit(res, cfg, "projection.csv", proj);
    emit(res, cfg, "dispersion.csv", disp);
    emit(res, cfg, "eigenvalues.csv", eigs);

    if (cfg.has_mode("oracle") && cfg.rounds > 0) {
        OracleSolver solver(G, cfg.lambda, K, n, cfg.tau);
        SolverConfig sc = cfg.solver;
        sc.seed = cfg.seed;
        OutputMatrix prev = traj.front();
        json rounds = json::array();
        for (int t = 1; t <= cfg.rounds; ++t) {
            OracleResult r = solver.solve(prev, sc);
            if (!r.converged) res.numerical_failure = true;
            emit(res, cfg, "oracle_round_" + std::to_string(t) + ".csv", io::output_csv({r.outputs}));
            rounds.push_back({{"round", t},
                              {"converged", r.converged},
                              {"final_loss", r.final_loss},
                              {"iterations_used", r.iterations_used},
                              {"max_linf_gap", max_abs(r.outputs.Y - traj[t].Y)}});
            prev = r.outputs;
        }
        report["oracle"] = rounds;
    }
    emit(res, cfg, "trajectory_report.json", report.dump(2) + "\n");
    return res;
}

CommandResult cmd_phase(const ExperimentConfig& cfg) {
    require(!cfg.sweep_eta.empty(), "phase needs sweep.eta");
    require(cfg.rounds >= 1, "phase needs rounds >= 1");
    CommandResult res;
    GramModel m = model_of(cfg);
    TheoryConstants tc = theory_constants(m, cfg.lambda);
    const bool want_pll = cfg.has_mode("pll") && m.kind != GramCase::V;
    const bool want_oracle = cfg.has_mode("oracle");
    if (cfg.has_mode("pll") && !want_pll) res.warnings.push_back("PLL rows skipped: no closed form for case V");

    struct Row {
        std::string t;
        double predicted, empirical, oracle;
        bool realized;
    };
    auto rows = parallel_map<std::vector<Row>>(cfg.sweep_eta.size(), [&](std::size_t idx) {
        const double eta = cfg.sweep_eta[idx];
        CorruptionMatrix C = corruption_from_config(cfg, eta);
        std::optional<LabelAssignment> la;
        try {
            la = realize_labels(C, m.n, cfg.seed);
        } catch (const ValidationError&) {
        }
        auto empirical = [&](auto&& fn) {
            if (la) {
                int hit = 0;
                for (int i = 0; i < la->size(); ++i)
                    if (argmax_correct(fn(la->true_labels[i], la->given_labels[i]), la->true_labels[i])) ++hit;
                return double(hit) / la->size();
            }
            double acc = 0.0;
            for (int k = 0; k < C.K(); ++k)
                for (int j = 0; j < C.K(); ++j)
                    if (C(k, j) > 0.0 && argmax_correct(fn(k, j), k)) acc += C(k, j);
            return acc / C.K();
        };
        std::vector<double> oracle_acc(cfg.rounds + 1, std::nan(""));
        if (want_oracle && la) {
            Matrix G = build_gram(m);
            OracleSolver solver(G, cfg.lambda, m.K, m.n, cfg.tau);
            SolverConfig sc = cfg.solver;
            sc.seed = cfg.seed;
            OutputMatrix prev{la->one_hot(), 0};
            for (int t = 1; t <= cfg.rounds; ++t) {
                OracleResult r = solver.solve(prev, sc);
                if (!r.converged) throw NumericalError("oracle did not converge at eta=" + io::num(eta));
                oracle_acc[t] = argmax_accuracy(r.outputs, la->true_labels);
                prev = r.outputs;
            }
        }
        std::vector<Row> out;
        for (int t = 1; t <= cfg.rounds; ++t) {
            double pred = predicted_population_accuracy(C, tc, t, PredictionMode::SD);
            double emp = empirical([&](int y, int yh) { return output_of(y, yh, C, tc, t); });
            out.push_back({std::to_string(t), pred, emp, oracle_acc[t], la.has_value()});
        }
        if (want_pll) {
            double pred = predicted_population_accuracy(C, tc, 1, PredictionMode::PLL);
            double emp = empirical([&](int y, int yh) { return pll_of(y, yh, C, tc); });
            out.push_back({"PLL", pred, emp, std::nan(""), la.has_value()});
        }
        return out;
    });

    std::string csv = "eta,t,predicted_accuracy,empirical_accuracy,realized";
    if (want_oracle) csv += ",oracle_accuracy";
    csv += "\n";
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (const Row& r : rows[i]) {
            csv += io::num(cfg.sweep_eta[i]) + "," + r.t + "," + io::num(r.predicted) + "," + io::num(r.empirical) + "," +
                   (r.realized ? "1" : "0");
            if (want_oracle) csv += "," + (std::isnan(r.oracle) ? std::string() : io::num(r.oracle));
            csv += "\n";
        }
    emit(res, cfg, "phase.csv", csv);
    return res;
}

CommandResult cmd_approx_error(const ExperimentConfig& cfg) {
    require(cfg.has_mode("oracle"), "approx-error needs the oracle mode");
    require(cfg.rounds >= 1, "approx-error needs rounds >= 1");
    CommandResult res;
    std::vector<int> ns = cfg.sweep_n.empty() ? std::vector<int>{cfg.gram.n} : cfg.sweep_n;
    CorruptionMatrix C = corruption_from_config(cfg, cfg.eta);
    SolverConfig sc = cfg.solver;
    sc.seed = cfg.seed;
    struct Row {
        double gap = std::nan("");
        bool ok = false;
        std::string note;
    };
    auto rows = parallel_map<Row>(ns.size(), [&](std::size_t i) {
        GramModel m = model_of(cfg);
        m.n = ns[i];
        Row r;
        try {
            r.gap = measure_approx_error(m, C, cfg.lambda, cfg.rounds, sc).max_gap;
            r.ok = true;
        } catch (const NumericalError& e) {
            r.note = e.what();
        }
        return r;
    });
    std::string csv = "n,max_linf_error,converged\n";
    for (std::size_t i = 0; i < ns.size(); ++i) {
        csv += std::to_string(ns[i]) + "," + io::num(rows[i].gap) + "," + (rows[i].ok ? "1" : "0") + "\n";
        if (!rows[i].ok) {
            res.numerical_failure = true;
            res.warnings.push_back("n=" + std::to_string(ns[i]) + ": " + rows[i].note);
        }
    }
    emit(res, cfg, "approx_error.csv", csv);
    return res;
}

json theory_report(const ExperimentConfig& cfg) {
    GramModel m = model_of(cfg);
    TheoryConstants tc = theory_constants(m, cfg.lambda);
    CorruptionMatrix C = corruption_from_config(cfg, cfg.eta);
    json j;
    j["case"] = case_name(tc.kind);
    j["K"] = tc.K;
    j["n"] = tc.n;
    j["lambda"] = tc.lambda;
    j["K2n_lambda"] = tc.L();
    j["p"] = tc.p;
    j["q"] = tc.q;
    j["r"] = std::vector<double>(tc.r.data(), tc.r.data() + tc.r.size());
    j["q_over_p"] = tc.q / tc.p;
    if (tc.kind == GramCase::II) {
        j["p_class"] = std::vector<double>(tc.p_class.data(), tc.p_class.data() + tc.K);
        j["q_class"] = std::vector<double>(tc.q_class.data(), tc.q_class.data() + tc.K);
    }
    j["corruption"] = json::array();
    for (int k = 0; k < C.K(); ++k) {
        std::vector<double> row(C.K());
        for (int jj = 0; jj < C.K(); ++jj) row[jj] = C(k, jj);
        j["corruption"].push_back(row);
    }
    bool ratio_ok = true;
    for (int k = 0; k < tc.K; ++k) ratio_ok = ratio_ok && tc.q_class(k) > tc.p_class(k);
    if (ratio_ok) {
        auto mr = minimal_rounds(C, tc);
        j["minimal_rounds"] = mr ? json(*mr) : json("Unreachable");
    } else {
        j["minimal_rounds"] = "Unreachable";
    }
    const int T = std::max(cfg.rounds, 1);
    j["sd"] = json::array();
    for (int t = 1; t <= T; ++t) {
        auto r = sd_accuracy_condition(C, tc, t);
        json thr = json::array();
        for (int k = 0; k < tc.K; ++k) thr.push_back(tc.threshold(k, t));
        j["sd"].push_back({{"t", t},
                           {"achieves_100", r.achieves_100},
                           {"threshold", tc.kind == GramCase::II ? thr : thr[0]},
                           {"failing_pairs", pairs_json(r.failing_pairs)},
                           {"predicted_accuracy", predicted_population_accuracy(C, tc, t, PredictionMode::SD)}});
    }
    auto pll = pll_accuracy_condition(C);
    j["pll"] = pll.achieves_100;
    j["pll_failing_pairs"] = pairs_json(pll.failing_pairs);
    if (tc.kind != GramCase::V)
        j["pll_predicted_accuracy"] = predicted_population_accuracy(C, tc, 1, PredictionMode::PLL);
    j["pairs"] = json::array();
    for (const auto& v : pll.pairs) j["pairs"].push_back({{"k", v.k}, {"k_prime", v.kp}, {"gap", v.gap}});
    if (tc.extended) {
        const auto& ex = *tc.extended;
        json e;
        e["s"] = ex.s_const;
        e["delta"] = std::vector<double>(ex.delta.data(), ex.delta.data() + ex.delta.size());
        e["uniform_cross_blocks"] = ex.uniform_cross;
        e["nu"] = json::array();
        e["mu"] = json::array();
        for (int t = 1; t <= T; ++t) {
            e["nu"].push_back(ex.nu(t));
            Vector mu = ex.mu(t);
            e["mu"].push_back(std::vector<double>(mu.data(), mu.data() + mu.size()));
        }
        j["extended"] = e;
    }
    if (!cfg.schedule.empty()) {
        j["evolving"] = json::array();
        for (int t = 1; t <= static_cast<int>(cfg.schedule.size()); ++t)
            j["evolving"].push_back(
                {{"t", t}, {"achieves_100", evolving_condition(C, cfg.schedule, cfg.lambda, tc.K, tc.n, t)}});
    }
    return j;
}

CommandResult cmd_theory(const ExperimentConfig& cfg) {
    CommandResult res;
    emit(res, cfg, "theory.json", theory_report(cfg).dump(2) + "\n");
    return res;
}

CommandResult cmd_ingest(const ExperimentConfig& cfg) {
    require(!cfg.features_path.empty(), "ingest needs ingest.features_path");
    CommandResult res;
    FeatureMatrix f = io::parse_features_csv(io::read_file(cfg.features_path));
    if (!cfg.superclass_path.empty()) f.superclasses = io::parse_superclass_csv(io::read_file(cfg.superclass_path));
    int renormalized = 0;
    for (Eigen::Index i = 0; i < f.rows.rows(); ++i) {
        double nrm = f.rows.row(i).norm();
        if (std::abs(nrm - 1.0) <= 1e-6) continue;
        require(std::abs(nrm - 1.0) <= 0.01, "feature row " + std::to_string(i) + " has norm " + io::num(nrm) +
                                                 ", more than 1% from unit");
        f.rows.row(i) /= nrm;
        ++renormalized;
    }
    if (renormalized)
        res.warnings.push_back(std::to_string(renormalized) + " feature rows renormalized to unit length");
    GramStatistics st = gram_statistics(f);

    std::map<int, int> counts;
    for (int y : f.labels) ++counts[y];
    const int K = counts.rbegin()->first + 1;
    const double n = double(f.labels.size()) / double(K);

    auto stat = [](const std::optional<RelationStat>& s) -> json {
        if (!s) return nullptr;
        return {{"mean", s->mean}, {"std", s->std}, {"pairs", s->pairs}};
    };
    json j;
    j["samples"] = f.labels.size();
    j["K"] = K;
    j["mean_class_count"] = n;
    j["renormalized_rows"] = renormalized;
    j["same_class"] = stat(st.same_class);
    j["same_superclass"] = stat(st.same_superclass);
    j["cross_superclass"] = stat(st.cross_superclass);
    j["fitted"] = {{"c", st.same_class ? json(st.same_class->mean) : json(nullptr)},
                   {"d", st.same_superclass ? json(st.same_superclass->mean) : json(nullptr)},
                   {"e", st.cross_superclass ? json(st.cross_superclass->mean) : json(nullptr)}};
    json sug = json::array();
    if (st.same_class && st.same_superclass && st.same_class->mean > st.same_superclass->mean) {
        const double c = st.same_class->mean, d = st.same_superclass->mean;
        const double a = 1.0 - c, b = 1.0 - c + n * (c - d);
        for (double rho : {1.8, 2.0, 2.2}) {
            if (b > rho * a) {
                double L = a * b * (rho - 1.0) / (b - rho * a);
                sug.push_back({{"q_over_p", rho}, {"lambda", L / (double(K) * K * n)}});
            } else {
                sug.push_back({{"q_over_p", rho}, {"lambda", nullptr}});
            }
        }
    }
    j["suggested_lambda"] = sug;
    emit(res, cfg, "ingest.json", j.dump(2) + "\n");
    return res;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"self-distillation numerical laboratory"};
    app.require_subcommand(1);
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::vector<std::string> sets;
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed");
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--set", sets, "override a config leaf, key=value (repeatable)");
    std::map<std::string, CommandResult (*)(const ExperimentConfig&)> table = {{"trajectory", cmd_trajectory},
                                                                              {"phase", cmd_phase},
                                                                              {"approx-error", cmd_approx_error},
                                                                              {"theory", cmd_theory},
                                                                              {"ingest", cmd_ingest}};
    const std::map<std::string, std::string> blurb = {
        {"trajectory", "outputs per round, projections and eigenvalues"},
        {"phase", "predicted and empirical accuracy over an eta sweep"},
        {"approx-error", "oracle vs linearized gap over an n sweep"},
        {"theory", "constants, conditions and minimal rounds as JSON"},
        {"ingest", "Gram statistics of a feature file and fitted c, d, e"}};
    for (auto& [name, fn] : table) app.add_subcommand(name, blurb.at(name))->fallthrough();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    try {
        json doc = json::object();
        if (!config_path.empty()) {
            doc = json::parse(io::read_file(config_path), nullptr, false);
            require(!doc.is_discarded() && doc.is_object(), "config '" + config_path + "' is not a JSON object");
        }
        ExperimentConfig cfg = load_config(doc, sets);
        if (*seed_opt) cfg.seed = seed;
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        CommandResult res;
        for (auto& [name, fn] : table)
            if (app.got_subcommand(name)) res = fn(cfg);
        for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
        for (const auto& f : res.files) std::cout << f << "\n";
        return res.numerical_failure ? 2 : 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace sdlab
