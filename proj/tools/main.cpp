#include "scenarios.hpp"

#include "vopf/optimizer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#ifndef VOPF_DATA_DIR
#define VOPF_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.3.0";
constexpr int kSummaryFormat = 1;

enum Exit { kOk = 0, kParse = 1, kNoFeasible = 2, kGeometry = 3 };

struct SolveArgs {
    std::string case_path;
    int iters = 10;
    std::uint64_t seed = 42;
    double penalty = 3000.0;
    std::size_t init_samples = 0;  // 0: 10(N+1)
    long cluster_max = -1;         // -1: by dimension
    std::string out_dir = ".";
    bool trace = false;
    unsigned threads = 1;
};

json config_json(const vopf::SolverConfig& cfg, std::size_t dim) {
    return {{"iterations", cfg.iterations},
            {"seed", cfg.seed},
            {"penalty_c", cfg.penalty_c},
            {"init_samples", cfg.init_samples.value_or(10 * (dim + 1))},
            {"cluster_max", cfg.cluster_max},
            {"perturb_radius", cfg.perturb_radius},
            {"feas_tol", cfg.feas_tol},
            {"threads", cfg.threads},
            {"flow",
             {{"eq_tol", cfg.flow.eq_tol},
              {"feas_tol", cfg.flow.feas_tol},
              {"h_init", cfg.flow.h_init},
              {"h_min", cfg.flow.h_min},
              {"h_max", cfg.flow.h_max},
              {"t_max", cfg.flow.t_max},
              {"max_steps", cfg.flow.max_steps},
              {"boundary_tol", cfg.flow.boundary_tol},
              {"rtol", cfg.flow.rtol},
              {"atol", cfg.flow.atol},
              {"slack_floor", cfg.flow.slack_floor}}}};
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw vopf::Error("cannot write '" + p.string() + "'");
    out << text;
}

int cmd_solve(const SolveArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    json manifest{{"tool", "vopf"}, {"version", kToolVersion}, {"summary_format", kSummaryFormat}, {"case", a.case_path}};
    fs::path out_dir(a.out_dir);
    auto finish = [&](int code, const std::string& status) {
        manifest["status"] = status;
        manifest["exit_code"] = code;
        manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        try {
            fs::create_directories(out_dir);
            write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
        } catch (const std::exception& e) {
            std::cerr << "vopf: " << e.what() << '\n';
        }
        return code;
    };

    vopf::Network net;
    try {
        net = vopf::parse_case_file(a.case_path);
    } catch (const vopf::Error& e) {
        std::cerr << "vopf: " << e.what() << '\n';
        return finish(kParse, "parse failure");
    }

    const auto dim = vopf::control_box(net).dim();
    vopf::SolverConfig cfg;
    cfg.iterations = a.iters;
    cfg.seed = a.seed;
    cfg.penalty_c = a.penalty;
    if (a.init_samples > 0) cfg.init_samples = a.init_samples;
    cfg.cluster_max = a.cluster_max < 0 ? vopf::repro::default_cluster_max(dim) : static_cast<std::size_t>(a.cluster_max);
    cfg.threads = a.threads;
    manifest["config"] = config_json(cfg, dim);

    try {
        vopf::validate(cfg);
        vopf::IterationObserver observer;
        if (a.trace) {
            observer = [](const vopf::SolverState& st) {
                const auto& t = st.trace.back();
                std::cerr << "iter " << t.iter << ' ' << vopf::to_string(t.start_kind) << ' ' << vopf::to_string(t.outcome)
                          << " steps " << t.path_length << " best_f_p " << std::setprecision(10) << t.best_f_p << '\n';
            };
        }
        const auto sol = vopf::run(net, cfg, observer);
        fs::create_directories(out_dir);
        const auto sol_path = out_dir / "solution.json";
        const auto trace_path = out_dir / "trace.csv";
        write_text(sol_path, vopf::solution_json(net, sol));
        write_text(trace_path, vopf::trace_csv(sol.trace));
        manifest["artifacts"] = {{"solution", sol_path.string()}, {"trace", trace_path.string()}};

        std::cout << std::fixed << std::setprecision(4);
        std::cout << "case          " << a.case_path << '\n'
                  << "best cost     " << sol.cost << " $/hr\n"
                  << "iterations    " << sol.trace.size() << '\n'
                  << "archive       " << sol.archive_size << " samples  (I " << sol.category_counts[0] << ", II "
                  << sol.category_counts[1] << ", III " << sol.category_counts[2] << ")\n"
                  << "equilibrium   " << (sol.equilibrium ? "yes" : "no") << (sol.polished ? " (polished)" : "") << '\n';
        return finish(kOk, "ok");
    } catch (const vopf::NoFeasibleSample& e) {
        std::cerr << "vopf: " << e.what() << '\n';
        if (e.best_infeasible) std::cerr << "vopf: best category II sample f_p = " << e.best_infeasible->f_p << '\n';
        return finish(kNoFeasible, "no feasible sample");
    } catch (const vopf::GeometryFailure& e) {
        std::cerr << "vopf: " << e.what() << '\n';
        return finish(kGeometry, "geometry failure");
    } catch (const vopf::Error& e) {
        std::cerr << "vopf: " << e.what() << '\n';
        return finish(kParse, "error");
    }
}

int cmd_validate(const std::string& path) {
    vopf::Network net;
    try {
        net = vopf::parse_case_file(path);
    } catch (const vopf::Error& e) {
        std::cerr << "vopf: " << e.what() << '\n';
        return kParse;
    }
    const vopf::VariableLayout layout(net);
    const auto dim = vopf::control_box(net).dim();
    std::cout << "buses N_B     " << net.num_buses() << '\n'
              << "generators    " << net.num_gens() << '\n'
              << "branches N_L  " << net.num_branches() << "  (" << net.num_rated() << " rated)\n"
              << "controls N    " << dim << "  (2 N_G - 1 = " << 2 * net.gen_buses.size() - 1 << ")\n"
              << "variables n   " << layout.n() << '\n'
              << "equalities m' " << layout.m() << '\n';
    const auto state = vopf::solve(net, vopf::repro::flat_start(net));
    std::cout << "flat start PF " << (state.converged ? "converged" : "did not converge") << " in " << state.iterations
              << " iterations, mismatch " << std::scientific << std::setprecision(2) << state.max_mismatch << '\n';
    return kOk;
}

int cmd_repro(const std::string& name, const std::string& data_dir, unsigned threads, bool verbose) {
    const auto& names = vopf::repro::scenario_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        std::cerr << "vopf: unknown scenario '" << name << "'; valid scenarios:";
        for (const auto& n : names) std::cerr << ' ' << n;
        std::cerr << '\n';
        return kParse;
    }
    vopf::repro::ScenarioOptions opts;
    opts.data_dir = data_dir;
    opts.threads = threads;
    if (verbose) opts.log = &std::cout;
    try {
        const auto rep = vopf::repro::run_scenario(name, opts);
        std::cout << vopf::repro::format_report(rep);
        return rep.passed() ? kOk : kNoFeasible;
    } catch (const vopf::GeometryFailure& e) {
        std::cerr << "vopf: " << e.what() << '\n';
        return kGeometry;
    } catch (const vopf::NoFeasibleSample& e) {
        std::cerr << "vopf: " << e.what() << '\n';
        return kNoFeasible;
    } catch (const vopf::Error& e) {
        std::cerr << "vopf: " << e.what() << '\n';
        return kParse;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Voronoi-diagram guided global AC OPF"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    SolveArgs sa;
    auto* solve = app.add_subcommand("solve", "run the optimizer on a case file");
    solve->add_option("case", sa.case_path, "MATPOWER case file")->required();
    solve->add_option("--iters", sa.iters, "iteration budget")->check(CLI::NonNegativeNumber);
    solve->add_option("--seed", sa.seed, "random seed");
    solve->add_option("--penalty", sa.penalty, "penalty factor c")->check(CLI::PositiveNumber);
    solve->add_option("--init-samples", sa.init_samples, "initial samples (default 10(N+1))");
    solve->add_option("--cluster-max", sa.cluster_max, "max samples per cluster, 0 disables (default by N)");
    solve->add_option("--out-dir", sa.out_dir, "directory for solution.json, trace.csv, manifest.json");
    solve->add_flag("--trace", sa.trace, "print one line per iteration to stderr");
    solve->add_option("--threads", sa.threads, "worker threads")->check(CLI::PositiveNumber);

    std::string vpath;
    auto* validate = app.add_subcommand("validate", "parse a case and report its dimensions");
    validate->add_option("case", vpath, "MATPOWER case file")->required();

    std::string scenario;
    std::string data_dir = VOPF_DATA_DIR;
    unsigned rthreads = 1;
    bool verbose = false;
    auto* repro = app.add_subcommand("repro", "run a scripted case study against its thresholds");
    repro->add_option("scenario", scenario, "case9 | case9-upper-half | case9-penalty-sweep | wb5 | case39 | case118")
        ->required();
    repro->add_option("--data-dir", data_dir, "directory holding the bundled case files");
    repro->add_option("--threads", rthreads, "worker threads")->check(CLI::PositiveNumber);
    repro->add_flag("-v,--verbose", verbose, "print one line per iteration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kParse;
    }

    if (*solve) return cmd_solve(sa);
    if (*validate) return cmd_validate(vpath);
    return cmd_repro(scenario, data_dir, rthreads, verbose);
}
