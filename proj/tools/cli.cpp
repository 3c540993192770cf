#include "cli.hpp"

#include <omp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "n3l/boost.hpp"
#include "n3l/errors.hpp"
#include "n3l/exact.hpp"
#include "n3l/greedy.hpp"
#include "n3l/lines.hpp"
#include "n3l/pool_format.hpp"
#include "n3l/rl.hpp"

namespace n3l::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct MissingInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

void require_input(const std::string& path) {
    if (!fs::exists(path)) throw MissingInput("input not found: " + path);
}

json read_json(const std::string& path) {
    require_input(path);
    std::ifstream in(path);
    if (!in) throw MissingInput("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw LoadError(path, 0, std::string("malformed JSON: ") + e.what());
    }
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoFailure("cannot write " + path);
    out << text;
    out.flush();
    if (!out) throw IoFailure("write failed: " + path);
}

void ensure_parent(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    std::error_code ec;
    if (!parent.empty()) fs::create_directories(parent, ec);
}

// Everything needed to rerun a command.
class Manifest {
public:
    Manifest(std::string command, const std::vector<std::string>& args) : started_(utc_now()) {
        j_["command"] = std::move(command);
        j_["args"] = args;
        j_["versions"] = {{"n3l", N3L_VERSION},
                          {"compiler", __VERSION__},
                          {"cxx_standard", __cplusplus},
                          {"real", sizeof(real) == 8 ? "float64" : "float32"},
                          {"openmp", _OPENMP}};
        j_["workers"] = omp_get_max_threads();
    }
    void config(const json& c) { j_["config"] = c; }
    void seeds(const json& s) { j_["seeds"] = s; }
    void output(const std::string& path) { j_["outputs"].push_back(path); }
    void write(const std::string& path) {
        j_["started_utc"] = started_;
        j_["finished_utc"] = utc_now();
        write_file(path, j_.dump(2) + "\n");
    }

private:
    json j_;
    std::string started_;
};

void add_workers(CLI::App* cmd, int& workers) {
    cmd->add_option("--workers", workers, "Worker threads (default: available cores)")->check(CLI::PositiveNumber);
}

void apply_workers(int workers) {
    if (workers > 0) omp_set_num_threads(workers);
}

std::string manifest_for(const std::string& output) { return output + ".manifest.json"; }

GridConfig load_grid(const std::string& path) {
    require_input(path);
    return read_config_file(path);
}

// ---- commands -------------------------------------------------------------

struct SolveArgs {
    int n = 0;
    std::optional<std::uint64_t> nodes;
    std::optional<double> secs;
    std::string out;
    bool no_symmetry = false;
    int workers = 0;
};

int cmd_solve(const SolveArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    if (a.n < 1) throw UsageError("--n must be at least 1");
    Manifest manifest("solve", argv);
    SolveOptions opts;
    opts.node_limit = a.nodes;
    opts.time_limit = a.secs;
    opts.symmetry_breaking = !a.no_symmetry;
    const SolveReport r = solve_exact(a.n, opts);
    const std::string path = a.out.empty() ? "solve_n" + std::to_string(a.n) + ".txt" : a.out;
    ensure_parent(path);
    // Report lines become comments so the file stays a readable grid file.
    std::ostringstream report;
    write_report(report, r);
    std::istringstream lines(report.str());
    std::string text, line;
    while (std::getline(lines, line)) text += (line.find('=') != std::string::npos && line.rfind("n=", 0) != 0 ? "# " : "") + line + "\n";
    write_file(path, text);
    out << "optimum=" << r.optimum << " proved=" << (r.proved_optimal ? "true" : "false") << " nodes=" << r.nodes
        << " time_s=" << r.wall_time << "\n"
        << "certificate=" << path << "\n";
    json cfg = {{"n", a.n}, {"symmetry_breaking", opts.symmetry_breaking}, {"greedy_seeds", opts.greedy_seeds}};
    cfg["budget_nodes"] = a.nodes ? json(*a.nodes) : json(nullptr);
    cfg["budget_secs"] = a.secs ? json(*a.secs) : json(nullptr);
    manifest.config(cfg);
    manifest.seeds(json::object());
    manifest.output(path);
    manifest.write(manifest_for(path));
    return r.proved_optimal ? ok : budget_limited;
}

struct GreedyArgs {
    int n = 0;
    int count = 0;
    std::uint64_t seed = 0;
    std::string out;
    int workers = 0;
};

int cmd_greedy(const GreedyArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    if (a.n < 1) throw UsageError("--n must be at least 1");
    if (a.count < 1) throw UsageError("--count must be at least 1");
    Manifest manifest("greedy", argv);
    const auto configs = generate_pool(a.n, a.count, a.seed);
    std::vector<PoolRecord> records;
    std::map<int, int> histogram;
    for (const auto& c : configs) {
        records.push_back(to_record(c));
        ++histogram[static_cast<int>(c.size())];
    }
    const std::string path = a.out.empty() ? "greedy_n" + std::to_string(a.n) + ".jsonl" : a.out;
    {
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw IoFailure("cannot write " + path);
        write_jsonl(f, records);
        f.flush();
        if (!f) throw IoFailure("write failed: " + path);
    }
    for (auto it = histogram.rbegin(); it != histogram.rend(); ++it) out << "score=" << it->first << " count=" << it->second << "\n";
    out << "best=" << histogram.rbegin()->first << " pool=" << path << "\n";
    manifest.config({{"n", a.n}, {"count", a.count}});
    manifest.seeds({{"base_seed", a.seed}});
    manifest.output(path);
    manifest.write(manifest_for(path));
    return ok;
}

struct BoostArgs {
    std::string config;
    std::string resume;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> generations;
    int workers = 0;
};

// Flat model keys are accepted at the top level as well as under "model".
json merge_model_keys(json j) {
    for (const char* key : {"layers", "heads", "dim", "ff_dim"}) {
        if (!j.contains(key)) continue;
        j["model"][key] = j[key];
        j.erase(key);
    }
    if (j.contains("model") && j["model"].contains("dim") && !j["model"].contains("ff_dim"))
        j["model"]["ff_dim"] = 4 * j["model"]["dim"].get<int>();
    return j;
}

void print_report(std::ostream& out, const GenerationReport& r) {
    out << "generation=" << r.generation << " best=" << r.best_score << " mean=" << std::fixed << std::setprecision(3) << r.mean_score
        << " pool=" << r.pool_size << " accepted=" << r.accepted << " candidate_best=" << r.candidate_best;
    if (r.generation > 0) out << " train_loss=" << r.train_loss_last << " test_loss=" << r.test_loss_last;
    out << " time_s=" << r.wall_time << std::defaultfloat << std::setprecision(6) << "\n";
}

int cmd_boost(const BoostArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    std::optional<BoostRun> run;
    std::string dir;
    if (!a.resume.empty()) {
        dir = a.resume;
        require_input((fs::path(dir) / "config.json").string());
        run.emplace(BoostRun::resume(dir));
        out << "resumed=" << dir << " completed=" << run->completed_generations() << "\n";
    } else {
        if (a.config.empty()) throw UsageError("boost needs --config or --resume");
        json j = merge_model_keys(read_json(a.config));
        if (a.seed) j["seed"] = *a.seed;
        if (a.generations) j["generations"] = *a.generations;
        if (!j.contains("n")) throw LoadError(a.config, 0, "config has no \"n\"");
        BoostConfig cfg;
        try {
            cfg = BoostConfig::from_json(j);
        } catch (const ContractViolation& e) {
            throw LoadError(a.config, 0, e.what());
        }
        dir = a.out.empty() ? "boost_run" : a.out;
        run.emplace(BoostRun::start(cfg, dir));
        print_report(out, run->reports().front());
    }
    Manifest manifest(a.resume.empty() ? "boost" : "boost --resume", argv);
    manifest.config(run->config().to_json());
    manifest.seeds({{"seed", run->config().seed}});
    while (!run->finished()) print_report(out, run->run_generation());
    out << "best=" << run->pool().max_score() << " generations=" << run->completed_generations() << " dir=" << dir << "\n";
    manifest.output(dir);
    manifest.write((fs::path(dir) / "manifest.json").string());
    return ok;
}

struct RlArgs {
    std::string config;
    std::string out;
    std::string checkpoint;
    std::string policy = "model";
    std::string in;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> total_steps;
    std::optional<int> episodes;
    std::string report;
    int workers = 0;
};

rl::PpoConfig load_ppo_config(const RlArgs& a) {
    if (a.config.empty()) throw UsageError("--config is required");
    json j = read_json(a.config);
    if (a.seed) j["seed"] = *a.seed;
    if (a.total_steps) j["total_steps"] = *a.total_steps;
    if (!j.contains("n")) throw LoadError(a.config, 0, "config has no \"n\"");
    try {
        return rl::PpoConfig::from_json(j);
    } catch (const ContractViolation& e) {
        throw LoadError(a.config, 0, e.what());
    }
}

int cmd_rl_train(const RlArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const rl::PpoConfig cfg = load_ppo_config(a);
    Manifest manifest("rl-train", argv);
    const std::string dir = a.out.empty() ? "rl_run" : a.out;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoFailure("cannot create " + dir);
    const rl::PpoResult r = rl::train_ppo(cfg);

    std::ostringstream csv;
    rl::write_update_log(csv, r.log);
    const auto log_path = (fs::path(dir) / "train_log.csv").string();
    const auto best_path = (fs::path(dir) / "best.ckpt").string();
    const auto final_path = (fs::path(dir) / "final.ckpt").string();
    const auto eval_path = (fs::path(dir) / "eval.json").string();
    write_file(log_path, csv.str());
    rl::save_policy(best_path, r.best, {{"update", r.best_update}, {"config", cfg.to_json()}});
    rl::save_policy(final_path, r.final_policy, {{"update", static_cast<int>(r.log.size())}, {"config", cfg.to_json()}});
    json evals = json::array();
    for (const auto& [u, m] : r.evals) {
        json e = m.to_json();
        e["update"] = u;
        evals.push_back(e);
    }
    json report = {{"best_update", r.best_update}, {"best", r.best_eval.to_json()}, {"evaluations", evals}};
    write_file(eval_path, report.dump(2) + "\n");
    out << "best_update=" << r.best_update << " " << r.best_eval.to_json().dump() << "\n";
    manifest.config(cfg.to_json());
    manifest.seeds({{"seed", cfg.seed}});
    for (const auto& p : {log_path, best_path, final_path, eval_path}) manifest.output(p);
    manifest.write((fs::path(dir) / "manifest.json").string());
    return ok;
}

int cmd_rl_eval(const RlArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const rl::PpoConfig cfg = load_ppo_config(a);
    const int episodes = a.episodes.value_or(cfg.eval_episodes);
    if (episodes < 1) throw UsageError("--episodes must be at least 1");
    std::optional<rl::ActorCritic> model;
    rl::Policy policy;
    if (a.policy == "model") {
        const std::string ckpt = a.checkpoint.empty() ? (fs::path(a.out.empty() ? "rl_run" : a.out) / "best.ckpt").string() : a.checkpoint;
        require_input(ckpt);
        model.emplace(rl::load_policy(ckpt, cfg.n));
        policy = rl::greedy_policy(*model);
    } else if (a.policy == "uniform") {
        policy = rl::uniform_policy();
    } else if (a.policy == "oracle") {
        GridConfig script = a.in.empty() ? solve_exact(cfg.n).certificate : load_grid(a.in);
        if (script.n() != cfg.n) throw LoadError(a.in, 0, "script grid size differs from config n");
        std::vector<int> cells;
        for (Point p : script.points()) cells.push_back(to_token(p, cfg.n));
        policy = rl::scripted_policy(std::move(cells));
    } else {
        throw UsageError("--policy must be model, uniform or oracle");
    }
    const rl::EvalMetrics m = rl::evaluate(policy, cfg.n, cfg.mask_mode, episodes, cfg.seed);
    json report = m.to_json();
    report["policy"] = a.policy;
    report["n"] = cfg.n;
    out << report.dump() << "\n";
    if (!a.report.empty()) {
        Manifest manifest("rl-eval", argv);
        ensure_parent(a.report);
        write_file(a.report, report.dump(2) + "\n");
        manifest.config(cfg.to_json());
        manifest.seeds({{"seed", cfg.seed}});
        manifest.output(a.report);
        manifest.write(manifest_for(a.report));
    }
    return ok;
}

struct RenderArgs {
    std::string in;
    std::string format = "ascii";
    std::string out;
    bool show_violations = false;
};

int cmd_render(const RenderArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const GridConfig g = load_grid(a.in);
    const std::string text = a.format == "svg" ? render_svg(g, a.show_violations) : render_ascii(g, a.show_violations);
    if (a.out.empty()) {
        out << text;
        return ok;
    }
    Manifest manifest("render", argv);
    ensure_parent(a.out);
    write_file(a.out, text);
    manifest.config({{"in", a.in}, {"format", a.format}, {"show_violations", a.show_violations}});
    manifest.output(a.out);
    manifest.write(manifest_for(a.out));
    return ok;
}

int cmd_verify(const std::string& in, std::ostream& out) {
    const GridConfig g = load_grid(in);
    const auto violations = violation_count(g);
    out << "points=" << g.size() << " violations=" << violations << " valid=" << (violations == 0 ? "true" : "false") << "\n";
    return violations == 0 ? ok : invalid;
}

}  // namespace

// ---- rendering ----------------------------------------------------------------

std::string render_ascii(const GridConfig& config, bool show_violations) {
    const int n = config.n();
    std::vector<std::string> cells(static_cast<std::size_t>(n) * n, ".");
    for (Point p : config.points()) cells[static_cast<std::size_t>(to_token(p, n))] = "●";
    const auto triples = show_violations ? collinear_triples(config) : std::vector<std::array<std::size_t, 3>>{};
    for (const auto& t : triples)
        for (std::size_t i : t) cells[static_cast<std::size_t>(to_token(config.points()[i], n))] = "X";
    std::string s;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) s += cells[static_cast<std::size_t>(r) * n + c];
        s += '\n';
    }
    if (show_violations) {
        s += "triples=" + std::to_string(triples.size()) + "\n";
        for (const auto& t : triples) {
            s += "triple";
            for (std::size_t i : t)
                s += " (" + std::to_string(config.points()[i].row) + "," + std::to_string(config.points()[i].col) + ")";
            s += '\n';
        }
    }
    return s;
}

std::string render_svg(const GridConfig& config, bool show_violations) {
    constexpr int cell = 40, margin = 20;
    const int n = config.n();
    const int size = 2 * margin + (n > 0 ? (n - 1) * cell : 0);
    auto x = [&](int col) { return margin + col * cell; };
    auto y = [&](int row) { return margin + row * cell; };
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 " << size << ' '
      << size << "\">\n";
    s << "<rect width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n";
    for (int i = 0; i < n; ++i) {
        s << "<line class=\"grid\" x1=\"" << x(0) << "\" y1=\"" << y(i) << "\" x2=\"" << x(n - 1) << "\" y2=\"" << y(i)
          << "\" stroke=\"#cccccc\"/>\n";
        s << "<line class=\"grid\" x1=\"" << x(i) << "\" y1=\"" << y(0) << "\" x2=\"" << x(i) << "\" y2=\"" << y(n - 1)
          << "\" stroke=\"#cccccc\"/>\n";
    }
    if (show_violations) {
        for (const auto& t : collinear_triples(config)) {
            std::array<Point, 3> pts{config.points()[t[0]], config.points()[t[1]], config.points()[t[2]]};
            std::sort(pts.begin(), pts.end());
            s << "<line class=\"violation\" x1=\"" << x(pts[0].col) << "\" y1=\"" << y(pts[0].row) << "\" x2=\"" << x(pts[2].col)
              << "\" y2=\"" << y(pts[2].row) << "\" stroke=\"#d62728\" stroke-width=\"3\" stroke-dasharray=\"6 4\"/>\n";
        }
    }
    for (Point p : config.points())
        s << "<circle class=\"point\" cx=\"" << x(p.col) << "\" cy=\"" << y(p.row) << "\" r=\"9\" fill=\"#1f4e79\"/>\n";
    s << "</svg>\n";
    return s.str();
}

// ---- entry point ----------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"No-three-in-line solvers: exact search, greedy, PatternBoost and PPO"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(N3L_VERSION));

    SolveArgs solve;
    auto* c_solve = app.add_subcommand("solve", "Exact branch-and-bound maximum");
    c_solve->add_option("--n", solve.n, "Grid size")->required();
    auto* o_nodes = c_solve->add_option("--budget-nodes", solve.nodes, "Node budget");
    auto* o_secs = c_solve->add_option("--budget-secs", solve.secs, "Time budget in seconds");
    o_nodes->excludes(o_secs);
    c_solve->add_option("--out", solve.out, "Certificate file (default solve_n<N>.txt)");
    c_solve->add_flag("--no-symmetry", solve.no_symmetry, "Disable symmetry breaking");
    add_workers(c_solve, solve.workers);

    GreedyArgs greedy;
    auto* c_greedy = app.add_subcommand("greedy", "Seeded greedy saturations to a JSONL pool");
    c_greedy->add_option("--n", greedy.n, "Grid size")->required();
    c_greedy->add_option("--count", greedy.count, "Number of saturations")->required();
    c_greedy->add_option("--seed", greedy.seed, "Base seed");
    c_greedy->add_option("--out", greedy.out, "Output JSONL (default greedy_n<N>.jsonl)");
    add_workers(c_greedy, greedy.workers);

    BoostArgs boost;
    auto* c_boost = app.add_subcommand("boost", "PatternBoost generations with checkpoints");
    c_boost->add_option("--config", boost.config, "JSON config file");
    c_boost->add_option("--resume", boost.resume, "Resume the run in this directory");
    c_boost->add_option("--out", boost.out, "Run directory (default boost_run)");
    c_boost->add_option("--seed", boost.seed, "Override the config seed");
    c_boost->add_option("--generations", boost.generations, "Override the generation count");
    add_workers(c_boost, boost.workers);

    RlArgs rl_train;
    auto* c_train = app.add_subcommand("rl-train", "Train a PPO policy");
    c_train->add_option("--config", rl_train.config, "JSON config file")->required();
    c_train->add_option("--out", rl_train.out, "Run directory (default rl_run)");
    c_train->add_option("--seed", rl_train.seed, "Override the config seed");
    c_train->add_option("--total-steps", rl_train.total_steps, "Override the environment step budget");
    add_workers(c_train, rl_train.workers);

    RlArgs rl_eval;
    auto* c_eval = app.add_subcommand("rl-eval", "Evaluate a policy with greedy action selection");
    c_eval->add_option("--config", rl_eval.config, "JSON config file")->required();
    c_eval->add_option("--checkpoint", rl_eval.checkpoint, "Policy checkpoint (default <out>/best.ckpt)");
    c_eval->add_option("--out", rl_eval.out, "Run directory holding best.ckpt");
    c_eval->add_option("--policy", rl_eval.policy, "model | uniform | oracle")->check(CLI::IsMember({"model", "uniform", "oracle"}));
    c_eval->add_option("--in", rl_eval.in, "Grid file replayed by the oracle policy (default: exact optimum)");
    c_eval->add_option("--episodes", rl_eval.episodes, "Episodes (default eval_episodes from config)");
    c_eval->add_option("--seed", rl_eval.seed, "Override the config seed");
    c_eval->add_option("--report", rl_eval.report, "Also write the metrics JSON here");
    add_workers(c_eval, rl_eval.workers);

    RenderArgs render;
    auto* c_render = app.add_subcommand("render", "Draw a grid file as ASCII or SVG");
    c_render->add_option("--in", render.in, "Grid file")->required();
    c_render->add_option("--format", render.format, "ascii | svg")->check(CLI::IsMember({"ascii", "svg"}));
    c_render->add_option("--out", render.out, "Output file (default stdout)");
    c_render->add_flag("--show-violations", render.show_violations, "Highlight collinear triples");

    std::string verify_in;
    auto* c_verify = app.add_subcommand("verify", "Check a grid file for collinear triples");
    c_verify->add_option("--in", verify_in, "Grid file")->required();

    int lines_n = 0;
    auto* c_lines = app.add_subcommand("lines", "Dump the line table for an n x n grid");
    c_lines->add_option("--n", lines_n, "Grid size")->required()->check(CLI::PositiveNumber);

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::CallForVersion&) {
        out << N3L_VERSION << "\n";
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return usage;
    }

    try {
        if (*c_solve) {
            apply_workers(solve.workers);
            return cmd_solve(solve, args, out);
        }
        if (*c_greedy) {
            apply_workers(greedy.workers);
            return cmd_greedy(greedy, args, out);
        }
        if (*c_boost) {
            apply_workers(boost.workers);
            return cmd_boost(boost, args, out);
        }
        if (*c_train) {
            apply_workers(rl_train.workers);
            return cmd_rl_train(rl_train, args, out);
        }
        if (*c_eval) {
            apply_workers(rl_eval.workers);
            return cmd_rl_eval(rl_eval, args, out);
        }
        if (*c_render) return cmd_render(render, args, out);
        if (*c_verify) return cmd_verify(verify_in, out);
        if (*c_lines) {
            dump_lines(out, LineTable(lines_n));
            return ok;
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return usage;
    } catch (const MissingInput& e) {
        err << "error: " << e.what() << "\n";
        return no_input;
    } catch (const LoadError& e) {
        err << "error: " << e.what() << "\n";
        return data;
    } catch (const DecodeError& e) {
        err << "error: " << e.what() << "\n";
        return data;
    } catch (const ContractViolation& e) {
        err << "error: " << e.what() << "\n";
        return data;
    } catch (const IoFailure& e) {
        err << "error: " << e.what() << "\n";
        return io;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return io;
    } catch (const std::runtime_error& e) {
        // Library writers signal I/O failures with plain runtime_error.
        err << "error: " << e.what() << "\n";
        return io;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return software;
    }
    return usage;
}

}  // namespace n3l::cli
