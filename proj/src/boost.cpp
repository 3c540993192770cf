#include "n3l/boost.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "n3l/errors.hpp"
#include "n3l/greedy.hpp"
#include "n3l/seed.hpp"

namespace n3l {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Child seed streams.
enum : std::uint64_t { kInitSeed = 1, kSplitSeed = 2, kTrainSeed = 3, kSampleSeed = 4, kRepairSeed = 5, kModelSeed = 6 };

const char* order_name(TokenOrder o) { return o == TokenOrder::sorted ? "sorted" : "generation"; }

TokenOrder parse_order(const std::string& s) {
    if (s == "sorted") return TokenOrder::sorted;
    if (s == "generation") return TokenOrder::generation;
    throw ContractViolation("unknown token_order '" + s + "'");
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError(path, 0, "cannot open file");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw LoadError(path, 0, std::string("malformed JSON: ") + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::string gen_dir(const std::string& dir, int t) { return (fs::path(dir) / ("gen_" + std::to_string(t))).string(); }

}  // namespace

std::vector<TokenSeq> augment(const std::vector<GridConfig>& configs, TokenOrder order) {
    std::vector<TokenSeq> out;
    for (const auto& config : configs) {
        std::set<std::vector<int>> seen;
        for (const auto& s : Symmetry::all()) {
            const GridConfig image = apply_symmetry(config, s);
            if (!seen.insert(image.sorted_tokens()).second) continue;
            out.push_back(order == TokenOrder::sorted ? TokenSeq{config.n(), image.sorted_tokens()} : encode(image));
        }
    }
    return out;
}

// ---- config ------------------------------------------------------------------

BoostConfig BoostConfig::desk(int n) {
    BoostConfig c;
    c.n = n;
    c.model = ModelConfig::desk(n);
    return c;
}

void BoostConfig::validate() const {
    if (n < 1) throw ContractViolation("n must be positive");
    if (generations < 1 || pool_capacity < 1 || initial_pool < 1 || candidates_per_generation < 1 || train_steps < 1 || batch < 1)
        throw ContractViolation("boost counts must all be at least 1");
    if (!(heldout_fraction >= 0 && heldout_fraction < 1)) throw ContractViolation("heldout_fraction must be in [0, 1)");
    if (!(lr > 0)) throw ContractViolation("lr must be positive");
    if (model.n != n) throw ContractViolation("model n differs from boost n");
    model.validate();
}

json BoostConfig::to_json() const {
    return {{"n", n},
            {"generations", generations},
            {"pool_capacity", pool_capacity},
            {"initial_pool", initial_pool},
            {"candidates_per_generation", candidates_per_generation},
            {"train_steps", train_steps},
            {"batch", batch},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"heldout_fraction", heldout_fraction},
            {"temperature", temperature},
            {"retrain_from_scratch", retrain_from_scratch},
            {"token_order", order_name(token_order)},
            {"seed", seed},
            {"model", model.to_json()}};
}

BoostConfig BoostConfig::from_json(const json& j) {
    try {
        BoostConfig c = desk(j.at("n").get<int>());
        c.generations = j.value("generations", c.generations);
        c.pool_capacity = j.value("pool_capacity", c.pool_capacity);
        c.initial_pool = j.value("initial_pool", c.initial_pool);
        c.candidates_per_generation = j.value("candidates_per_generation", c.candidates_per_generation);
        c.train_steps = j.value("train_steps", c.train_steps);
        c.batch = j.value("batch", c.batch);
        c.lr = j.value("lr", c.lr);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.heldout_fraction = j.value("heldout_fraction", c.heldout_fraction);
        c.temperature = j.value("temperature", c.temperature);
        c.retrain_from_scratch = j.value("retrain_from_scratch", c.retrain_from_scratch);
        c.token_order = parse_order(j.value("token_order", std::string(order_name(c.token_order))));
        c.seed = j.value("seed", c.seed);
        if (j.contains("model")) {
            json m = j.at("model");
            m["n"] = c.n;
            c.model = ModelConfig::from_json(m);
        }
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ContractViolation(std::string("bad boost config: ") + e.what());
    }
}

json GenerationReport::to_json() const {
    return {{"generation", generation},
            {"best_score", best_score},
            {"mean_score", mean_score},
            {"pool_size", pool_size},
            {"candidates", candidates},
            {"accepted", accepted},
            {"candidate_best", candidate_best},
            {"train_loss_first", train_loss_first},
            {"train_loss_last", train_loss_last},
            {"test_loss_first", test_loss_first},
            {"test_loss_last", test_loss_last},
            {"wall_time_s", wall_time}};
}

GenerationReport GenerationReport::from_json(const json& j) {
    GenerationReport r;
    r.generation = j.at("generation").get<int>();
    r.best_score = j.at("best_score").get<int>();
    r.mean_score = j.at("mean_score").get<double>();
    r.pool_size = j.at("pool_size").get<int>();
    r.candidates = j.at("candidates").get<int>();
    r.accepted = j.at("accepted").get<int>();
    r.candidate_best = j.at("candidate_best").get<int>();
    // NaN losses are written as null
    auto num = [&](const char* key) { return j.at(key).is_null() ? std::nan("") : j.at(key).get<double>(); };
    r.train_loss_first = num("train_loss_first");
    r.train_loss_last = num("train_loss_last");
    r.test_loss_first = num("test_loss_first");
    r.test_loss_last = num("test_loss_last");
    r.wall_time = j.at("wall_time_s").get<double>();
    return r;
}

// ---- run -----------------------------------------------------------------------

BoostRun::BoostRun(BoostConfig config, std::string dir)
    : config_(std::move(config)), dir_(std::move(dir)), table_(config_.n), pool_(static_cast<std::size_t>(config_.pool_capacity)) {}

BoostRun::BoostRun(BoostRun&&) noexcept = default;
BoostRun& BoostRun::operator=(BoostRun&&) noexcept = default;
BoostRun::~BoostRun() = default;

void BoostRun::insert(const GridConfig& config, int& accepted) {
    if (pool_.insert(config) != InsertResult::accepted) return;
    ++accepted;
    order_.try_emplace(canonical_form(config).tokens, encode(config).tokens);
}

std::vector<GridConfig> BoostRun::pool_configs() const {
    std::vector<GridConfig> out;
    for (const auto& e : pool_.snapshot()) {
        auto it = order_.find(e.tokens.tokens);
        out.push_back(decode(it != order_.end() ? TokenSeq{e.tokens.n, it->second} : e.tokens));
    }
    return out;
}

BoostRun BoostRun::start(const BoostConfig& config, const std::string& dir) {
    config.validate();
    BoostRun run(config, dir);
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(dir);
    write_text((fs::path(dir) / "config.json").string(), config.to_json().dump(2) + "\n");

    run.model_ = std::make_unique<SeqModel>(config.model, mix_seed(config.seed, kModelSeed));
    GenerationReport r;
    for (const auto& g : generate_pool(run.table_, config.initial_pool, mix_seed(config.seed, kInitSeed))) {
        r.candidate_best = std::max(r.candidate_best, static_cast<int>(g.size()));
        run.insert(g, r.accepted);
    }
    r.candidates = config.initial_pool;
    r.best_score = run.pool_.max_score();
    r.pool_size = static_cast<int>(run.pool_.size());
    const auto snap = run.pool_.snapshot();
    r.mean_score = std::accumulate(snap.begin(), snap.end(), 0.0, [](double s, const PoolEntry& e) { return s + e.score; }) /
                   static_cast<double>(std::max<std::size_t>(snap.size(), 1));
    r.train_loss_first = r.train_loss_last = r.test_loss_first = r.test_loss_last = std::nan("");
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.reports_.push_back(r);
    run.save_generation(0);
    return run;
}

BoostRun BoostRun::resume(const std::string& dir) {
    const std::string config_path = (fs::path(dir) / "config.json").string();
    BoostConfig config;
    try {
        config = BoostConfig::from_json(read_json_file(config_path));
    } catch (const ContractViolation& e) {
        throw LoadError(config_path, 0, e.what());
    }
    BoostRun run(config, dir);
    int last = -1;
    while (fs::exists(fs::path(gen_dir(dir, last + 1)) / "report.json")) ++last;
    if (last < 0) throw LoadError(gen_dir(dir, 0), 0, "no completed generation to resume from");

    for (int t = 0; t <= last; ++t) {
        const std::string path = (fs::path(gen_dir(dir, t)) / "report.json").string();
        try {
            run.reports_.push_back(GenerationReport::from_json(read_json_file(path)));
        } catch (const json::exception& e) {
            throw LoadError(path, 0, std::string("malformed report: ") + e.what());
        }
    }
    const std::string g = gen_dir(dir, last);
    run.pool_ = load_pool_file((fs::path(g) / "pool.jsonl").string(), static_cast<std::size_t>(config.pool_capacity));

    const std::string order_path = (fs::path(g) / "order.jsonl").string();
    for (const auto& rec : read_jsonl_file(order_path)) {
        GridConfig c;
        try {
            c = decode(TokenSeq{rec.n, rec.tokens});
        } catch (const DecodeError& e) {
            throw LoadError(order_path, 0, e.what());
        }
        run.order_.try_emplace(canonical_form(c).tokens, rec.tokens);
    }

    const fs::path model_path = fs::path(g) / "model.ckpt";
    if (fs::exists(model_path)) {
        run.model_ = std::make_unique<SeqModel>(load_model(model_path.string(), &run.optimizer_));
        if (run.model_->config().to_json() != config.model.to_json())
            throw LoadError(model_path.string(), 0, "model config differs from run config");
    } else if (last == 0) {
        run.model_ = std::make_unique<SeqModel>(config.model, mix_seed(config.seed, kModelSeed));
    } else {
        throw LoadError(model_path.string(), 0, "missing model checkpoint");
    }
    run.global_step_ = static_cast<std::int64_t>(last) * config.train_steps;
    return run;
}

const GenerationReport& BoostRun::run_generation() {
    if (finished()) throw UsageError("boost run already finished");
    const auto t0 = std::chrono::steady_clock::now();
    const int gen = completed_generations() + 1;
    const auto g = static_cast<std::uint64_t>(gen);

    // Held-out split is by pool entry so symmetric images never straddle it.
    auto configs = pool_configs();
    std::mt19937_64 split_rng(mix_seed(config_.seed, kSplitSeed, g));
    std::shuffle(configs.begin(), configs.end(), split_rng);
    std::size_t n_test = static_cast<std::size_t>(config_.heldout_fraction * static_cast<double>(configs.size()));
    if (n_test >= configs.size()) n_test = configs.size() - 1;
    const std::vector<GridConfig> test_configs(configs.begin(), configs.begin() + static_cast<std::ptrdiff_t>(n_test));
    const std::vector<GridConfig> train_configs(configs.begin() + static_cast<std::ptrdiff_t>(n_test), configs.end());
    const auto train = augment(train_configs, config_.token_order);
    const auto test = augment(test_configs, config_.token_order);

    if (config_.retrain_from_scratch) {
        model_ = std::make_unique<SeqModel>(config_.model, mix_seed(config_.seed, kModelSeed, g));
        optimizer_ = {};
    }
    TrainOptions opts;
    opts.steps = config_.train_steps;
    opts.batch = config_.batch;
    opts.lr = config_.lr;
    opts.weight_decay = config_.weight_decay;
    opts.seed = mix_seed(config_.seed, kTrainSeed, g);
    TrainingLog log = train_steps(*model_, optimizer_, train, test, opts);
    for (auto& row : log.rows) row.step += static_cast<int>(global_step_);
    global_step_ += config_.train_steps;

    const auto seqs = sample(*model_, config_.candidates_per_generation, mix_seed(config_.seed, kSampleSeed, g), config_.temperature);
    std::vector<GridConfig> candidates(seqs.size());
    const std::uint64_t repair_seed = mix_seed(config_.seed, kRepairSeed, g);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::size_t i = 0; i < seqs.size(); ++i) candidates[i] = decode_and_repair(seqs[i], table_, repair_seed + i);

    GenerationReport r;
    r.generation = gen;
    r.candidates = static_cast<int>(candidates.size());
    for (const auto& c : candidates) {
        r.candidate_best = std::max(r.candidate_best, static_cast<int>(c.size()));
        insert(c, r.accepted);
    }
    const auto snap = pool_.snapshot();
    r.best_score = pool_.max_score();
    r.pool_size = static_cast<int>(snap.size());
    r.mean_score = std::accumulate(snap.begin(), snap.end(), 0.0, [](double s, const PoolEntry& e) { return s + e.score; }) /
                   static_cast<double>(std::max<std::size_t>(snap.size(), 1));
    r.train_loss_first = log.rows.front().train_loss;
    r.train_loss_last = log.rows.back().train_loss;
    r.test_loss_first = log.first_test_loss();
    r.test_loss_last = log.last_test_loss();
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    reports_.push_back(r);

    save_generation(gen);
    std::ostringstream csv;
    log.write_csv(csv);
    write_text((fs::path(gen_dir(dir_, gen)) / "train_log.csv").string(), csv.str());
    write_text((fs::path(gen_dir(dir_, gen)) / "report.json").string(), r.to_json().dump(2) + "\n");
    rebuild_run_log();
    return reports_.back();
}

void BoostRun::save_generation(int generation) const {
    const std::string g = gen_dir(dir_, generation);
    fs::create_directories(g);
    save_pool_file((fs::path(g) / "pool.jsonl").string(), pool_);
    std::vector<PoolRecord> orders;
    for (const auto& e : pool_.snapshot()) {
        auto it = order_.find(e.tokens.tokens);
        orders.push_back({e.tokens.n, e.score, it != order_.end() ? it->second : e.tokens.tokens});
    }
    write_jsonl_file((fs::path(g) / "order.jsonl").string(), orders);
    if (generation > 0) save_model((fs::path(g) / "model.ckpt").string(), *model_, &optimizer_, {{"generation", generation}});
    if (generation == 0) write_text((fs::path(g) / "report.json").string(), reports_.front().to_json().dump(2) + "\n");
}

void BoostRun::rebuild_run_log() const {
    std::string text = "step,train_loss,test_loss\n";
    for (int t = 1; t <= completed_generations(); ++t) {
        std::ifstream in(fs::path(gen_dir(dir_, t)) / "train_log.csv");
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) text += line + "\n";
    }
    write_text((fs::path(dir_) / "train_log.csv").string(), text);
}

void BoostRun::run_all() {
    while (!finished()) run_generation();
}

std::vector<GenerationReport> run_boost(const BoostConfig& config, const std::string& dir) {
    BoostRun run = BoostRun::start(config, dir);
    run.run_all();
    return run.reports();
}

int greedy_baseline(int n, int budget, std::uint64_t seed) {
    int best = 0;
    for (const auto& g : generate_pool(n, budget, mix_seed(seed, kInitSeed))) best = std::max(best, static_cast<int>(g.size()));
    return best;
}

int boost_budget(const BoostConfig& config) {
    return config.initial_pool + config.generations * config.candidates_per_generation;
}

}  // namespace n3l
