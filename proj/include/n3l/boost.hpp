#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "n3l/grid.hpp"
#include "n3l/lines.hpp"
#include "n3l/seq_model.hpp"
#include "n3l/top_pool.hpp"

namespace n3l {

enum class TokenOrder {
    sorted,      // ascending tokens
    generation,  // placement order as produced by greedy or repair
};

// All distinct symmetry images of each config (at most 8 per config), as
// token sequences in the requested order.
std::vector<TokenSeq> augment(const std::vector<GridConfig>& configs, TokenOrder order = TokenOrder::sorted);

struct BoostConfig {
    int n = 8;
    int generations = 5;
    int pool_capacity = 2000;
    int initial_pool = 2000;          // greedy saturations seeding the pool
    int candidates_per_generation = 2000;
    int train_steps = 400;            // per generation
    int batch = 32;
    double lr = 1e-3;
    double weight_decay = 0.1;
    double heldout_fraction = 0.1;
    double temperature = 1.0;
    bool retrain_from_scratch = false;
    TokenOrder token_order = TokenOrder::sorted;
    std::uint64_t seed = 0;
    ModelConfig model;

    static BoostConfig desk(int n);
    // Throws ContractViolation unless all counts are positive and sizes agree.
    void validate() const;
    nlohmann::json to_json() const;
    // Missing keys fall back to desk(n) values. Throws ContractViolation on bad values.
    static BoostConfig from_json(const nlohmann::json& j);
};

struct GenerationReport {
    int generation = 0;
    int best_score = 0;
    double mean_score = 0;
    int pool_size = 0;
    int candidates = 0;
    int accepted = 0;
    int candidate_best = 0;
    double train_loss_first = 0;
    double train_loss_last = 0;
    double test_loss_first = 0;
    double test_loss_last = 0;
    double wall_time = 0;

    nlohmann::json to_json() const;
    static GenerationReport from_json(const nlohmann::json& j);
};

// One PatternBoost run rooted at a checkpoint directory:
//   config.json, train_log.csv, gen_<t>/{pool.jsonl, order.jsonl, model.ckpt, train_log.csv, report.json}
// gen_0 holds the greedy-initialized pool. A generation is complete once its
// report.json exists; resume continues after the last complete generation.
class BoostRun {
public:
    // Fresh run. Writes config.json and gen_0.
    static BoostRun start(const BoostConfig& config, const std::string& dir);
    // Continues from the last complete generation in `dir`. Throws LoadError
    // when files are missing or corrupt.
    static BoostRun resume(const std::string& dir);

    BoostRun(BoostRun&&) noexcept;
    BoostRun& operator=(BoostRun&&) noexcept;
    ~BoostRun();

    const BoostConfig& config() const { return config_; }
    const TopPool& pool() const { return pool_; }
    const SeqModel& model() const { return *model_; }
    const std::vector<GenerationReport>& reports() const { return reports_; }
    int completed_generations() const { return static_cast<int>(reports_.size()) - 1; }
    bool finished() const { return completed_generations() >= config_.generations; }

    // augment -> train -> sample -> repair -> insert -> checkpoint. The report
    // is appended before the checkpoint is written, so it survives an I/O failure.
    const GenerationReport& run_generation();
    void run_all();

private:
    BoostRun(BoostConfig config, std::string dir);
    void insert(const GridConfig& config, int& accepted);
    std::vector<GridConfig> pool_configs() const;
    void save_generation(int generation) const;
    void rebuild_run_log() const;

    BoostConfig config_;
    std::string dir_;
    LineTable table_;
    TopPool pool_;
    std::unique_ptr<SeqModel> model_;
    nn::OptimizerState optimizer_;
    // canonical tokens -> placement order of the first config seen with that form
    std::map<std::vector<int>, std::vector<int>> order_;
    std::vector<GenerationReport> reports_;  // index 0 is the initial pool
    std::int64_t global_step_ = 0;
};

// Run a whole boost and return the final reports.
std::vector<GenerationReport> run_boost(const BoostConfig& config, const std::string& dir);

// Best of `budget` greedy saturations seeded exactly like the boost loop's
// initial pool (base seed, consecutive indices).
int greedy_baseline(int n, int budget, std::uint64_t seed);
// Total saturations a boost run spends: initial pool plus all candidates.
int boost_budget(const BoostConfig& config);

}  // namespace n3l
