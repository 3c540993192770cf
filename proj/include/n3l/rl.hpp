#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "n3l/grid.hpp"
#include "n3l/lines.hpp"
#include "n3l/nn.hpp"
#include "n3l/tally.hpp"

namespace n3l::rl {

enum class MaskMode {
    occupied,  // only occupied cells are masked; violations are possible and penalized
    strict,    // cells that would complete a collinear triple are masked too
};

const char* mask_mode_name(MaskMode mode);
MaskMode parse_mask_mode(const std::string& name);  // throws ContractViolation

namespace reward {
constexpr double valid = 1.0;
constexpr double violation = -10.0;
constexpr double occupied = -1.0;
constexpr double clean_finish = 100.0;
constexpr double dirty_finish = 10.0;
}  // namespace reward

enum class StepKind { valid, violation, occupied };

struct EnvState {
    GridConfig grid;
    int k = 0;           // points placed
    int violations = 0;  // collinear triples created so far
    bool done = false;
    bool forced = false;  // strict-mode dead end before 2n points
};

struct StepResult {
    double reward = 0;
    bool done = false;
    StepKind kind = StepKind::valid;
    int new_triples = 0;
};

// Single grid episode. Rewards: +1 for a clean placement, -10 when the point
// completes one or more collinear triples (it is still placed), -1 for an
// occupied cell (no change). Reaching 2n points adds +100 with no violations
// so far, else +10, to that step's reward, and ends the episode.
class Env {
public:
    // Throws ContractViolation for n < 2.
    Env(int n, MaskMode mode);

    int n() const { return n_; }
    int actions() const { return n_ * n_; }
    MaskMode mode() const { return mode_; }
    const LineTable& table() const { return *table_; }
    const EnvState& state() const { return state_; }

    void reset();
    // Throws ContractViolation for actions outside [0, n*n) and UsageError once done.
    StepResult step(int action);
    // 1 = selectable.
    std::vector<std::uint8_t> mask() const;
    // Flattened occupancy as 0/1.
    void observe(real* out) const;

    // New triples a point at `cell` would complete (0 for occupied cells).
    int triples_completed(int cell) const;

private:
    int n_;
    MaskMode mode_;
    std::shared_ptr<const LineTable> table_;  // heap-held so the tally's pointer survives moves
    LineTally tally_;
    EnvState state_;
};

// ---- advantage estimation ----------------------------------------------------

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

// values has one more entry than rewards: the bootstrap value after the last
// step. Throws ContractViolation on length mismatch.
GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values, const std::vector<std::uint8_t>& dones,
              double gamma, double lambda);

// ---- losses --------------------------------------------------------------------

struct PpoLossInput {
    std::vector<int> actions;
    std::vector<std::uint8_t> masks;  // [batch * actions]
    std::vector<double> old_log_probs;
    std::vector<double> advantages;
    std::vector<double> returns;
};

struct PpoLossConfig {
    double clip = 0.2;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
};

struct PpoLosses {
    double clip_objective = 0;  // mean min(r A, clip(r) A)
    double value_loss = 0;      // mean (v - R)^2
    double entropy = 0;         // mean entropy of the masked policy
    double approx_kl = 0;
    double clip_fraction = 0;
    nn::Tensor total;           // -clip_objective + c1 value_loss - c2 entropy
};

// logits [batch, actions], values [batch, 1]. Masked logits get probability
// exactly zero. Gradients flow into logits and values.
PpoLosses ppo_losses(const nn::Tensor& logits, const nn::Tensor& values, const PpoLossInput& in, const PpoLossConfig& cfg);

// Masked softmax log-probabilities of one row, -inf for masked actions.
std::vector<double> masked_log_softmax(const real* logits, const std::uint8_t* mask, int actions);
double masked_entropy(const std::vector<double>& log_probs);

// ---- actor-critic ----------------------------------------------------------------

class ActorCritic {
public:
    ActorCritic(int n, const std::vector<int>& hidden, std::uint64_t seed);
    ActorCritic(const ActorCritic&) = delete;
    ActorCritic& operator=(const ActorCritic&) = delete;
    ActorCritic(ActorCritic&&) = default;
    ActorCritic& operator=(ActorCritic&&) = default;

    int n() const { return n_; }
    const std::vector<int>& hidden() const { return hidden_; }
    nn::ParamList& params() { return params_; }
    const nn::ParamList& params() const { return params_; }

    // obs [batch, n*n] -> logits [batch, n*n] and values [batch, 1].
    std::pair<nn::Tensor, nn::Tensor> forward(const nn::Tensor& obs) const;
    // Highest-probability unmasked action for one observation.
    int greedy_action(const Env& env) const;

private:
    int n_;
    std::vector<int> hidden_;
    nn::ParamList params_;
    std::vector<nn::Linear> pi_;
    std::vector<nn::Linear> vf_;
};

void save_policy(const std::string& path, const ActorCritic& policy, const nlohmann::json& meta = nlohmann::json::object());
// Throws LoadError when the file does not hold a policy, or when `expect_n`
// is positive and differs from the stored grid size.
ActorCritic load_policy(const std::string& path, int expect_n = 0);

// ---- evaluation ------------------------------------------------------------------

// Chooses an action for the current state; may ignore the mask.
using Policy = std::function<int(const Env& env, std::mt19937_64& rng)>;

Policy greedy_policy(const ActorCritic& model);
Policy uniform_policy();  // uniform over unmasked actions
// Replays `cells` in order, skipping ones already occupied.
Policy scripted_policy(std::vector<int> cells);

struct EvalMetrics {
    int episodes = 0;
    double success_rate = 0;
    double mean_points = 0;
    double mean_violations = 0;
    double mean_return = 0;
    double composite = 0;  // mean of points - 5 violations + 20 success

    nlohmann::json to_json() const;
};

// An episode succeeds when it reaches 2n points with no violations. Episodes
// are cut after 4 n^2 steps to bound policies that keep hitting occupied cells.
EvalMetrics evaluate(const Policy& policy, int n, MaskMode mode, int episodes, std::uint64_t seed);

// ---- training ----------------------------------------------------------------------

struct PpoConfig {
    int n = 3;
    MaskMode mask_mode = MaskMode::occupied;
    int envs = 8;
    int rollout = 256;
    int minibatch = 64;
    int epochs = 10;
    std::int64_t total_steps = 200000;
    std::vector<int> hidden{128, 128};
    double lr = 3e-4;
    std::int64_t lr_decay_interval = 50000;  // env steps per 0.8 decay
    double lr_decay_factor = 0.8;
    double gamma = 0.99;
    double lambda = 0.95;
    double clip = 0.2;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
    double max_grad_norm = 0.5;
    bool normalize_advantages = true;
    int eval_interval = 5;  // updates between evaluations
    int eval_episodes = 20;
    std::uint64_t seed = 0;

    static PpoConfig desk(int n);
    void validate() const;  // throws ContractViolation
    nlohmann::json to_json() const;
    static PpoConfig from_json(const nlohmann::json& j);
};

struct UpdateLogRow {
    int update = 0;
    std::int64_t env_steps = 0;
    double mean_return = 0;
    double success_rate = 0;
    double avg_violations = 0;
    double entropy = 0;
    double lr = 0;
    int episodes = 0;  // completed during the rollout
};

struct PpoResult {
    ActorCritic best;   // highest evaluation composite score
    ActorCritic final_policy;
    EvalMetrics best_eval;
    int best_update = 0;
    std::vector<UpdateLogRow> log;
    std::vector<std::pair<int, EvalMetrics>> evals;
    bool occupied_action_seen = false;  // any rollout action on an occupied cell
};

void write_update_log(std::ostream& out, const std::vector<UpdateLogRow>& rows);

PpoResult train_ppo(const PpoConfig& config);

}  // namespace n3l::rl
