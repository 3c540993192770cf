#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "n3l/grid.hpp"
#include "n3l/lines.hpp"
#include "n3l/nn.hpp"

namespace n3l {

struct ModelConfig {
    int n = 0;
    int vocab = 0;     // n*n grid cells plus the start token
    int layers = 2;
    int heads = 2;
    int dim = 32;
    int ff_dim = 128;
    int max_len = 0;   // start token + 2n cells
    double temperature = 1.0;

    int start_token() const { return n * n; }
    int context() const { return max_len - 1; }

    // Desk-scale defaults for grid size n. Throws ContractViolation for n < 1.
    static ModelConfig desk(int n);
    // The larger architecture: 4 layers, 4 heads, width 64.
    static ModelConfig full(int n);
    // Throws ContractViolation on inconsistent sizes.
    void validate() const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// Decoder-only transformer: token + learned positional embeddings, pre-norm
// blocks of causal multi-head attention and a GELU MLP, residual connections.
class SeqModel {
public:
    SeqModel(const ModelConfig& config, std::uint64_t init_seed);
    // Copies would share parameter storage.
    SeqModel(const SeqModel&) = delete;
    SeqModel& operator=(const SeqModel&) = delete;
    SeqModel(SeqModel&&) = default;
    SeqModel& operator=(SeqModel&&) = default;

    const ModelConfig& config() const { return config_; }
    nn::ParamList& params() { return params_; }
    const nn::ParamList& params() const { return params_; }

    // ids: [batch * seq] row-major, seq <= context(). Returns logits [batch * seq, vocab].
    nn::Tensor forward(const std::vector<int>& ids, int batch, int seq) const;

private:
    struct Block {
        nn::LayerNorm ln1;
        nn::Linear q, k, v, proj;
        nn::LayerNorm ln2;
        nn::Linear ff1, ff2;
    };

    ModelConfig config_;
    nn::ParamList params_;
    nn::Tensor tok_emb_;
    nn::Tensor pos_emb_;
    std::vector<Block> blocks_;
    nn::LayerNorm ln_f_;
    nn::Linear head_;
};

// Inputs are [start, t0, t1, ...] and targets [t0, t1, ...]; positions past
// the end of a sequence carry the start token as input and ignore_index as target.
struct TrainBatch {
    static constexpr int ignore_index = -1;
    int batch = 0;
    int seq = 0;
    std::vector<int> inputs;
    std::vector<int> targets;
};

// Throws ContractViolation when a sequence is too long or has out-of-vocab tokens.
TrainBatch make_batch(const ModelConfig& config, const std::vector<TokenSeq>& data, const std::vector<std::size_t>& rows);

struct TrainOptions {
    int steps = 2000;
    int batch = 32;
    double lr = 1e-3;
    double weight_decay = 0.1;
    int eval_interval = 100;  // held-out loss every this many steps, and at the first and last step
    int eval_limit = 512;     // held-out sequences used per evaluation
    std::uint64_t seed = 0;
};

struct TrainingLogRow {
    int step = 0;
    double train_loss = 0;
    double test_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainingLog {
    std::vector<TrainingLogRow> rows;

    double first_test_loss() const;
    double last_test_loss() const;
    void write_csv(std::ostream& out) const;
};

// Mean loss over the first `limit` sequences, without recording a tape.
double evaluate_loss(const SeqModel& model, const std::vector<TokenSeq>& data, int limit = 512);

// AdamW on uniformly drawn batches. The optimizer state is continued, not
// reset, so repeated calls resume training. Throws UsageError for an empty dataset.
TrainingLog train_steps(SeqModel& model, nn::OptimizerState& optimizer, const std::vector<TokenSeq>& train,
                        const std::vector<TokenSeq>& heldout, const TrainOptions& options);

// Autoregressive samples of exactly 2n grid tokens each. The start token is
// never emitted. temperature <= 0 takes the argmax. Stream i depends only on
// (seed, i), so results do not depend on the thread count.
std::vector<TokenSeq> sample(const SeqModel& model, int count, std::uint64_t seed, double temperature);

// Decodes in order, dropping duplicates, out-of-grid tokens and any token that
// would complete a collinear triple, then greedily saturates.
GridConfig decode_and_repair(const TokenSeq& seq, const LineTable& table, std::uint64_t seed);

void save_model(const std::string& path, const SeqModel& model, const nn::OptimizerState* optimizer,
                const nlohmann::json& meta = nlohmann::json::object());
// Rebuilds the model from the stored config and restores weights (and optimizer moments when given).
SeqModel load_model(const std::string& path, nn::OptimizerState* optimizer);

}  // namespace n3l
