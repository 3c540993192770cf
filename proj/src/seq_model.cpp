#include "n3l/seq_model.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "n3l/errors.hpp"
#include "n3l/greedy.hpp"
#include "n3l/seed.hpp"
#include "n3l/tally.hpp"

namespace n3l {

using nn::Tensor;

ModelConfig ModelConfig::desk(int n) {
    if (n < 1) throw ContractViolation("grid size must be positive");
    ModelConfig c;
    c.n = n;
    c.vocab = n * n + 1;
    c.max_len = 2 * n + 1;
    return c;
}

ModelConfig ModelConfig::full(int n) {
    ModelConfig c = desk(n);
    c.layers = 4;
    c.heads = 4;
    c.dim = 64;
    c.ff_dim = 256;
    return c;
}

void ModelConfig::validate() const {
    if (n < 1) throw ContractViolation("grid size must be positive");
    if (vocab != n * n + 1) throw ContractViolation("vocab must be n*n + 1");
    if (max_len != 2 * n + 1) throw ContractViolation("max_len must be 2n + 1");
    if (layers < 1 || heads < 1 || dim < 1 || ff_dim < 1) throw ContractViolation("model sizes must be positive");
    if (dim % heads != 0) throw ContractViolation("dim must be divisible by heads");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"n", n},     {"vocab", vocab},   {"layers", layers},   {"heads", heads},
            {"dim", dim}, {"ff_dim", ff_dim}, {"max_len", max_len}, {"temperature", temperature}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c = desk(j.at("n").get<int>());
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.dim = j.value("dim", c.dim);
    c.ff_dim = j.value("ff_dim", 4 * c.dim);
    c.temperature = j.value("temperature", c.temperature);
    if (j.contains("vocab")) c.vocab = j.at("vocab").get<int>();
    if (j.contains("max_len")) c.max_len = j.at("max_len").get<int>();
    c.validate();
    return c;
}

SeqModel::SeqModel(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(init_seed);
    const real std = real{0.02};
    const int d = config_.dim;
    tok_emb_ = params_.add("tok_emb", nn::normal_init({config_.vocab, d}, std, rng));
    pos_emb_ = params_.add("pos_emb", nn::normal_init({config_.max_len, d}, std, rng));
    for (int l = 0; l < config_.layers; ++l) {
        const std::string p = "block" + std::to_string(l);
        Block b;
        b.ln1 = nn::LayerNorm::create(params_, p + ".ln1", d);
        b.q = nn::Linear::create(params_, p + ".q", d, d, std, rng);
        b.k = nn::Linear::create(params_, p + ".k", d, d, std, rng);
        b.v = nn::Linear::create(params_, p + ".v", d, d, std, rng);
        b.proj = nn::Linear::create(params_, p + ".proj", d, d, std, rng);
        b.ln2 = nn::LayerNorm::create(params_, p + ".ln2", d);
        b.ff1 = nn::Linear::create(params_, p + ".ff1", d, config_.ff_dim, std, rng);
        b.ff2 = nn::Linear::create(params_, p + ".ff2", config_.ff_dim, d, std, rng);
        blocks_.push_back(b);
    }
    ln_f_ = nn::LayerNorm::create(params_, "ln_f", d);
    head_ = nn::Linear::create(params_, "head", d, config_.vocab, std, rng);
}

Tensor SeqModel::forward(const std::vector<int>& ids, int batch, int seq) const {
    if (seq < 1 || seq > config_.context()) throw DimensionError("sequence length " + std::to_string(seq) + " outside [1, context]");
    if (static_cast<int>(ids.size()) != batch * seq) throw DimensionError("ids length does not equal batch * seq");
    std::vector<int> positions(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i % static_cast<std::size_t>(seq));
    Tensor x = nn::add(nn::embedding(tok_emb_, ids), nn::embedding(pos_emb_, positions));
    for (const Block& b : blocks_) {
        Tensor h = b.ln1(x);
        Tensor att = nn::causal_attention(b.q(h), b.k(h), b.v(h), batch, seq, config_.heads);
        x = nn::add(x, b.proj(att));
        x = nn::add(x, b.ff2(nn::gelu(b.ff1(b.ln2(x)))));
    }
    return head_(ln_f_(x));
}

TrainBatch make_batch(const ModelConfig& config, const std::vector<TokenSeq>& data, const std::vector<std::size_t>& rows) {
    TrainBatch b;
    b.batch = static_cast<int>(rows.size());
    b.seq = config.context();
    const int cells = config.n * config.n;
    b.inputs.assign(rows.size() * static_cast<std::size_t>(b.seq), config.start_token());
    b.targets.assign(b.inputs.size(), TrainBatch::ignore_index);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& tokens = data.at(rows[r]).tokens;
        if (static_cast<int>(tokens.size()) > b.seq)
            throw ContractViolation("sequence of " + std::to_string(tokens.size()) + " tokens exceeds context " + std::to_string(b.seq));
        int* in = b.inputs.data() + r * static_cast<std::size_t>(b.seq);
        int* tg = b.targets.data() + r * static_cast<std::size_t>(b.seq);
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            if (tokens[t] < 0 || tokens[t] >= cells) throw ContractViolation("token " + std::to_string(tokens[t]) + " outside the grid");
            tg[t] = tokens[t];
            if (t + 1 < static_cast<std::size_t>(b.seq)) in[t + 1] = tokens[t];
        }
    }
    return b;
}

double TrainingLog::first_test_loss() const {
    for (const auto& r : rows)
        if (!std::isnan(r.test_loss)) return r.test_loss;
    return std::numeric_limits<double>::quiet_NaN();
}

double TrainingLog::last_test_loss() const {
    for (auto it = rows.rbegin(); it != rows.rend(); ++it)
        if (!std::isnan(it->test_loss)) return it->test_loss;
    return std::numeric_limits<double>::quiet_NaN();
}

void TrainingLog::write_csv(std::ostream& out) const {
    out << "step,train_loss,test_loss\n";
    for (const auto& r : rows) {
        out << r.step << ',' << r.train_loss << ',';
        if (!std::isnan(r.test_loss)) out << r.test_loss;
        out << '\n';
    }
}

double evaluate_loss(const SeqModel& model, const std::vector<TokenSeq>& data, int limit) {
    if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
    nn::NoGradGuard no_grad;
    const std::size_t total = std::min(data.size(), static_cast<std::size_t>(std::max(limit, 1)));
    double weighted = 0;
    long counted = 0;
    constexpr std::size_t chunk = 128;
    for (std::size_t start = 0; start < total; start += chunk) {
        std::vector<std::size_t> rows;
        for (std::size_t i = start; i < std::min(total, start + chunk); ++i) rows.push_back(i);
        const TrainBatch b = make_batch(model.config(), data, rows);
        const long live = std::count_if(b.targets.begin(), b.targets.end(), [](int t) { return t != TrainBatch::ignore_index; });
        if (live == 0) continue;
        const Tensor logits = model.forward(b.inputs, b.batch, b.seq);
        weighted += nn::cross_entropy(logits, b.targets, TrainBatch::ignore_index).item() * static_cast<double>(live);
        counted += live;
    }
    return counted ? weighted / static_cast<double>(counted) : std::numeric_limits<double>::quiet_NaN();
}

TrainingLog train_steps(SeqModel& model, nn::OptimizerState& optimizer, const std::vector<TokenSeq>& train,
                        const std::vector<TokenSeq>& heldout, const TrainOptions& options) {
    if (train.empty()) throw UsageError("train_steps needs a non-empty dataset");
    if (options.batch < 1) throw ContractViolation("batch size must be positive");
    optimizer.config.lr = static_cast<real>(options.lr);
    optimizer.config.weight_decay = static_cast<real>(options.weight_decay);
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    TrainingLog log;
    for (int step = 0; step < options.steps; ++step) {
        TrainingLogRow row;
        row.step = step;
        const bool eval = !heldout.empty() &&
                          (step == 0 || step + 1 == options.steps || (options.eval_interval > 0 && step % options.eval_interval == 0));
        if (eval) row.test_loss = evaluate_loss(model, heldout, options.eval_limit);

        std::vector<std::size_t> rows(static_cast<std::size_t>(options.batch));
        for (auto& r : rows) r = pick(rng);
        const TrainBatch b = make_batch(model.config(), train, rows);
        model.params().zero_grad();
        Tensor loss = nn::cross_entropy(model.forward(b.inputs, b.batch, b.seq), b.targets, TrainBatch::ignore_index);
        row.train_loss = loss.item();
        loss.backward();
        nn::adamw_step(model.params(), optimizer);
        log.rows.push_back(row);
    }
    if (!heldout.empty() && options.steps > 0) log.rows.back().test_loss = evaluate_loss(model, heldout, options.eval_limit);
    return log;
}

namespace {

void sample_chunk(const SeqModel& model, std::vector<TokenSeq>& out, int begin, int end, std::uint64_t seed, double temperature) {
    nn::NoGradGuard no_grad;
    const ModelConfig& c = model.config();
    const int length = 2 * c.n;
    const int batch = end - begin;
    std::vector<std::mt19937_64> rngs;
    for (int i = begin; i < end; ++i) rngs.emplace_back(mix_seed(seed, static_cast<std::uint64_t>(i)));
    std::vector<std::vector<int>> prefix(static_cast<std::size_t>(batch), std::vector<int>{c.start_token()});
    std::vector<double> weights(static_cast<std::size_t>(c.vocab));
    for (int t = 0; t < length; ++t) {
        const int seq = t + 1;
        std::vector<int> ids;
        ids.reserve(static_cast<std::size_t>(batch) * seq);
        for (const auto& p : prefix) ids.insert(ids.end(), p.begin(), p.end());
        const Tensor logits = model.forward(ids, batch, seq);
        for (int b = 0; b < batch; ++b) {
            const real* row = logits.data().data() + (static_cast<std::size_t>(b) * seq + t) * c.vocab;
            const int cells = c.vocab - 1;  // the start token is never sampled
            int token = 0;
            if (temperature <= 0) {
                token = static_cast<int>(std::max_element(row, row + cells) - row);
            } else {
                const real mx = *std::max_element(row, row + cells);
                for (int j = 0; j < cells; ++j) weights[static_cast<std::size_t>(j)] = std::exp((row[j] - mx) / temperature);
                std::discrete_distribution<int> dist(weights.begin(), weights.begin() + cells);
                token = dist(rngs[static_cast<std::size_t>(b)]);
            }
            prefix[static_cast<std::size_t>(b)].push_back(token);
        }
    }
    for (int b = 0; b < batch; ++b) {
        auto& p = prefix[static_cast<std::size_t>(b)];
        out[static_cast<std::size_t>(begin + b)] = TokenSeq{c.n, std::vector<int>(p.begin() + 1, p.end())};
    }
}

}  // namespace

std::vector<TokenSeq> sample(const SeqModel& model, int count, std::uint64_t seed, double temperature) {
    if (count <= 0) return {};
    std::vector<TokenSeq> out(static_cast<std::size_t>(count));
    constexpr int chunk = 64;
    const int chunks = (count + chunk - 1) / chunk;
#pragma omp parallel for schedule(dynamic)
    for (int ci = 0; ci < chunks; ++ci) sample_chunk(model, out, ci * chunk, std::min(count, (ci + 1) * chunk), seed, temperature);
    return out;
}

GridConfig decode_and_repair(const TokenSeq& seq, const LineTable& table, std::uint64_t seed) {
    const int n = table.n();
    GridConfig config(n);
    LineTally tally(table);
    for (int token : seq.tokens) {
        if (token < 0 || token >= n * n || config.occupied(token) || !tally.can_place(token)) continue;
        config.add(from_token(token, n));
        tally.place(token);
    }
    return greedy_saturate(config, table, seed);
}

void save_model(const std::string& path, const SeqModel& model, const nn::OptimizerState* optimizer, const nlohmann::json& meta) {
    nlohmann::json m = meta;
    m["model"] = model.config().to_json();
    nn::save_checkpoint(path, model.params(), optimizer, m);
}

SeqModel load_model(const std::string& path, nn::OptimizerState* optimizer) {
    const auto meta = nn::read_checkpoint_meta(path);
    if (!meta.contains("model")) throw LoadError(path, 0, "checkpoint has no model config");
    ModelConfig config;
    try {
        config = ModelConfig::from_json(meta.at("model"));
    } catch (const std::exception& e) {
        throw LoadError(path, 0, std::string("bad model config: ") + e.what());
    }
    SeqModel model(config, 0);
    nn::load_checkpoint(path, model.params(), optimizer);
    return model;
}

}  // namespace n3l
