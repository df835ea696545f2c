#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphret/bm25.hpp"
#include "graphret/case_graph.hpp"
#include "graphret/model.hpp"
#include "graphret/tensor.hpp"

namespace graphret {

// Raised when training hits a non-finite value; mapped to its own exit code
// by the CLI.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Similarity { dot, cosine };

std::string similarity_name(Similarity s);
Similarity similarity_from_name(const std::string& name);

struct TrainConfig {
    double tau = 0.1;
    std::size_t n_easy = 1;
    std::size_t m_hard = 5;
    std::size_t batch_size = 16;
    double learning_rate = 2e-3;
    double weight_decay = 1e-5;
    std::size_t epochs = 20;
    std::uint64_t seed = 0;
    Similarity similarity = Similarity::dot;
};

Var similarity_score(Var a, Var b, Similarity sim);

// Contrastive loss over precomputed similarities-through-the-tape. With no
// negatives at all the loss is exactly zero.
Var contrastive_loss(Var h_query, Var h_positive, const std::vector<Var>& easy_negatives,
                     const std::vector<Var>& hard_negatives, double tau, Similarity sim);

// Top BM25-scored candidates for the query text that are neither the query
// itself nor labeled relevant, truncated to m. Warns (via the optional sink)
// when fewer than m survive the filter.
std::vector<std::string> mine_hard_negatives(const std::string& query_id,
                                             const std::string& query_text,
                                             const Bm25Index& index, std::size_t m,
                                             const std::vector<std::string>& relevant_ids,
                                             const std::function<void(const std::string&)>& warn = {});

// Decoupled weight decay Adam over ModelParams::named_matrices() order.
class AdamOptimizer {
public:
    AdamOptimizer(double learning_rate, double weight_decay, double beta1 = 0.9,
                  double beta2 = 0.999, double epsilon = 1e-8);

    // grads aligned with params.named_matrices()
    void step(ModelParams& params, const std::vector<Mat>& grads);

private:
    double lr_, wd_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Mat> m_, v_;
};

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::size_t queries_trained = 0;
    std::size_t queries_skipped = 0;
};

// Graphs for every case, built once and reused across epochs.
struct GraphStore {
    std::vector<std::string> case_ids;
    std::vector<CaseGraph> fact;   // aligned with case_ids
    std::vector<CaseGraph> issue;  // aligned with case_ids

    static GraphStore build(const std::vector<CaseRecord>& corpus, const TextEncoder& encoder,
                            const GraphBuildOptions& opts = {});
    std::size_t index_of(const std::string& case_id) const;  // throws if absent
};

class Trainer {
public:
    Trainer(ModelParams& params, const GraphStore& graphs, const std::vector<CaseRecord>& corpus,
            const RelevanceLabels& labels, TrainConfig config);

    EpochStats run_epoch(std::size_t epoch);
    std::vector<EpochStats> run(const std::function<void(const EpochStats&)>& on_epoch = {});

private:
    ModelParams& params_;
    const GraphStore& graphs_;
    const std::vector<CaseRecord>& corpus_;
    const RelevanceLabels& labels_;
    TrainConfig config_;
    Bm25Index bm25_;
    AdamOptimizer adam_;
    std::uint64_t rng_state_;
    std::vector<std::vector<std::string>> hard_negatives_;  // per labeled query

    std::uint64_t next_rand();
};

}  // namespace graphret
