#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "graphret/bm25.hpp"
#include "graphret/case_graph.hpp"
#include "graphret/model.hpp"
#include "graphret/training.hpp"

namespace graphret {

struct RankedList {
    std::string query_id;
    std::vector<std::pair<std::string, double>> entries;  // descending score, ties by asc id
};

struct EvalReport {
    double precision_at = 0.0;
    double recall_at = 0.0;
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
    double mrr_at = 0.0;
    double map = 0.0;
    double ndcg_at = 0.0;
    std::size_t cutoff = 5;
    std::size_t query_count = 0;
};

// Dense similarity ranking over the whole pool, query excluded from its own
// candidates.
RankedList rank_one_stage(ModelParams& params, const GraphStore& graphs,
                          const std::string& query_id, Similarity sim);

// Rerank BM25's top-k by model similarity; output is a permutation of the
// first-stage set.
RankedList rank_two_stage(ModelParams& params, const GraphStore& graphs,
                          const std::vector<CaseRecord>& corpus, const std::string& query_id,
                          const Bm25Index& index, std::size_t first_stage_k, Similarity sim);

// Ranks candidates by raw BM25 score (baseline).
RankedList rank_bm25(const std::vector<CaseRecord>& corpus, const std::string& query_id,
                     const Bm25Index& index);

// Queries with zero labeled relevant cases are excluded from the R@k, MAP and
// NDCG means but still contribute retrieved docs to the micro totals.
EvalReport evaluate(const std::vector<RankedList>& rankings, const RelevanceLabels& labels,
                    std::size_t cutoff = 5);

void save_rankings(const std::vector<RankedList>& rankings, const std::string& path);
std::vector<RankedList> load_rankings(const std::string& path);

std::string format_report(const EvalReport& r);
std::string report_to_json(const EvalReport& r);

}  // namespace graphret
