#include "graphret/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace graphret {

namespace {

double plain_similarity(const std::vector<double>& a, const std::vector<double>& b,
                        Similarity sim) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
    if (sim == Similarity::dot) return d;
    double na = 0.0, nb = 0.0;
    for (double x : a) na += x * x;
    for (double x : b) nb += x * x;
    double denom = std::sqrt(na * nb);
    return denom > 0.0 ? d / denom : 0.0;
}

void sort_ranked(std::vector<std::pair<std::string, double>>& entries) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
}

}  // namespace

RankedList rank_one_stage(ModelParams& params, const GraphStore& graphs,
                          const std::string& query_id, Similarity sim) {
    std::size_t qi = graphs.index_of(query_id);
    std::vector<double> h_q = case_representation_eval(params, graphs.fact[qi], graphs.issue[qi]);
    RankedList out;
    out.query_id = query_id;
    for (std::size_t i = 0; i < graphs.case_ids.size(); ++i) {
        if (i == qi) continue;
        std::vector<double> h_d = case_representation_eval(params, graphs.fact[i], graphs.issue[i]);
        out.entries.emplace_back(graphs.case_ids[i], plain_similarity(h_q, h_d, sim));
    }
    sort_ranked(out.entries);
    return out;
}

RankedList rank_two_stage(ModelParams& params, const GraphStore& graphs,
                          const std::vector<CaseRecord>& corpus, const std::string& query_id,
                          const Bm25Index& index, std::size_t first_stage_k, Similarity sim) {
    std::size_t qi = graphs.index_of(query_id);
    std::string query_text = corpus[qi].fact_text + " " + corpus[qi].issue_text;
    auto first_stage = index.top_k(query_text, first_stage_k, {query_id});
    std::vector<double> h_q = case_representation_eval(params, graphs.fact[qi], graphs.issue[qi]);
    RankedList out;
    out.query_id = query_id;
    for (const auto& [cid, bm25_score] : first_stage) {
        std::size_t ci = graphs.index_of(cid);
        std::vector<double> h_d = case_representation_eval(params, graphs.fact[ci], graphs.issue[ci]);
        out.entries.emplace_back(cid, plain_similarity(h_q, h_d, sim));
    }
    sort_ranked(out.entries);
    return out;
}

RankedList rank_bm25(const std::vector<CaseRecord>& corpus, const std::string& query_id,
                     const Bm25Index& index) {
    const CaseRecord* query = nullptr;
    for (const CaseRecord& c : corpus)
        if (c.case_id == query_id) query = &c;
    if (!query) throw std::out_of_range("rank_bm25: unknown query id " + query_id);
    RankedList out;
    out.query_id = query_id;
    out.entries = index.top_k(query->fact_text + " " + query->issue_text, corpus.size(), {query_id});
    return out;
}

EvalReport evaluate(const std::vector<RankedList>& rankings, const RelevanceLabels& labels,
                    std::size_t cutoff) {
    EvalReport r;
    r.cutoff = cutoff;
    r.query_count = rankings.size();
    if (rankings.empty()) return r;

    double sum_p = 0.0, sum_r = 0.0, sum_mrr = 0.0, sum_map = 0.0, sum_ndcg = 0.0;
    std::size_t with_relevant = 0;
    std::size_t micro_tp = 0, micro_fp = 0, micro_fn = 0;

    for (const RankedList& rl : rankings) {
        const std::vector<std::string>* rel = labels.find(rl.query_id);
        if (!rel) throw std::invalid_argument("evaluate: no labels for query " + rl.query_id);
        std::set<std::string> relevant(rel->begin(), rel->end());

        std::size_t k = std::min(cutoff, rl.entries.size());
        std::size_t hits = 0;
        double mrr = 0.0, dcg = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            if (relevant.count(rl.entries[i].first)) {
                ++hits;
                if (mrr == 0.0) mrr = 1.0 / static_cast<double>(i + 1);
                dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
            }
        }
        micro_tp += hits;
        micro_fp += k - hits;
        micro_fn += relevant.size() - hits;

        sum_p += static_cast<double>(hits) / static_cast<double>(cutoff);
        sum_mrr += mrr;

        if (!relevant.empty()) {
            ++with_relevant;
            sum_r += static_cast<double>(hits) / static_cast<double>(relevant.size());

            // average precision over the full ranking, binary relevance
            std::size_t found = 0;
            double ap = 0.0;
            for (std::size_t i = 0; i < rl.entries.size(); ++i) {
                if (relevant.count(rl.entries[i].first)) {
                    ++found;
                    ap += static_cast<double>(found) / static_cast<double>(i + 1);
                }
            }
            sum_map += ap / static_cast<double>(relevant.size());

            double idcg = 0.0;
            std::size_t ideal = std::min(relevant.size(), cutoff);
            for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
            sum_ndcg += dcg / idcg;
        }
    }

    double n = static_cast<double>(rankings.size());
    r.precision_at = sum_p / n;
    r.mrr_at = sum_mrr / n;
    if (with_relevant > 0) {
        double nr = static_cast<double>(with_relevant);
        r.recall_at = sum_r / nr;
        r.map = sum_map / nr;
        r.ndcg_at = sum_ndcg / nr;
    }
    double micro_p = micro_tp + micro_fp > 0
                         ? static_cast<double>(micro_tp) / static_cast<double>(micro_tp + micro_fp)
                         : 0.0;
    double micro_r = micro_tp + micro_fn > 0
                         ? static_cast<double>(micro_tp) / static_cast<double>(micro_tp + micro_fn)
                         : 0.0;
    r.micro_f1 = micro_p + micro_r > 0.0 ? 2.0 * micro_p * micro_r / (micro_p + micro_r) : 0.0;
    // leaderboard convention: harmonic mean of the macro-averaged P and R
    r.macro_f1 = r.precision_at + r.recall_at > 0.0
                     ? 2.0 * r.precision_at * r.recall_at / (r.precision_at + r.recall_at)
                     : 0.0;
    return r;
}

void save_rankings(const std::vector<RankedList>& rankings, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_rankings: cannot open " + path);
    for (const RankedList& rl : rankings) {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& [id, score] : rl.entries) entries.push_back({id, score});
        out << nlohmann::json{{"query_id", rl.query_id}, {"ranking", entries}}.dump() << "\n";
    }
}

std::vector<RankedList> load_rankings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_rankings: cannot open " + path);
    std::vector<RankedList> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            nlohmann::json rec = nlohmann::json::parse(line);
            RankedList rl;
            rl.query_id = rec.at("query_id").get<std::string>();
            for (const auto& e : rec.at("ranking")) {
                rl.entries.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
            }
            out.push_back(std::move(rl));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad ranking record: " +
                                     e.what());
        }
    }
    return out;
}

std::string format_report(const EvalReport& r) {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    std::string k = std::to_string(r.cutoff);
    os << "queries: " << r.query_count << "\n"
       << "P@" << k << ":     " << r.precision_at << "\n"
       << "R@" << k << ":     " << r.recall_at << "\n"
       << "Mi-F1:   " << r.micro_f1 << "\n"
       << "Ma-F1:   " << r.macro_f1 << "\n"
       << "MRR@" << k << ":   " << r.mrr_at << "\n"
       << "MAP:     " << r.map << "\n"
       << "NDCG@" << k << ":  " << r.ndcg_at << "\n";
    return os.str();
}

std::string report_to_json(const EvalReport& r) {
    nlohmann::json j{{"cutoff", r.cutoff},     {"queries", r.query_count},
                     {"precision", r.precision_at}, {"recall", r.recall_at},
                     {"micro_f1", r.micro_f1}, {"macro_f1", r.macro_f1},
                     {"mrr", r.mrr_at},        {"map", r.map},
                     {"ndcg", r.ndcg_at}};
    return j.dump();
}

}  // namespace graphret
