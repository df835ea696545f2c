#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "graphret/eval.hpp"
#include "graphret/synth.hpp"

using namespace graphret;

namespace {

// Straight-line brute-force reference for every metric. Shares no code with
// evaluate(); kept deliberately naive.
EvalReport reference_evaluate(const std::vector<RankedList>& rankings,
                              const RelevanceLabels& labels, std::size_t cutoff) {
    EvalReport r;
    r.cutoff = cutoff;
    r.query_count = rankings.size();
    if (rankings.empty()) return r;

    double p_sum = 0, r_sum = 0, mrr_sum = 0, map_sum = 0, ndcg_sum = 0;
    double tp = 0, fp = 0, fn = 0;
    std::size_t n_with_rel = 0;

    for (const RankedList& rl : rankings) {
        std::set<std::string> rel(labels.find(rl.query_id)->begin(),
                                  labels.find(rl.query_id)->end());
        std::vector<bool> is_rel;
        for (const auto& [id, score] : rl.entries) is_rel.push_back(rel.count(id) > 0);

        double hits = 0;
        for (std::size_t i = 0; i < rl.entries.size() && i < cutoff; ++i) {
            if (is_rel[i]) hits += 1;
        }
        p_sum += hits / static_cast<double>(cutoff);
        tp += hits;
        fp += static_cast<double>(std::min<std::size_t>(cutoff, rl.entries.size())) - hits;
        fn += static_cast<double>(rel.size()) - hits;

        double rr = 0;
        for (std::size_t i = 0; i < rl.entries.size() && i < cutoff; ++i) {
            if (is_rel[i]) {
                rr = 1.0 / (static_cast<double>(i) + 1.0);
                break;
            }
        }
        mrr_sum += rr;

        if (!rel.empty()) {
            n_with_rel += 1;
            r_sum += hits / static_cast<double>(rel.size());

            double ap = 0, seen = 0;
            for (std::size_t i = 0; i < rl.entries.size(); ++i) {
                if (is_rel[i]) {
                    seen += 1;
                    ap += seen / (static_cast<double>(i) + 1.0);
                }
            }
            map_sum += ap / static_cast<double>(rel.size());

            double dcg = 0;
            for (std::size_t i = 0; i < rl.entries.size() && i < cutoff; ++i) {
                if (is_rel[i]) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
            }
            double idcg = 0;
            for (std::size_t i = 0; i < std::min(rel.size(), cutoff); ++i) {
                idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
            }
            ndcg_sum += dcg / idcg;
        }
    }

    double n = static_cast<double>(rankings.size());
    r.precision_at = p_sum / n;
    r.mrr_at = mrr_sum / n;
    if (n_with_rel > 0) {
        r.recall_at = r_sum / n_with_rel;
        r.map = map_sum / n_with_rel;
        r.ndcg_at = ndcg_sum / n_with_rel;
    }
    double micro_p = (tp + fp) > 0 ? tp / (tp + fp) : 0;
    double micro_r = (tp + fn) > 0 ? tp / (tp + fn) : 0;
    r.micro_f1 = (micro_p + micro_r) > 0 ? 2 * micro_p * micro_r / (micro_p + micro_r) : 0;
    r.macro_f1 = (r.precision_at + r.recall_at) > 0
                     ? 2 * r.precision_at * r.recall_at / (r.precision_at + r.recall_at)
                     : 0;
    return r;
}

RankedList make_ranking(const std::string& qid, const std::vector<std::string>& ids) {
    RankedList rl;
    rl.query_id = qid;
    double score = static_cast<double>(ids.size());
    for (const std::string& id : ids) rl.entries.emplace_back(id, score--);
    return rl;
}

}  // namespace

TEST_CASE("perfect ranking with 2 relevant out of 5 retrieved") {
    RelevanceLabels labels;
    labels.entries.emplace_back("q", std::vector<std::string>{"a", "b"});
    auto rl = make_ranking("q", {"a", "b", "x", "y", "z"});
    EvalReport r = evaluate({rl}, labels, 5);
    CHECK(r.recall_at == doctest::Approx(1.0));
    CHECK(r.precision_at == doctest::Approx(0.4));
    CHECK(r.mrr_at == doctest::Approx(1.0));
    CHECK(r.map == doctest::Approx(1.0));
    CHECK(r.ndcg_at == doctest::Approx(1.0));
}

TEST_CASE("first relevant at rank 2 contributes MRR 0.5") {
    RelevanceLabels labels;
    labels.entries.emplace_back("q", std::vector<std::string>{"a"});
    auto rl = make_ranking("q", {"x", "a", "y", "z", "w"});
    EvalReport r = evaluate({rl}, labels, 5);
    CHECK(r.mrr_at == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("NDCG hand fixture: relevant at ranks 1 and 3") {
    RelevanceLabels labels;
    labels.entries.emplace_back("q", std::vector<std::string>{"a", "b"});
    auto rl = make_ranking("q", {"a", "x", "b", "y", "z"});
    EvalReport r = evaluate({rl}, labels, 5);
    double expected = (1.0 + 1.0 / std::log2(4.0)) / (1.0 + 1.0 / std::log2(3.0));
    CHECK(expected == doctest::Approx(0.91972).epsilon(1e-4));
    CHECK(r.ndcg_at == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("queries with zero relevant are excluded from R/MAP/NDCG means") {
    RelevanceLabels labels;
    labels.entries.emplace_back("q1", std::vector<std::string>{"a"});
    labels.entries.emplace_back("q2", std::vector<std::string>{});
    auto r1 = make_ranking("q1", {"a", "x"});
    auto r2 = make_ranking("q2", {"x", "y"});
    EvalReport r = evaluate({r1, r2}, labels, 5);
    CHECK(r.recall_at == doctest::Approx(1.0));    // only q1 counted
    CHECK(r.map == doctest::Approx(1.0));
    CHECK(r.ndcg_at == doctest::Approx(1.0));
    CHECK(r.precision_at == doctest::Approx((0.2 + 0.0) / 2));  // both counted
    // micro totals include q2's retrieved docs as false positives
    // tp=1, fp=3, fn=0 -> micro_p=0.25, micro_r=1
    CHECK(r.micro_f1 == doctest::Approx(2 * 0.25 * 1.0 / 1.25));
}

TEST_CASE("missing labels raise") {
    RelevanceLabels labels;
    auto rl = make_ranking("q", {"a"});
    CHECK_THROWS_AS(evaluate({rl}, labels, 5), std::invalid_argument);
}

TEST_CASE("evaluate agrees exactly with the brute-force reference on 1000 random instances") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t n_docs = 2 + rng() % 12;
        std::size_t n_queries = 1 + rng() % 4;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < n_docs; ++i) ids.push_back("d" + std::to_string(i));

        RelevanceLabels labels;
        std::vector<RankedList> rankings;
        for (std::size_t q = 0; q < n_queries; ++q) {
            std::vector<std::string> pool = ids;
            std::shuffle(pool.begin(), pool.end(), rng);
            pool.resize(1 + rng() % n_docs);
            std::vector<std::string> relevant;
            for (const std::string& id : ids) {
                if (rng() % 4 == 0) relevant.push_back(id);
            }
            std::string qid = "q" + std::to_string(q);
            labels.entries.emplace_back(qid, relevant);
            rankings.push_back(make_ranking(qid, pool));
        }
        EvalReport a = evaluate(rankings, labels, 5);
        EvalReport b = reference_evaluate(rankings, labels, 5);
        CHECK(a.precision_at == b.precision_at);
        CHECK(a.recall_at == b.recall_at);
        CHECK(a.micro_f1 == b.micro_f1);
        CHECK(a.macro_f1 == b.macro_f1);
        CHECK(a.mrr_at == b.mrr_at);
        CHECK(a.map == b.map);
        CHECK(a.ndcg_at == b.ndcg_at);
    }
}

TEST_CASE("all metrics lie in [0,1]; ideal ranking dominates random permutations") {
    std::mt19937_64 rng(31337);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t n_docs = 3 + rng() % 10;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < n_docs; ++i) ids.push_back("d" + std::to_string(i));
        std::vector<std::string> relevant;
        for (const std::string& id : ids)
            if (rng() % 3 == 0) relevant.push_back(id);
        if (relevant.empty()) relevant.push_back(ids[0]);
        RelevanceLabels labels;
        labels.entries.emplace_back("q", relevant);

        std::vector<std::string> random_order = ids;
        std::shuffle(random_order.begin(), random_order.end(), rng);
        std::vector<std::string> ideal = relevant;
        for (const std::string& id : ids) {
            if (std::find(relevant.begin(), relevant.end(), id) == relevant.end()) {
                ideal.push_back(id);
            }
        }
        EvalReport rnd = evaluate({make_ranking("q", random_order)}, labels, 5);
        EvalReport best = evaluate({make_ranking("q", ideal)}, labels, 5);
        for (double m : {rnd.precision_at, rnd.recall_at, rnd.micro_f1, rnd.macro_f1, rnd.mrr_at,
                         rnd.map, rnd.ndcg_at}) {
            CHECK(m >= 0.0);
            CHECK(m <= 1.0);
        }
        CHECK(rnd.precision_at <= best.precision_at);
        CHECK(rnd.recall_at <= best.recall_at);
        CHECK(rnd.mrr_at <= best.mrr_at);
        CHECK(rnd.map <= best.map);
        CHECK(rnd.ndcg_at <= best.ndcg_at);
    }
}

TEST_CASE("rankings round-trip through files") {
    std::vector<RankedList> rankings{make_ranking("q1", {"a", "b"}), make_ranking("q2", {"c"})};
    save_rankings(rankings, "test_rankings.jsonl");
    auto loaded = load_rankings("test_rankings.jsonl");
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].query_id == "q1");
    CHECK(loaded[0].entries == rankings[0].entries);
}

TEST_CASE("one- and two-stage ranking behave structurally") {
    SynthCorpus synth = generate_synthetic_corpus({15, 3, 4});
    HashingEncoder enc({16, true, 0});
    GraphStore graphs = GraphStore::build(synth.cases, enc);
    ModelConfig mcfg;
    mcfg.input_dim = 16;
    mcfg.layer_dims = {16, 16};
    ModelParams params = ModelParams::init(mcfg, 3);

    std::vector<std::pair<std::string, std::string>> docs;
    for (const CaseRecord& c : synth.cases) {
        docs.emplace_back(c.case_id, c.fact_text + " " + c.issue_text);
    }
    Bm25Index index = Bm25Index::build(docs);

    const std::string qid = synth.cases[0].case_id;
    RankedList one = rank_one_stage(params, graphs, qid, Similarity::dot);
    CHECK(one.entries.size() == synth.cases.size() - 1);  // query excluded
    for (const auto& [id, score] : one.entries) CHECK(id != qid);
    for (std::size_t i = 1; i < one.entries.size(); ++i) {
        CHECK(one.entries[i - 1].second >= one.entries[i].second);
    }
    // deterministic repeat
    RankedList again = rank_one_stage(params, graphs, qid, Similarity::dot);
    CHECK(one.entries == again.entries);

    RankedList two = rank_two_stage(params, graphs, synth.cases, qid, index, 10, Similarity::dot);
    CHECK(two.entries.size() == 10);
    // output is a set-permutation of BM25's first stage
    auto first_stage = index.top_k(synth.cases[0].fact_text + " " + synth.cases[0].issue_text, 10,
                                   {qid});
    std::set<std::string> a, b;
    for (const auto& [id, s] : first_stage) a.insert(id);
    for (const auto& [id, s] : two.entries) b.insert(id);
    CHECK(a == b);

    // k >= pool size: same order as one-stage
    RankedList two_all =
        rank_two_stage(params, graphs, synth.cases, qid, index, synth.cases.size(), Similarity::dot);
    REQUIRE(two_all.entries.size() == one.entries.size());
    for (std::size_t i = 0; i < one.entries.size(); ++i) {
        CHECK(two_all.entries[i].first == one.entries[i].first);
    }
}

TEST_CASE("one-stage ordering matches hand-computed dot products") {
    // Residual-only model (single layer, W_s = I, everything else 0) passes
    // each graph's global feature through unchanged, so the representation is
    // enc(fact_text) || enc(issue_text) and the ordering can be computed by
    // hand from encoder outputs alone.
    HashingEncoder enc({8, true, 0});
    std::vector<CaseRecord> corpus{
        {"query", "alpha beta gamma", "delta", {}, {}},
        {"c1", "alpha beta gamma", "delta", {}, {}},        // identical to query
        {"c2", "alpha beta zeta", "delta", {}, {}},         // shares most tokens
        {"c3", "omicron sigma rho", "upsilon", {}, {}},     // disjoint
    };
    GraphStore graphs = GraphStore::build(corpus, enc);

    ModelConfig cfg;
    cfg.input_dim = 8;
    cfg.layer_dims = {8};
    cfg.heads = 1;
    cfg.dropout_rate = 0.0;
    ModelParams p = ModelParams::init(cfg, 0);
    p.layers[0].W_s = Mat(8, 8);
    for (int i = 0; i < 8; ++i) p.layers[0].W_s.at(i, i) = 1.0;
    p.layers[0].W_n[0] = Mat(8, 8);
    p.layers[0].W_e[0] = Mat(8, 8);
    p.layers[0].w_att[0] = Mat(24, 1);

    auto rep = [&](const CaseRecord& c) {
        std::vector<double> r = enc.encode(c.fact_text);
        std::vector<double> issue = enc.encode(c.issue_text);
        r.insert(r.end(), issue.begin(), issue.end());
        return r;
    };
    auto dot_plain = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };
    std::vector<double> hq = rep(corpus[0]);
    std::vector<std::pair<std::string, double>> expected;
    for (std::size_t i = 1; i < corpus.size(); ++i) {
        expected.emplace_back(corpus[i].case_id, dot_plain(hq, rep(corpus[i])));
    }
    std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    RankedList got = rank_one_stage(p, graphs, "query", Similarity::dot);
    REQUIRE(got.entries.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(got.entries[i].first == expected[i].first);
        CHECK(got.entries[i].second == doctest::Approx(expected[i].second).epsilon(1e-12));
    }
    CHECK(got.entries[0].first == "c1");  // exact duplicate ranks first
}
