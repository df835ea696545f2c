#include "graphret/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace graphret {

std::string similarity_name(Similarity s) { return s == Similarity::dot ? "dot" : "cosine"; }

Similarity similarity_from_name(const std::string& name) {
    if (name == "dot") return Similarity::dot;
    if (name == "cosine") return Similarity::cosine;
    throw std::invalid_argument("unknown similarity '" + name + "' (dot|cosine)");
}

Var similarity_score(Var a, Var b, Similarity sim) {
    Var d = dot(a, b);
    if (sim == Similarity::dot) return d;
    Var norm_prod = sqrt_op(mul(dot(a, a), dot(b, b)));
    return mul(d, exp_op(scalar_mul(log_op(norm_prod), -1.0)));
}

Var contrastive_loss(Var h_query, Var h_positive, const std::vector<Var>& easy_negatives,
                     const std::vector<Var>& hard_negatives, double tau, Similarity sim) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("contrastive_loss: tau must be positive, got " +
                                    std::to_string(tau));
    }
    Var s_pos = scalar_mul(similarity_score(h_query, h_positive, sim), 1.0 / tau);
    std::vector<Var> scaled{s_pos};
    for (const Var& neg : easy_negatives) {
        scaled.push_back(scalar_mul(similarity_score(h_query, neg, sim), 1.0 / tau));
    }
    for (const Var& neg : hard_negatives) {
        scaled.push_back(scalar_mul(similarity_score(h_query, neg, sim), 1.0 / tau));
    }
    return sub(log_sum_exp(concat(scaled)), s_pos);
}

std::vector<std::string> mine_hard_negatives(const std::string& query_id,
                                             const std::string& query_text,
                                             const Bm25Index& index, std::size_t m,
                                             const std::vector<std::string>& relevant_ids,
                                             const std::function<void(const std::string&)>& warn) {
    if (m == 0) return {};
    std::vector<std::string> exclude = relevant_ids;
    exclude.push_back(query_id);
    auto ranked = index.top_k(query_text, m, exclude);
    std::vector<std::string> out;
    out.reserve(ranked.size());
    for (auto& [id, score] : ranked) out.push_back(std::move(id));
    if (out.size() < m && warn) {
        warn("query " + query_id + ": only " + std::to_string(out.size()) + " of " +
             std::to_string(m) + " hard negatives available after filtering");
    }
    return out;
}

AdamOptimizer::AdamOptimizer(double learning_rate, double weight_decay, double beta1, double beta2,
                             double epsilon)
    : lr_(learning_rate), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void AdamOptimizer::step(ModelParams& params, const std::vector<Mat>& grads) {
    auto mats = params.named_matrices();
    if (grads.size() != mats.size()) {
        throw std::invalid_argument("AdamOptimizer: got " + std::to_string(grads.size()) +
                                    " gradients for " + std::to_string(mats.size()) + " matrices");
    }
    if (m_.empty()) {
        for (const Mat& g : grads) {
            m_.emplace_back(g.rows, g.cols);
            v_.emplace_back(g.rows, g.cols);
        }
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        Mat& p = *mats[i].second;
        const Mat& g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m_[i].v[j] = beta1_ * m_[i].v[j] + (1.0 - beta1_) * g.v[j];
            v_[i].v[j] = beta2_ * v_[i].v[j] + (1.0 - beta2_) * g.v[j] * g.v[j];
            double mhat = m_[i].v[j] / bc1;
            double vhat = v_[i].v[j] / bc2;
            p.v[j] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p.v[j]);
        }
    }
}

GraphStore GraphStore::build(const std::vector<CaseRecord>& corpus, const TextEncoder& encoder,
                             const GraphBuildOptions& opts) {
    GraphStore store;
    for (const CaseRecord& c : corpus) {
        store.case_ids.push_back(c.case_id);
        store.fact.push_back(build_graph(c.case_id, Section::fact, c.fact_triplets, c.fact_text,
                                         encoder, opts));
        store.issue.push_back(build_graph(c.case_id, Section::issue, c.issue_triplets, c.issue_text,
                                          encoder, opts));
    }
    return store;
}

std::size_t GraphStore::index_of(const std::string& case_id) const {
    auto it = std::find(case_ids.begin(), case_ids.end(), case_id);
    if (it == case_ids.end()) throw std::out_of_range("GraphStore: unknown case id " + case_id);
    return static_cast<std::size_t>(it - case_ids.begin());
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::string full_text(const CaseRecord& c) { return c.fact_text + " " + c.issue_text; }

std::vector<Mat> collect_grads(const TapedModel& model) {
    std::vector<Mat> grads;
    for (const TapedLayer& l : model.layers) {
        grads.push_back(l.W_s.grad());
        for (std::size_t k = 0; k < l.W_n.size(); ++k) {
            grads.push_back(l.W_n[k].grad());
            grads.push_back(l.W_e[k].grad());
            grads.push_back(l.w_att[k].grad());
        }
    }
    return grads;
}

}  // namespace

Trainer::Trainer(ModelParams& params, const GraphStore& graphs,
                 const std::vector<CaseRecord>& corpus, const RelevanceLabels& labels,
                 TrainConfig config)
    : params_(params),
      graphs_(graphs),
      corpus_(corpus),
      labels_(labels),
      config_(config),
      adam_(config.learning_rate, config.weight_decay),
      rng_state_(config.seed * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull) {
    if (!(config_.tau > 0.0)) throw std::invalid_argument("TrainConfig: tau must be positive");
    std::vector<std::pair<std::string, std::string>> docs;
    for (const CaseRecord& c : corpus_) docs.emplace_back(c.case_id, full_text(c));
    bm25_ = Bm25Index::build(docs);
    // BM25 scores are static, so per-epoch mining reduces to mining once.
    for (const auto& [qid, relevant] : labels_.entries) {
        std::size_t qi = graphs_.index_of(qid);
        hard_negatives_.push_back(
            mine_hard_negatives(qid, full_text(corpus_[qi]), bm25_, config_.m_hard, relevant));
    }
}

std::uint64_t Trainer::next_rand() { return splitmix64(rng_state_); }

EpochStats Trainer::run_epoch(std::size_t epoch) {
    EpochStats stats;
    stats.epoch = epoch;

    // labeled queries that have at least one relevant case present in the pool
    struct QueryPlan {
        std::size_t query_idx;        // into graphs_
        std::size_t label_idx;        // into labels_.entries / hard_negatives_
        std::vector<std::size_t> relevant;
    };
    std::vector<QueryPlan> queries;
    for (std::size_t li = 0; li < labels_.entries.size(); ++li) {
        const auto& [qid, relevant_ids] = labels_.entries[li];
        QueryPlan plan;
        plan.query_idx = graphs_.index_of(qid);
        plan.label_idx = li;
        for (const std::string& rid : relevant_ids) plan.relevant.push_back(graphs_.index_of(rid));
        if (plan.relevant.empty()) {
            ++stats.queries_skipped;
            continue;
        }
        queries.push_back(std::move(plan));
    }

    for (std::size_t i = queries.size(); i > 1; --i) {
        std::swap(queries[i - 1], queries[next_rand() % i]);
    }

    double total_loss = 0.0;
    std::size_t batch_count = config_.batch_size == 0 ? queries.size() : config_.batch_size;
    for (std::size_t start = 0; start < queries.size(); start += batch_count) {
        std::size_t end = std::min(start + batch_count, queries.size());
        Tape tape;
        TapedModel model = lease_params(params_, tape, true);
        ForwardOptions opts;
        opts.train = true;
        std::uint64_t dropout_rng = next_rand();
        opts.dropout_rng = &dropout_rng;

        std::map<std::size_t, Var> rep_cache;
        auto represent = [&](std::size_t case_idx) -> Var {
            auto it = rep_cache.find(case_idx);
            if (it != rep_cache.end()) return it->second;
            Var rep = case_representation(model, graphs_.fact[case_idx], graphs_.issue[case_idx],
                                          tape, opts);
            rep_cache.emplace(case_idx, rep);
            return rep;
        };

        // first pass: each batch query's own representation and its sampled
        // positive, so in-batch negatives can reference the positives
        std::vector<Var> h_q, h_pos;
        std::vector<std::size_t> pos_idx;
        for (std::size_t qi = start; qi < end; ++qi) {
            const QueryPlan& plan = queries[qi];
            std::size_t pos = plan.relevant[next_rand() % plan.relevant.size()];
            h_q.push_back(represent(plan.query_idx));
            h_pos.push_back(represent(pos));
            pos_idx.push_back(pos);
        }

        std::vector<Var> losses;
        for (std::size_t qi = start; qi < end; ++qi) {
            const QueryPlan& plan = queries[qi];
            std::size_t b = qi - start;
            std::set<std::size_t> forbidden(plan.relevant.begin(), plan.relevant.end());
            forbidden.insert(plan.query_idx);

            std::vector<Var> easy;
            for (std::size_t n = 0; n < config_.n_easy; ++n) {
                if (forbidden.size() >= graphs_.case_ids.size()) break;
                std::size_t pick;
                do {
                    pick = next_rand() % graphs_.case_ids.size();
                } while (forbidden.count(pick));
                easy.push_back(represent(pick));
            }
            for (std::size_t other = 0; other < h_pos.size(); ++other) {
                if (other == b) continue;
                if (forbidden.count(pos_idx[other])) continue;  // never a labeled relevant case
                easy.push_back(h_pos[other]);
            }
            std::vector<Var> hard;
            for (const std::string& hid : hard_negatives_[plan.label_idx]) {
                hard.push_back(represent(graphs_.index_of(hid)));
            }
            losses.push_back(contrastive_loss(h_q[b], h_pos[b], easy, hard, config_.tau,
                                              config_.similarity));
        }

        Var batch_loss = scalar_mul(
            [&] {
                Var acc = losses[0];
                for (std::size_t i = 1; i < losses.size(); ++i) acc = add(acc, losses[i]);
                return acc;
            }(),
            1.0 / static_cast<double>(losses.size()));
        tape.backward(batch_loss);

        if (!std::isfinite(batch_loss.value().v[0])) {
            throw NumericError("train_epoch: non-finite loss at epoch " + std::to_string(epoch));
        }
        total_loss += batch_loss.value().v[0] * static_cast<double>(losses.size());
        stats.queries_trained += losses.size();
        adam_.step(params_, collect_grads(model));
        tape.clear();
    }
    if (stats.queries_trained > 0) {
        stats.mean_loss = total_loss / static_cast<double>(stats.queries_trained);
    }
    return stats;
}

std::vector<EpochStats> Trainer::run(const std::function<void(const EpochStats&)>& on_epoch) {
    std::vector<EpochStats> all;
    for (std::size_t e = 0; e < config_.epochs; ++e) {
        EpochStats s = run_epoch(e);
        if (on_epoch) on_epoch(s);
        all.push_back(s);
    }
    return all;
}

}  // namespace graphret
