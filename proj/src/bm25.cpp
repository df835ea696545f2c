#include "graphret/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "graphret/text_encoder.hpp"

namespace graphret {

Bm25Index Bm25Index::build(const std::vector<std::pair<std::string, std::string>>& docs,
                           Params params) {
    Bm25Index idx;
    idx.params_ = params;
    std::size_t total_len = 0;
    for (const auto& [id, text] : docs) {
        if (idx.doc_index_.count(id)) throw std::invalid_argument("Bm25Index: duplicate doc id " + id);
        DocStats d;
        d.id = id;
        for (const std::string& tok : tokenize(text)) {
            ++d.tf[tok];
            ++d.length;
        }
        total_len += d.length;
        for (const auto& [term, tf] : d.tf) ++idx.df_[term];
        idx.doc_index_.emplace(id, idx.docs_.size());
        idx.docs_.push_back(std::move(d));
    }
    idx.avg_doc_len_ = idx.docs_.empty() ? 0.0 : static_cast<double>(total_len) / idx.docs_.size();
    return idx;
}

std::size_t Bm25Index::doc_freq(const std::string& term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
}

std::size_t Bm25Index::term_freq(const std::string& doc_id, const std::string& term) const {
    auto it = doc_index_.find(doc_id);
    if (it == doc_index_.end()) throw std::out_of_range("Bm25Index: unknown doc id " + doc_id);
    const auto& tf = docs_[it->second].tf;
    auto jt = tf.find(term);
    return jt == tf.end() ? 0 : jt->second;
}

double Bm25Index::score_doc(const std::vector<std::string>& query_terms, const DocStats& d) const {
    double n = static_cast<double>(docs_.size());
    double score = 0.0;
    for (const std::string& term : query_terms) {
        auto it = d.tf.find(term);
        if (it == d.tf.end()) continue;
        double tf = static_cast<double>(it->second);
        double df = static_cast<double>(doc_freq(term));
        double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        double norm = params_.k1 * (1.0 - params_.b + params_.b * d.length / avg_doc_len_);
        score += idf * tf / (tf + norm);
    }
    return score;
}

double Bm25Index::score(std::string_view query_text, const std::string& doc_id) const {
    auto it = doc_index_.find(doc_id);
    if (it == doc_index_.end()) throw std::out_of_range("Bm25Index: unknown doc id " + doc_id);
    return score_doc(tokenize(query_text), docs_[it->second]);
}

std::vector<std::pair<std::string, double>> Bm25Index::top_k(
    std::string_view query_text, std::size_t k, const std::vector<std::string>& exclude) const {
    std::set<std::string> excluded(exclude.begin(), exclude.end());
    std::vector<std::string> terms = tokenize(query_text);
    std::vector<std::pair<std::string, double>> scored;
    for (const DocStats& d : docs_) {
        if (excluded.count(d.id)) continue;
        scored.emplace_back(d.id, score_doc(terms, d));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

}  // namespace graphret
