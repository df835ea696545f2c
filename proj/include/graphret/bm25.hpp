#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace graphret {

// Okapi BM25 over the shared tokenizer. IDF uses the +1-inside-log form, so
// scores are always non-negative. Immutable after build.
class Bm25Index {
public:
    struct Params {
        double k1 = 1.2;
        double b = 0.75;
    };

    static Bm25Index build(const std::vector<std::pair<std::string, std::string>>& docs,
                           Params params);
    static Bm25Index build(const std::vector<std::pair<std::string, std::string>>& docs) {
        return build(docs, Params{});
    }

    double score(std::string_view query_text, const std::string& doc_id) const;

    // k highest-scoring docs not in `exclude`; ties broken by ascending id.
    std::vector<std::pair<std::string, double>> top_k(
        std::string_view query_text, std::size_t k,
        const std::vector<std::string>& exclude = {}) const;

    std::size_t doc_count() const { return docs_.size(); }
    double avg_doc_len() const { return avg_doc_len_; }
    std::size_t doc_freq(const std::string& term) const;
    std::size_t term_freq(const std::string& doc_id, const std::string& term) const;

private:
    struct DocStats {
        std::string id;
        std::size_t length = 0;
        std::unordered_map<std::string, std::size_t> tf;
    };

    Params params_;
    double avg_doc_len_ = 0.0;
    std::vector<DocStats> docs_;
    std::unordered_map<std::string, std::size_t> doc_index_;
    std::unordered_map<std::string, std::size_t> df_;

    double score_doc(const std::vector<std::string>& query_terms, const DocStats& d) const;
};

}  // namespace graphret
