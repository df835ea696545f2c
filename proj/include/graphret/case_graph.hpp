#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "graphret/text_encoder.hpp"

namespace graphret {

enum class Section { fact, issue };

std::string section_name(Section s);

struct Triplet {
    std::string head;
    std::string relation;
    std::string tail;
    Section section = Section::fact;
};

struct GraphNode {
    std::string text;
    std::vector<double> feature;
};

// reciprocal edges carry messages in both directions; relation edges only
// head -> tail.
struct GraphEdge {
    std::size_t src = 0;
    std::size_t dst = 0;
    std::string text;
    std::vector<double> feature;
    bool reciprocal = false;
};

// Text-attributed graph for one section of one case. Entity nodes come first
// in first-appearance order; the virtual global node, when present, is last.
struct CaseGraph {
    std::string case_id;
    Section section = Section::fact;
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
    bool has_global = false;
    std::size_t global_node_id = 0;  // valid iff has_global

    // In-neighbor list: for node v, pairs of (neighbor node, edge index).
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> in_neighbors() const;
};

// Entity deduplication key: lowercased, whitespace-collapsed, with one leading
// article (the/a/an) stripped.
std::string entity_key(const std::string& text);

struct GraphBuildOptions {
    bool use_virtual_node = true;
};

CaseGraph build_graph(const std::string& case_id, Section section,
                      const std::vector<Triplet>& triplets, const std::string& section_text,
                      const TextEncoder& encoder, const GraphBuildOptions& opts = {});

// Minimal pattern-based extraction: first token from a small closed verb list
// splits the sentence into subject and object. Sentences with no match are
// skipped.
std::vector<Triplet> extract_triplets_naive(const std::vector<std::string>& sentences,
                                            Section section = Section::fact);

// One case record as stored in the line-delimited corpus file.
struct CaseRecord {
    std::string case_id;
    std::string fact_text;
    std::string issue_text;
    std::vector<Triplet> fact_triplets;
    std::vector<Triplet> issue_triplets;

    const std::vector<Triplet>& triplets(Section s) const {
        return s == Section::fact ? fact_triplets : issue_triplets;
    }
    const std::string& text(Section s) const { return s == Section::fact ? fact_text : issue_text; }
};

struct RelevanceLabels {
    // query_id -> relevant candidate ids, insertion-ordered per file.
    std::vector<std::pair<std::string, std::vector<std::string>>> entries;

    const std::vector<std::string>* find(const std::string& query_id) const;
};

void save_graphs(const std::vector<CaseGraph>& graphs, const std::string& path);
std::vector<CaseGraph> load_graphs(const std::string& path);

std::vector<CaseRecord> load_corpus(const std::string& path);
void save_corpus(const std::vector<CaseRecord>& corpus, const std::string& path);
RelevanceLabels load_labels(const std::string& path);
void save_labels(const RelevanceLabels& labels, const std::string& path);

}  // namespace graphret
