#pragma once

#include <cstdint>
#include <vector>

#include "graphret/case_graph.hpp"

namespace graphret {

// Cluster-structured benchmark: each cluster owns a pool of template triplets,
// a case samples 5-15 of them plus 0-3 noise triplets drawn from a shared
// vocabulary, and two cases are relevant to each other iff they share a
// cluster.
struct SynthConfig {
    std::size_t n_cases = 100;
    std::size_t n_clusters = 10;
    std::uint64_t seed = 0;
};

struct SynthCorpus {
    std::vector<CaseRecord> cases;
    RelevanceLabels labels;
};

SynthCorpus generate_synthetic_corpus(const SynthConfig& cfg);

}  // namespace graphret
