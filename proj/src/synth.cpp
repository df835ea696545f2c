#include "graphret/synth.hpp"

#include <stdexcept>
#include <string>

namespace graphret {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::size_t rand_range(std::uint64_t& rng, std::size_t lo, std::size_t hi) {
    return lo + splitmix64(rng) % (hi - lo + 1);
}

// Parties are shared across every cluster so that entity nodes alone carry
// little cluster signal; the discriminative vocabulary lives in the relations,
// the objects and the section-level topic tokens.
const char* kSubjects[] = {"claimant", "respondent", "witness",  "agency",
                           "insurer",  "tenant",     "vendor",   "employee"};
const char* kRelBasesFact[] = {"filed", "signed", "disputes", "claims"};
const char* kRelBasesIssue[] = {"concerns", "requires", "alleges", "denied"};
const char* kObjBases[] = {"permit", "contract", "assessment", "lease", "refund", "penalty"};
const char* kTopicBasesFact[] = {"incident", "timeline", "conduct"};
const char* kTopicBasesIssue[] = {"doctrine", "statute", "remedy"};

const char* kBoilerFact =
    "the matter came before the tribunal on the written record and the parties each made "
    "submissions in the usual course after notice was given under the applicable rules.";
const char* kBoilerIssue =
    "the question on appeal turns on the governing framework and on whether the decision "
    "below applied the correct standard of review to the findings in the record.";

std::string cluster_token(const char* base, std::size_t cluster) {
    return std::string(base) + std::to_string(cluster);
}

struct ClusterVocab {
    std::vector<std::string> relations;  // cluster-specific verbs
    std::vector<std::string> objects;    // cluster-specific objects
    std::vector<std::string> topics;     // appear only in the section text
};

ClusterVocab make_vocab(std::size_t cluster, std::size_t n_clusters, Section section) {
    ClusterVocab v;
    const char* const* rels = section == Section::fact ? kRelBasesFact : kRelBasesIssue;
    const char* const* tops = section == Section::fact ? kTopicBasesFact : kTopicBasesIssue;
    // objects are aliased between paired clusters, so bag-of-words overlap
    // alone cannot separate a pair; the relations and topics still can
    std::size_t object_group = cluster % ((n_clusters + 1) / 2);
    for (std::size_t i = 0; i < 4; ++i) v.relations.push_back(cluster_token(rels[i], cluster));
    for (std::size_t i = 0; i < 6; ++i)
        v.objects.push_back(cluster_token(kObjBases[i], object_group));
    for (std::size_t i = 0; i < 3; ++i) v.topics.push_back(cluster_token(tops[i], cluster));
    return v;
}

Triplet sample_triplet(std::uint64_t& rng, const ClusterVocab& vocab, Section section) {
    return {kSubjects[splitmix64(rng) % 8],
            vocab.relations[splitmix64(rng) % vocab.relations.size()],
            vocab.objects[splitmix64(rng) % vocab.objects.size()], section};
}

std::string render_text(const std::vector<Triplet>& triplets, const ClusterVocab& vocab,
                        std::uint64_t& rng, const char* boilerplate) {
    std::string text;
    for (const Triplet& t : triplets) {
        text += t.head + " " + t.relation + " " + t.tail + ". ";
    }
    // two of the three topic tokens, never present in any triplet; repeated
    // so the section summary stays informative even for confuser sections
    std::size_t skip = splitmix64(rng) % 3;
    std::string picked;
    for (std::size_t i = 0; i < 3; ++i) {
        if (i != skip) picked += " " + vocab.topics[i];
    }
    text += "the dispute engages" + picked + ". ";
    text += "it turns on" + picked + " and their treatment below, because" + picked +
            " frame the record. ";
    text += boilerplate;
    return text;
}

}  // namespace

SynthCorpus generate_synthetic_corpus(const SynthConfig& cfg) {
    if (cfg.n_clusters == 0 || cfg.n_cases == 0) {
        throw std::invalid_argument("generate_synthetic_corpus: need >= 1 case and cluster");
    }
    std::uint64_t rng = cfg.seed * 0x9E3779B97F4A7C15ull + 0x2545F4914F6CDD1Dull;

    std::vector<ClusterVocab> fact_vocab, issue_vocab;
    for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
        fact_vocab.push_back(make_vocab(c, cfg.n_clusters, Section::fact));
        issue_vocab.push_back(make_vocab(c, cfg.n_clusters, Section::issue));
    }

    SynthCorpus corpus;
    std::vector<std::size_t> cluster_of(cfg.n_cases);
    for (std::size_t i = 0; i < cfg.n_cases; ++i) {
        std::size_t cluster = i % cfg.n_clusters;
        cluster_of[i] = cluster;
        CaseRecord rec;
        rec.case_id = "case" + std::to_string(i);
        auto make_section = [&](Section section, const std::vector<ClusterVocab>& vocabs,
                                std::vector<Triplet>& triplets, std::string& text,
                                const char* boilerplate) {
            std::size_t n_signal = rand_range(rng, 6, 12);
            for (std::size_t t = 0; t < n_signal; ++t) {
                triplets.push_back(sample_triplet(rng, vocabs[cluster], section));
            }
            // distractor triplets borrowed from other clusters: lexical
            // confusion for the baseline, structural noise for the model.
            // Roughly a quarter of the sections are "confusers" whose
            // distractor block outweighs their own signal.
            if (cfg.n_clusters > 1) {
                if (splitmix64(rng) % 4 == 0) {
                    std::size_t other = (cluster + 1 + splitmix64(rng) % (cfg.n_clusters - 1)) %
                                        cfg.n_clusters;
                    std::size_t n_distract = rand_range(rng, 8, 12);
                    for (std::size_t t = 0; t < n_distract; ++t) {
                        triplets.push_back(sample_triplet(rng, vocabs[other], section));
                    }
                } else {
                    for (int block = 0; block < 2; ++block) {
                        std::size_t other = (cluster + 1 + splitmix64(rng) % (cfg.n_clusters - 1)) %
                                            cfg.n_clusters;
                        std::size_t n_distract = rand_range(rng, 2, 3);
                        for (std::size_t t = 0; t < n_distract; ++t) {
                            triplets.push_back(sample_triplet(rng, vocabs[other], section));
                        }
                    }
                }
            }
            text = render_text(triplets, vocabs[cluster], rng, boilerplate);
        };
        make_section(Section::fact, fact_vocab, rec.fact_triplets, rec.fact_text, kBoilerFact);
        make_section(Section::issue, issue_vocab, rec.issue_triplets, rec.issue_text, kBoilerIssue);
        corpus.cases.push_back(std::move(rec));
    }

    for (std::size_t i = 0; i < cfg.n_cases; ++i) {
        std::vector<std::string> relevant;
        for (std::size_t j = 0; j < cfg.n_cases; ++j) {
            if (j != i && cluster_of[j] == cluster_of[i]) relevant.push_back(corpus.cases[j].case_id);
        }
        corpus.labels.entries.emplace_back(corpus.cases[i].case_id, std::move(relevant));
    }
    return corpus;
}

}  // namespace graphret
