#include "graphret/case_graph.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace graphret {

std::string section_name(Section s) { return s == Section::fact ? "fact" : "issue"; }

std::vector<std::vector<std::pair<std::size_t, std::size_t>>> CaseGraph::in_neighbors() const {
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> nbrs(nodes.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        nbrs[edges[e].dst].emplace_back(edges[e].src, e);
        if (edges[e].reciprocal) nbrs[edges[e].src].emplace_back(edges[e].dst, e);
    }
    return nbrs;
}

std::string entity_key(const std::string& text) {
    std::string collapsed;
    bool pending_space = false;
    for (char ch : text) {
        unsigned char u = static_cast<unsigned char>(ch);
        if (std::isspace(u)) {
            if (!collapsed.empty()) pending_space = true;
        } else {
            if (pending_space) collapsed.push_back(' ');
            pending_space = false;
            collapsed.push_back(static_cast<char>(std::tolower(u)));
        }
    }
    for (const char* article : {"the ", "a ", "an "}) {
        std::size_t n = std::string(article).size();
        if (collapsed.rfind(article, 0) == 0 && collapsed.size() > n) {
            collapsed.erase(0, n);
            break;
        }
    }
    return collapsed;
}

CaseGraph build_graph(const std::string& case_id, Section section,
                      const std::vector<Triplet>& triplets, const std::string& section_text,
                      const TextEncoder& encoder, const GraphBuildOptions& opts) {
    CaseGraph g;
    g.case_id = case_id;
    g.section = section;

    std::unordered_map<std::string, std::size_t> node_of;
    auto intern = [&](const std::string& surface) -> std::size_t {
        std::string key = entity_key(surface);
        if (key.empty()) throw std::invalid_argument("build_graph: empty entity in triplet");
        auto it = node_of.find(key);
        if (it != node_of.end()) return it->second;
        std::size_t id = g.nodes.size();
        std::vector<double> feat = encoder.encode(key);
        if (feat.size() != encoder.dim()) {
            throw std::runtime_error("build_graph: encoder returned " + std::to_string(feat.size()) +
                                     "-dim feature, expected " + std::to_string(encoder.dim()));
        }
        g.nodes.push_back({key, std::move(feat)});
        node_of.emplace(std::move(key), id);
        return id;
    };

    std::set<std::tuple<std::size_t, std::string, std::size_t>> seen;
    for (const Triplet& t : triplets) {
        if (t.section != section) {
            throw std::invalid_argument("build_graph: triplet tagged " + section_name(t.section) +
                                        " passed to " + section_name(section) + " graph");
        }
        std::size_t h = intern(t.head);
        std::size_t tl = intern(t.tail);
        auto key = std::make_tuple(h, t.relation, tl);
        if (!seen.insert(key).second) continue;  // duplicate triplet
        g.edges.push_back({h, tl, t.relation, encoder.encode(t.relation), false});
    }

    if (opts.use_virtual_node) {
        std::size_t n_entities = g.nodes.size();
        g.has_global = true;
        g.global_node_id = n_entities;
        g.nodes.push_back({section_text, encoder.encode(section_text)});
        for (std::size_t u = 0; u < n_entities; ++u) {
            // global edge feature copies the entity's node feature
            g.edges.push_back({u, g.global_node_id, g.nodes[u].text, g.nodes[u].feature, true});
        }
    }
    return g;
}

namespace {

const std::set<std::string>& closed_verbs() {
    static const std::set<std::string> verbs = {
        "is",       "are",     "was",      "were",    "has",     "have",   "had",
        "includes", "contains", "requires", "filed",   "appealed", "claims", "denied",
        "granted",  "seeks",   "states",   "owns",    "owes",     "holds",  "signed",
        "alleges",  "disputes", "concerns", "involves"};
    return verbs;
}

std::string join(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (!out.empty()) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

}  // namespace

std::vector<Triplet> extract_triplets_naive(const std::vector<std::string>& sentences,
                                            Section section) {
    std::vector<Triplet> out;
    for (const std::string& sentence : sentences) {
        std::vector<std::string> tokens = tokenize(sentence);
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (!closed_verbs().count(tokens[i])) continue;
            if (i == 0 || i + 1 == tokens.size()) break;
            out.push_back({join(tokens, 0, i), tokens[i], join(tokens, i + 1, tokens.size()), section});
            break;  // single-verb heuristic: first match wins
        }
    }
    return out;
}

const std::vector<std::string>* RelevanceLabels::find(const std::string& query_id) const {
    for (const auto& [qid, ids] : entries)
        if (qid == query_id) return &ids;
    return nullptr;
}

namespace {

std::vector<Triplet> triplets_from_json(const nlohmann::json& arr, Section section,
                                        const std::string& where) {
    std::vector<Triplet> out;
    for (const auto& item : arr) {
        if (!item.is_array() || item.size() != 3) {
            throw std::runtime_error(where + ": triplet must be a [head, relation, tail] array");
        }
        out.push_back({item[0].get<std::string>(), item[1].get<std::string>(),
                       item[2].get<std::string>(), section});
    }
    return out;
}

nlohmann::json triplets_to_json(const std::vector<Triplet>& ts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Triplet& t : ts) arr.push_back({t.head, t.relation, t.tail});
    return arr;
}

}  // namespace

void save_graphs(const std::vector<CaseGraph>& graphs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_graphs: cannot open " + path);
    for (const CaseGraph& g : graphs) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const GraphNode& n : g.nodes) nodes.push_back({{"text", n.text}, {"feature", n.feature}});
        nlohmann::json edges = nlohmann::json::array();
        for (const GraphEdge& e : g.edges) {
            edges.push_back({{"src", e.src},
                             {"dst", e.dst},
                             {"text", e.text},
                             {"feature", e.feature},
                             {"reciprocal", e.reciprocal}});
        }
        nlohmann::json rec{{"case_id", g.case_id},
                           {"section", section_name(g.section)},
                           {"nodes", nodes},
                           {"edges", edges},
                           {"has_global", g.has_global}};
        if (g.has_global) rec["global_node_id"] = g.global_node_id;
        out << rec.dump() << "\n";
    }
}

std::vector<CaseGraph> load_graphs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_graphs: cannot open " + path);
    std::vector<CaseGraph> graphs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            nlohmann::json rec = nlohmann::json::parse(line);
            CaseGraph g;
            g.case_id = rec.at("case_id").get<std::string>();
            g.section = rec.at("section").get<std::string>() == "fact" ? Section::fact : Section::issue;
            for (const auto& n : rec.at("nodes")) {
                g.nodes.push_back(
                    {n.at("text").get<std::string>(), n.at("feature").get<std::vector<double>>()});
            }
            for (const auto& e : rec.at("edges")) {
                g.edges.push_back({e.at("src").get<std::size_t>(), e.at("dst").get<std::size_t>(),
                                   e.at("text").get<std::string>(),
                                   e.at("feature").get<std::vector<double>>(),
                                   e.at("reciprocal").get<bool>()});
            }
            g.has_global = rec.at("has_global").get<bool>();
            if (g.has_global) g.global_node_id = rec.at("global_node_id").get<std::size_t>();
            graphs.push_back(std::move(g));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad graph record: " +
                                     e.what());
        }
    }
    return graphs;
}

std::vector<CaseRecord> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_corpus: cannot open " + path);
    std::vector<CaseRecord> corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::string where = path + ":" + std::to_string(lineno);
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(where + ": malformed JSON: " + e.what());
        }
        CaseRecord c;
        try {
            c.case_id = rec.at("case_id").get<std::string>();
            c.fact_text = rec.at("fact_text").get<std::string>();
            c.issue_text = rec.at("issue_text").get<std::string>();
            c.fact_triplets = triplets_from_json(rec.at("fact_triplets"), Section::fact, where);
            c.issue_triplets = triplets_from_json(rec.at("issue_triplets"), Section::issue, where);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(where + ": bad case record: " + e.what());
        }
        corpus.push_back(std::move(c));
    }
    return corpus;
}

void save_corpus(const std::vector<CaseRecord>& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_corpus: cannot open " + path);
    for (const CaseRecord& c : corpus) {
        nlohmann::json rec{{"case_id", c.case_id},
                           {"fact_text", c.fact_text},
                           {"issue_text", c.issue_text},
                           {"fact_triplets", triplets_to_json(c.fact_triplets)},
                           {"issue_triplets", triplets_to_json(c.issue_triplets)}};
        out << rec.dump() << "\n";
    }
}

RelevanceLabels load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_labels: cannot open " + path);
    RelevanceLabels labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
            labels.entries.emplace_back(rec.at("query_id").get<std::string>(),
                                        rec.at("relevant_ids").get<std::vector<std::string>>());
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad label record: " +
                                     e.what());
        }
    }
    return labels;
}

void save_labels(const RelevanceLabels& labels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_labels: cannot open " + path);
    for (const auto& [qid, ids] : labels.entries) {
        nlohmann::json rec{{"query_id", qid}, {"relevant_ids", ids}};
        out << rec.dump() << "\n";
    }
}

}  // namespace graphret
