#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "graphret/bm25.hpp"
#include "graphret/case_graph.hpp"
#include "graphret/eval.hpp"
#include "graphret/model.hpp"
#include "graphret/synth.hpp"
#include "graphret/text_encoder.hpp"
#include "graphret/training.hpp"

namespace {

using namespace graphret;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::uint64_t fnv1a_str(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

void write_manifest(const std::string& path, const std::string& command, const json& config,
                    std::uint64_t seed) {
    json manifest{{"command", command},
                  {"config", config},
                  {"seed", seed},
                  {"config_hash", fnv1a_str(config.dump())}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open manifest path " + path);
    out << manifest.dump(2) << "\n";
}

EncoderConfig encoder_config_from_json(const json& j) {
    EncoderConfig cfg;
    cfg.dim = j.value("dim", cfg.dim);
    cfg.normalize = j.value("normalize", cfg.normalize);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

ModelConfig model_config_from_json(const json& j, std::size_t encoder_dim) {
    ModelConfig cfg;
    cfg.input_dim = encoder_dim;
    cfg.layer_dims = j.value("layer_dims", cfg.layer_dims);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.variant = variant_from_name(j.value("variant", std::string("edgegat")));
    cfg.readout = readout_from_name(j.value("readout", std::string("virtual_global")));
    cfg.dropout_rate = j.value("dropout_rate", cfg.dropout_rate);
    return cfg;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.tau = j.value("tau", cfg.tau);
    cfg.n_easy = j.value("n_easy", cfg.n_easy);
    cfg.m_hard = j.value("m_hard", cfg.m_hard);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.similarity = similarity_from_name(j.value("similarity", std::string("dot")));
    return cfg;
}

void require_file(const std::string& path) {
    if (!std::filesystem::exists(path)) {
        throw std::runtime_error("input file does not exist: " + path);
    }
}

int cmd_build_graphs(const std::string& corpus_path, const std::string& out_path, std::size_t dim,
                     std::uint64_t encoder_seed, bool no_virtual_node) {
    require_file(corpus_path);
    std::vector<CaseRecord> corpus = load_corpus(corpus_path);
    HashingEncoder encoder({dim, true, encoder_seed});
    GraphBuildOptions opts{!no_virtual_node};
    std::vector<CaseGraph> graphs;
    for (const CaseRecord& c : corpus) {
        graphs.push_back(build_graph(c.case_id, Section::fact, c.fact_triplets, c.fact_text,
                                     encoder, opts));
        graphs.push_back(build_graph(c.case_id, Section::issue, c.issue_triplets, c.issue_text,
                                     encoder, opts));
    }
    save_graphs(graphs, out_path);
    std::cout << "wrote " << graphs.size() << " graphs for " << corpus.size() << " cases to "
              << out_path << "\n";
    return kExitOk;
}

int cmd_train(const std::string& config_path) {
    require_file(config_path);
    std::ifstream in(config_path);
    json cfg;
    in >> cfg;

    if (!cfg.contains("seed")) throw std::runtime_error(config_path + ": 'seed' is mandatory");
    std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();

    std::string corpus_path = cfg.at("corpus").get<std::string>();
    std::string labels_path = cfg.at("labels").get<std::string>();
    std::string checkpoint_path = cfg.at("checkpoint").get<std::string>();
    std::string stats_path = cfg.value("stats", checkpoint_path + ".stats.jsonl");
    require_file(corpus_path);
    require_file(labels_path);

    EncoderConfig enc_cfg = encoder_config_from_json(cfg.value("encoder", json::object()));
    ModelConfig model_cfg = model_config_from_json(cfg.value("model", json::object()), enc_cfg.dim);
    TrainConfig train_cfg = train_config_from_json(cfg.value("train", json::object()));
    train_cfg.seed = seed;
    GraphBuildOptions graph_opts{cfg.value("use_virtual_node", true)};

    std::vector<CaseRecord> corpus = load_corpus(corpus_path);
    RelevanceLabels labels = load_labels(labels_path);
    HashingEncoder encoder(enc_cfg);
    GraphStore graphs = GraphStore::build(corpus, encoder, graph_opts);

    ModelParams params = ModelParams::init(model_cfg, seed);
    Trainer trainer(params, graphs, corpus, labels, train_cfg);

    std::ofstream stats(stats_path);
    if (!stats) throw std::runtime_error("cannot open stats path " + stats_path);
    std::size_t checkpoint_every = cfg.value("checkpoint_every", 0);
    std::size_t epoch_count = 0;
    trainer.run([&](const EpochStats& s) {
        stats << json{{"epoch", s.epoch},
                      {"mean_loss", s.mean_loss},
                      {"queries_trained", s.queries_trained},
                      {"queries_skipped", s.queries_skipped}}
                     .dump()
              << "\n";
        stats.flush();
        std::cout << "epoch " << s.epoch << " mean_loss " << s.mean_loss << "\n";
        ++epoch_count;
        if (checkpoint_every > 0 && epoch_count % checkpoint_every == 0) {
            save_checkpoint(params, checkpoint_path + ".epoch" + std::to_string(s.epoch));
        }
    });
    save_checkpoint(params, checkpoint_path);
    write_manifest(checkpoint_path + ".manifest.json", "train", cfg, seed);
    std::cout << "checkpoint written to " << checkpoint_path << "\n";
    return kExitOk;
}

int cmd_retrieve(const std::string& checkpoint_path, const std::string& corpus_path,
                 const std::string& queries_path, const std::string& out_path, bool two_stage,
                 std::size_t k, std::uint64_t encoder_seed, bool no_virtual_node,
                 const std::string& similarity) {
    require_file(checkpoint_path);
    require_file(corpus_path);
    require_file(queries_path);

    ModelParams params = load_checkpoint(checkpoint_path);
    std::vector<CaseRecord> corpus = load_corpus(corpus_path);
    HashingEncoder encoder({params.config.input_dim, true, encoder_seed});
    GraphStore graphs = GraphStore::build(corpus, encoder, GraphBuildOptions{!no_virtual_node});
    Similarity sim = similarity_from_name(similarity);

    std::vector<std::string> query_ids;
    std::ifstream qin(queries_path);
    std::string line;
    while (std::getline(qin, line)) {
        if (!line.empty()) query_ids.push_back(line);
    }

    Bm25Index index;
    if (two_stage) {
        std::vector<std::pair<std::string, std::string>> docs;
        for (const CaseRecord& c : corpus) docs.emplace_back(c.case_id, c.fact_text + " " + c.issue_text);
        index = Bm25Index::build(docs);
    }

    std::vector<RankedList> rankings;
    for (const std::string& qid : query_ids) {
        rankings.push_back(two_stage
                               ? rank_two_stage(params, graphs, corpus, qid, index, k, sim)
                               : rank_one_stage(params, graphs, qid, sim));
    }
    save_rankings(rankings, out_path);
    json cfg{{"checkpoint", checkpoint_path}, {"corpus", corpus_path},
             {"queries", queries_path},       {"two_stage", two_stage},
             {"k", k},                        {"encoder_seed", encoder_seed},
             {"similarity", similarity}};
    write_manifest(out_path + ".manifest.json", "retrieve", cfg, encoder_seed);
    std::cout << "wrote " << rankings.size() << " rankings to " << out_path << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& rankings_path, const std::string& labels_path,
             const std::string& json_out, std::size_t cutoff) {
    require_file(rankings_path);
    require_file(labels_path);
    std::vector<RankedList> rankings = load_rankings(rankings_path);
    RelevanceLabels labels = load_labels(labels_path);
    EvalReport report = evaluate(rankings, labels, cutoff);
    std::cout << format_report(report);
    if (!json_out.empty()) {
        std::ofstream out(json_out);
        if (!out) throw std::runtime_error("cannot open " + json_out);
        out << report_to_json(report) << "\n";
    }
    return kExitOk;
}

int cmd_synth(std::size_t n_cases, std::size_t n_clusters, std::uint64_t seed,
              const std::string& corpus_out, const std::string& labels_out) {
    SynthCorpus corpus = generate_synthetic_corpus({n_cases, n_clusters, seed});
    save_corpus(corpus.cases, corpus_out);
    save_labels(corpus.labels, labels_out);
    json cfg{{"n_cases", n_cases}, {"clusters", n_clusters}, {"seed", seed}};
    write_manifest(corpus_out + ".manifest.json", "synth", cfg, seed);
    std::cout << "wrote " << corpus.cases.size() << " cases to " << corpus_out << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graph-based document retrieval: graph building, training, retrieval, evaluation"};
    app.require_subcommand(1);

    // build-graphs
    std::string corpus_path, out_path;
    std::size_t dim = 32;
    std::uint64_t encoder_seed = 0;
    bool no_virtual_node = false;
    auto* build = app.add_subcommand("build-graphs", "build case graphs from a corpus file");
    build->add_option("--corpus", corpus_path, "corpus records, one JSON object per line")->required();
    build->add_option("--out", out_path, "output graph file")->required();
    build->add_option("--dim", dim, "encoder dimension");
    build->add_option("--encoder-seed", encoder_seed, "hash seed for the encoder");
    build->add_flag("--no-virtual-node", no_virtual_node, "omit the virtual global node");

    // train
    std::string train_config_path;
    auto* train = app.add_subcommand("train", "train a model from a JSON config file");
    train->add_option("config", train_config_path, "training config path")->required();

    // retrieve
    std::string checkpoint_path, queries_path, rankings_out, similarity = "dot";
    bool two_stage = false;
    std::size_t k = 10;
    auto* retrieve = app.add_subcommand("retrieve", "rank candidates for each query");
    retrieve->add_option("--checkpoint", checkpoint_path)->required();
    retrieve->add_option("--corpus", corpus_path)->required();
    retrieve->add_option("--queries", queries_path, "file with one query id per line")->required();
    retrieve->add_option("--out", rankings_out)->required();
    retrieve->add_flag("--two-stage", two_stage, "rerank BM25 top-k instead of the full pool");
    retrieve->add_option("--k", k, "first-stage depth for --two-stage");
    retrieve->add_option("--encoder-seed", encoder_seed);
    retrieve->add_option("--similarity", similarity, "dot|cosine");
    retrieve->add_flag("--no-virtual-node", no_virtual_node);

    // eval
    std::string rankings_path, labels_path, json_out;
    std::size_t cutoff = 5;
    auto* eval_cmd = app.add_subcommand("eval", "score rankings against relevance labels");
    eval_cmd->add_option("--rankings", rankings_path)->required();
    eval_cmd->add_option("--labels", labels_path)->required();
    eval_cmd->add_option("--json-out", json_out, "also write the report as JSON");
    eval_cmd->add_option("--cutoff", cutoff);

    // synth
    std::size_t n_cases = 100, n_clusters = 10;
    std::uint64_t synth_seed = 0;
    std::string synth_corpus = "synth_corpus.jsonl", synth_labels = "synth_labels.jsonl";
    auto* synth = app.add_subcommand("synth", "generate the cluster-structured synthetic corpus");
    synth->add_option("--n-cases", n_cases);
    synth->add_option("--clusters", n_clusters);
    synth->add_option("--seed", synth_seed);
    synth->add_option("--out-corpus", synth_corpus);
    synth->add_option("--out-labels", synth_labels);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (build->parsed()) {
            return cmd_build_graphs(corpus_path, out_path, dim, encoder_seed, no_virtual_node);
        }
        if (train->parsed()) return cmd_train(train_config_path);
        if (retrieve->parsed()) {
            return cmd_retrieve(checkpoint_path, corpus_path, queries_path, rankings_out, two_stage,
                                k, encoder_seed, no_virtual_node, similarity);
        }
        if (eval_cmd->parsed()) return cmd_eval(rankings_path, labels_path, json_out, cutoff);
        if (synth->parsed()) {
            return cmd_synth(n_cases, n_clusters, synth_seed, synth_corpus, synth_labels);
        }
    } catch (const graphret::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
