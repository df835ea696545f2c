#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "fd_check.hpp"
#include "graphret/case_graph.hpp"
#include "graphret/model.hpp"

using namespace graphret;
using fdcheck::random_mat;

namespace {

HashingEncoder test_encoder(std::size_t dim = 4) { return HashingEncoder({dim, true, 0}); }

CaseGraph random_graph(std::mt19937_64& rng, std::size_t max_triplets, const TextEncoder& enc) {
    const char* entities[] = {"alpha", "beta", "gamma", "delta"};
    const char* relations[] = {"is", "has", "filed"};
    std::vector<Triplet> ts;
    std::size_t n = rng() % (max_triplets + 1);
    for (std::size_t i = 0; i < n; ++i) {
        ts.push_back({entities[rng() % 4], relations[rng() % 3], entities[rng() % 4], Section::fact});
    }
    return build_graph("g", Section::fact, ts, "whole section text here", enc);
}

ModelConfig small_config(std::size_t dim, Variant variant = Variant::edgegat) {
    ModelConfig cfg;
    cfg.input_dim = dim;
    cfg.layer_dims = {dim, dim};
    cfg.heads = 2;
    cfg.variant = variant;
    cfg.dropout_rate = 0.0;
    return cfg;
}

std::vector<double> eval_rep(ModelParams& params, const CaseGraph& g) {
    Tape tape;
    TapedModel m = lease_params(params, tape, false);
    ForwardOptions opts;
    return graph_forward(m, g, tape, opts).value().v;
}

}  // namespace

TEST_CASE("residual-only configuration reproduces input features") {
    auto enc = test_encoder();
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        CaseGraph g = random_graph(rng, 6, enc);
        ModelConfig cfg = small_config(4);
        cfg.heads = 1;
        cfg.layer_dims = {4};
        ModelParams p = ModelParams::init(cfg, 0);
        // W_s = I, everything else zero
        p.layers[0].W_s = Mat(4, 4);
        for (int i = 0; i < 4; ++i) p.layers[0].W_s.at(i, i) = 1.0;
        p.layers[0].W_n[0] = Mat(4, 4);
        p.layers[0].W_e[0] = Mat(4, 4);
        p.layers[0].w_att[0] = Mat(12, 1);

        Tape tape;
        TapedModel m = lease_params(p, tape, false);
        std::vector<Var> h_nodes, h_edges;
        for (const GraphNode& n : g.nodes) h_nodes.push_back(tape.leaf(Mat::column(n.feature), false));
        for (const GraphEdge& e : g.edges) h_edges.push_back(tape.leaf(Mat::column(e.feature), false));
        ForwardOptions opts;
        auto out = layer_forward(m.layers[0], cfg, 0, g, h_nodes, h_edges, opts);
        for (std::size_t v = 0; v < g.nodes.size(); ++v) {
            for (std::size_t i = 0; i < 4; ++i) {
                CHECK(out[v].value().v[i] == doctest::Approx(g.nodes[v].feature[i]).epsilon(1e-15));
            }
        }
    }
}

TEST_CASE("single entity + global node matches an independent 2x2 computation") {
    // Graph: entity e and global g joined by one reciprocal edge whose feature
    // copies e's. Hand-set 2x2 weights, K=1, one layer. The expected update is
    // computed here with straight-line arithmetic, no tape.
    CaseGraph g;
    g.case_id = "hand";
    g.nodes = {{"e", {1.0, 2.0}}, {"G", {0.5, -1.0}}};
    g.edges = {{0, 1, "e", {1.0, 2.0}, true}};
    g.has_global = true;
    g.global_node_id = 1;

    ModelConfig cfg;
    cfg.input_dim = 2;
    cfg.layer_dims = {2};
    cfg.heads = 1;
    cfg.dropout_rate = 0.0;
    ModelParams p = ModelParams::init(cfg, 0);
    p.layers[0].W_s = Mat(2, 2, {1.0, 0.5, -0.25, 2.0});
    p.layers[0].W_n[0] = Mat(2, 2, {0.5, -1.0, 1.5, 0.25});
    p.layers[0].W_e[0] = Mat(2, 2, {2.0, 0.0, 0.0, -0.5});
    p.layers[0].w_att[0] = Mat(6, 1, {0.1, 0.2, 0.3, -0.1, 0.4, -0.2});

    auto matvec = [](const Mat& m, const std::vector<double>& x) {
        std::vector<double> y(m.rows, 0.0);
        for (std::size_t i = 0; i < m.rows; ++i)
            for (std::size_t j = 0; j < m.cols; ++j) y[i] += m.at(i, j) * x[j];
        return y;
    };
    // each node has exactly one in-neighbor, so its attention weight is 1
    // h'_v = W_s h_v + (W_n h_u + W_e h_e)
    std::vector<double> he = {1.0, 2.0};
    std::vector<double> h0 = {1.0, 2.0}, h1 = {0.5, -1.0};
    std::vector<double> exp0 = matvec(p.layers[0].W_s, h0);
    std::vector<double> m0 = matvec(p.layers[0].W_n[0], h1);
    std::vector<double> me = matvec(p.layers[0].W_e[0], he);
    for (int i = 0; i < 2; ++i) exp0[i] += m0[i] + me[i];
    std::vector<double> exp1 = matvec(p.layers[0].W_s, h1);
    std::vector<double> m1 = matvec(p.layers[0].W_n[0], h0);
    for (int i = 0; i < 2; ++i) exp1[i] += m1[i] + me[i];

    Tape tape;
    TapedModel m = lease_params(p, tape, false);
    std::vector<Var> h_nodes{tape.leaf(Mat::column(h0), false), tape.leaf(Mat::column(h1), false)};
    std::vector<Var> h_edges{tape.leaf(Mat::column(he), false)};
    ForwardOptions opts;
    auto out = layer_forward(m.layers[0], cfg, 0, g, h_nodes, h_edges, opts);
    for (int i = 0; i < 2; ++i) {
        CHECK(out[0].value().v[i] == doctest::Approx(exp0[i]).epsilon(1e-12));
        CHECK(out[1].value().v[i] == doctest::Approx(exp1[i]).epsilon(1e-12));
    }
}

TEST_CASE("attention weights over each neighborhood sum to 1") {
    auto enc = test_encoder();
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        CaseGraph g = random_graph(rng, 8, enc);
        ModelParams p = ModelParams::init(small_config(4), trial);
        Tape tape;
        TapedModel m = lease_params(p, tape, false);
        ForwardOptions opts;
        AttentionTrace trace;
        opts.trace = &trace;
        graph_forward(m, g, tape, opts);
        REQUIRE(trace.weights.size() == 2);  // per layer
        for (const auto& layer : trace.weights) {
            for (const auto& head : layer) {
                for (const auto& dist : head) {
                    if (dist.empty()) continue;  // node without in-neighbors
                    double s = 0.0;
                    for (double w : dist) s += w;
                    CHECK(std::abs(s - 1.0) < 1e-9);
                }
            }
        }
    }
}

TEST_CASE("readout modes") {
    CaseGraph g;
    g.nodes = {{"a", {1.0, 0.0}}, {"b", {0.0, 1.0}}};
    g.has_global = false;

    Tape tape;
    std::vector<Var> h{tape.leaf(Mat(2, 1, {1, 0}), false), tape.leaf(Mat(2, 1, {0, 1}), false)};
    Mat avg = readout(g, h, ReadoutMode::average).value();
    CHECK(avg.v == std::vector<double>{0.5, 0.5});
    CHECK_THROWS_AS(readout(g, h, ReadoutMode::virtual_global), std::invalid_argument);

    CaseGraph one;
    one.nodes = {{"only", {1.0}}};
    one.has_global = true;
    one.global_node_id = 0;
    std::vector<Var> h1{tape.leaf(Mat(1, 1, {7}), false)};
    CHECK(readout(one, h1, ReadoutMode::virtual_global).value().v[0] == 7);
    CHECK(readout(one, h1, ReadoutMode::average).value().v[0] == 7);
}

TEST_CASE("entity permutation leaves both readouts unchanged") {
    auto enc = test_encoder();
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 10; ++trial) {
        CaseGraph g = random_graph(rng, 8, enc);
        if (g.nodes.size() < 3) continue;
        for (ReadoutMode mode : {ReadoutMode::virtual_global, ReadoutMode::average}) {
            ModelConfig cfg = small_config(4);
            cfg.readout = mode;
            ModelParams p = ModelParams::init(cfg, trial);
            std::vector<double> base = eval_rep(p, g);

            // relabel entities with a random permutation; global stays last
            std::size_t n_entities = g.nodes.size() - 1;
            std::vector<std::size_t> perm(n_entities);
            for (std::size_t i = 0; i < n_entities; ++i) perm[i] = i;
            std::shuffle(perm.begin(), perm.end(), rng);
            CaseGraph h = g;
            for (std::size_t i = 0; i < n_entities; ++i) h.nodes[perm[i]] = g.nodes[i];
            auto relabel = [&](std::size_t v) { return v == g.global_node_id ? v : perm[v]; };
            for (std::size_t e = 0; e < g.edges.size(); ++e) {
                h.edges[e].src = relabel(g.edges[e].src);
                h.edges[e].dst = relabel(g.edges[e].dst);
            }
            std::vector<double> permuted = eval_rep(p, h);
            for (std::size_t i = 0; i < base.size(); ++i) {
                CHECK(std::abs(base[i] - permuted[i]) < 1e-9);
            }
        }
    }
}

TEST_CASE("gat variant equals edgegat with zero edge weights") {
    auto enc = test_encoder();
    std::mt19937_64 rng(41);
    CaseGraph g = random_graph(rng, 6, enc);
    ModelParams gat = ModelParams::init(small_config(4, Variant::gat), 5);
    ModelParams edge = gat;
    edge.config.variant = Variant::edgegat;
    for (LayerParams& l : edge.layers)
        for (Mat& we : l.W_e) we = Mat(we.rows, we.cols);

    std::vector<double> a = eval_rep(gat, g);
    std::vector<double> b = eval_rep(edge, g);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("gcn on a two-node ring with identity weights") {
    // nodes 0 <-> 1 via two directed edges; both degrees 1, so the
    // normalization coefficient is 1 and h'_v = h_v + h_u
    CaseGraph g;
    g.nodes = {{"a", {1.0, 2.0}}, {"b", {-3.0, 4.0}}};
    g.edges = {{0, 1, "r", {0.0, 0.0}, false}, {1, 0, "r", {0.0, 0.0}, false}};
    g.has_global = false;

    ModelConfig cfg;
    cfg.input_dim = 2;
    cfg.layer_dims = {2};
    cfg.heads = 1;
    cfg.variant = Variant::gcn;
    cfg.dropout_rate = 0.0;
    ModelParams p = ModelParams::init(cfg, 0);
    p.layers[0].W_s = Mat(2, 2, {1, 0, 0, 1});
    p.layers[0].W_n[0] = Mat(2, 2, {1, 0, 0, 1});

    Tape tape;
    TapedModel m = lease_params(p, tape, false);
    std::vector<Var> h{tape.leaf(Mat(2, 1, {1, 2}), false), tape.leaf(Mat(2, 1, {-3, 4}), false)};
    std::vector<Var> e{tape.leaf(Mat(2, 1), false), tape.leaf(Mat(2, 1), false)};
    ForwardOptions opts;
    auto out = layer_forward(m.layers[0], cfg, 0, g, h, e, opts);
    CHECK(out[0].value().v == std::vector<double>{-2.0, 6.0});
    CHECK(out[1].value().v == std::vector<double>{-2.0, 6.0});
}

TEST_CASE("all variants preserve output shape") {
    auto enc = test_encoder();
    std::mt19937_64 rng(43);
    CaseGraph g = random_graph(rng, 6, enc);
    for (Variant v : {Variant::edgegat, Variant::gat, Variant::gcn}) {
        ModelParams p = ModelParams::init(small_config(4, v), 1);
        CHECK(eval_rep(p, g).size() == 4);
    }
}

TEST_CASE("case representation concatenates fact and issue readouts") {
    auto enc = test_encoder();
    std::mt19937_64 rng(47);
    CaseGraph fact = random_graph(rng, 6, enc);
    CaseGraph issue = fact;
    issue.section = Section::issue;
    ModelParams p = ModelParams::init(small_config(4), 2);

    Tape tape;
    TapedModel m = lease_params(p, tape, false);
    ForwardOptions opts;
    Var rep = case_representation(m, fact, issue, tape, opts);
    REQUIRE(rep.value().rows == 8);  // 2 * d_out
    for (int i = 0; i < 4; ++i) {
        CHECK(rep.value().v[i] == rep.value().v[i + 4]);  // identical graphs
    }

    // deterministic in eval mode
    std::vector<double> again = case_representation_eval(p, fact, issue);
    CHECK(again == rep.value().v);
}

TEST_CASE("gradient of a scalar loss w.r.t. every parameter matches finite differences") {
    auto enc = test_encoder();
    std::mt19937_64 rng(53);
    CaseGraph fact = random_graph(rng, 3, enc);   // <= 8 nodes
    CaseGraph issue = random_graph(rng, 3, enc);
    issue.section = Section::issue;
    ModelConfig cfg = small_config(4);  // d=4, K=2, 2 layers
    ModelParams p = ModelParams::init(cfg, 9);

    // analytic gradients
    Tape tape;
    TapedModel m = lease_params(p, tape, true);
    ForwardOptions opts;
    Var rep = case_representation(m, fact, issue, tape, opts);
    Var loss = dot(rep, rep);
    tape.backward(loss);
    std::vector<Mat> analytic;
    for (const TapedLayer& l : m.layers) {
        analytic.push_back(l.W_s.grad());
        for (std::size_t k = 0; k < l.W_n.size(); ++k) {
            analytic.push_back(l.W_n[k].grad());
            analytic.push_back(l.W_e[k].grad());
            analytic.push_back(l.w_att[k].grad());
        }
    }

    auto eval_loss = [&](ModelParams& pp) {
        std::vector<double> r = case_representation_eval(pp, fact, issue);
        double s = 0.0;
        for (double x : r) s += x * x;
        return s;
    };
    double eps = 1e-5;
    auto mats = p.named_matrices();
    REQUIRE(mats.size() == analytic.size());
    for (std::size_t i = 0; i < mats.size(); ++i) {
        for (std::size_t j = 0; j < mats[i].second->size(); ++j) {
            double orig = mats[i].second->v[j];
            mats[i].second->v[j] = orig + eps;
            double up = eval_loss(p);
            mats[i].second->v[j] = orig - eps;
            double down = eval_loss(p);
            mats[i].second->v[j] = orig;
            double numeric = (up - down) / (2 * eps);
            double exact = analytic[i].v[j];
            CAPTURE(mats[i].first);
            if (std::abs(exact) < 1e-3) {
                CHECK(std::abs(numeric - exact) < 1e-6 + 1e-4 * std::abs(numeric));
            } else {
                CHECK(std::abs(numeric - exact) / std::abs(exact) < 1e-4);
            }
        }
    }
}

TEST_CASE("checkpoint round-trip is bit-exact; bad files are rejected") {
    ModelParams p = ModelParams::init(small_config(4), 77);
    save_checkpoint(p, "test_ckpt.json");
    ModelParams q = load_checkpoint("test_ckpt.json");
    auto pm = p.named_matrices();
    auto qm = q.named_matrices();
    REQUIRE(pm.size() == qm.size());
    for (std::size_t i = 0; i < pm.size(); ++i) {
        CHECK(pm[i].second->v == qm[i].second->v);
    }
    CHECK(q.config.heads == p.config.heads);

    {
        std::ofstream bad("test_ckpt_bad.json");
        bad << R"({"format": "something-else"})" << "\n";
    }
    CHECK_THROWS_AS(load_checkpoint("test_ckpt_bad.json"), std::runtime_error);
    {
        std::ofstream bad("test_ckpt_trunc.json");
        bad << R"({"format": "graphret-checkpoint", "ver)";
    }
    CHECK_THROWS_AS(load_checkpoint("test_ckpt_trunc.json"), std::runtime_error);
    {
        std::ofstream bad("test_ckpt_v9.json");
        bad << R"({"format": "graphret-checkpoint", "version": 9, "config": {}, "matrices": {}})";
    }
    CHECK_THROWS_AS(load_checkpoint("test_ckpt_v9.json"), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint("no_such_file.json"), std::runtime_error);
}
