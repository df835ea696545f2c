#include "graphret/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace graphret {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::edgegat: return "edgegat";
        case Variant::gat: return "gat";
        case Variant::gcn: return "gcn";
    }
    throw std::logic_error("bad variant");
}

Variant variant_from_name(const std::string& name) {
    if (name == "edgegat") return Variant::edgegat;
    if (name == "gat") return Variant::gat;
    if (name == "gcn") return Variant::gcn;
    throw std::invalid_argument("unknown variant '" + name + "' (edgegat|gat|gcn)");
}

std::string readout_name(ReadoutMode m) {
    return m == ReadoutMode::virtual_global ? "virtual_global" : "average";
}

ReadoutMode readout_from_name(const std::string& name) {
    if (name == "virtual_global") return ReadoutMode::virtual_global;
    if (name == "average") return ReadoutMode::average;
    throw std::invalid_argument("unknown readout mode '" + name + "' (virtual_global|average)");
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))
Mat init_matrix(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                std::uint64_t& rng) {
    double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Mat m(rows, cols);
    for (double& x : m.v) {
        double u = static_cast<double>(splitmix64(rng) >> 11) * 0x1.0p-53;
        x = (2.0 * u - 1.0) * a;
    }
    return m;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
    if (config.layer_dims.empty()) throw std::invalid_argument("ModelParams: need >= 1 layer");
    if (config.heads == 0) throw std::invalid_argument("ModelParams: need >= 1 head");
    if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0)) {
        throw std::invalid_argument("ModelParams: dropout_rate must lie in [0,1)");
    }
    ModelParams p;
    p.config = config;
    std::uint64_t rng = seed * 0x9E3779B97F4A7C15ull + 0x6A09E667F3BCC909ull;
    for (std::size_t l = 0; l < config.layer_dims.size(); ++l) {
        std::size_t d_in = config.layer_in(l);
        std::size_t d_out = config.layer_dims[l];
        LayerParams lp;
        lp.W_s = init_matrix(d_out, d_in, d_in, d_out, rng);
        for (std::size_t k = 0; k < config.heads; ++k) {
            lp.W_n.push_back(init_matrix(d_out, d_in, d_in, d_out, rng));
            // edge features are reused unchanged across layers, so W_e always
            // maps from the encoder dimension
            lp.W_e.push_back(init_matrix(d_out, config.input_dim, config.input_dim, d_out, rng));
            lp.w_att.push_back(init_matrix(3 * d_out, 1, 3 * d_out, 1, rng));
        }
        p.layers.push_back(std::move(lp));
    }
    return p;
}

std::vector<std::pair<std::string, Mat*>> ModelParams::named_matrices() {
    std::vector<std::pair<std::string, Mat*>> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        std::string prefix = "layer" + std::to_string(l) + ".";
        out.emplace_back(prefix + "W_s", &layers[l].W_s);
        for (std::size_t k = 0; k < layers[l].W_n.size(); ++k) {
            std::string head = prefix + "head" + std::to_string(k) + ".";
            out.emplace_back(head + "W_n", &layers[l].W_n[k]);
            out.emplace_back(head + "W_e", &layers[l].W_e[k]);
            out.emplace_back(head + "w_att", &layers[l].w_att[k]);
        }
    }
    return out;
}

std::vector<std::pair<std::string, const Mat*>> ModelParams::named_matrices() const {
    auto mut = const_cast<ModelParams*>(this)->named_matrices();
    std::vector<std::pair<std::string, const Mat*>> out;
    out.reserve(mut.size());
    for (auto& [name, m] : mut) out.emplace_back(name, m);
    return out;
}

TapedModel lease_params(ModelParams& params, Tape& tape, bool requires_grad) {
    TapedModel m;
    m.config = &params.config;
    for (LayerParams& lp : params.layers) {
        TapedLayer tl;
        tl.W_s = tape.leaf(lp.W_s, requires_grad);
        for (std::size_t k = 0; k < lp.W_n.size(); ++k) {
            tl.W_n.push_back(tape.leaf(lp.W_n[k], requires_grad));
            tl.W_e.push_back(tape.leaf(lp.W_e[k], requires_grad));
            tl.w_att.push_back(tape.leaf(lp.w_att[k], requires_grad));
        }
        m.layers.push_back(std::move(tl));
    }
    return m;
}

std::vector<Var> layer_forward(const TapedLayer& layer, const ModelConfig& config,
                               std::size_t layer_idx, const CaseGraph& g,
                               const std::vector<Var>& h_nodes, const std::vector<Var>& h_edges,
                               const ForwardOptions& opts) {
    std::size_t d_in = config.layer_in(layer_idx);
    std::size_t d_out = config.layer_dims[layer_idx];
    Tape& tape = *layer.W_s.tape;
    auto check_dim = [&](const Var& h, std::size_t want, const char* what) {
        if (h.value().rows != want || h.value().cols != 1) {
            throw std::invalid_argument("layer " + std::to_string(layer_idx) + ": " + what +
                                        " feature " + h.value().shape_str() + ", expected (" +
                                        std::to_string(want) + "x1)");
        }
    };
    for (const Var& h : h_nodes) check_dim(h, d_in, "node");
    for (const Var& h : h_edges) check_dim(h, config.input_dim, "edge");
    if (h_nodes.size() != g.nodes.size() || h_edges.size() != g.edges.size()) {
        throw std::invalid_argument("layer " + std::to_string(layer_idx) +
                                    ": feature count does not match graph");
    }

    auto nbrs = g.in_neighbors();
    std::size_t K = config.heads;

    // Per-head projections computed once and shared across neighborhoods.
    std::vector<std::vector<Var>> Wn_h(K), We_h(K);
    for (std::size_t k = 0; k < K; ++k) {
        for (const Var& h : h_nodes) Wn_h[k].push_back(matmul(layer.W_n[k], h));
        if (config.variant == Variant::edgegat) {
            for (const Var& h : h_edges) We_h[k].push_back(matmul(layer.W_e[k], h));
        }
    }
    Var zero_msg;  // shared zero for the dropped edge term in the gat variant
    if (config.variant == Variant::gat) zero_msg = tape.leaf(Mat(d_out, 1), false);

    if (opts.trace) {
        opts.trace->weights.emplace_back(K, std::vector<std::vector<double>>(g.nodes.size()));
    }

    std::vector<Var> out;
    out.reserve(g.nodes.size());
    for (std::size_t v = 0; v < g.nodes.size(); ++v) {
        Var updated = matmul(layer.W_s, h_nodes[v]);
        const auto& nv = nbrs[v];
        if (!nv.empty()) {
            std::vector<Var> head_outputs;
            for (std::size_t k = 0; k < K; ++k) {
                std::vector<Var> messages;
                messages.reserve(nv.size());
                Var agg;
                if (config.variant == Variant::gcn) {
                    // symmetric degree normalization, no attention
                    for (const auto& [u, e] : nv) {
                        double coef = 1.0 / std::sqrt(static_cast<double>(nv.size()) *
                                                      static_cast<double>(std::max<std::size_t>(
                                                          nbrs[u].size(), 1)));
                        messages.push_back(scalar_mul(Wn_h[k][u], coef));
                    }
                    agg = messages[0];
                    for (std::size_t i = 1; i < messages.size(); ++i) agg = add(agg, messages[i]);
                } else {
                    std::vector<Var> logits;
                    logits.reserve(nv.size());
                    for (auto [u, e] : nv) {
                        Var edge_term = config.variant == Variant::edgegat ? We_h[k][e] : zero_msg;
                        Var cat = concat({Wn_h[k][v], Wn_h[k][u], edge_term});
                        Var logit = dot(layer.w_att[k], cat);
                        logits.push_back(leaky_relu(logit, config.attention_slope));
                        messages.push_back(add(Wn_h[k][u], edge_term));
                    }
                    Var alpha = softmax(concat(logits));
                    if (opts.trace) {
                        opts.trace->weights.back()[k][v] = alpha.value().v;
                    }
                    std::vector<Var> alphas = split(alpha, std::vector<std::size_t>(nv.size(), 1));
                    for (std::size_t i = 0; i < nv.size(); ++i) {
                        Var scaled = matmul(messages[i], alphas[i]);  // (d x 1) * (1 x 1)
                        agg = (i == 0) ? scaled : add(agg, scaled);
                    }
                }
                head_outputs.push_back(agg);
            }
            updated = add(updated, mean(head_outputs));
        }
        if (opts.train && config.dropout_rate > 0.0) {
            if (!opts.dropout_rng) {
                throw std::invalid_argument("layer_forward: train mode needs a dropout RNG");
            }
            updated = dropout(updated, config.dropout_rate, true, *opts.dropout_rng);
        }
        out.push_back(updated);
    }
    return out;
}

Var readout(const CaseGraph& g, const std::vector<Var>& h_nodes, ReadoutMode mode) {
    if (h_nodes.empty()) throw std::invalid_argument("readout: empty graph");
    if (mode == ReadoutMode::virtual_global) {
        if (!g.has_global) {
            throw std::invalid_argument("readout: graph '" + g.case_id +
                                        "' has no virtual global node; use average readout");
        }
        return h_nodes[g.global_node_id];
    }
    return mean(h_nodes);
}

Var graph_forward(const TapedModel& model, const CaseGraph& g, Tape& tape,
                  const ForwardOptions& opts) {
    const ModelConfig& config = *model.config;
    std::vector<Var> h_nodes, h_edges;
    for (const GraphNode& n : g.nodes) h_nodes.push_back(tape.leaf(Mat::column(n.feature), false));
    for (const GraphEdge& e : g.edges) h_edges.push_back(tape.leaf(Mat::column(e.feature), false));
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        h_nodes = layer_forward(model.layers[l], config, l, g, h_nodes, h_edges, opts);
    }
    return readout(g, h_nodes, config.readout);
}

Var case_representation(const TapedModel& model, const CaseGraph& fact, const CaseGraph& issue,
                        Tape& tape, const ForwardOptions& opts) {
    Var hf = graph_forward(model, fact, tape, opts);
    Var hi = graph_forward(model, issue, tape, opts);
    return concat({hf, hi});
}

std::vector<double> case_representation_eval(ModelParams& params, const CaseGraph& fact,
                                             const CaseGraph& issue) {
    Tape tape;
    TapedModel m = lease_params(params, tape, false);
    ForwardOptions opts;  // eval mode
    Var rep = case_representation(m, fact, issue, tape, opts);
    return rep.value().v;
}

namespace {

constexpr const char* kCheckpointMagic = "graphret-checkpoint";
constexpr int kCheckpointVersion = 1;

nlohmann::json mat_to_json(const Mat& m) {
    return nlohmann::json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.v}};
}

Mat mat_from_json(const nlohmann::json& j) {
    return Mat(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
               j.at("data").get<std::vector<double>>());
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    nlohmann::json j;
    j["format"] = kCheckpointMagic;
    j["version"] = kCheckpointVersion;
    j["config"] = {{"input_dim", params.config.input_dim},
                   {"layer_dims", params.config.layer_dims},
                   {"heads", params.config.heads},
                   {"variant", variant_name(params.config.variant)},
                   {"readout", readout_name(params.config.readout)},
                   {"dropout_rate", params.config.dropout_rate},
                   {"attention_slope", params.config.attention_slope}};
    nlohmann::json mats = nlohmann::json::object();
    for (const auto& [name, m] : params.named_matrices()) mats[name] = mat_to_json(*m);
    j["matrices"] = std::move(mats);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << j.dump() << "\n";
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("load_checkpoint: " + path + " is not a valid checkpoint: " +
                                 e.what());
    }
    if (!j.is_object() || j.value("format", "") != kCheckpointMagic) {
        throw std::runtime_error("load_checkpoint: " + path + " missing checkpoint header");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
        throw std::runtime_error("load_checkpoint: unsupported version " +
                                 j.at("version").dump() + " in " + path);
    }
    const nlohmann::json& c = j.at("config");
    ModelConfig config;
    config.input_dim = c.at("input_dim").get<std::size_t>();
    config.layer_dims = c.at("layer_dims").get<std::vector<std::size_t>>();
    config.heads = c.at("heads").get<std::size_t>();
    config.variant = variant_from_name(c.at("variant").get<std::string>());
    config.readout = readout_from_name(c.at("readout").get<std::string>());
    config.dropout_rate = c.at("dropout_rate").get<double>();
    config.attention_slope = c.at("attention_slope").get<double>();
    ModelParams params = ModelParams::init(config, 0);
    const nlohmann::json& mats = j.at("matrices");
    for (auto& [name, m] : params.named_matrices()) {
        if (!mats.contains(name)) {
            throw std::runtime_error("load_checkpoint: matrix '" + name + "' missing from " + path);
        }
        Mat loaded = mat_from_json(mats.at(name));
        if (!same_shape(loaded, *m)) {
            throw std::runtime_error("load_checkpoint: matrix '" + name + "' has shape " +
                                     loaded.shape_str() + ", expected " + m->shape_str());
        }
        *m = std::move(loaded);
    }
    return params;
}

}  // namespace graphret
