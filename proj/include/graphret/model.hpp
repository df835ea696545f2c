#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphret/case_graph.hpp"
#include "graphret/tensor.hpp"

namespace graphret {

enum class Variant { edgegat, gat, gcn };
enum class ReadoutMode { virtual_global, average };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);
std::string readout_name(ReadoutMode m);
ReadoutMode readout_from_name(const std::string& name);

struct ModelConfig {
    std::size_t input_dim = 32;
    std::vector<std::size_t> layer_dims = {32, 32};  // output dim per layer
    std::size_t heads = 2;
    Variant variant = Variant::edgegat;
    ReadoutMode readout = ReadoutMode::virtual_global;
    double dropout_rate = 0.1;
    double attention_slope = 0.2;

    std::size_t layer_in(std::size_t layer) const {
        return layer == 0 ? input_dim : layer_dims[layer - 1];
    }
    std::size_t output_dim() const { return layer_dims.back(); }
};

struct LayerParams {
    Mat W_s;                  // d_in x d_out, self/residual
    std::vector<Mat> W_n;     // per head, d_in x d_out, neighbor
    std::vector<Mat> W_e;     // per head, d_in x d_out, edge
    std::vector<Mat> w_att;   // per head, 3*d_out x 1, attention vector
};

// Parameters are shared between the fact and issue graphs.
struct ModelParams {
    ModelConfig config;
    std::vector<LayerParams> layers;

    static ModelParams init(const ModelConfig& config, std::uint64_t seed);

    // Stable (name, matrix) enumeration; order defines optimizer state layout.
    std::vector<std::pair<std::string, Mat*>> named_matrices();
    std::vector<std::pair<std::string, const Mat*>> named_matrices() const;
};

// Parameters leased onto a tape for one forward/backward pass.
struct TapedLayer {
    Var W_s;
    std::vector<Var> W_n;
    std::vector<Var> W_e;
    std::vector<Var> w_att;
};

struct TapedModel {
    const ModelConfig* config = nullptr;
    std::vector<TapedLayer> layers;
};

TapedModel lease_params(ModelParams& params, Tape& tape, bool requires_grad);

// Per-layer, per-head attention distributions over each node's in-neighbors,
// recorded when a trace sink is supplied to the forward pass.
struct AttentionTrace {
    // [layer][head][node] -> weights aligned with in_neighbors() order
    std::vector<std::vector<std::vector<std::vector<double>>>> weights;
};

struct ForwardOptions {
    bool train = false;
    std::uint64_t* dropout_rng = nullptr;  // required when train and dropout_rate > 0
    AttentionTrace* trace = nullptr;
};

std::vector<Var> layer_forward(const TapedLayer& layer, const ModelConfig& config,
                               std::size_t layer_idx, const CaseGraph& g,
                               const std::vector<Var>& h_nodes, const std::vector<Var>& h_edges,
                               const ForwardOptions& opts);

Var readout(const CaseGraph& g, const std::vector<Var>& h_nodes, ReadoutMode mode);

// Runs all layers on one graph and reads out its vector.
Var graph_forward(const TapedModel& model, const CaseGraph& g, Tape& tape,
                  const ForwardOptions& opts);

// readout(fact) || readout(issue), both graphs through the same parameters.
Var case_representation(const TapedModel& model, const CaseGraph& fact, const CaseGraph& issue,
                        Tape& tape, const ForwardOptions& opts);

// Eval-mode representation on a scratch tape, returned as a plain vector.
std::vector<double> case_representation_eval(ModelParams& params, const CaseGraph& fact,
                                             const CaseGraph& issue);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace graphret
