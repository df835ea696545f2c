#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace graphret {

// Dense row-major matrix of doubles. Vectors are (n x 1) columns.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}
    Mat(std::size_t r, std::size_t c, std::vector<double> data);

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    std::size_t size() const { return v.size(); }
    bool is_vector() const { return cols == 1; }
    bool is_scalar() const { return rows == 1 && cols == 1; }

    static Mat column(std::vector<double> data);
    std::string shape_str() const;
};

bool same_shape(const Mat& a, const Mat& b);

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while its tape lives
// and has not been cleared.
struct Var {
    Tape* tape = nullptr;
    std::size_t idx = 0;

    bool valid() const { return tape != nullptr; }
    const Mat& value() const;
    const Mat& grad() const;
};

// Records operations for one forward pass; backward() replays the local
// gradient rules in reverse recording order. Intended lifetime is a single
// training step: build, backward, read leaf grads, clear.
class Tape {
public:
    Var leaf(Mat value, bool requires_grad);

    // Internal: records a node whose backward rule pulls from node grads.
    Var record(Mat value, std::function<void(Tape&, std::size_t)> backprop);

    void backward(Var scalar_output);
    void clear();

    const Mat& value(std::size_t idx) const { return nodes_[idx].value; }
    Mat& grad(std::size_t idx) { return nodes_[idx].grad; }
    const Mat& grad(std::size_t idx) const { return nodes_[idx].grad; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        std::function<void(Tape&, std::size_t)> backprop;  // null for leaves
    };
    std::vector<Node> nodes_;
};

// Taped operations. All throw std::invalid_argument on shape violations,
// naming the offending shapes.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);           // elementwise
Var scalar_mul(Var a, double k);
Var dot(Var a, Var b);           // vectors -> 1x1 scalar
Var exp_op(Var a);
Var log_op(Var a);
Var sqrt_op(Var a);
Var transpose(Var a);
Var sum(Var a);                  // all-elements reduction -> 1x1 scalar
Var mean(const std::vector<Var>& vecs);  // mean of same-shape vectors
Var softmax(Var v);              // vector, max-subtracted
Var leaky_relu(Var a, double slope);  // subgradient at 0 is 1
Var concat(const std::vector<Var>& segments);  // vectors -> one vector
std::vector<Var> split(Var v, const std::vector<std::size_t>& lengths);

// Inverted dropout: scales kept entries by 1/keep at train time so eval mode
// is the identity. The RNG stream is owned by the caller.
Var dropout(Var a, double rate, bool train, std::uint64_t& rng_state);

// Numerically stable log(sum(exp(x))) over a vector, as one taped node.
Var log_sum_exp(Var v);

}  // namespace graphret
