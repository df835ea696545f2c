#include "graphret/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace graphret {

Mat::Mat(std::size_t r, std::size_t c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {
    if (v.size() != rows * cols) {
        throw std::invalid_argument("Mat: data length " + std::to_string(v.size()) +
                                    " does not match shape " + shape_str());
    }
}

Mat Mat::column(std::vector<double> data) {
    std::size_t n = data.size();
    return Mat(n, 1, std::move(data));
}

std::string Mat::shape_str() const {
    return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

bool same_shape(const Mat& a, const Mat& b) { return a.rows == b.rows && a.cols == b.cols; }

const Mat& Var::value() const { return tape->value(idx); }
const Mat& Var::grad() const { return tape->grad(idx); }

Var Tape::leaf(Mat value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    if (requires_grad) n.grad = Mat(n.value.rows, n.value.cols);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Mat value, std::function<void(Tape&, std::size_t)> backprop) {
    Node n;
    n.value = std::move(value);
    n.grad = Mat(n.value.rows, n.value.cols);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var out) {
    if (out.tape != this) throw std::invalid_argument("backward: Var belongs to another tape");
    const Mat& val = nodes_[out.idx].value;
    if (!val.is_scalar()) {
        throw std::invalid_argument("backward: output must be scalar, got " + val.shape_str());
    }
    if (nodes_[out.idx].grad.size() == 0) nodes_[out.idx].grad = Mat(1, 1);
    nodes_[out.idx].grad.v[0] = 1.0;
    for (std::size_t i = out.idx + 1; i-- > 0;) {
        if (nodes_[i].backprop && nodes_[i].grad.size() != 0) nodes_[i].backprop(*this, i);
    }
}

void Tape::clear() { nodes_.clear(); }

namespace {

void check_same_tape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || a.tape != b.tape) {
        throw std::invalid_argument(std::string(op) + ": operands on different tapes");
    }
}

// Accumulates g into the grad buffer of node idx, if it participates.
void accum(Tape& t, std::size_t idx, const Mat& g) {
    Mat& dst = t.grad(idx);
    if (dst.size() == 0) return;  // leaf with requires_grad=false
    for (std::size_t i = 0; i < g.size(); ++i) dst.v[i] += g.v[i];
}

bool needs_grad(const Tape& t, std::size_t idx) { return t.grad(idx).size() != 0; }

Mat matmul_values(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) c.at(i, j) += aik * b.at(k, j);
        }
    }
    return c;
}

Mat transpose_values(const Mat& a) {
    Mat t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    const Mat& av = a.value();
    const Mat& bv = b.value();
    if (av.cols != bv.rows) {
        throw std::invalid_argument("matmul: inner dimensions differ, " + av.shape_str() + " x " +
                                    bv.shape_str());
    }
    Mat out = matmul_values(av, bv);
    std::size_t ai = a.idx, bi = b.idx;
    return a.tape->record(std::move(out), [ai, bi](Tape& t, std::size_t self) {
        const Mat& g = t.grad(self);
        if (needs_grad(t, ai)) accum(t, ai, matmul_values(g, transpose_values(t.value(bi))));
        if (needs_grad(t, bi)) accum(t, bi, matmul_values(transpose_values(t.value(ai)), g));
    });
}

Var add(Var a, Var b) {
    check_same_tape(a, b, "add");
    const Mat& av = a.value();
    const Mat& bv = b.value();
    if (!same_shape(av, bv)) {
        throw std::invalid_argument("add: shapes differ, " + av.shape_str() + " vs " + bv.shape_str());
    }
    Mat out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += bv.v[i];
    std::size_t ai = a.idx, bi = b.idx;
    return a.tape->record(std::move(out), [ai, bi](Tape& t, std::size_t self) {
        accum(t, ai, t.grad(self));
        accum(t, bi, t.grad(self));
    });
}

Var sub(Var a, Var b) {
    check_same_tape(a, b, "sub");
    const Mat& av = a.value();
    const Mat& bv = b.value();
    if (!same_shape(av, bv)) {
        throw std::invalid_argument("sub: shapes differ, " + av.shape_str() + " vs " + bv.shape_str());
    }
    Mat out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] -= bv.v[i];
    std::size_t ai = a.idx, bi = b.idx;
    return a.tape->record(std::move(out), [ai, bi](Tape& t, std::size_t self) {
        const Mat& g = t.grad(self);
        accum(t, ai, g);
        Mat neg = g;
        for (double& x : neg.v) x = -x;
        accum(t, bi, neg);
    });
}

Var mul(Var a, Var b) {
    check_same_tape(a, b, "mul");
    const Mat& av = a.value();
    const Mat& bv = b.value();
    if (!same_shape(av, bv)) {
        throw std::invalid_argument("mul: shapes differ, " + av.shape_str() + " vs " + bv.shape_str());
    }
    Mat out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= bv.v[i];
    std::size_t ai = a.idx, bi = b.idx;
    return a.tape->record(std::move(out), [ai, bi](Tape& t, std::size_t self) {
        const Mat& g = t.grad(self);
        if (needs_grad(t, ai)) {
            Mat ga = g;
            const Mat& bv2 = t.value(bi);
            for (std::size_t i = 0; i < ga.size(); ++i) ga.v[i] *= bv2.v[i];
            accum(t, ai, ga);
        }
        if (needs_grad(t, bi)) {
            Mat gb = g;
            const Mat& av2 = t.value(ai);
            for (std::size_t i = 0; i < gb.size(); ++i) gb.v[i] *= av2.v[i];
            accum(t, bi, gb);
        }
    });
}

Var scalar_mul(Var a, double k) {
    Mat out = a.value();
    for (double& x : out.v) x *= k;
    std::size_t ai = a.idx;
    return a.tape->record(std::move(out), [ai, k](Tape& t, std::size_t self) {
        Mat g = t.grad(self);
        for (double& x : g.v) x *= k;
        accum(t, ai, g);
    });
}

Var dot(Var a, Var b) {
    check_same_tape(a, b, "dot");
    const Mat& av = a.value();
    const Mat& bv = b.value();
    if (!av.is_vector() || !bv.is_vector() || av.rows != bv.rows) {
        throw std::invalid_argument("dot: expects equal-length vectors, got " + av.shape_str() +
                                    " and " + bv.shape_str());
    }
    double s = 0.0;
    for (std::size_t i = 0; i < av.rows; ++i) s += av.v[i] * bv.v[i];
    std::size_t ai = a.idx, bi = b.idx;
    return a.tape->record(Mat(1, 1, {s}), [ai, bi](Tape& t, std::size_t self) {
        double g = t.grad(self).v[0];
        if (needs_grad(t, ai)) {
            Mat ga = t.value(bi);
            for (double& x : ga.v) x *= g;
            accum(t, ai, ga);
        }
        if (needs_grad(t, bi)) {
            Mat gb = t.value(ai);
            for (double& x : gb.v) x *= g;
            accum(t, bi, gb);
        }
    });
}

Var exp_op(Var a) {
    Mat out = a.value();
    for (double& x : out.v) x = std::exp(x);
    std::size_t ai = a.idx;
    return a.tape->record(std::move(out), [ai](Tape& t, std::size_t self) {
        Mat g = t.grad(self);
        const Mat& y = t.value(self);
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] *= y.v[i];
        accum(t, ai, g);
    });
}

Var log_op(Var a) {
    Mat out = a.value();
    for (double& x : out.v) x = std::log(x);
    std::size_t ai = a.idx;
    return a.tape->record(std::move(out), [ai](Tape& t, std::size_t self) {
        Mat g = t.grad(self);
        const Mat& x = t.value(ai);
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] /= x.v[i];
        accum(t, ai, g);
    });
}

Var sqrt_op(Var a) {
    Mat out = a.value();
    for (double& x : out.v) x = std::sqrt(x);
    std::size_t ai = a.idx;
    return a.tape->record(std::move(out), [ai](Tape& t, std::size_t self) {
        Mat g = t.grad(self);
        const Mat& y = t.value(self);
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] *= 0.5 / y.v[i];
        accum(t, ai, g);
    });
}

Var transpose(Var a) {
    std::size_t ai = a.idx;
    return a.tape->record(transpose_values(a.value()), [ai](Tape& t, std::size_t self) {
        accum(t, ai, transpose_values(t.grad(self)));
    });
}

Var sum(Var a) {
    double s = 0.0;
    for (double x : a.value().v) s += x;
    std::size_t ai = a.idx;
    return a.tape->record(Mat(1, 1, {s}), [ai](Tape& t, std::size_t self) {
        double g = t.grad(self).v[0];
        const Mat& av = t.value(ai);
        Mat ga(av.rows, av.cols, g);
        accum(t, ai, ga);
    });
}

Var mean(const std::vector<Var>& vecs) {
    if (vecs.empty()) throw std::invalid_argument("mean: empty input set");
    const Mat& first = vecs.front().value();
    for (const Var& v : vecs) {
        if (!same_shape(v.value(), first)) {
            throw std::invalid_argument("mean: mixed shapes " + first.shape_str() + " vs " +
                                        v.value().shape_str());
        }
    }
    Mat out(first.rows, first.cols);
    for (const Var& v : vecs)
        for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += v.value().v[i];
    double inv = 1.0 / static_cast<double>(vecs.size());
    for (double& x : out.v) x *= inv;
    std::vector<std::size_t> idxs;
    idxs.reserve(vecs.size());
    for (const Var& v : vecs) idxs.push_back(v.idx);
    return vecs.front().tape->record(std::move(out), [idxs, inv](Tape& t, std::size_t self) {
        Mat g = t.grad(self);
        for (double& x : g.v) x *= inv;
        for (std::size_t i : idxs) accum(t, i, g);
    });
}

Var softmax(Var v) {
    const Mat& x = v.value();
    if (!x.is_vector() || x.rows == 0) {
        throw std::domain_error("softmax: expects a non-empty vector, got " + x.shape_str());
    }
    double mx = *std::max_element(x.v.begin(), x.v.end());
    Mat out = x;
    double denom = 0.0;
    for (double& e : out.v) {
        e = std::exp(e - mx);
        denom += e;
    }
    for (double& e : out.v) e /= denom;
    std::size_t ai = v.idx;
    return v.tape->record(std::move(out), [ai](Tape& t, std::size_t self) {
        // dx_i = y_i * (g_i - sum_j g_j y_j)
        const Mat& y = t.value(self);
        const Mat& g = t.grad(self);
        double gy = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) gy += g.v[i] * y.v[i];
        Mat gx(y.rows, y.cols);
        for (std::size_t i = 0; i < y.size(); ++i) gx.v[i] = y.v[i] * (g.v[i] - gy);
        accum(t, ai, gx);
    });
}

Var leaky_relu(Var a, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) {
        throw std::invalid_argument("leaky_relu: slope must lie in (0,1), got " + std::to_string(slope));
    }
    Mat out = a.value();
    for (double& x : out.v)
        if (x < 0.0) x *= slope;
    std::size_t ai = a.idx;
    return a.tape->record(std::move(out), [ai, slope](Tape& t, std::size_t self) {
        Mat g = t.grad(self);
        const Mat& x = t.value(ai);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x.v[i] < 0.0) g.v[i] *= slope;
        accum(t, ai, g);
    });
}

Var concat(const std::vector<Var>& segments) {
    if (segments.empty()) throw std::invalid_argument("concat: no segments");
    std::size_t total = 0;
    for (const Var& s : segments) {
        if (!s.value().is_vector()) {
            throw std::invalid_argument("concat: non-vector segment " + s.value().shape_str());
        }
        total += s.value().rows;
    }
    Mat out(total, 1);
    std::size_t off = 0;
    for (const Var& s : segments) {
        const Mat& sv = s.value();
        std::copy(sv.v.begin(), sv.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(off));
        off += sv.rows;
    }
    std::vector<std::size_t> idxs;
    std::vector<std::size_t> lens;
    for (const Var& s : segments) {
        idxs.push_back(s.idx);
        lens.push_back(s.value().rows);
    }
    return segments.front().tape->record(std::move(out), [idxs, lens](Tape& t, std::size_t self) {
        const Mat& g = t.grad(self);
        std::size_t off2 = 0;
        for (std::size_t k = 0; k < idxs.size(); ++k) {
            Mat gs(lens[k], 1);
            std::copy(g.v.begin() + static_cast<std::ptrdiff_t>(off2),
                      g.v.begin() + static_cast<std::ptrdiff_t>(off2 + lens[k]), gs.v.begin());
            accum(t, idxs[k], gs);
            off2 += lens[k];
        }
    });
}

std::vector<Var> split(Var v, const std::vector<std::size_t>& lengths) {
    // copy: record() below may reallocate the tape's node storage
    Mat x = v.value();
    if (!x.is_vector()) throw std::invalid_argument("split: expects a vector, got " + x.shape_str());
    std::size_t total = 0;
    for (std::size_t l : lengths) total += l;
    if (total != x.rows) {
        throw std::invalid_argument("split: segment lengths sum to " + std::to_string(total) +
                                    ", vector has " + std::to_string(x.rows));
    }
    std::vector<Var> out;
    std::size_t off = 0;
    for (std::size_t l : lengths) {
        Mat seg(l, 1);
        std::copy(x.v.begin() + static_cast<std::ptrdiff_t>(off),
                  x.v.begin() + static_cast<std::ptrdiff_t>(off + l), seg.v.begin());
        std::size_t ai = v.idx, o = off;
        out.push_back(v.tape->record(std::move(seg), [ai, o, l](Tape& t, std::size_t self) {
            const Mat& g = t.grad(self);
            Mat& dst = t.grad(ai);
            if (dst.size() == 0) return;
            for (std::size_t i = 0; i < l; ++i) dst.v[o + i] += g.v[i];
        }));
        off += l;
    }
    return out;
}

Var dropout(Var a, double rate, bool train, std::uint64_t& rng_state) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw std::invalid_argument("dropout: rate must lie in [0,1), got " + std::to_string(rate));
    }
    if (!train || rate == 0.0) return a;
    double keep = 1.0 - rate;
    const Mat& x = a.value();
    std::vector<double> mask(x.size());
    for (double& m : mask) {
        double u = static_cast<double>(splitmix64(rng_state) >> 11) * 0x1.0p-53;
        m = (u < keep) ? 1.0 / keep : 0.0;
    }
    Mat out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= mask[i];
    std::size_t ai = a.idx;
    return a.tape->record(std::move(out), [ai, mask](Tape& t, std::size_t self) {
        Mat g = t.grad(self);
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] *= mask[i];
        accum(t, ai, g);
    });
}

Var log_sum_exp(Var v) {
    const Mat& x = v.value();
    if (!x.is_vector() || x.rows == 0) {
        throw std::domain_error("log_sum_exp: expects a non-empty vector, got " + x.shape_str());
    }
    double mx = *std::max_element(x.v.begin(), x.v.end());
    double s = 0.0;
    for (double e : x.v) s += std::exp(e - mx);
    double lse = mx + std::log(s);
    std::size_t ai = v.idx;
    return v.tape->record(Mat(1, 1, {lse}), [ai, lse](Tape& t, std::size_t self) {
        double g = t.grad(self).v[0];
        const Mat& x2 = t.value(ai);
        Mat gx(x2.rows, 1);
        for (std::size_t i = 0; i < x2.rows; ++i) gx.v[i] = g * std::exp(x2.v[i] - lse);
        accum(t, ai, gx);
    });
}

}  // namespace graphret
