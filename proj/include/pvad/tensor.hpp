#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pvad/errors.hpp"

namespace pvad::ad {

// Dense row-major float tensor, rank 1 or 2. `node` is the tape handle;
// -1 means the value is a constant as far as autodiff is concerned.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;
    int node = -1;

    Tensor() = default;
    Tensor(std::vector<int> shp, float fill = 0.0f);
    Tensor(std::vector<int> shp, std::vector<float> values);

    static Tensor vec(std::vector<float> values);
    static Tensor scalar(float v) { return Tensor({1}, {v}); }

    int rows() const { return shape.size() == 2 ? shape[0] : 1; }
    int cols() const {
        if (shape.size() == 2) return shape[1];
        return shape.empty() ? 0 : shape[0];
    }
    std::size_t size() const { return data.size(); }
    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }
};

std::string shape_str(const std::vector<int>& shape);

class Tape;

// Per-node gradients produced by Tape::backward. Nodes never reached from the
// loss read back as zeros.
class Gradients {
public:
    const std::vector<float>& flat(int node) const;
    Tensor at(const Tensor& t) const;
    bool reached(int node) const;

private:
    friend class Tape;
    std::vector<std::vector<float>> grads_;
    std::vector<std::vector<int>> shapes_;
    mutable std::vector<float> zeros_;
};

// Append-only record of differentiable operations. Node inputs always refer
// to lower ids, so backward is a single reverse sweep.
class Tape {
public:
    using BackFn =
        std::function<void(const std::vector<float>& upstream, std::vector<std::vector<float>>& grads)>;

    // Register t as a differentiable leaf (parameter). Returns the node id.
    int watch(Tensor& t);

    int record(std::vector<int> inputs, std::vector<int> out_shape, BackFn back);

    std::size_t num_nodes() const { return nodes_.size(); }
    const std::vector<int>& node_shape(int id) const { return nodes_[id].shape; }

    // Reverse sweep from a scalar loss node.
    Gradients backward(const Tensor& loss) const;

private:
    struct Node {
        std::vector<int> inputs;
        std::vector<int> shape;
        BackFn back;
    };
    std::vector<Node> nodes_;
};

// --- Differentiable ops. Passing tape == nullptr runs forward only. ---

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor add_rows(const Tensor& m, const Tensor& v, Tape* tape = nullptr);
Tensor mul_rows(const Tensor& m, const Tensor& v, Tape* tape = nullptr);
Tensor add_const(const Tensor& t, float c, Tape* tape = nullptr);
Tensor scale(const Tensor& t, float c, Tape* tape = nullptr);
Tensor gelu(const Tensor& t, Tape* tape = nullptr);
Tensor concat_cols(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor tile_rows(const Tensor& v, int t_rows, Tape* tape = nullptr);
Tensor slice(const Tensor& t, int offset, std::vector<int> out_shape, Tape* tape = nullptr);
Tensor sum(const Tensor& t, Tape* tape = nullptr);
Tensor reshape(const Tensor& t, std::vector<int> shape);

// (x - mean) / sqrt(var + eps) per row, scaled by gain and shifted by bias.
inline constexpr float kLayerNormEps = 1e-5f;
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Tape* tape = nullptr);

// Mean over frames of -log softmax(logits)[label]; labels in {0..C-1}.
// Optional per-class weights turn the mean into a weighted mean.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             Tape* tape = nullptr,
                             const std::vector<float>& class_weights = {});

// Row-wise softmax (forward only; used by evaluation and inference).
Tensor softmax(const Tensor& logits);

// Full LSTM layer over a T×d input. Gate order in the packed 4H dimension is
// (input, forget, cell, output). Returns the T×H hidden sequence.
Tensor lstm_sequence(const Tensor& x, const Tensor& wx, const Tensor& wh, const Tensor& b,
                     Tape* tape = nullptr);

// Single LSTM step on plain buffers, shared with the streaming path.
// xb = x·wx + b must be precomputed by the caller; h and c are updated in place.
void lstm_cell_kernel(const float* xb, const float* wh, float* h, float* c, int hidden);

// Convenience single-step cell matching lstm_sequence arithmetic exactly.
struct LstmState {
    std::vector<float> h, c;
};
void lstm_cell(const std::vector<float>& x, const Tensor& wx, const Tensor& wh, const Tensor& b,
               LstmState& state);

}  // namespace pvad::ad
