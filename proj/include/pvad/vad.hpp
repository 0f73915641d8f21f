#pragma once

#include <map>
#include <string>
#include <vector>

#include "pvad/features.hpp"
#include "pvad/tensor.hpp"

namespace pvad {

// Trunk: pre-MLP (input_dim -> pre_hidden -> pre_hidden, GeLU) ->
// 2-layer LSTM (lstm_hidden units) -> linear head (num_classes logits).
struct VadConfig {
    int input_dim = 40;
    int pre_hidden = 64;
    int lstm_hidden = 64;
    int num_classes = 3;
    // Layers eligible for additive weight deltas.
    std::vector<std::string> patch_targets = {"pre2.W", "pre2.b", "post.W", "post.b"};
};

struct LayoutEntry {
    std::string name;
    int offset = 0;
    std::vector<int> shape;
    int size() const {
        int n = 1;
        for (int d : shape) n *= d;
        return n;
    }
};

// Ordered (name -> offset/shape) map over a flat parameter vector.
struct Layout {
    std::vector<LayoutEntry> entries;

    int total() const;
    const LayoutEntry& find(const std::string& name) const;
    bool contains(const std::string& name) const;
};

// Named flat parameter vector. Immutable by convention once built; patching
// returns a copy.
struct ParamStore {
    Layout layout;
    std::vector<float> values;

    ad::Tensor tensor(const std::string& name) const;
    void set(const std::string& name, const ad::Tensor& t);
};

// Additive delta over a subset of layers.
struct WeightPatch {
    enum class Origin { hypernet, zero };
    std::map<std::string, ad::Tensor> entries;
    Origin origin = Origin::zero;
};

Layout vad_layout(const VadConfig& cfg);

// Xavier-uniform matrices, zero biases, forget-gate bias 1.0.
ParamStore init_params(const VadConfig& cfg, std::uint64_t seed);

// w + delta on patched layers; everything else bit-identical.
ParamStore apply_patch(const ParamStore& w, const WeightPatch& p, const VadConfig& cfg);

// Total size of the patchable subset.
int patch_size(const VadConfig& cfg);

// Per-layer parameter tensors, possibly tape-tracked, for one forward pass.
struct TrunkTensors {
    ad::Tensor pre1W, pre1b, pre2W, pre2b;
    ad::Tensor l1wx, l1wh, l1b;
    ad::Tensor l2wx, l2wh, l2b;
    ad::Tensor postW, postb;
};

TrunkTensors trunk_tensors(const ParamStore& w, const VadConfig& cfg);

// Batch forward over a T x input_dim feature tensor; zero initial LSTM state.
ad::Tensor trunk_forward(const TrunkTensors& p, const ad::Tensor& features, ad::Tape* tape = nullptr);

ad::Tensor forward(const ParamStore& w, const VadConfig& cfg, const ad::Tensor& features);

// Per-stream LSTM state for frame-by-frame inference.
struct StreamState {
    ad::LstmState l1, l2;

    static StreamState zero(const VadConfig& cfg);
    void reset();
};

// Single-frame advance; composing steps reproduces forward() bit-exactly.
std::vector<float> step(const ParamStore& w, const VadConfig& cfg, const std::vector<float>& frame,
                        StreamState& state);

// Streaming wrapper that keeps the per-layer tensors resident instead of
// re-slicing the flat vector every frame.
class Streamer {
public:
    Streamer(const ParamStore& w, const VadConfig& cfg);
    std::vector<float> step(const std::vector<float>& frame);
    void reset() { state_.reset(); }

private:
    TrunkTensors p_;
    VadConfig cfg_;
    StreamState state_;
};

// Softmax per frame, then speech = p(tss) + p(ntss). Returns T x 2 (ns, speech).
ad::Tensor binary_collapse(const ad::Tensor& logits);

ad::Tensor feature_tensor(const FeatureMatrix& f);

}  // namespace pvad
