#include "pvad/vad.hpp"

#include <algorithm>
#include <cmath>

#include "pvad/rng.hpp"

namespace pvad {

int Layout::total() const {
    int n = 0;
    for (const auto& e : entries) n += e.size();
    return n;
}

const LayoutEntry& Layout::find(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return e;
    }
    throw PatchError("layout: unknown layer '" + name + "'");
}

bool Layout::contains(const std::string& name) const {
    return std::any_of(entries.begin(), entries.end(),
                       [&](const LayoutEntry& e) { return e.name == name; });
}

ad::Tensor ParamStore::tensor(const std::string& name) const {
    const LayoutEntry& e = layout.find(name);
    std::vector<float> v(values.begin() + e.offset, values.begin() + e.offset + e.size());
    return ad::Tensor(e.shape, std::move(v));
}

void ParamStore::set(const std::string& name, const ad::Tensor& t) {
    const LayoutEntry& e = layout.find(name);
    if (t.shape != e.shape) {
        throw PatchError("ParamStore::set: shape " + ad::shape_str(t.shape) + " for layer '" +
                         name + "' expecting " + ad::shape_str(e.shape));
    }
    std::copy(t.data.begin(), t.data.end(), values.begin() + e.offset);
}

Layout vad_layout(const VadConfig& cfg) {
    Layout lay;
    int off = 0;
    auto push = [&](const std::string& name, std::vector<int> shape) {
        LayoutEntry e{name, off, std::move(shape)};
        off += e.size();
        lay.entries.push_back(std::move(e));
    };
    const int F = cfg.input_dim, P = cfg.pre_hidden, H = cfg.lstm_hidden, C = cfg.num_classes;
    push("pre1.W", {F, P});
    push("pre1.b", {P});
    push("pre2.W", {P, P});
    push("pre2.b", {P});
    push("lstm1.Wx", {P, 4 * H});
    push("lstm1.Wh", {H, 4 * H});
    push("lstm1.b", {4 * H});
    push("lstm2.Wx", {H, 4 * H});
    push("lstm2.Wh", {H, 4 * H});
    push("lstm2.b", {4 * H});
    push("post.W", {H, C});
    push("post.b", {C});
    return lay;
}

namespace {

void xavier_fill(std::vector<float>& flat, const LayoutEntry& e, Rng& rng) {
    const int fan_in = e.shape[0];
    const int fan_out = e.shape.size() == 2 ? e.shape[1] : e.shape[0];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (int i = 0; i < e.size(); ++i) {
        flat[static_cast<std::size_t>(e.offset + i)] =
            static_cast<float>(rng.range(-limit, limit));
    }
}

}  // namespace

ParamStore init_params(const VadConfig& cfg, std::uint64_t seed) {
    ParamStore w;
    w.layout = vad_layout(cfg);
    w.values.assign(static_cast<std::size_t>(w.layout.total()), 0.0f);
    Rng rng(seed);
    for (const auto& e : w.layout.entries) {
        if (e.shape.size() == 2) xavier_fill(w.values, e, rng);
        // biases stay zero
    }
    // forget-gate bias = 1.0 (gate order: input, forget, cell, output)
    const int H = cfg.lstm_hidden;
    for (const char* name : {"lstm1.b", "lstm2.b"}) {
        const LayoutEntry& e = w.layout.find(name);
        for (int j = H; j < 2 * H; ++j) w.values[static_cast<std::size_t>(e.offset + j)] = 1.0f;
    }
    return w;
}

int patch_size(const VadConfig& cfg) {
    const Layout lay = vad_layout(cfg);
    int n = 0;
    for (const auto& name : cfg.patch_targets) n += lay.find(name).size();
    return n;
}

ParamStore apply_patch(const ParamStore& w, const WeightPatch& p, const VadConfig& cfg) {
    ParamStore out = w;
    for (const auto& [name, delta] : p.entries) {
        if (std::find(cfg.patch_targets.begin(), cfg.patch_targets.end(), name) ==
            cfg.patch_targets.end()) {
            throw PatchError("apply_patch: layer '" + name + "' is not a patch target");
        }
        const LayoutEntry& e = w.layout.find(name);
        if (delta.shape != e.shape) {
            throw PatchError("apply_patch: delta shape " + ad::shape_str(delta.shape) +
                             " for layer '" + name + "' expecting " + ad::shape_str(e.shape));
        }
        for (int i = 0; i < e.size(); ++i) {
            const float d = delta.data[static_cast<std::size_t>(i)];
            if (d != 0.0f) out.values[static_cast<std::size_t>(e.offset + i)] += d;
        }
    }
    return out;
}

TrunkTensors trunk_tensors(const ParamStore& w, const VadConfig&) {
    TrunkTensors t;
    t.pre1W = w.tensor("pre1.W");
    t.pre1b = w.tensor("pre1.b");
    t.pre2W = w.tensor("pre2.W");
    t.pre2b = w.tensor("pre2.b");
    t.l1wx = w.tensor("lstm1.Wx");
    t.l1wh = w.tensor("lstm1.Wh");
    t.l1b = w.tensor("lstm1.b");
    t.l2wx = w.tensor("lstm2.Wx");
    t.l2wh = w.tensor("lstm2.Wh");
    t.l2b = w.tensor("lstm2.b");
    t.postW = w.tensor("post.W");
    t.postb = w.tensor("post.b");
    return t;
}

ad::Tensor trunk_forward(const TrunkTensors& p, const ad::Tensor& features, ad::Tape* tape) {
    using namespace ad;
    if (features.cols() != p.pre1W.rows()) {
        throw DimensionError("trunk_forward: features " + shape_str(features.shape) +
                             " vs pre1.W " + shape_str(p.pre1W.shape));
    }
    Tensor h = gelu(add_rows(matmul(features, p.pre1W, tape), p.pre1b, tape), tape);
    h = gelu(add_rows(matmul(h, p.pre2W, tape), p.pre2b, tape), tape);
    h = lstm_sequence(h, p.l1wx, p.l1wh, p.l1b, tape);
    h = lstm_sequence(h, p.l2wx, p.l2wh, p.l2b, tape);
    return add_rows(matmul(h, p.postW, tape), p.postb, tape);
}

ad::Tensor forward(const ParamStore& w, const VadConfig& cfg, const ad::Tensor& features) {
    return trunk_forward(trunk_tensors(w, cfg), features);
}

StreamState StreamState::zero(const VadConfig& cfg) {
    StreamState s;
    s.l1.h.assign(static_cast<std::size_t>(cfg.lstm_hidden), 0.0f);
    s.l1.c = s.l1.h;
    s.l2 = s.l1;
    return s;
}

void StreamState::reset() {
    std::fill(l1.h.begin(), l1.h.end(), 0.0f);
    std::fill(l1.c.begin(), l1.c.end(), 0.0f);
    std::fill(l2.h.begin(), l2.h.end(), 0.0f);
    std::fill(l2.c.begin(), l2.c.end(), 0.0f);
}

namespace {

std::vector<float> step_impl(const TrunkTensors& p, const VadConfig& cfg,
                             const std::vector<float>& frame, StreamState& state) {
    using namespace ad;
    if (static_cast<int>(frame.size()) != cfg.input_dim) {
        throw DimensionError("step: frame dim " + std::to_string(frame.size()) + " vs config " +
                             std::to_string(cfg.input_dim));
    }
    Tensor x({1, cfg.input_dim}, frame);
    Tensor h = gelu(add_rows(matmul(x, p.pre1W), p.pre1b));
    h = gelu(add_rows(matmul(h, p.pre2W), p.pre2b));
    lstm_cell(h.data, p.l1wx, p.l1wh, p.l1b, state.l1);
    lstm_cell(state.l1.h, p.l2wx, p.l2wh, p.l2b, state.l2);
    Tensor hh({1, cfg.lstm_hidden}, state.l2.h);
    Tensor logits = add_rows(matmul(hh, p.postW), p.postb);
    return logits.data;
}

}  // namespace

std::vector<float> step(const ParamStore& w, const VadConfig& cfg, const std::vector<float>& frame,
                        StreamState& state) {
    const TrunkTensors p = trunk_tensors(w, cfg);
    return step_impl(p, cfg, frame, state);
}

Streamer::Streamer(const ParamStore& w, const VadConfig& cfg)
    : p_(trunk_tensors(w, cfg)), cfg_(cfg), state_(StreamState::zero(cfg)) {}

std::vector<float> Streamer::step(const std::vector<float>& frame) {
    return step_impl(p_, cfg_, frame, state_);
}

ad::Tensor binary_collapse(const ad::Tensor& logits) {
    ad::Tensor probs = ad::softmax(logits);
    const int T = probs.rows();
    ad::Tensor out({T, 2}, 0.0f);
    for (int t = 0; t < T; ++t) {
        out.at(t, 0) = probs.at(t, 0);
        out.at(t, 1) = probs.at(t, 1) + probs.at(t, 2);
    }
    return out;
}

ad::Tensor feature_tensor(const FeatureMatrix& f) {
    return ad::Tensor({f.num_frames, f.num_mels}, f.values);
}

}  // namespace pvad
