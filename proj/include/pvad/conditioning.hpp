#pragma once

#include <map>
#include <string>
#include <vector>

#include "pvad/vad.hpp"

namespace pvad {

enum class CondKind { none, concat, add, mul, film, hywa };

std::string cond_kind_name(CondKind k);
CondKind cond_kind_from(const std::string& name);

// 4 blocks of (linear -> layer_norm -> GeLU -> skip), then a zero-initialized
// output layer mapping to the flat delta vector. The first block projects the
// embedding up to `hidden`, so its skip is omitted.
struct HyperNetConfig {
    int input_dim = 64;
    int hidden = 576;
    int blocks = 4;
    int output_dim = 0;  // total patch size, derived from the VadConfig
};

Layout hyper_layout(const HyperNetConfig& cfg);
ParamStore init_hyper_params(const HyperNetConfig& cfg, std::uint64_t seed);

// Parameter layout for the baseline conditioning methods (empty for
// none/concat/hywa). add/mul: linear projection E -> F, zero-initialized.
// film: separate zero-initialized scale and shift generators.
Layout cond_layout(CondKind kind, int embed_dim, int feat_dim);
ParamStore init_cond_params(CondKind kind, int embed_dim, int feat_dim, std::uint64_t seed);

// Feature-level conditioning for concat/add/mul. `params` maps layer names of
// cond_layout to (possibly tape-tracked) tensors.
ad::Tensor condition_features(CondKind kind, const ad::Tensor& features, const ad::Tensor& s,
                              const std::map<std::string, ad::Tensor>& params,
                              ad::Tape* tape = nullptr);

// out_t = gamma(s) * h_t + beta(s) with gamma = 1 + G_g s, beta = G_b s.
ad::Tensor film(const ad::Tensor& hidden, const ad::Tensor& s,
                const std::map<std::string, ad::Tensor>& params, ad::Tape* tape = nullptr);

// Tape-aware hypernetwork body; returns the flat delta vector.
ad::Tensor hypernet_body(const HyperNetConfig& cfg, const std::map<std::string, ad::Tensor>& params,
                         const ad::Tensor& s, ad::Tape* tape = nullptr);

// Inference-time hypernetwork: embedding -> WeightPatch split per patch target.
WeightPatch hypernet_forward(const ParamStore& theta, const HyperNetConfig& hcfg,
                             const VadConfig& vcfg, const std::vector<float>& embedding);

// Everything needed to run one conditioned model.
struct Model {
    CondKind mode = CondKind::hywa;
    int feat_dim = 40;   // raw acoustic feature width
    int embed_dim = 64;
    VadConfig vad;       // input_dim already widened for concat
    HyperNetConfig hyper;  // valid when mode == hywa
    ParamStore trunk;
    ParamStore cond;  // hypernetwork or baseline conditioning parameters
};

Model init_model(CondKind mode, int feat_dim, int embed_dim, std::uint64_t seed,
                 int hyper_hidden = 576);

// A frame-stream classifier specialized to one speaker. For hywa this is
// exactly the base trunk with the patch applied; for baselines the trunk plus
// the injected embedding.
class PersonalizedVad {
public:
    PersonalizedVad(const Model& m, const std::vector<float>& embedding);

    // features: T x feat_dim raw log-mel
    ad::Tensor forward(const ad::Tensor& features) const;
    std::vector<float> step(const std::vector<float>& frame);
    void reset();

    const ParamStore& effective_trunk() const { return trunk_; }

private:
    std::vector<float> condition_frame(const std::vector<float>& frame) const;

    CondKind mode_;
    VadConfig cfg_;
    ParamStore trunk_;  // patched for hywa
    std::vector<float> embedding_;
    std::vector<float> add_vec_, mul_vec_, gamma_, beta_;  // precomputed per s
    Streamer streamer_;
};

// Enrollment + deployment in one call.
PersonalizedVad personalize(const Model& m, const std::vector<float>& embedding);

}  // namespace pvad
