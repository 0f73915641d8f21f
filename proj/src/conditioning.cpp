#include "pvad/conditioning.hpp"

#include <algorithm>
#include <cmath>

#include "pvad/rng.hpp"

namespace pvad {

std::string cond_kind_name(CondKind k) {
    switch (k) {
        case CondKind::none: return "none";
        case CondKind::concat: return "concat";
        case CondKind::add: return "add";
        case CondKind::mul: return "mul";
        case CondKind::film: return "film";
        case CondKind::hywa: return "hywa";
    }
    throw ConfigError("unknown conditioning kind");
}

CondKind cond_kind_from(const std::string& name) {
    if (name == "none") return CondKind::none;
    if (name == "concat") return CondKind::concat;
    if (name == "add") return CondKind::add;
    if (name == "mul") return CondKind::mul;
    if (name == "film") return CondKind::film;
    if (name == "hywa") return CondKind::hywa;
    throw ConfigError("unknown conditioning mode '" + name + "'");
}

Layout hyper_layout(const HyperNetConfig& cfg) {
    Layout lay;
    int off = 0;
    auto push = [&](const std::string& name, std::vector<int> shape) {
        LayoutEntry e{name, off, std::move(shape)};
        off += e.size();
        lay.entries.push_back(std::move(e));
    };
    int in = cfg.input_dim;
    for (int i = 1; i <= cfg.blocks; ++i) {
        const std::string p = "hyper.l" + std::to_string(i);
        push(p + ".W", {in, cfg.hidden});
        push(p + ".b", {cfg.hidden});
        push(p + ".ln_g", {cfg.hidden});
        push(p + ".ln_b", {cfg.hidden});
        in = cfg.hidden;
    }
    push("hyper.out.W", {cfg.hidden, cfg.output_dim});
    push("hyper.out.b", {cfg.output_dim});
    return lay;
}

ParamStore init_hyper_params(const HyperNetConfig& cfg, std::uint64_t seed) {
    ParamStore p;
    p.layout = hyper_layout(cfg);
    p.values.assign(static_cast<std::size_t>(p.layout.total()), 0.0f);
    Rng rng(seed);
    for (const auto& e : p.layout.entries) {
        if (e.name == "hyper.out.W" || e.name == "hyper.out.b") continue;  // zero init
        if (e.shape.size() == 2) {
            const double limit = std::sqrt(6.0 / (e.shape[0] + e.shape[1]));
            for (int i = 0; i < e.size(); ++i)
                p.values[static_cast<std::size_t>(e.offset + i)] =
                    static_cast<float>(rng.range(-limit, limit));
        } else if (e.name.ends_with(".ln_g")) {
            for (int i = 0; i < e.size(); ++i)
                p.values[static_cast<std::size_t>(e.offset + i)] = 1.0f;
        }
    }
    return p;
}

Layout cond_layout(CondKind kind, int embed_dim, int feat_dim) {
    Layout lay;
    int off = 0;
    auto push = [&](const std::string& name, std::vector<int> shape) {
        LayoutEntry e{name, off, std::move(shape)};
        off += e.size();
        lay.entries.push_back(std::move(e));
    };
    switch (kind) {
        case CondKind::add:
        case CondKind::mul:
            push("cond.proj.W", {embed_dim, feat_dim});
            push("cond.proj.b", {feat_dim});
            break;
        case CondKind::film:
            push("cond.gamma.W", {embed_dim, feat_dim});
            push("cond.gamma.b", {feat_dim});
            push("cond.beta.W", {embed_dim, feat_dim});
            push("cond.beta.b", {feat_dim});
            break;
        default:
            break;  // none/concat/hywa have no baseline parameters
    }
    return lay;
}

ParamStore init_cond_params(CondKind kind, int embed_dim, int feat_dim, std::uint64_t) {
    // Zero init everywhere: add leaves features unchanged, mul and film start
    // at the identity through their (1 + ...) parameterization.
    ParamStore p;
    p.layout = cond_layout(kind, embed_dim, feat_dim);
    p.values.assign(static_cast<std::size_t>(p.layout.total()), 0.0f);
    return p;
}

namespace {

ad::Tensor affine_vec(const ad::Tensor& s, const ad::Tensor& W, const ad::Tensor& b,
                      ad::Tape* tape) {
    using namespace ad;
    Tensor srow = reshape(s, {1, static_cast<int>(s.size())});
    Tensor p = add_rows(matmul(srow, W, tape), b, tape);
    return reshape(p, {p.cols()});
}

}  // namespace

ad::Tensor condition_features(CondKind kind, const ad::Tensor& features, const ad::Tensor& s,
                              const std::map<std::string, ad::Tensor>& params, ad::Tape* tape) {
    using namespace ad;
    switch (kind) {
        case CondKind::concat:
            return concat_cols(features, tile_rows(s, features.rows(), tape), tape);
        case CondKind::add: {
            Tensor p = affine_vec(s, params.at("cond.proj.W"), params.at("cond.proj.b"), tape);
            return add_rows(features, p, tape);
        }
        case CondKind::mul: {
            Tensor p = affine_vec(s, params.at("cond.proj.W"), params.at("cond.proj.b"), tape);
            return mul_rows(features, add_const(p, 1.0f, tape), tape);
        }
        default:
            throw ConfigError("condition_features: mode " + cond_kind_name(kind) +
                              " does not condition at the feature level");
    }
}

ad::Tensor film(const ad::Tensor& hidden, const ad::Tensor& s,
                const std::map<std::string, ad::Tensor>& params, ad::Tape* tape) {
    using namespace ad;
    Tensor gamma = add_const(
        affine_vec(s, params.at("cond.gamma.W"), params.at("cond.gamma.b"), tape), 1.0f, tape);
    Tensor beta = affine_vec(s, params.at("cond.beta.W"), params.at("cond.beta.b"), tape);
    return add_rows(mul_rows(hidden, gamma, tape), beta, tape);
}

ad::Tensor hypernet_body(const HyperNetConfig& cfg, const std::map<std::string, ad::Tensor>& params,
                         const ad::Tensor& s, ad::Tape* tape) {
    using namespace ad;
    if (static_cast<int>(s.size()) != cfg.input_dim) {
        throw DimensionError("hypernet: embedding dim " + std::to_string(s.size()) +
                             " vs config " + std::to_string(cfg.input_dim));
    }
    Tensor h = reshape(s, {1, cfg.input_dim});
    for (int i = 1; i <= cfg.blocks; ++i) {
        const std::string p = "hyper.l" + std::to_string(i);
        Tensor z = add_rows(matmul(h, params.at(p + ".W"), tape), params.at(p + ".b"), tape);
        z = layer_norm(z, params.at(p + ".ln_g"), params.at(p + ".ln_b"), tape);
        z = gelu(z, tape);
        // skip connection where widths line up (all blocks after the first)
        h = (h.cols() == z.cols()) ? add(h, z, tape) : z;
    }
    Tensor out = add_rows(matmul(h, params.at("hyper.out.W"), tape), params.at("hyper.out.b"), tape);
    return reshape(out, {cfg.output_dim});
}

WeightPatch hypernet_forward(const ParamStore& theta, const HyperNetConfig& hcfg,
                             const VadConfig& vcfg, const std::vector<float>& embedding) {
    std::map<std::string, ad::Tensor> params;
    for (const auto& e : theta.layout.entries) params[e.name] = theta.tensor(e.name);
    ad::Tensor dw = hypernet_body(hcfg, params, ad::Tensor::vec(embedding));

    WeightPatch patch;
    patch.origin = WeightPatch::Origin::hypernet;
    const Layout vlay = vad_layout(vcfg);
    int off = 0;
    for (const auto& name : vcfg.patch_targets) {
        const LayoutEntry& e = vlay.find(name);
        patch.entries[name] = ad::slice(dw, off, e.shape);
        off += e.size();
    }
    return patch;
}

Model init_model(CondKind mode, int feat_dim, int embed_dim, std::uint64_t seed, int hyper_hidden) {
    Model m;
    m.mode = mode;
    m.feat_dim = feat_dim;
    m.embed_dim = embed_dim;
    m.vad.input_dim = (mode == CondKind::concat) ? feat_dim + embed_dim : feat_dim;
    m.trunk = init_params(m.vad, seed);
    if (mode == CondKind::hywa) {
        m.hyper.input_dim = embed_dim;
        m.hyper.hidden = hyper_hidden;
        m.hyper.output_dim = patch_size(m.vad);
        m.cond = init_hyper_params(m.hyper, Rng::derive(seed, 1));
    } else {
        m.cond = init_cond_params(mode, embed_dim, feat_dim, Rng::derive(seed, 1));
    }
    return m;
}

PersonalizedVad::PersonalizedVad(const Model& m, const std::vector<float>& embedding)
    : mode_(m.mode),
      cfg_(m.vad),
      trunk_(m.mode == CondKind::hywa
                 ? apply_patch(m.trunk, hypernet_forward(m.cond, m.hyper, m.vad, embedding), m.vad)
                 : m.trunk),
      embedding_(embedding),
      streamer_(trunk_, cfg_) {
    if (mode_ == CondKind::add || mode_ == CondKind::mul) {
        std::map<std::string, ad::Tensor> p;
        p["cond.proj.W"] = m.cond.tensor("cond.proj.W");
        p["cond.proj.b"] = m.cond.tensor("cond.proj.b");
        ad::Tensor v = affine_vec(ad::Tensor::vec(embedding), p["cond.proj.W"],
                                  p["cond.proj.b"], nullptr);
        if (mode_ == CondKind::add) {
            add_vec_ = v.data;
        } else {
            mul_vec_.assign(v.size(), 0.0f);
            for (std::size_t i = 0; i < v.size(); ++i) mul_vec_[i] = 1.0f + v.data[i];
        }
    } else if (mode_ == CondKind::film) {
        ad::Tensor g = affine_vec(ad::Tensor::vec(embedding), m.cond.tensor("cond.gamma.W"),
                                  m.cond.tensor("cond.gamma.b"), nullptr);
        ad::Tensor b = affine_vec(ad::Tensor::vec(embedding), m.cond.tensor("cond.beta.W"),
                                  m.cond.tensor("cond.beta.b"), nullptr);
        gamma_.assign(g.size(), 0.0f);
        for (std::size_t i = 0; i < g.size(); ++i) gamma_[i] = 1.0f + g.data[i];
        beta_ = b.data;
    }
}

std::vector<float> PersonalizedVad::condition_frame(const std::vector<float>& frame) const {
    switch (mode_) {
        case CondKind::none:
        case CondKind::hywa:
            return frame;
        case CondKind::concat: {
            std::vector<float> out = frame;
            out.insert(out.end(), embedding_.begin(), embedding_.end());
            return out;
        }
        case CondKind::add: {
            std::vector<float> out = frame;
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += add_vec_[i];
            return out;
        }
        case CondKind::mul: {
            std::vector<float> out = frame;
            for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mul_vec_[i];
            return out;
        }
        case CondKind::film: {
            std::vector<float> out = frame;
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = gamma_[i] * out[i] + beta_[i];
            return out;
        }
    }
    throw ConfigError("condition_frame: unknown mode");
}

ad::Tensor PersonalizedVad::forward(const ad::Tensor& features) const {
    const int T = features.rows(), F = features.cols();
    ad::Tensor conditioned({T, cfg_.input_dim}, 0.0f);
    std::vector<float> frame(static_cast<std::size_t>(F));
    for (int t = 0; t < T; ++t) {
        for (int j = 0; j < F; ++j) frame[static_cast<std::size_t>(j)] = features.at(t, j);
        const std::vector<float> cf = condition_frame(frame);
        for (int j = 0; j < cfg_.input_dim; ++j)
            conditioned.at(t, j) = cf[static_cast<std::size_t>(j)];
    }
    return pvad::forward(trunk_, cfg_, conditioned);
}

std::vector<float> PersonalizedVad::step(const std::vector<float>& frame) {
    return streamer_.step(condition_frame(frame));
}

void PersonalizedVad::reset() { streamer_.reset(); }

PersonalizedVad personalize(const Model& m, const std::vector<float>& embedding) {
    if (static_cast<int>(embedding.size()) != m.embed_dim && m.mode != CondKind::none) {
        throw ConfigError("personalize: embedding dim " + std::to_string(embedding.size()) +
                          " vs model " + std::to_string(m.embed_dim));
    }
    return PersonalizedVad(m, embedding);
}

}  // namespace pvad
