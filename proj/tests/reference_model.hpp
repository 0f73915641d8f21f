// Double-precision reference of the full conditioned model (trunk, baseline
// conditioning, hypernetwork, cross-entropy), structured around the same flat
// parameter layouts as the library. Used for finite-difference gradient checks.
#pragma once

#include <vector>

#include "oracle.hpp"
#include "pvad/conditioning.hpp"

namespace refm {

using oracle::vd;

struct RefParams {
    const pvad::Layout* layout;
    const vd* flat;

    vd get(const std::string& name) const {
        const pvad::LayoutEntry& e = layout->find(name);
        return vd(flat->begin() + e.offset, flat->begin() + e.offset + e.size());
    }
};

// T x C logits from the trunk on already-conditioned input x (T x in_dim).
inline vd trunk_forward(const RefParams& w, const vd& x, int T, int in_dim,
                        const pvad::VadConfig& cfg) {
    const int P = cfg.pre_hidden, H = cfg.lstm_hidden, C = cfg.num_classes;
    const vd pre1W = w.get("pre1.W"), pre1b = w.get("pre1.b");
    const vd pre2W = w.get("pre2.W"), pre2b = w.get("pre2.b");
    const vd l1wx = w.get("lstm1.Wx"), l1wh = w.get("lstm1.Wh"), l1b = w.get("lstm1.b");
    const vd l2wx = w.get("lstm2.Wx"), l2wh = w.get("lstm2.Wh"), l2b = w.get("lstm2.b");
    const vd postW = w.get("post.W"), postb = w.get("post.b");

    vd h1 = oracle::matmul(x, pre1W, T, in_dim, P);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < P; ++j) {
            double& v = h1[static_cast<std::size_t>(t) * P + j];
            v = oracle::gelu(v + pre1b[static_cast<std::size_t>(j)]);
        }
    vd h2 = oracle::matmul(h1, pre2W, T, P, P);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < P; ++j) {
            double& v = h2[static_cast<std::size_t>(t) * P + j];
            v = oracle::gelu(v + pre2b[static_cast<std::size_t>(j)]);
        }

    vd seq(static_cast<std::size_t>(T) * H, 0.0);
    vd h(static_cast<std::size_t>(H), 0.0), c(static_cast<std::size_t>(H), 0.0);
    for (int t = 0; t < T; ++t) {
        const vd xt(h2.begin() + static_cast<std::size_t>(t) * P,
                    h2.begin() + static_cast<std::size_t>(t + 1) * P);
        oracle::lstm_step(xt, l1wx, l1wh, l1b, h, c, P, H);
        std::copy(h.begin(), h.end(), seq.begin() + static_cast<std::size_t>(t) * H);
    }
    vd seq2(static_cast<std::size_t>(T) * H, 0.0);
    std::fill(h.begin(), h.end(), 0.0);
    std::fill(c.begin(), c.end(), 0.0);
    for (int t = 0; t < T; ++t) {
        const vd xt(seq.begin() + static_cast<std::size_t>(t) * H,
                    seq.begin() + static_cast<std::size_t>(t + 1) * H);
        oracle::lstm_step(xt, l2wx, l2wh, l2b, h, c, H, H);
        std::copy(h.begin(), h.end(), seq2.begin() + static_cast<std::size_t>(t) * H);
    }

    vd logits = oracle::matmul(seq2, postW, T, H, C);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < C; ++j)
            logits[static_cast<std::size_t>(t) * C + j] += postb[static_cast<std::size_t>(j)];
    return logits;
}

// proj = s * W + b  with W stored E x F.
inline vd affine(const vd& s, const vd& W, const vd& b, int E, int F) {
    vd p = oracle::matmul(s, W, 1, E, F);
    for (int j = 0; j < F; ++j) p[static_cast<std::size_t>(j)] += b[static_cast<std::size_t>(j)];
    return p;
}

inline vd hypernet(const RefParams& th, const pvad::HyperNetConfig& cfg, const vd& s) {
    vd h = s;
    int in = cfg.input_dim;
    for (int i = 1; i <= cfg.blocks; ++i) {
        const std::string p = "hyper.l" + std::to_string(i);
        vd z = affine(h, th.get(p + ".W"), th.get(p + ".b"), in, cfg.hidden);
        z = oracle::layer_norm(z, th.get(p + ".ln_g"), th.get(p + ".ln_b"));
        for (double& v : z) v = oracle::gelu(v);
        if (in == cfg.hidden) {
            for (int j = 0; j < cfg.hidden; ++j)
                z[static_cast<std::size_t>(j)] += h[static_cast<std::size_t>(j)];
        }
        h = std::move(z);
        in = cfg.hidden;
    }
    return affine(h, th.get("hyper.out.W"), th.get("hyper.out.b"), cfg.hidden, cfg.output_dim);
}

// Full conditioned loss on double copies of the trunk/conditioning vectors.
inline double model_loss(const pvad::Model& m, const vd& trunk, const vd& cond, const vd& feats,
                         int T, const std::vector<int>& labels, const vd& s) {
    const RefParams w{&m.trunk.layout, &trunk};
    const RefParams th{&m.cond.layout, &cond};
    const int F = m.feat_dim, E = m.embed_dim;

    vd x = feats;
    int in_dim = F;
    vd trunk_eff = trunk;
    switch (m.mode) {
        case pvad::CondKind::none:
            break;
        case pvad::CondKind::concat: {
            in_dim = F + E;
            vd xc(static_cast<std::size_t>(T) * in_dim, 0.0);
            for (int t = 0; t < T; ++t) {
                for (int j = 0; j < F; ++j)
                    xc[static_cast<std::size_t>(t) * in_dim + j] =
                        feats[static_cast<std::size_t>(t) * F + j];
                for (int j = 0; j < E; ++j)
                    xc[static_cast<std::size_t>(t) * in_dim + F + j] = s[static_cast<std::size_t>(j)];
            }
            x = std::move(xc);
            break;
        }
        case pvad::CondKind::add: {
            const vd p = affine(s, th.get("cond.proj.W"), th.get("cond.proj.b"), E, F);
            for (int t = 0; t < T; ++t)
                for (int j = 0; j < F; ++j)
                    x[static_cast<std::size_t>(t) * F + j] += p[static_cast<std::size_t>(j)];
            break;
        }
        case pvad::CondKind::mul: {
            const vd p = affine(s, th.get("cond.proj.W"), th.get("cond.proj.b"), E, F);
            for (int t = 0; t < T; ++t)
                for (int j = 0; j < F; ++j)
                    x[static_cast<std::size_t>(t) * F + j] *= 1.0 + p[static_cast<std::size_t>(j)];
            break;
        }
        case pvad::CondKind::film: {
            const vd g = affine(s, th.get("cond.gamma.W"), th.get("cond.gamma.b"), E, F);
            const vd b = affine(s, th.get("cond.beta.W"), th.get("cond.beta.b"), E, F);
            for (int t = 0; t < T; ++t)
                for (int j = 0; j < F; ++j) {
                    double& v = x[static_cast<std::size_t>(t) * F + j];
                    v = (1.0 + g[static_cast<std::size_t>(j)]) * v + b[static_cast<std::size_t>(j)];
                }
            break;
        }
        case pvad::CondKind::hywa: {
            const vd dw = hypernet(th, m.hyper, s);
            int off = 0;
            for (const std::string& name : m.vad.patch_targets) {
                const pvad::LayoutEntry& e = m.trunk.layout.find(name);
                for (int i = 0; i < e.size(); ++i)
                    trunk_eff[static_cast<std::size_t>(e.offset + i)] +=
                        dw[static_cast<std::size_t>(off + i)];
                off += e.size();
            }
            break;
        }
    }
    const RefParams w_eff{&m.trunk.layout, &trunk_eff};
    const vd logits = trunk_forward(w_eff, x, T, in_dim, m.vad);
    return oracle::softmax_ce(logits, labels, m.vad.num_classes);
}

}  // namespace refm
