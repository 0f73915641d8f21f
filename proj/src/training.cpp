#include "pvad/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "pvad/eval.hpp"
#include "pvad/rng.hpp"
#include "pvad/synth.hpp"

namespace pvad {

LoadedData load_training_data(const std::string& corpus_dir, CondKind mode,
                              const FeatureConfig& fc, const EmbedConfig& ec) {
    const CorpusHeader header = load_header(corpus_dir);
    std::map<std::string, std::string> enroll_wavs;
    for (const SpeakerRecord& s : header.train) enroll_wavs[s.speaker.id] = s.enroll_wav;
    for (const SpeakerRecord& s : header.val) enroll_wavs[s.speaker.id] = s.enroll_wav;

    std::map<std::string, std::vector<float>> emb_cache;
    auto embedding_for = [&](const std::string& speaker) -> const std::vector<float>& {
        auto it = emb_cache.find(speaker);
        if (it == emb_cache.end()) {
            auto ew = enroll_wavs.find(speaker);
            if (ew == enroll_wavs.end()) {
                throw ConfigError("training: no enrollment audio for speaker '" + speaker + "'");
            }
            SpeakerEmbedding e = embed(read_wav(corpus_dir + "/" + ew->second), ec);
            it = emb_cache.emplace(speaker, std::move(e.values)).first;
        }
        return it->second;
    };

    LoadedData d;
    d.feat_dim = fc.num_mels;
    for (const char* split : {"train", "val"}) {
        std::vector<TrainExample>& out = (split == std::string("train")) ? d.train : d.val;
        for (const ManifestEntry& me : load_manifest(corpus_dir, split)) {
            TrainExample ex;
            ex.id = me.id;
            ex.target = me.target;
            ex.feats = feature_tensor(log_mel(read_wav(corpus_dir + "/" + me.wav), fc));
            ex.labels = me.labels;
            if (mode == CondKind::none) {
                // Without a target embedding the ternary task is ill-posed;
                // collapse non-target speech into the speech class.
                for (int& y : ex.labels) {
                    if (y == kNtss) y = kTss;
                }
            }
            for (int y : ex.labels) {
                if (y < 0 || y > 2) {
                    throw LabelError("training: label " + std::to_string(y) + " in " + me.id);
                }
            }
            if (static_cast<std::size_t>(ex.feats.rows()) != ex.labels.size()) {
                throw DataError("training: " + me.id + " has " +
                                std::to_string(ex.labels.size()) + " labels for " +
                                std::to_string(ex.feats.rows()) + " frames");
            }
            ex.embedding = embedding_for(me.target);
            out.push_back(std::move(ex));
        }
    }
    if (d.train.empty()) throw DataError("training: empty train manifest");
    if (d.val.empty()) throw DataError("training: empty val manifest");
    return d;
}

Adam::Adam(std::size_t n, const TrainConfig& cfg)
    : m_(n, 0.0), v_(n, 0.0), lr_(cfg.lr), beta1_(cfg.beta1), beta2_(cfg.beta2),
      eps_(cfg.adam_eps) {}

void Adam::step(std::vector<float>& params, const std::vector<float>& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
        throw DimensionError("Adam: parameter/gradient size mismatch");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] = static_cast<float>(params[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
}

ModelLeaves watch_model(const Model& m, ad::Tape& tape) {
    ModelLeaves lv;
    for (const auto& e : m.trunk.layout.entries) {
        ad::Tensor t = m.trunk.tensor(e.name);
        tape.watch(t);
        lv.trunk.emplace(e.name, std::move(t));
    }
    for (const auto& e : m.cond.layout.entries) {
        ad::Tensor t = m.cond.tensor(e.name);
        tape.watch(t);
        lv.cond.emplace(e.name, std::move(t));
    }
    return lv;
}

namespace {

TrunkTensors trunk_from_map(const std::map<std::string, ad::Tensor>& p) {
    TrunkTensors t;
    t.pre1W = p.at("pre1.W");
    t.pre1b = p.at("pre1.b");
    t.pre2W = p.at("pre2.W");
    t.pre2b = p.at("pre2.b");
    t.l1wx = p.at("lstm1.Wx");
    t.l1wh = p.at("lstm1.Wh");
    t.l1b = p.at("lstm1.b");
    t.l2wx = p.at("lstm2.Wx");
    t.l2wh = p.at("lstm2.Wh");
    t.l2b = p.at("lstm2.b");
    t.postW = p.at("post.W");
    t.postb = p.at("post.b");
    return t;
}

}  // namespace

ad::Tensor model_loss(const Model& m, const ModelLeaves& leaves, const TrainExample& ex,
                      ad::Tape& tape, const std::vector<float>& class_weights,
                      double patch_penalty) {
    using namespace ad;
    const Tensor s = Tensor::vec(ex.embedding);
    Tensor x = ex.feats;
    std::map<std::string, Tensor> trunk = leaves.trunk;
    Tensor penalty;

    switch (m.mode) {
        case CondKind::none:
            break;
        case CondKind::concat:
        case CondKind::add:
        case CondKind::mul:
            x = condition_features(m.mode, x, s, leaves.cond, &tape);
            break;
        case CondKind::film:
            x = film(x, s, leaves.cond, &tape);
            break;
        case CondKind::hywa: {
            Tensor dw = hypernet_body(m.hyper, leaves.cond, s, &tape);
            int off = 0;
            for (const std::string& name : m.vad.patch_targets) {
                const LayoutEntry& e = m.trunk.layout.find(name);
                Tensor delta = slice(dw, off, e.shape, &tape);
                trunk[name] = add(trunk.at(name), delta, &tape);
                off += e.size();
            }
            if (patch_penalty > 0.0) {
                // mean-square patch magnitude keeps the delta map smooth so
                // it extrapolates to unseen enrollment embeddings
                penalty = scale(sum(mul(dw, dw, &tape), &tape),
                                static_cast<float>(patch_penalty) /
                                    static_cast<float>(dw.size()),
                                &tape);
            }
            break;
        }
    }
    const Tensor logits = trunk_forward(trunk_from_map(trunk), x, &tape);
    Tensor loss = softmax_cross_entropy(logits, ex.labels, &tape, class_weights);
    if (penalty.node != -1 || !penalty.data.empty()) {
        loss = add(loss, penalty, &tape);
    }
    return loss;
}

namespace {

void gather(const ad::Gradients& g, const std::map<std::string, ad::Tensor>& leaves,
            const Layout& layout, float scale, std::vector<float>& acc) {
    for (const auto& e : layout.entries) {
        const ad::Tensor& leaf = leaves.at(e.name);
        if (!g.reached(leaf.node)) continue;
        const std::vector<float>& gv = g.flat(leaf.node);
        for (int i = 0; i < e.size(); ++i) {
            acc[static_cast<std::size_t>(e.offset + i)] += gv[static_cast<std::size_t>(i)] * scale;
        }
    }
}

double l2(const std::vector<float>& v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

}  // namespace

StepInfo train_step(Model& m, const std::vector<const TrainExample*>& batch, Adam& trunk_opt,
                    Adam& cond_opt, const TrainConfig& cfg,
                    const std::vector<float>& class_weights) {
    if (batch.empty()) throw ContractError("train_step: empty batch");
    std::vector<float> gt(m.trunk.values.size(), 0.0f);
    std::vector<float> gc(m.cond.values.size(), 0.0f);
    const float inv = 1.0f / static_cast<float>(batch.size());
    double loss_sum = 0.0;
    double last_finite = std::numeric_limits<double>::quiet_NaN();
    for (const TrainExample* ex : batch) {
        ad::Tape tape;
        ModelLeaves lv = watch_model(m, tape);
        const ad::Tensor loss = model_loss(m, lv, *ex, tape, class_weights, cfg.patch_penalty);
        const double lval = loss.data[0];
        if (!std::isfinite(lval)) {
            throw DivergenceError("train_step: non-finite loss on sequence " + ex->id,
                                  last_finite);
        }
        last_finite = lval;
        loss_sum += lval;
        const ad::Gradients g = tape.backward(loss);
        gather(g, lv.trunk, m.trunk.layout, inv, gt);
        gather(g, lv.cond, m.cond.layout, inv, gc);
    }

    StepInfo info;
    info.loss = loss_sum / static_cast<double>(batch.size());
    info.trunk_grad_norm = l2(gt);
    info.cond_grad_norm = l2(gc);
    const double norm = std::sqrt(info.trunk_grad_norm * info.trunk_grad_norm +
                                  info.cond_grad_norm * info.cond_grad_norm);
    if (norm > cfg.grad_clip) {
        const float s = static_cast<float>(cfg.grad_clip / norm);
        for (float& x : gt) x *= s;
        for (float& x : gc) x *= s;
    }
    trunk_opt.step(m.trunk.values, gt);
    if (!gc.empty()) cond_opt.step(m.cond.values, gc);
    return info;
}

namespace {

struct ValScore {
    double loss = 0.0;
    double map_score = 0.0;
};

ValScore score_validation(const Model& m, const std::vector<TrainExample>& val) {
    const int num_classes = (m.mode == CondKind::none) ? 2 : m.vad.num_classes;
    std::vector<std::vector<float>> scores(static_cast<std::size_t>(num_classes));
    std::vector<std::vector<std::uint8_t>> positives(static_cast<std::size_t>(num_classes));
    std::map<std::string, PersonalizedVad> cache;
    ValScore out;
    for (const TrainExample& ex : val) {
        auto it = cache.find(ex.target);
        if (it == cache.end()) it = cache.emplace(ex.target, personalize(m, ex.embedding)).first;
        const ad::Tensor logits = it->second.forward(ex.feats);
        out.loss += ad::softmax_cross_entropy(logits, ex.labels).data[0];
        const ad::Tensor probs =
            (m.mode == CondKind::none) ? binary_collapse(logits) : ad::softmax(logits);
        for (int t = 0; t < probs.rows(); ++t) {
            const int y = ex.labels[static_cast<std::size_t>(t)];
            for (int c = 0; c < num_classes; ++c) {
                scores[static_cast<std::size_t>(c)].push_back(probs.at(t, c));
                positives[static_cast<std::size_t>(c)].push_back(y == c ? 1 : 0);
            }
        }
    }
    out.loss /= static_cast<double>(val.size());
    double ap_sum = 0.0;
    int ap_n = 0;
    for (int c = 0; c < num_classes; ++c) {
        const auto& pos = positives[static_cast<std::size_t>(c)];
        if (std::find(pos.begin(), pos.end(), std::uint8_t{1}) == pos.end()) continue;
        ap_sum += average_precision(scores[static_cast<std::size_t>(c)], pos);
        ++ap_n;
    }
    out.map_score = ap_n ? ap_sum / ap_n : 0.0;
    return out;
}

std::vector<float> inverse_frequency_weights(const std::vector<TrainExample>& train,
                                             int num_classes) {
    std::vector<long> counts(static_cast<std::size_t>(num_classes), 0);
    long total = 0;
    for (const TrainExample& ex : train) {
        for (int y : ex.labels) {
            ++counts[static_cast<std::size_t>(y)];
            ++total;
        }
    }
    int present = 0;
    for (long c : counts) present += c > 0 ? 1 : 0;
    std::vector<float> w(static_cast<std::size_t>(num_classes), 0.0f);
    for (int c = 0; c < num_classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) {
            w[static_cast<std::size_t>(c)] = static_cast<float>(
                static_cast<double>(total) /
                (static_cast<double>(present) * counts[static_cast<std::size_t>(c)]));
        }
    }
    return w;
}

}  // namespace

Checkpoint fit(const TrainConfig& cfg, const std::string& corpus_dir, TrainReport* report,
               std::ostream* log) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    EmbedConfig ec;
    const FeatureConfig fc = ec.features;
    LoadedData data = load_training_data(corpus_dir, cfg.mode, fc, ec);

    // Standardize features with training-split statistics; the statistics are
    // stored in the checkpoint so inference sees the same input distribution.
    std::vector<float> feat_mean(static_cast<std::size_t>(data.feat_dim), 0.0f);
    std::vector<float> feat_std(static_cast<std::size_t>(data.feat_dim), 1.0f);
    {
        std::vector<double> sum(static_cast<std::size_t>(data.feat_dim), 0.0);
        std::vector<double> sq(static_cast<std::size_t>(data.feat_dim), 0.0);
        long n = 0;
        for (const TrainExample& ex : data.train) {
            for (int t = 0; t < ex.feats.rows(); ++t) {
                for (int f = 0; f < data.feat_dim; ++f) {
                    const double v = ex.feats.at(t, f);
                    sum[static_cast<std::size_t>(f)] += v;
                    sq[static_cast<std::size_t>(f)] += v * v;
                }
            }
            n += ex.feats.rows();
        }
        for (int f = 0; f < data.feat_dim; ++f) {
            const double m = sum[static_cast<std::size_t>(f)] / static_cast<double>(n);
            const double var = sq[static_cast<std::size_t>(f)] / static_cast<double>(n) - m * m;
            feat_mean[static_cast<std::size_t>(f)] = static_cast<float>(m);
            feat_std[static_cast<std::size_t>(f)] =
                static_cast<float>(std::sqrt(std::max(var, 1e-6)));
        }
        for (std::vector<TrainExample>* split : {&data.train, &data.val}) {
            for (TrainExample& ex : *split) {
                for (int t = 0; t < ex.feats.rows(); ++t) {
                    for (int f = 0; f < data.feat_dim; ++f) {
                        ex.feats.at(t, f) = (ex.feats.at(t, f) -
                                             feat_mean[static_cast<std::size_t>(f)]) /
                                            feat_std[static_cast<std::size_t>(f)];
                    }
                }
            }
        }
    }

    // Center the enrollment embeddings: the raw vectors share a large common
    // component, so conditioning on (s - mean)/scale exposes the speaker-
    // discriminative residual at unit scale.
    std::vector<float> embed_mean(static_cast<std::size_t>(ec.dim), 0.0f);
    double embed_scale = 1.0;
    {
        for (const TrainExample& ex : data.train) {
            for (std::size_t i = 0; i < embed_mean.size(); ++i) {
                embed_mean[i] += ex.embedding[i];
            }
        }
        for (float& v : embed_mean) v /= static_cast<float>(data.train.size());
        double norm_sum = 0.0;
        for (const TrainExample& ex : data.train) {
            double n2 = 0.0;
            for (std::size_t i = 0; i < embed_mean.size(); ++i) {
                const double d = ex.embedding[i] - embed_mean[i];
                n2 += d * d;
            }
            norm_sum += std::sqrt(n2);
        }
        embed_scale = std::max(norm_sum / static_cast<double>(data.train.size()), 1e-6);
        const float inv = static_cast<float>(1.0 / embed_scale);
        for (std::vector<TrainExample>* split : {&data.train, &data.val}) {
            for (TrainExample& ex : *split) {
                for (std::size_t i = 0; i < embed_mean.size(); ++i) {
                    ex.embedding[i] = (ex.embedding[i] - embed_mean[i]) * inv;
                }
            }
        }
    }

    Model model = init_model(cfg.mode, data.feat_dim, ec.dim, cfg.seed, cfg.hyper_hidden);
    if (!cfg.init_from.empty()) {
        const Checkpoint base = load_checkpoint(cfg.init_from);
        if (base.model.vad.input_dim != model.vad.input_dim ||
            base.model.trunk.values.size() != model.trunk.values.size()) {
            throw ConfigError("fit: --init-from trunk has input dim " +
                              std::to_string(base.model.vad.input_dim) + ", expected " +
                              std::to_string(model.vad.input_dim));
        }
        model.trunk.values = base.model.trunk.values;
    }

    std::vector<float> class_weights;
    if (cfg.class_weights) {
        class_weights = inverse_frequency_weights(data.train, model.vad.num_classes);
    }

    Adam trunk_opt(model.trunk.values.size(), cfg);
    Adam cond_opt(model.cond.values.size(), cfg);

    TrainReport rep;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<float> best_trunk = model.trunk.values;
    std::vector<float> best_cond = model.cond.values;
    int bad_epochs = 0;

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng shuffle_rng(Rng::derive(cfg.seed, 0x45504f43ull + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        Rng jitter_rng(Rng::derive(cfg.seed, 0x4a495454ull + static_cast<std::uint64_t>(epoch)));
        const bool jitter = cfg.embed_jitter > 0.0 && cfg.mode != CondKind::none;

        double loss_sum = 0.0;
        long n_seq = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::vector<TrainExample> jittered;
            std::vector<const TrainExample*> batch;
            if (jitter) jittered.reserve(cfg.batch);
            for (std::size_t i = start; i < order.size() && i < start + cfg.batch; ++i) {
                if (jitter) {
                    jittered.push_back(data.train[order[i]]);
                    TrainExample& ex = jittered.back();
                    double norm = 0.0;
                    for (float& v : ex.embedding) {
                        v += static_cast<float>(cfg.embed_jitter * jitter_rng.normal());
                        norm += static_cast<double>(v) * v;
                    }
                    if (norm > 0.0) {
                        const float inv_n = static_cast<float>(1.0 / std::sqrt(norm));
                        for (float& v : ex.embedding) v *= inv_n;
                    }
                } else {
                    batch.push_back(&data.train[order[i]]);
                }
            }
            for (const TrainExample& ex : jittered) batch.push_back(&ex);
            const StepInfo info = train_step(model, batch, trunk_opt, cond_opt, cfg,
                                             class_weights);
            loss_sum += info.loss * static_cast<double>(batch.size());
            n_seq += static_cast<long>(batch.size());
        }

        const ValScore vs = score_validation(model, data.val);
        EpochStats es;
        es.train_loss = loss_sum / static_cast<double>(n_seq);
        es.val_loss = vs.loss;
        es.val_map = vs.map_score;
        rep.epochs.push_back(es);
        if (log) {
            *log << "epoch " << (epoch + 1) << " train_loss " << es.train_loss << " val_loss "
                 << es.val_loss << " val_map " << es.val_map << "\n";
        }

        if (best_val - vs.loss > cfg.improve_eps) {
            best_val = vs.loss;
            best_trunk = model.trunk.values;
            best_cond = model.cond.values;
            rep.best_epoch = epoch;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs > cfg.patience) break;
        }
    }

    model.trunk.values = std::move(best_trunk);
    model.cond.values = std::move(best_cond);
    rep.best_val_loss = best_val;
    rep.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (report) *report = rep;

    Checkpoint ck;
    ck.model = std::move(model);
    ck.embed_cfg = ec;
    ck.feat_cfg = fc;
    ck.train_cfg = cfg;
    ck.feat_mean = std::move(feat_mean);
    ck.feat_std = std::move(feat_std);
    ck.embed_mean = std::move(embed_mean);
    ck.embed_scale = embed_scale;
    return ck;
}

}  // namespace pvad
