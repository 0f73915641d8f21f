#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "pvad/rng.hpp"
#include "pvad/synth.hpp"
#include "pvad/training.hpp"

using namespace pvad;
using pvad::ad::Tensor;

namespace {

std::string tmp_dir(const std::string& name) {
    const std::string d = (std::filesystem::temp_directory_path() / name).string();
    std::filesystem::remove_all(d);
    return d;
}

// One cached synthetic example (two speakers, ternary labels).
TrainExample toy_example(std::uint64_t seed) {
    const SyntheticSpeaker a = make_speaker("tgt", seed);
    const SyntheticSpeaker b = make_speaker("other", seed + 1);
    const MixtureExample mix = make_mixture(
        {{a, synth_utterance(a, 1.0, seed)}, {b, synth_utterance(b, 1.0, seed + 2)}}, 0, seed);
    TrainExample ex;
    ex.id = "toy";
    ex.target = "tgt";
    ex.feats = feature_tensor(log_mel(mix.wave));
    ex.labels = mix.labels;
    Rng rng(seed + 3);
    ex.embedding.assign(64, 0.0f);
    double norm = 0.0;
    for (float& v : ex.embedding) {
        v = static_cast<float>(rng.normal());
        norm += static_cast<double>(v) * v;
    }
    for (float& v : ex.embedding) v = static_cast<float>(v / std::sqrt(norm));
    return ex;
}

std::string small_corpus(const std::string& name, std::uint64_t seed) {
    CorpusConfig cfg;
    cfg.train_speakers = 3;
    cfg.val_speakers = 2;
    cfg.test_speakers = 2;
    cfg.train_mixtures = 4;
    cfg.val_mixtures = 3;
    cfg.test_mixtures = 2;
    cfg.utt_min_s = 1.0;
    cfg.utt_max_s = 1.6;
    cfg.seed = seed;
    const std::string dir = tmp_dir(name);
    build_corpus(cfg, dir);
    return dir;
}

}  // namespace

TEST_CASE("overfitting one batch halves the loss in 50 steps for every mode") {
    const TrainExample ex = toy_example(5);
    TrainConfig cfg;
    cfg.batch = 1;
    for (CondKind kind : {CondKind::none, CondKind::concat, CondKind::add, CondKind::mul,
                          CondKind::film, CondKind::hywa}) {
        TrainExample e = ex;
        if (kind == CondKind::none) {
            for (int& y : e.labels) {
                if (y == kNtss) y = kTss;
            }
        }
        Model m = init_model(kind, 40, 64, 17);
        Adam ot(m.trunk.values.size(), cfg), oc(m.cond.values.size(), cfg);
        double first = 0.0, last = 0.0;
        for (int it = 0; it < 50; ++it) {
            const StepInfo info = train_step(m, {&e}, ot, oc, cfg);
            if (it == 0) first = info.loss;
            last = info.loss;
        }
        CAPTURE(cond_kind_name(kind));
        CHECK(last < 0.5 * first);
    }
}

TEST_CASE("joint gradient flow: hywa train_step moves both trunk and hypernet") {
    const TrainExample ex = toy_example(8);
    TrainConfig cfg;
    Model m = init_model(CondKind::hywa, 40, 64, 23);
    // randomize the zero-init output layer so the patch path is active
    Rng rng(3);
    for (float& v : m.cond.values) v += static_cast<float>(rng.range(-0.01, 0.01));
    Adam ot(m.trunk.values.size(), cfg), oc(m.cond.values.size(), cfg);
    const StepInfo info = train_step(m, {&ex}, ot, oc, cfg);
    CHECK(info.trunk_grad_norm > 0.0);
    CHECK(info.cond_grad_norm > 0.0);
    CHECK(std::isfinite(info.loss));
}

TEST_CASE("degenerate single-class batch still yields finite loss and gradients") {
    TrainExample ex = toy_example(9);
    std::fill(ex.labels.begin(), ex.labels.end(), kTss);
    TrainConfig cfg;
    Model m = init_model(CondKind::concat, 40, 64, 2);
    Adam ot(m.trunk.values.size(), cfg), oc(m.cond.values.size(), cfg);
    const StepInfo info = train_step(m, {&ex}, ot, oc, cfg);
    CHECK(std::isfinite(info.loss));
    CHECK(std::isfinite(info.trunk_grad_norm));
    for (float v : m.trunk.values) CHECK(std::isfinite(v));
}

TEST_CASE("non-finite loss raises a divergence error") {
    const TrainExample ex = toy_example(10);
    TrainConfig cfg;
    Model m = init_model(CondKind::add, 40, 64, 2);
    m.trunk.values[0] = std::numeric_limits<float>::quiet_NaN();
    Adam ot(m.trunk.values.size(), cfg), oc(m.cond.values.size(), cfg);
    CHECK_THROWS_AS(train_step(m, {&ex}, ot, oc, cfg), DivergenceError);
}

TEST_CASE("fit is deterministic: same seed and corpus give identical checkpoints") {
    const std::string corpus = small_corpus("pvad_fit_det", 44);
    TrainConfig cfg;
    cfg.mode = CondKind::concat;
    cfg.seed = 5;
    cfg.max_epochs = 2;
    Checkpoint a = fit(cfg, corpus);
    Checkpoint b = fit(cfg, corpus);
    CHECK(a.model.trunk.values == b.model.trunk.values);
    CHECK(a.model.cond.values == b.model.cond.values);

    const std::string pa = corpus + "/a.ckpt", pb = corpus + "/b.ckpt";
    save_checkpoint(pa, a);
    save_checkpoint(pb, b);
    std::ifstream fa(pa, std::ios::binary), fb(pb, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    std::filesystem::remove_all(corpus);
}

TEST_CASE("early stopping bookkeeping and patience boundary") {
    const std::string corpus = small_corpus("pvad_fit_stop", 45);
    TrainConfig cfg;
    cfg.mode = CondKind::add;
    cfg.seed = 6;
    cfg.max_epochs = 8;
    cfg.patience = 0;  // stops at the first non-improving epoch
    TrainReport rep;
    const Checkpoint ck = fit(cfg, corpus, &rep);
    REQUIRE(!rep.epochs.empty());
    REQUIRE(rep.best_epoch >= 0);
    // the retained checkpoint is never worse than any epoch seen
    for (const EpochStats& es : rep.epochs) {
        CHECK(rep.best_val_loss <= es.val_loss + cfg.improve_eps);
    }
    // with patience 0 the run ends right after the first non-improving epoch
    for (std::size_t i = 0; i + 2 < rep.epochs.size(); ++i) {
        CHECK(rep.epochs[i + 1].val_loss < rep.epochs[i].val_loss + cfg.improve_eps);
    }
    (void)ck;
    std::filesystem::remove_all(corpus);
}

TEST_CASE("checkpoints round trip bit-exactly and reject corruption") {
    const std::string corpus = small_corpus("pvad_fit_ckpt", 46);
    TrainConfig cfg;
    cfg.mode = CondKind::hywa;
    cfg.seed = 7;
    cfg.max_epochs = 1;
    Checkpoint ck = fit(cfg, corpus);
    const std::string path = corpus + "/model.ckpt";
    save_checkpoint(path, ck);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.model.trunk.values == ck.model.trunk.values);
    CHECK(back.model.cond.values == ck.model.cond.values);
    CHECK(back.digest == ck.digest);

    // loaded model forwards identically
    Rng rng(1);
    Tensor feats({20, 40}, 0.0f);
    for (float& v : feats.data) v = static_cast<float>(rng.range(-2, 2));
    std::vector<float> emb(64, 0.0f);
    for (float& v : emb) v = static_cast<float>(rng.normal());
    CHECK(personalize(ck.model, emb).forward(feats).data ==
          personalize(back.model, emb).forward(feats).data);

    // wrong magic
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("JUNK", 4);
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    std::filesystem::remove_all(corpus);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.lr = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    TrainConfig cfg2;
    cfg2.batch = 0;
    CHECK_THROWS_AS(cfg2.validate(), ConfigError);
}

TEST_CASE("warm start requires a compatible trunk") {
    const std::string corpus = small_corpus("pvad_fit_warm", 47);
    TrainConfig none_cfg;
    none_cfg.mode = CondKind::none;
    none_cfg.max_epochs = 1;
    Checkpoint base = fit(none_cfg, corpus);
    const std::string base_path = corpus + "/base.ckpt";
    save_checkpoint(base_path, base);

    TrainConfig warm;
    warm.mode = CondKind::hywa;  // same 40-dim trunk input: compatible
    warm.max_epochs = 1;
    warm.init_from = base_path;
    CHECK_NOTHROW(fit(warm, corpus));

    TrainConfig bad;
    bad.mode = CondKind::concat;  // 104-dim trunk input: incompatible
    bad.max_epochs = 1;
    bad.init_from = base_path;
    CHECK_THROWS_AS(fit(bad, corpus), ConfigError);
    std::filesystem::remove_all(corpus);
}
