#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "pvad/checkpoint.hpp"
#include "pvad/eval.hpp"
#include "pvad/rng.hpp"
#include "pvad/training.hpp"

using namespace pvad;

namespace {

std::string tmp_dir(const std::string& name) {
    const std::string d = (std::filesystem::temp_directory_path() / name).string();
    std::filesystem::remove_all(d);
    return d;
}

}  // namespace

TEST_CASE("average precision known values") {
    CHECK(average_precision({0.9f, 0.8f, 0.2f, 0.1f}, {1, 1, 0, 0}) == doctest::Approx(1.0));
    CHECK(average_precision({0.9f, 0.8f, 0.7f, 0.6f}, {1, 0, 1, 0}) ==
          doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    CHECK_THROWS_AS(average_precision({0.5f, 0.4f}, {0, 0}), MetricError);
    CHECK_THROWS_AS(average_precision({0.5f}, {1, 0}), DimensionError);
}

TEST_CASE("random scores against random labels approximate the positive rate") {
    Rng rng(12);
    const int n = 10000;
    std::vector<float> scores(n);
    std::vector<std::uint8_t> pos(n);
    const double p = 0.3;
    for (int i = 0; i < n; ++i) {
        scores[static_cast<std::size_t>(i)] = static_cast<float>(rng.uniform());
        pos[static_cast<std::size_t>(i)] = rng.uniform() < p ? 1 : 0;
    }
    CHECK(average_precision(scores, pos) == doctest::Approx(p).epsilon(0.08));
}

TEST_CASE("AP is invariant under strictly increasing score transforms") {
    Rng rng(13);
    std::vector<float> scores(200);
    std::vector<std::uint8_t> pos(200);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = static_cast<float>(rng.range(-3, 3));
        pos[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    pos[0] = 1;
    const double base = average_precision(scores, pos);
    std::vector<float> warped = scores;
    for (float& v : warped) v = std::tanh(v) * 10.0f + 5.0f;
    CHECK(average_precision(warped, pos) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("keyed AP is invariant to input permutation") {
    Rng rng(14);
    const int n = 300;
    std::vector<float> scores(n);
    std::vector<std::uint64_t> keys(n);
    std::vector<std::uint8_t> pos(n);
    for (int i = 0; i < n; ++i) {
        // coarse quantization forces plenty of ties
        scores[static_cast<std::size_t>(i)] = static_cast<float>(rng.index(5)) / 5.0f;
        keys[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(i);
        pos[static_cast<std::size_t>(i)] = rng.uniform() < 0.5 ? 1 : 0;
    }
    pos[0] = 1;
    const double base = average_precision_keyed(scores, keys, pos);

    std::vector<std::size_t> perm(n);
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);
    Rng shuffle_rng(15);
    shuffle_rng.shuffle(perm);
    std::vector<float> s2(n);
    std::vector<std::uint64_t> k2(n);
    std::vector<std::uint8_t> p2(n);
    for (int i = 0; i < n; ++i) {
        s2[static_cast<std::size_t>(i)] = scores[perm[static_cast<std::size_t>(i)]];
        k2[static_cast<std::size_t>(i)] = keys[perm[static_cast<std::size_t>(i)]];
        p2[static_cast<std::size_t>(i)] = pos[perm[static_cast<std::size_t>(i)]];
    }
    CHECK(average_precision_keyed(s2, k2, p2) == doctest::Approx(base).epsilon(1e-12));
}

namespace {

// Shared small corpus + trained checkpoint for the evaluate/compare tests.
struct EvalFixture {
    std::string corpus;
    Checkpoint ck;

    EvalFixture() {
        CorpusConfig cfg;
        cfg.train_speakers = 3;
        cfg.val_speakers = 2;
        cfg.test_speakers = 2;
        cfg.train_mixtures = 3;
        cfg.val_mixtures = 2;
        cfg.test_mixtures = 3;
        cfg.utt_min_s = 1.0;
        cfg.utt_max_s = 1.5;
        cfg.seed = 77;
        corpus = tmp_dir("pvad_eval_fixture");
        build_corpus(cfg, corpus);
        TrainConfig tc;
        tc.mode = CondKind::concat;
        tc.max_epochs = 1;
        ck = fit(tc, corpus);
    }
    ~EvalFixture() { std::filesystem::remove_all(corpus); }
};

}  // namespace

TEST_CASE("evaluate: oracle scorer reaches mAP 1.0 and constant scorer matches priors") {
    EvalFixture fx;
    const std::vector<ManifestEntry> entries = load_manifest(fx.corpus, "test");

    // label lookup by entry id for the oracle scorer
    std::map<std::string, const ManifestEntry*> by_id;
    for (const ManifestEntry& e : entries) by_id[e.id] = &e;

    int calls = 0;
    std::vector<const ManifestEntry*> order;
    for (const ManifestEntry& e : entries) {
        if (e.scenario == "clean") order.push_back(&e);
    }
    ScoreFn oracle_scorer = [&](const ad::Tensor& feats, const std::string&) {
        const ManifestEntry* e = order[static_cast<std::size_t>(calls++)];
        ad::Tensor logits({feats.rows(), 3}, 0.0f);
        for (int t = 0; t < feats.rows(); ++t) {
            logits.at(t, e->labels[static_cast<std::size_t>(t)]) = 10.0f;
        }
        return logits;
    };
    const EvalResult perfect =
        evaluate(oracle_scorer, entries, fx.corpus, "clean", FeatureConfig{});
    for (double ap : perfect.ap) CHECK(ap == doctest::Approx(1.0));
    CHECK(perfect.map_score == doctest::Approx(1.0));

    // uninformative (pseudo-random) scores give AP near the class prior
    ScoreFn noise = [](const ad::Tensor& feats, const std::string&) {
        ad::Tensor logits({feats.rows(), 3}, 0.0f);
        std::uint64_t h = 0x9E3779B97F4A7C15ull;
        for (float v : feats.data) {
            h ^= static_cast<std::uint64_t>(std::llround(v * 16.0)) + 0x9E3779B9u + (h << 6);
        }
        Rng rng(h);
        for (float& v : logits.data) v = static_cast<float>(rng.uniform());
        return logits;
    };
    const EvalResult flat = evaluate(noise, entries, fx.corpus, "clean", FeatureConfig{});
    std::vector<long> counts(3, 0);
    long total = 0;
    for (const ManifestEntry& e : entries) {
        if (e.scenario != "clean") continue;
        for (int y : e.labels) {
            ++counts[static_cast<std::size_t>(y)];
            ++total;
        }
    }
    for (int c = 0; c < 3; ++c) {
        const double prior = static_cast<double>(counts[static_cast<std::size_t>(c)]) / total;
        CHECK(std::fabs(flat.ap[static_cast<std::size_t>(c)] - prior) < 0.12);
    }
    CHECK(flat.map_score ==
          doctest::Approx((flat.ap[0] + flat.ap[1] + flat.ap[2]) / 3.0).epsilon(1e-12));

    CHECK_THROWS_AS(evaluate(noise, entries, fx.corpus, "nonexistent", FeatureConfig{}),
                    ConfigError);
}

TEST_CASE("compare_modes: identical checkpoints give identical rows, table is shaped") {
    EvalFixture fx;
    const std::string p1 = fx.corpus + "/m1.ckpt";
    const std::string p2 = fx.corpus + "/m2.ckpt";
    save_checkpoint(p1, fx.ck);
    save_checkpoint(p2, fx.ck);

    const std::vector<CompareRow> rows =
        compare_modes({{"concat", {p1, p2}}}, fx.corpus, {"clean", "seen"});
    REQUIRE(rows.size() == 2);
    for (const CompareRow& r : rows) {
        CHECK(r.seeds == 2);
        CHECK(r.ap_std[0] == doctest::Approx(0.0));  // identical checkpoints
        CHECK(r.map_std == doctest::Approx(0.0));
        CHECK(r.map_mean ==
              doctest::Approx((r.ap_mean[0] + r.ap_mean[1] + r.ap_mean[2]) / 3.0).epsilon(1e-12));
    }
    const std::string table = format_table(rows);
    CHECK(table.find("AP(ns)") != std::string::npos);
    CHECK(table.find("AP(tss)") != std::string::npos);
    CHECK(table.find("AP(ntss)") != std::string::npos);
    CHECK(table.find("mAP") != std::string::npos);

    CHECK_THROWS_AS(compare_modes({}, fx.corpus, {"clean"}), ConfigError);
    // listing a checkpoint under the wrong mode is rejected
    CHECK_THROWS_AS(compare_modes({{"hywa", {p1}}}, fx.corpus, {"clean"}), ConfigError);
}
