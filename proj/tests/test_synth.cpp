#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "pvad/features.hpp"
#include "pvad/synth.hpp"

using namespace pvad;

namespace {

std::string tmp_dir(const std::string& name) {
    const std::string d = (std::filesystem::temp_directory_path() / name).string();
    std::filesystem::remove_all(d);
    return d;
}

SyntheticSpeaker fixed_speaker(const std::string& id, double f0) {
    SyntheticSpeaker s;
    s.id = id;
    s.f0_hz = f0;
    s.formants_hz = {500.0, 1500.0, 2800.0};
    s.seed = 7;
    return s;
}

// Fundamental period estimate via autocorrelation of a voiced segment.
double estimate_period(const std::vector<float>& x, int lo, int hi) {
    double best = 0.0;
    int best_lag = lo;
    for (int lag = lo; lag <= hi; ++lag) {
        double acc = 0.0;
        for (std::size_t i = 0; i + lag < x.size(); ++i)
            acc += static_cast<double>(x[i]) * x[i + static_cast<std::size_t>(lag)];
        if (acc > best) {
            best = acc;
            best_lag = lag;
        }
    }
    return best_lag;
}

}  // namespace

TEST_CASE("synth_utterance mask size, determinism, duration validation") {
    const SyntheticSpeaker spk = make_speaker("a", 3);
    const Utterance u = synth_utterance(spk, 1.0, 5);
    CHECK(u.mask.size() == 100);  // round(1.0 / 0.010) on the hop grid
    CHECK(u.wave.samples.size() == 16000);

    const Utterance v = synth_utterance(spk, 1.0, 5);
    CHECK(u.wave.samples == v.wave.samples);
    CHECK(u.voiced == v.voiced);

    CHECK_THROWS_AS(synth_utterance(spk, 0.4, 5), ConfigError);
    CHECK_THROWS_AS(synth_utterance(spk, 10.5, 5), ConfigError);
}

TEST_CASE("different f0 produces different fundamental periods") {
    const SyntheticSpeaker lo = fixed_speaker("lo", 100.0);
    const SyntheticSpeaker hi = fixed_speaker("hi", 220.0);
    const Utterance ul = synth_utterance(lo, 2.0, 11);
    const Utterance uh = synth_utterance(hi, 2.0, 11);

    // analyze the first voiced segment of each (f0 jitter is within ±4%)
    auto segment = [](const Utterance& u) {
        const auto [a, b] = u.voiced.front();
        return std::vector<float>(u.wave.samples.begin() + a, u.wave.samples.begin() + b);
    };
    const double pl = estimate_period(segment(ul), 16000 / 300, 16000 / 60);
    const double ph = estimate_period(segment(uh), 16000 / 300, 16000 / 60);
    CHECK(pl == doctest::Approx(16000.0 / 100.0).epsilon(0.1));
    CHECK(ph == doctest::Approx(16000.0 / 220.0).epsilon(0.1));
}

TEST_CASE("make_mixture labels agree with independent recomputation from spans") {
    const SyntheticSpeaker a = make_speaker("a", 1), b = make_speaker("b", 2),
                           c = make_speaker("c", 3);
    const FeatureConfig fc;
    const MixtureExample mix = make_mixture({{a, synth_utterance(a, 1.5, 10)},
                                             {b, synth_utterance(b, 2.0, 11)},
                                             {c, synth_utterance(c, 1.0, 12)}},
                                            1, 99, fc);
    CHECK(mix.target == "b");
    CHECK(mix.labels.size() ==
          static_cast<std::size_t>(frame_count(mix.wave.samples.size(), fc.window_samples(),
                                               fc.hop_samples())));

    // independent frame-center recount
    const int hop = fc.hop_samples(), win = fc.window_samples();
    for (std::size_t t = 0; t < mix.labels.size(); ++t) {
        const int center = static_cast<int>(t) * hop + win / 2;
        int expect = kNs;
        for (const Span& sp : mix.spans) {
            for (const auto& [s0, s1] : sp.voiced) {
                if (center >= s0 && center < s1) expect = (sp.speaker == mix.target) ? kTss : kNtss;
            }
        }
        CHECK(mix.labels[t] == expect);
    }
    // all three labels appear in a 3-speaker mixture with gaps
    const std::set<int> seen(mix.labels.begin(), mix.labels.end());
    CHECK(seen.count(kNs) == 1);
    CHECK(seen.count(kTss) == 1);
    CHECK(seen.count(kNtss) == 1);

    CHECK_THROWS_AS(make_mixture({}, 0, 1, fc), ConfigError);
}

TEST_CASE("add_noise hits the requested SNR and preserves labels") {
    const SyntheticSpeaker a = make_speaker("a", 21);
    MixtureExample mix = make_mixture({{a, synth_utterance(a, 2.0, 4)}}, 0, 5);
    for (float& s : mix.wave.samples) s *= 0.5f;  // headroom so no clip-rescale triggers

    const NoiseBank bank = make_noise_bank(NoiseBank::Split::seen, 2, 3.0, 77);
    for (int snr : kSnrGridDb) {
        const MixtureExample noisy = add_noise(mix, bank.clips[0], snr);
        CHECK(noisy.labels == mix.labels);
        CHECK(noisy.spans.size() == mix.spans.size());
        std::vector<float> noise(noisy.wave.samples.size());
        for (std::size_t i = 0; i < noise.size(); ++i)
            noise[i] = noisy.wave.samples[i] - mix.wave.samples[i];
        CHECK(std::fabs(measure_snr_db(mix.wave.samples, noise) - snr) < 0.01);
    }

    // equal-power sanity: snr 0 => unit gain, snr 20 => gain 0.1
    MixtureExample flat;
    flat.wave.sample_rate = 16000;
    flat.wave.samples.assign(1600, 0.1f);
    Waveform nclip;
    nclip.sample_rate = 16000;
    nclip.samples.assign(1600, 0.0f);
    for (std::size_t i = 0; i < nclip.samples.size(); ++i)
        nclip.samples[i] = (i % 2 == 0) ? 0.1f : -0.1f;
    const MixtureExample z0 = add_noise(flat, nclip, 0.0);
    CHECK(z0.wave.samples[0] == doctest::Approx(0.2f).epsilon(1e-5));
    const MixtureExample z20 = add_noise(flat, nclip, 20.0);
    CHECK(z20.wave.samples[0] == doctest::Approx(0.11f).epsilon(1e-5));

    MixtureExample silent;
    silent.wave.sample_rate = 16000;
    silent.wave.samples.assign(1600, 0.0f);
    CHECK_THROWS_AS(add_noise(silent, nclip, 0.0), DataError);
}

TEST_CASE("noise banks are deterministic and families differ") {
    const NoiseBank s1 = make_noise_bank(NoiseBank::Split::seen, 3, 2.0, 5);
    const NoiseBank s2 = make_noise_bank(NoiseBank::Split::seen, 3, 2.0, 5);
    for (int i = 0; i < 3; ++i) CHECK(s1.clips[i].samples == s2.clips[i].samples);
    const NoiseBank u1 = make_noise_bank(NoiseBank::Split::unseen, 3, 2.0, 5);
    CHECK(s1.clips[0].samples != u1.clips[0].samples);
}

TEST_CASE("build_corpus: disjoint splits, seen-only train noise, deterministic") {
    CorpusConfig cfg;
    cfg.train_speakers = 3;
    cfg.val_speakers = 2;
    cfg.test_speakers = 2;
    cfg.train_mixtures = 4;
    cfg.val_mixtures = 2;
    cfg.test_mixtures = 2;
    cfg.seed = 31;

    const std::string d1 = tmp_dir("pvad_corpus_a");
    build_corpus(cfg, d1);
    const CorpusHeader h = load_header(d1);

    std::set<std::string> train_ids, val_ids, test_ids;
    for (const auto& s : h.train) train_ids.insert(s.speaker.id);
    for (const auto& s : h.val) val_ids.insert(s.speaker.id);
    for (const auto& s : h.test) test_ids.insert(s.speaker.id);
    CHECK(train_ids.size() == 3);
    for (const auto& id : val_ids) CHECK(train_ids.count(id) == 0);
    for (const auto& id : test_ids) {
        CHECK(train_ids.count(id) == 0);
        CHECK(val_ids.count(id) == 0);
    }

    for (const ManifestEntry& e : load_manifest(d1, "train")) {
        CHECK((e.scenario == "clean" || e.scenario == "seen"));
    }
    std::set<std::string> test_scenarios;
    for (const ManifestEntry& e : load_manifest(d1, "test")) test_scenarios.insert(e.scenario);
    CHECK(test_scenarios == std::set<std::string>{"clean", "seen", "unseen"});

    const std::string d2 = tmp_dir("pvad_corpus_b");
    build_corpus(cfg, d2);
    for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl", "header.json"}) {
        std::ifstream a(d1 + "/" + f), b(d2 + "/" + f);
        const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        CHECK(sa == sb);
    }

    CorpusConfig bad = cfg;
    bad.train_ids = {"x", "y", "z"};
    bad.val_ids = {"x", "w"};
    bad.test_ids = {"p", "q"};
    CHECK_THROWS_AS(build_corpus(bad, tmp_dir("pvad_corpus_bad")), ConfigError);

    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
    std::filesystem::remove_all(tmp_dir("pvad_corpus_bad"));
}

TEST_CASE("binary collapse of labels reproduces plain speech/non-speech") {
    const SyntheticSpeaker a = make_speaker("a", 51), b = make_speaker("b", 52);
    const MixtureExample mix =
        make_mixture({{a, synth_utterance(a, 1.0, 1)}, {b, synth_utterance(b, 1.0, 2)}}, 0, 3);
    const int hop = FeatureConfig{}.hop_samples(), win = FeatureConfig{}.window_samples();
    for (std::size_t t = 0; t < mix.labels.size(); ++t) {
        const int center = static_cast<int>(t) * hop + win / 2;
        bool voiced_any = false;
        for (const Span& sp : mix.spans)
            for (const auto& [s0, s1] : sp.voiced)
                if (center >= s0 && center < s1) voiced_any = true;
        const bool speech = mix.labels[t] == kTss || mix.labels[t] == kNtss;
        CHECK(speech == voiced_any);
    }
}
