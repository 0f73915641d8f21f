#include "pvad/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pvad/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace pvad {

namespace {

double rms(const std::vector<float>& v) {
    double acc = 0.0;
    for (float x : v) acc += static_cast<double>(x) * x;
    return std::sqrt(acc / std::max<std::size_t>(1, v.size()));
}

double mean_power(const std::vector<float>& v) {
    double acc = 0.0;
    for (float x : v) acc += static_cast<double>(x) * x;
    return acc / std::max<std::size_t>(1, v.size());
}

}  // namespace

SyntheticSpeaker make_speaker(const std::string& id, std::uint64_t seed) {
    Rng rng(seed);
    SyntheticSpeaker s;
    s.id = id;
    s.seed = seed;
    s.f0_hz = rng.range(90.0, 260.0);
    s.formants_hz = {rng.range(300.0, 900.0), rng.range(1000.0, 2400.0),
                     rng.range(2500.0, 3400.0)};
    return s;
}

Utterance synth_utterance(const SyntheticSpeaker& spk, double duration_s, std::uint64_t seed,
                          const FeatureConfig& fc) {
    if (duration_s < 0.5 || duration_s > 10.0) {
        throw ConfigError("synth_utterance: duration " + std::to_string(duration_s) +
                          " outside [0.5, 10] s");
    }
    const int sr = fc.sample_rate;
    const int n = static_cast<int>(std::lround(duration_s * sr));
    Rng rng(Rng::derive(spk.seed, seed));

    Utterance u;
    u.wave.sample_rate = sr;
    u.wave.samples.assign(static_cast<std::size_t>(n), 0.0f);

    const int ramp = sr / 100;  // 10 ms fade at segment edges
    int pos = 0;
    bool voiced = true;  // utterances start voiced
    while (pos < n) {
        if (voiced) {
            const int seg = std::min(n - pos, static_cast<int>(rng.range(0.25, 0.7) * sr));
            const double f0 = spk.f0_hz * rng.range(0.96, 1.04);
            const int harmonics = std::min(30, static_cast<int>(4000.0 / f0));
            std::vector<double> amp(static_cast<std::size_t>(harmonics));
            std::vector<double> phase(static_cast<std::size_t>(harmonics));
            for (int k = 0; k < harmonics; ++k) {
                const double f = (k + 1) * f0;
                double env = 0.08;
                for (int i = 0; i < 3; ++i) {
                    const double bw = 120.0 + 60.0 * i;
                    const double d = (f - spk.formants_hz[static_cast<std::size_t>(i)]) / bw;
                    env += std::exp(-d * d);
                }
                amp[static_cast<std::size_t>(k)] = env / std::sqrt(static_cast<double>(k + 1));
                phase[static_cast<std::size_t>(k)] = rng.range(0.0, 2.0 * M_PI);
            }
            double norm = 0.0;
            for (double a : amp) norm += a;
            const double gain = 0.35 / std::max(norm, 1e-9);
            for (int i = 0; i < seg; ++i) {
                const double t = static_cast<double>(i) / sr;
                double v = 0.0;
                for (int k = 0; k < harmonics; ++k) {
                    v += amp[static_cast<std::size_t>(k)] *
                         std::sin(2.0 * M_PI * (k + 1) * f0 * t + phase[static_cast<std::size_t>(k)]);
                }
                double w = 1.0;
                if (i < ramp) w = 0.5 - 0.5 * std::cos(M_PI * i / ramp);
                if (seg - 1 - i < ramp) w = std::min(w, 0.5 - 0.5 * std::cos(M_PI * (seg - 1 - i) / ramp));
                u.wave.samples[static_cast<std::size_t>(pos + i)] = static_cast<float>(gain * v * w);
            }
            u.voiced.emplace_back(pos, pos + seg);
            pos += seg;
        } else {
            pos += static_cast<int>(rng.range(0.08, 0.3) * sr);
        }
        voiced = !voiced;
    }

    const int hop = fc.hop_samples();
    const int mask_frames = static_cast<int>(std::lround(duration_s / fc.hop_s));
    u.mask.assign(static_cast<std::size_t>(mask_frames), 0);
    for (int m = 0; m < mask_frames; ++m) {
        const int center = static_cast<int>((m + 0.5) * hop);
        for (const auto& [a, b] : u.voiced) {
            if (center >= a && center < b) {
                u.mask[static_cast<std::size_t>(m)] = 1;
                break;
            }
        }
    }
    return u;
}

std::vector<int> derive_labels(const std::vector<Span>& spans, const std::string& target,
                               std::size_t num_samples, const FeatureConfig& fc) {
    const int T = frame_count(num_samples, fc.window_samples(), fc.hop_samples());
    std::vector<int> labels(static_cast<std::size_t>(T), kNs);
    const int hop = fc.hop_samples();
    const int win = fc.window_samples();
    for (int t = 0; t < T; ++t) {
        const int center = t * hop + win / 2;
        for (const Span& sp : spans) {
            if (center < sp.start || center >= sp.end) continue;
            for (const auto& [a, b] : sp.voiced) {
                if (center >= a && center < b) {
                    labels[static_cast<std::size_t>(t)] = (sp.speaker == target) ? kTss : kNtss;
                    break;
                }
            }
            break;
        }
    }
    return labels;
}

MixtureExample make_mixture(const std::vector<std::pair<SyntheticSpeaker, Utterance>>& utts,
                            int target_index, std::uint64_t seed, const FeatureConfig& fc) {
    if (utts.empty()) throw ConfigError("make_mixture: no utterances");
    if (utts.size() > 3) throw ConfigError("make_mixture: more than 3 utterances");
    if (target_index < 0 || target_index >= static_cast<int>(utts.size())) {
        throw ConfigError("make_mixture: target index out of range");
    }
    Rng rng(seed);
    MixtureExample mix;
    mix.wave.sample_rate = utts.front().second.wave.sample_rate;
    mix.target = utts[static_cast<std::size_t>(target_index)].first.id;
    for (std::size_t i = 0; i < utts.size(); ++i) {
        if (i > 0) {
            const int gap = static_cast<int>(rng.range(0.0, 0.3) * mix.wave.sample_rate);
            mix.wave.samples.insert(mix.wave.samples.end(), static_cast<std::size_t>(gap), 0.0f);
        }
        const int off = static_cast<int>(mix.wave.samples.size());
        const Utterance& u = utts[i].second;
        mix.wave.samples.insert(mix.wave.samples.end(), u.wave.samples.begin(),
                                u.wave.samples.end());
        Span sp;
        sp.start = off;
        sp.end = off + static_cast<int>(u.wave.samples.size());
        sp.speaker = utts[i].first.id;
        for (const auto& [a, b] : u.voiced) sp.voiced.emplace_back(off + a, off + b);
        mix.spans.push_back(std::move(sp));
    }
    mix.labels = derive_labels(mix.spans, mix.target, mix.wave.samples.size(), fc);
    return mix;
}

NoiseBank make_noise_bank(NoiseBank::Split split, int num_clips, double clip_s,
                          std::uint64_t seed) {
    NoiseBank bank;
    bank.split = split;
    bank.seed = seed;
    const int sr = 16000;
    const int n = static_cast<int>(clip_s * sr);
    for (int c = 0; c < num_clips; ++c) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(c)));
        Waveform clip;
        clip.sample_rate = sr;
        clip.samples.assign(static_cast<std::size_t>(n), 0.0f);
        if (split == NoiseBank::Split::seen) {
            // colored noise texture with slow amplitude modulation
            const double cutoff = rng.range(500.0, 4000.0);
            const double alpha = std::exp(-2.0 * M_PI * cutoff / sr);
            const double mod_hz = rng.range(0.5, 2.0);
            const double depth = rng.range(0.2, 0.6);
            double state = 0.0;
            for (int i = 0; i < n; ++i) {
                state = alpha * state + (1.0 - alpha) * rng.normal();
                const double mod = 1.0 + depth * std::sin(2.0 * M_PI * mod_hz * i / sr);
                clip.samples[static_cast<std::size_t>(i)] = static_cast<float>(state * mod);
            }
        } else {
            // tonal partials plus an impulsive click train
            const int partials = 5 + static_cast<int>(rng.index(6));
            std::vector<double> freq(static_cast<std::size_t>(partials));
            std::vector<double> amp(static_cast<std::size_t>(partials));
            std::vector<double> ph(static_cast<std::size_t>(partials));
            for (int p = 0; p < partials; ++p) {
                freq[static_cast<std::size_t>(p)] = rng.range(100.0, 6000.0);
                amp[static_cast<std::size_t>(p)] = rng.range(0.2, 1.0);
                ph[static_cast<std::size_t>(p)] = rng.range(0.0, 2.0 * M_PI);
            }
            for (int i = 0; i < n; ++i) {
                double v = 0.0;
                for (int p = 0; p < partials; ++p) {
                    v += amp[static_cast<std::size_t>(p)] *
                         std::sin(2.0 * M_PI * freq[static_cast<std::size_t>(p)] * i / sr +
                                  ph[static_cast<std::size_t>(p)]);
                }
                clip.samples[static_cast<std::size_t>(i)] = static_cast<float>(v / partials);
            }
            int next_click = static_cast<int>(rng.range(0.05, 0.3) * sr);
            while (next_click < n) {
                const double a = rng.range(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
                const int decay = sr / 200;  // 5 ms burst
                for (int i = 0; i < 4 * decay && next_click + i < n; ++i) {
                    clip.samples[static_cast<std::size_t>(next_click + i)] +=
                        static_cast<float>(a * std::exp(-static_cast<double>(i) / decay));
                }
                next_click += static_cast<int>(rng.range(0.1, 0.4) * sr);
            }
        }
        const double r = rms(clip.samples);
        const float g = static_cast<float>(0.1 / std::max(r, 1e-9));
        for (auto& s : clip.samples) s *= g;
        bank.clips.push_back(std::move(clip));
    }
    return bank;
}

double measure_snr_db(const std::vector<float>& speech, const std::vector<float>& noise) {
    const double ps = mean_power(speech);
    const double pn = mean_power(noise);
    if (ps <= 0.0 || pn <= 0.0) throw DataError("measure_snr_db: zero-power signal");
    return 10.0 * std::log10(ps / pn);
}

MixtureExample add_noise(const MixtureExample& x, const Waveform& clip, double snr_db) {
    const std::size_t n = x.wave.samples.size();
    const double ps = mean_power(x.wave.samples);
    if (ps <= 0.0) throw DataError("add_noise: speech segment has zero power");
    if (clip.samples.empty()) throw DataError("add_noise: empty noise clip");

    std::vector<float> noise(n);
    for (std::size_t i = 0; i < n; ++i) noise[i] = clip.samples[i % clip.samples.size()];
    const double pn = mean_power(noise);
    if (pn <= 0.0) throw DataError("add_noise: noise clip has zero power");
    const double gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));

    MixtureExample out = x;
    float peak = 0.0f;
    for (std::size_t i = 0; i < n; ++i) {
        out.wave.samples[i] = x.wave.samples[i] + static_cast<float>(gain) * noise[i];
        peak = std::max(peak, std::abs(out.wave.samples[i]));
    }
    if (peak > 0.999f) {
        // uniform rescale keeps the speech/noise ratio intact
        const float g = 0.999f / peak;
        for (auto& s : out.wave.samples) s *= g;
    }
    return out;
}

Waveform apply_reverb(const Waveform& w, std::uint64_t seed) {
    Rng rng(seed);
    const int sr = w.sample_rate;
    struct Tap {
        int delay;
        float gain;
    };
    std::vector<Tap> taps;
    for (int i = 0; i < 30; ++i) {
        const double d = rng.range(0.002, 0.2);
        const double g = 0.3 * std::exp(-d / 0.06) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        taps.push_back({static_cast<int>(d * sr), static_cast<float>(g)});
    }
    Waveform out = w;
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
        float acc = w.samples[i];
        for (const Tap& t : taps) {
            if (i >= static_cast<std::size_t>(t.delay))
                acc += t.gain * w.samples[i - static_cast<std::size_t>(t.delay)];
        }
        out.samples[i] = acc;
    }
    float peak = 0.0f;
    for (float s : out.samples) peak = std::max(peak, std::abs(s));
    if (peak > 0.999f) {
        const float g = 0.999f / peak;
        for (auto& s : out.samples) s *= g;
    }
    return out;
}

namespace {

json span_to_json(const Span& sp) {
    json j;
    j["start"] = sp.start;
    j["end"] = sp.end;
    j["speaker"] = sp.speaker;
    j["voiced"] = sp.voiced;
    return j;
}

Span span_from_json(const json& j) {
    Span sp;
    sp.start = j.at("start").get<int>();
    sp.end = j.at("end").get<int>();
    sp.speaker = j.at("speaker").get<std::string>();
    for (const auto& v : j.at("voiced")) sp.voiced.emplace_back(v[0].get<int>(), v[1].get<int>());
    return sp;
}

std::string labels_to_string(const std::vector<int>& labels) {
    std::string s;
    s.reserve(labels.size());
    for (int l : labels) s.push_back(static_cast<char>('0' + l));
    return s;
}

std::vector<int> labels_from_string(const std::string& s) {
    std::vector<int> labels;
    labels.reserve(s.size());
    for (char c : s) labels.push_back(c - '0');
    return labels;
}

json entry_to_json(const ManifestEntry& e) {
    json j;
    j["id"] = e.id;
    j["wav"] = e.wav;
    j["target"] = e.target;
    j["scenario"] = e.scenario;
    j["snr_db"] = e.snr_db;
    j["base"] = e.base;
    j["seed"] = e.seed;
    json spans = json::array();
    for (const Span& sp : e.spans) spans.push_back(span_to_json(sp));
    j["spans"] = spans;
    j["labels"] = labels_to_string(e.labels);
    return j;
}

ManifestEntry entry_from_json(const json& j) {
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.wav = j.at("wav").get<std::string>();
    e.target = j.at("target").get<std::string>();
    e.scenario = j.at("scenario").get<std::string>();
    e.snr_db = j.at("snr_db").get<int>();
    e.base = j.at("base").get<std::string>();
    e.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& sj : j.at("spans")) e.spans.push_back(span_from_json(sj));
    e.labels = labels_from_string(j.at("labels").get<std::string>());
    return e;
}

struct SplitPlan {
    std::string name;
    std::vector<SyntheticSpeaker> speakers;
    int mixtures = 0;
    std::uint64_t seed_base = 0;
};

}  // namespace

void build_corpus(const CorpusConfig& cfg, const std::string& out_dir) {
    if (cfg.train_speakers < 2 || cfg.val_speakers < 2 || cfg.test_speakers < 2) {
        throw ConfigError("build_corpus: each split needs at least 2 speakers");
    }
    FeatureConfig fc;

    auto make_ids = [&](const std::string& prefix, const std::vector<std::string>& explicit_ids,
                        int count) {
        std::vector<std::string> ids = explicit_ids;
        if (ids.empty()) {
            for (int i = 0; i < count; ++i) ids.push_back(prefix + std::to_string(i));
        }
        return ids;
    };
    const auto train_ids = make_ids("train_spk", cfg.train_ids, cfg.train_speakers);
    const auto val_ids = make_ids("val_spk", cfg.val_ids, cfg.val_speakers);
    const auto test_ids = make_ids("test_spk", cfg.test_ids, cfg.test_speakers);
    for (const auto& a : train_ids)
        for (const auto& b : val_ids)
            if (a == b) throw ConfigError("build_corpus: speaker '" + a + "' in train and val");
    for (const auto& a : train_ids)
        for (const auto& b : test_ids)
            if (a == b) throw ConfigError("build_corpus: speaker '" + a + "' in train and test");
    for (const auto& a : val_ids)
        for (const auto& b : test_ids)
            if (a == b) throw ConfigError("build_corpus: speaker '" + a + "' in val and test");

    fs::create_directories(fs::path(out_dir) / "wav");

    CorpusHeader header;
    header.master_seed = cfg.seed;
    header.config = cfg;

    std::uint64_t spk_counter = 0;
    auto make_split_speakers = [&](const std::vector<std::string>& ids) {
        std::vector<SyntheticSpeaker> out;
        for (const auto& id : ids) {
            out.push_back(make_speaker(id, Rng::derive(cfg.seed, 0x5000 + spk_counter)));
            ++spk_counter;
        }
        return out;
    };

    std::vector<SplitPlan> plans = {
        {"train", make_split_speakers(train_ids), cfg.train_mixtures, 0x10000},
        {"val", make_split_speakers(val_ids), cfg.val_mixtures, 0x20000},
        {"test", make_split_speakers(test_ids), cfg.test_mixtures, 0x30000},
    };

    const NoiseBank seen = make_noise_bank(NoiseBank::Split::seen, cfg.noise_clips_per_bank, 5.0,
                                           Rng::derive(cfg.seed, 0x41));
    const NoiseBank unseen = make_noise_bank(NoiseBank::Split::unseen, cfg.noise_clips_per_bank,
                                             5.0, Rng::derive(cfg.seed, 0x42));

    for (SplitPlan& plan : plans) {
        std::vector<SpeakerRecord>& records =
            plan.name == "train" ? header.train : (plan.name == "val" ? header.val : header.test);
        for (const auto& spk : plan.speakers) {
            const Utterance enroll =
                synth_utterance(spk, cfg.enroll_s, Rng::derive(cfg.seed, 0x999), fc);
            const std::string rel = "wav/enroll_" + spk.id + ".wav";
            write_wav((fs::path(out_dir) / rel).string(), enroll.wave);
            records.push_back({spk, rel});
        }

        std::ofstream manifest(fs::path(out_dir) / (plan.name + ".jsonl"));
        for (int i = 0; i < plan.mixtures; ++i) {
            const std::uint64_t ex_seed = Rng::derive(cfg.seed, plan.seed_base + i);
            Rng rng(ex_seed);
            const int n_utts =
                cfg.min_utts + static_cast<int>(rng.index(
                                   static_cast<std::uint64_t>(cfg.max_utts - cfg.min_utts + 1)));
            // distinct speakers per mixture
            std::vector<int> order(plan.speakers.size());
            for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
            rng.shuffle(order);
            std::vector<std::pair<SyntheticSpeaker, Utterance>> utts;
            for (int k = 0; k < std::min<int>(n_utts, static_cast<int>(order.size())); ++k) {
                const SyntheticSpeaker& spk = plan.speakers[static_cast<std::size_t>(order[k])];
                const double dur = rng.range(cfg.utt_min_s, cfg.utt_max_s);
                utts.emplace_back(spk, synth_utterance(spk, dur, rng.bits(), fc));
            }
            const int target = static_cast<int>(rng.index(utts.size()));
            MixtureExample mix = make_mixture(utts, target, rng.bits(), fc);
            if (cfg.reverb) {
                mix.wave = apply_reverb(mix.wave, rng.bits());
                // reverb invalidates none of the labels: spans and voiced
                // intervals refer to the dry source timing
            }

            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "%s_%04d", plan.name.c_str(), i);
            const std::string base_id = idbuf;

            auto emit = [&](const MixtureExample& m, const std::string& suffix,
                            const std::string& scenario, int snr) {
                ManifestEntry e;
                e.id = base_id + suffix;
                e.wav = "wav/" + e.id + ".wav";
                e.target = m.target;
                e.scenario = scenario;
                e.snr_db = snr;
                e.base = base_id;
                e.spans = m.spans;
                e.labels = m.labels;
                e.seed = ex_seed;
                write_wav((fs::path(out_dir) / e.wav).string(), m.wave);
                manifest << entry_to_json(e).dump() << "\n";
            };

            emit(mix, "", "clean", 0);
            if (plan.name == "train") {
                const int snr = cfg.snr_grid[rng.index(cfg.snr_grid.size())];
                const Waveform& clip = seen.clips[rng.index(seen.clips.size())];
                emit(add_noise(mix, clip, snr), "_seen", "seen", snr);
            } else if (plan.name == "test") {
                for (const int snr : cfg.snr_grid) {
                    const Waveform& sclip = seen.clips[rng.index(seen.clips.size())];
                    emit(add_noise(mix, sclip, snr), "_seen" + std::to_string(snr), "seen", snr);
                }
                for (const int snr : cfg.snr_grid) {
                    const Waveform& uclip = unseen.clips[rng.index(unseen.clips.size())];
                    emit(add_noise(mix, uclip, snr), "_unseen" + std::to_string(snr), "unseen",
                         snr);
                }
            }
        }
    }

    json h;
    h["master_seed"] = header.master_seed;
    json c;
    c["train_speakers"] = cfg.train_speakers;
    c["val_speakers"] = cfg.val_speakers;
    c["test_speakers"] = cfg.test_speakers;
    c["train_mixtures"] = cfg.train_mixtures;
    c["val_mixtures"] = cfg.val_mixtures;
    c["test_mixtures"] = cfg.test_mixtures;
    c["min_utts"] = cfg.min_utts;
    c["max_utts"] = cfg.max_utts;
    c["utt_min_s"] = cfg.utt_min_s;
    c["utt_max_s"] = cfg.utt_max_s;
    c["enroll_s"] = cfg.enroll_s;
    c["noise_clips_per_bank"] = cfg.noise_clips_per_bank;
    c["snr_grid"] = cfg.snr_grid;
    c["reverb"] = cfg.reverb;
    c["seed"] = cfg.seed;
    h["config"] = c;
    for (const char* split : {"train", "val", "test"}) {
        json arr = json::array();
        const auto& records = std::string(split) == "train"
                                  ? header.train
                                  : (std::string(split) == "val" ? header.val : header.test);
        for (const auto& r : records) {
            json sj;
            sj["id"] = r.speaker.id;
            sj["f0_hz"] = r.speaker.f0_hz;
            sj["formants_hz"] = r.speaker.formants_hz;
            sj["seed"] = r.speaker.seed;
            sj["enroll_wav"] = r.enroll_wav;
            arr.push_back(sj);
        }
        h[split] = arr;
    }
    std::ofstream hf(fs::path(out_dir) / "header.json");
    hf << h.dump(2) << "\n";
}

CorpusHeader load_header(const std::string& corpus_dir) {
    std::ifstream is(fs::path(corpus_dir) / "header.json");
    if (!is) throw DataError("load_header: no header.json in " + corpus_dir);
    json h = json::parse(is);
    CorpusHeader out;
    out.master_seed = h.at("master_seed").get<std::uint64_t>();
    const json& c = h.at("config");
    out.config.train_speakers = c.at("train_speakers").get<int>();
    out.config.val_speakers = c.at("val_speakers").get<int>();
    out.config.test_speakers = c.at("test_speakers").get<int>();
    out.config.train_mixtures = c.at("train_mixtures").get<int>();
    out.config.val_mixtures = c.at("val_mixtures").get<int>();
    out.config.test_mixtures = c.at("test_mixtures").get<int>();
    out.config.min_utts = c.at("min_utts").get<int>();
    out.config.max_utts = c.at("max_utts").get<int>();
    out.config.utt_min_s = c.at("utt_min_s").get<double>();
    out.config.utt_max_s = c.at("utt_max_s").get<double>();
    out.config.enroll_s = c.at("enroll_s").get<double>();
    out.config.noise_clips_per_bank = c.at("noise_clips_per_bank").get<int>();
    out.config.snr_grid = c.at("snr_grid").get<std::vector<int>>();
    out.config.reverb = c.at("reverb").get<bool>();
    out.config.seed = c.at("seed").get<std::uint64_t>();
    for (const char* split : {"train", "val", "test"}) {
        auto& records = std::string(split) == "train"
                            ? out.train
                            : (std::string(split) == "val" ? out.val : out.test);
        for (const auto& sj : h.at(split)) {
            SpeakerRecord r;
            r.speaker.id = sj.at("id").get<std::string>();
            r.speaker.f0_hz = sj.at("f0_hz").get<double>();
            r.speaker.formants_hz = sj.at("formants_hz").get<std::array<double, 3>>();
            r.speaker.seed = sj.at("seed").get<std::uint64_t>();
            r.enroll_wav = sj.at("enroll_wav").get<std::string>();
            records.push_back(std::move(r));
        }
    }
    return out;
}

std::vector<ManifestEntry> load_manifest(const std::string& corpus_dir, const std::string& split) {
    std::ifstream is(fs::path(corpus_dir) / (split + ".jsonl"));
    if (!is) throw DataError("load_manifest: no " + split + ".jsonl in " + corpus_dir);
    std::vector<ManifestEntry> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(entry_from_json(json::parse(line)));
    }
    return out;
}

}  // namespace pvad
