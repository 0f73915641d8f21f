#include "pvad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "pvad/checkpoint.hpp"
#include "pvad/errors.hpp"

namespace pvad {

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// AP with explicit (descending score, ascending key) ordering.
double ap_impl(const std::vector<float>& scores, const std::vector<std::uint64_t>& keys,
               const std::vector<std::uint8_t>& positives) {
    if (scores.size() != positives.size() || (!keys.empty() && keys.size() != scores.size())) {
        throw DimensionError("average_precision: scores/positives size mismatch");
    }
    const std::size_t n = scores.size();
    long total_pos = 0;
    for (std::uint8_t p : positives) total_pos += p ? 1 : 0;
    if (total_pos == 0) {
        throw MetricError("average_precision: no positive frames");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        if (!keys.empty() && keys[a] != keys[b]) return keys[a] < keys[b];
        return a < b;
    });
    double sum = 0.0;
    long tp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (positives[order[k]]) {
            ++tp;
            sum += static_cast<double>(tp) / static_cast<double>(k + 1);
        }
    }
    return sum / static_cast<double>(total_pos);
}

struct Pool {
    std::vector<float> scores;
    std::vector<std::uint64_t> keys;
    std::vector<std::uint8_t> positives;
};

}  // namespace

double average_precision(const std::vector<float>& scores,
                         const std::vector<std::uint8_t>& positives) {
    return ap_impl(scores, {}, positives);
}

double average_precision_keyed(const std::vector<float>& scores,
                               const std::vector<std::uint64_t>& keys,
                               const std::vector<std::uint8_t>& positives) {
    return ap_impl(scores, keys, positives);
}

EvalResult evaluate(const ScoreFn& scorer, const std::vector<ManifestEntry>& entries,
                    const std::string& corpus_dir, const std::string& scenario,
                    const FeatureConfig& fc, int num_classes, bool per_snr) {
    // One pool per (snr group, class); clean uses a single group.
    std::map<int, std::vector<Pool>> pools;
    long n_frames = 0;
    for (const ManifestEntry& e : entries) {
        if (e.scenario != scenario) continue;
        const int group = per_snr && scenario != "clean" ? e.snr_db : 0;
        auto it = pools.find(group);
        if (it == pools.end()) {
            it = pools.emplace(group, std::vector<Pool>(static_cast<std::size_t>(num_classes)))
                     .first;
        }
        const Waveform w = read_wav(corpus_dir + "/" + e.wav);
        const ad::Tensor feats = feature_tensor(log_mel(w, fc));
        const ad::Tensor logits = scorer(feats, e.target);
        const ad::Tensor probs = softmax(logits);
        const int T = probs.rows();
        if (static_cast<std::size_t>(T) != e.labels.size()) {
            throw DataError("evaluate: " + e.id + " has " + std::to_string(e.labels.size()) +
                            " labels for " + std::to_string(T) + " frames");
        }
        const std::uint64_t base_key = fnv1a64(e.id) << 20;
        for (int t = 0; t < T; ++t) {
            const int y = e.labels[static_cast<std::size_t>(t)];
            if (y < 0 || y >= num_classes) {
                throw LabelError("evaluate: label " + std::to_string(y) + " in " + e.id);
            }
            for (int c = 0; c < num_classes; ++c) {
                Pool& p = it->second[static_cast<std::size_t>(c)];
                p.scores.push_back(probs.at(t, c));
                p.keys.push_back(base_key + static_cast<std::uint64_t>(t));
                p.positives.push_back(y == c ? 1 : 0);
            }
        }
        n_frames += T;
    }
    if (pools.empty()) {
        throw ConfigError("evaluate: no manifest entries for scenario '" + scenario + "'");
    }
    EvalResult r;
    r.scenario = scenario;
    r.n_frames = n_frames;
    r.ap.assign(static_cast<std::size_t>(num_classes), 0.0);
    for (int c = 0; c < num_classes; ++c) {
        double sum = 0.0;
        for (const auto& [snr, group] : pools) {
            sum += ap_impl(group[static_cast<std::size_t>(c)].scores,
                           group[static_cast<std::size_t>(c)].keys,
                           group[static_cast<std::size_t>(c)].positives);
        }
        r.ap[static_cast<std::size_t>(c)] = sum / static_cast<double>(pools.size());
    }
    r.map_score = std::accumulate(r.ap.begin(), r.ap.end(), 0.0) / r.ap.size();
    return r;
}

std::vector<CompareRow> compare_modes(
    const std::map<std::string, std::vector<std::string>>& checkpoints_by_mode,
    const std::string& corpus_dir, const std::vector<std::string>& scenarios, bool per_snr) {
    const CorpusHeader header = load_header(corpus_dir);
    const std::vector<ManifestEntry> entries = load_manifest(corpus_dir, "test");

    // Enrollment embeddings are computed per checkpoint (configs may differ),
    // but configs must agree across checkpoints for the rows to be comparable.
    std::vector<std::pair<std::string, Checkpoint>> loaded;
    for (const auto& [mode, paths] : checkpoints_by_mode) {
        for (const std::string& path : paths) {
            Checkpoint ck = load_checkpoint(path);
            if (cond_kind_name(ck.model.mode) != mode) {
                throw ConfigError("compare_modes: checkpoint " + path + " trained with mode '" +
                                  cond_kind_name(ck.model.mode) + "', listed under '" + mode + "'");
            }
            if (!loaded.empty()) {
                const Checkpoint& ref = loaded.front().second;
                if (ck.feat_cfg.num_mels != ref.feat_cfg.num_mels ||
                    ck.embed_cfg.dim != ref.embed_cfg.dim ||
                    ck.embed_cfg.proj_seed != ref.embed_cfg.proj_seed) {
                    throw ConfigError(
                        "compare_modes: checkpoint " + path +
                        " uses a different feature/embedding configuration; results would not "
                        "be comparable");
                }
            }
            loaded.emplace_back(mode, std::move(ck));
        }
    }
    if (loaded.empty()) throw ConfigError("compare_modes: no checkpoints given");

    std::map<std::string, std::string> enroll_wavs;
    for (const SpeakerRecord& s : header.test) enroll_wavs[s.speaker.id] = s.enroll_wav;
    for (const SpeakerRecord& s : header.val) enroll_wavs[s.speaker.id] = s.enroll_wav;

    std::vector<CompareRow> rows;
    for (const auto& [mode, paths] : checkpoints_by_mode) {
        std::map<std::string, std::vector<EvalResult>> per_scenario;
        for (const auto& [m, ck] : loaded) {
            if (m != mode) continue;
            std::map<std::string, std::vector<float>> embeddings;
            std::map<std::string, PersonalizedVad> cache;
            ScoreFn scorer = [&](const ad::Tensor& feats, const std::string& target) {
                auto it = cache.find(target);
                if (it == cache.end()) {
                    auto ew = enroll_wavs.find(target);
                    if (ew == enroll_wavs.end()) {
                        throw ConfigError("compare_modes: no enrollment audio for speaker '" +
                                          target + "'");
                    }
                    SpeakerEmbedding s =
                        embed(read_wav(corpus_dir + "/" + ew->second), ck.embed_cfg);
                    it = cache.emplace(target,
                                       personalize(ck.model, normalize_embedding(ck, s.values)))
                             .first;
                }
                return it->second.forward(normalize_features(ck, feats));
            };
            for (const std::string& sc : scenarios) {
                per_scenario[sc].push_back(
                    evaluate(scorer, entries, corpus_dir, sc, ck.feat_cfg,
                             ck.model.vad.num_classes, per_snr));
            }
        }
        for (const std::string& sc : scenarios) {
            const std::vector<EvalResult>& res = per_scenario[sc];
            CompareRow row;
            row.mode = mode;
            row.scenario = sc;
            row.seeds = static_cast<int>(res.size());
            const std::size_t C = res.front().ap.size();
            row.ap_mean.assign(C, 0.0);
            row.ap_std.assign(C, 0.0);
            for (const EvalResult& r : res) {
                for (std::size_t c = 0; c < C; ++c) row.ap_mean[c] += r.ap[c];
                row.map_mean += r.map_score;
            }
            for (std::size_t c = 0; c < C; ++c) row.ap_mean[c] /= res.size();
            row.map_mean /= res.size();
            if (res.size() > 1) {
                for (const EvalResult& r : res) {
                    for (std::size_t c = 0; c < C; ++c) {
                        const double d = r.ap[c] - row.ap_mean[c];
                        row.ap_std[c] += d * d;
                    }
                    const double d = r.map_score - row.map_mean;
                    row.map_std += d * d;
                }
                for (std::size_t c = 0; c < C; ++c)
                    row.ap_std[c] = std::sqrt(row.ap_std[c] / (res.size() - 1));
                row.map_std = std::sqrt(row.map_std / (res.size() - 1));
            }
            rows.push_back(std::move(row));
        }
    }
    // Rank by mAP within each scenario (best first), scenarios in given order.
    std::stable_sort(rows.begin(), rows.end(), [&](const CompareRow& a, const CompareRow& b) {
        const auto pos = [&](const std::string& s) {
            return std::find(scenarios.begin(), scenarios.end(), s) - scenarios.begin();
        };
        if (pos(a.scenario) != pos(b.scenario)) return pos(a.scenario) < pos(b.scenario);
        return a.map_mean > b.map_mean;
    });
    return rows;
}

std::string format_table(const std::vector<CompareRow>& rows) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-8s %-8s %5s  %-14s %-14s %-14s %-14s\n", "mode",
                  "scenario", "seeds", "AP(ns)", "AP(tss)", "AP(ntss)", "mAP");
    os << buf;
    os << std::string(84, '-') << '\n';
    for (const CompareRow& r : rows) {
        auto cell = [&](double mean, double sd) {
            char c[32];
            if (r.seeds > 1) {
                std::snprintf(c, sizeof(c), "%.4f±%.4f", mean, sd);
            } else {
                std::snprintf(c, sizeof(c), "%.4f", mean);
            }
            return std::string(c);
        };
        std::snprintf(buf, sizeof(buf), "%-8s %-8s %5d  %-14s %-14s %-14s %-14s\n",
                      r.mode.c_str(), r.scenario.c_str(), r.seeds,
                      cell(r.ap_mean[0], r.ap_std[0]).c_str(),
                      cell(r.ap_mean[1], r.ap_std[1]).c_str(),
                      cell(r.ap_mean[2], r.ap_std[2]).c_str(),
                      cell(r.map_mean, r.map_std).c_str());
        os << buf;
    }
    return os.str();
}

}  // namespace pvad
