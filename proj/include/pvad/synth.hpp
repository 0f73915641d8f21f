#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pvad/features.hpp"
#include "pvad/wav.hpp"

namespace pvad {

// Frame labels.
inline constexpr int kNs = 0;    // non-speech
inline constexpr int kTss = 1;   // target speaker speech
inline constexpr int kNtss = 2;  // non-target speaker speech

struct SyntheticSpeaker {
    std::string id;
    double f0_hz = 120.0;
    std::array<double, 3> formants_hz = {500.0, 1500.0, 2800.0};
    std::uint64_t seed = 0;
};

// Deterministic speaker family: f0 and formants drawn from fixed ranges.
SyntheticSpeaker make_speaker(const std::string& id, std::uint64_t seed);

struct Utterance {
    Waveform wave;
    // Voiced regions in samples, half-open, non-overlapping, sorted.
    std::vector<std::pair<int, int>> voiced;
    // Voiced mask on the 10 ms hop grid (round(duration/hop) entries).
    std::vector<std::uint8_t> mask;
};

// Harmonic source at the speaker's f0 shaped by formant resonances,
// interleaved with silent gaps. Deterministic in (speaker, seed).
Utterance synth_utterance(const SyntheticSpeaker& spk, double duration_s, std::uint64_t seed,
                          const FeatureConfig& fc = {});

struct Span {
    int start = 0;  // absolute samples in the mixture
    int end = 0;
    std::string speaker;
    std::vector<std::pair<int, int>> voiced;  // absolute sample intervals
};

struct MixtureExample {
    Waveform wave;
    std::vector<int> labels;  // one per feature frame
    std::string target;
    std::vector<Span> spans;
};

// Ternary labels from spans: a frame is judged at its window center.
std::vector<int> derive_labels(const std::vector<Span>& spans, const std::string& target,
                               std::size_t num_samples, const FeatureConfig& fc);

// Concatenate 1..3 utterances (one marked target) with random 0-0.3 s gaps.
MixtureExample make_mixture(const std::vector<std::pair<SyntheticSpeaker, Utterance>>& utts,
                            int target_index, std::uint64_t seed, const FeatureConfig& fc = {});

struct NoiseBank {
    enum class Split { seen, unseen };
    Split split = Split::seen;
    std::vector<Waveform> clips;
    std::uint64_t seed = 0;
};

// seen: colored/amplitude-modulated noise textures; unseen: tonal and
// impulsive textures. The two families are disjoint by construction.
NoiseBank make_noise_bank(NoiseBank::Split split, int num_clips, double clip_s,
                          std::uint64_t seed);

inline const std::vector<int> kSnrGridDb = {-5, 0, 5, 10, 15, 20};

// Tile/crop the clip, scale it so 10*log10(P_speech/P_noise) == snr_db, add.
// Labels and spans are unchanged.
MixtureExample add_noise(const MixtureExample& x, const Waveform& clip, double snr_db);

// 10*log10(P_s/P_n) for two aligned signals.
double measure_snr_db(const std::vector<float>& speech, const std::vector<float>& noise);

// Optional exponential-decay synthetic reverb (sparse tap kernel).
Waveform apply_reverb(const Waveform& w, std::uint64_t seed);

struct CorpusConfig {
    int train_speakers = 8;
    int val_speakers = 2;
    int test_speakers = 2;
    int train_mixtures = 30;
    int val_mixtures = 8;
    int test_mixtures = 8;
    int min_utts = 1;
    int max_utts = 3;
    double utt_min_s = 1.5;
    double utt_max_s = 3.0;
    double enroll_s = 3.0;
    int noise_clips_per_bank = 6;
    std::vector<int> snr_grid = kSnrGridDb;
    bool reverb = false;
    std::uint64_t seed = 1;
    // Optional explicit speaker id lists; must be pairwise disjoint.
    std::vector<std::string> train_ids, val_ids, test_ids;
};

struct ManifestEntry {
    std::string id;
    std::string wav;  // path relative to the corpus dir
    std::string target;
    std::string scenario;  // clean / seen / unseen
    int snr_db = 0;        // meaningful for noisy scenarios
    std::string base;      // clean example this one was derived from
    std::vector<Span> spans;
    std::vector<int> labels;
    std::uint64_t seed = 0;
};

struct SpeakerRecord {
    SyntheticSpeaker speaker;
    std::string enroll_wav;
};

struct CorpusHeader {
    std::uint64_t master_seed = 0;
    CorpusConfig config;
    std::vector<SpeakerRecord> train, val, test;
};

// Writes wav/ + {train,val,test}.jsonl + header.json under out_dir.
void build_corpus(const CorpusConfig& cfg, const std::string& out_dir);

CorpusHeader load_header(const std::string& corpus_dir);
std::vector<ManifestEntry> load_manifest(const std::string& corpus_dir, const std::string& split);

}  // namespace pvad
