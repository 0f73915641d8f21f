#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pvad/synth.hpp"
#include "pvad/tensor.hpp"

namespace pvad {

struct EvalResult {
    std::vector<double> ap;  // per class
    double map_score = 0.0;
    std::string scenario;
    long n_frames = 0;
};

// Non-interpolated AP: precision at each positive rank, averaged. Ties are
// broken by original index.
double average_precision(const std::vector<float>& scores,
                         const std::vector<std::uint8_t>& positives);

// Variant with explicit tie-break keys (used to make pooled evaluation
// independent of manifest order).
double average_precision_keyed(const std::vector<float>& scores,
                               const std::vector<std::uint64_t>& keys,
                               const std::vector<std::uint8_t>& positives);

// scorer: (T x F features, target speaker id) -> T x C logits
using ScoreFn = std::function<ad::Tensor(const ad::Tensor&, const std::string&)>;

// One-vs-rest softmax score per class per frame across all utterances of the
// scenario. Noisy scenarios pool frames over the full SNR grid by default;
// per_snr averages per-SNR APs instead.
EvalResult evaluate(const ScoreFn& scorer, const std::vector<ManifestEntry>& entries,
                    const std::string& corpus_dir, const std::string& scenario,
                    const FeatureConfig& fc, int num_classes = 3, bool per_snr = false);

struct CompareRow {
    std::string mode;
    std::string scenario;
    std::vector<double> ap_mean, ap_std;
    double map_mean = 0.0, map_std = 0.0;
    int seeds = 0;
};

// rows: modes x scenarios, columns ns/tss/ntss AP and mAP, with per-seed
// standard deviations when several checkpoints are supplied per mode.
std::vector<CompareRow> compare_modes(
    const std::map<std::string, std::vector<std::string>>& checkpoints_by_mode,
    const std::string& corpus_dir, const std::vector<std::string>& scenarios,
    bool per_snr = false);

std::string format_table(const std::vector<CompareRow>& rows);

}  // namespace pvad
