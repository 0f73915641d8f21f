#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "pvad/checkpoint.hpp"
#include "pvad/train_config.hpp"

namespace pvad {

// One training/validation sequence with everything precomputed.
struct TrainExample {
    std::string id;
    std::string target;
    ad::Tensor feats;            // T x F raw log-mel
    std::vector<int> labels;     // per frame; ntss collapsed to tss for mode none
    std::vector<float> embedding;  // target speaker enrollment embedding
};

struct LoadedData {
    std::vector<TrainExample> train, val;
    int feat_dim = 0;
};

// Reads the train/val manifests, extracts features and labels, and computes
// one enrollment embedding per speaker (shared across that speaker's examples).
LoadedData load_training_data(const std::string& corpus_dir, CondKind mode,
                              const FeatureConfig& fc, const EmbedConfig& ec);

// Adam over one flat parameter vector; moment state kept in double.
class Adam {
public:
    Adam(std::size_t n, const TrainConfig& cfg);
    void step(std::vector<float>& params, const std::vector<float>& grad);
    long steps() const { return t_; }

private:
    std::vector<double> m_, v_;
    long t_ = 0;
    double lr_, beta1_, beta2_, eps_;
};

// Tape-tracked leaves for every trunk and conditioning parameter.
struct ModelLeaves {
    std::map<std::string, ad::Tensor> trunk, cond;
};

ModelLeaves watch_model(const Model& m, ad::Tape& tape);

// Full differentiable loss for one sequence under the model's conditioning
// mode. For hywa the trunk leaves are patched on-tape so gradients reach both
// the trunk and the hypernetwork.
ad::Tensor model_loss(const Model& m, const ModelLeaves& leaves, const TrainExample& ex,
                      ad::Tape& tape, const std::vector<float>& class_weights = {},
                      double patch_penalty = 0.0);

struct StepInfo {
    double loss = 0.0;             // batch mean
    double trunk_grad_norm = 0.0;  // pre-clip L2 norms of the averaged gradient
    double cond_grad_norm = 0.0;
};

// One optimizer step on a batch of sequences: per-sequence backward, averaged
// gradients, global L2 clipping across both parameter groups, Adam update.
StepInfo train_step(Model& m, const std::vector<const TrainExample*>& batch, Adam& trunk_opt,
                    Adam& cond_opt, const TrainConfig& cfg,
                    const std::vector<float>& class_weights = {});

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_map = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;  // 0-based index into epochs
    double best_val_loss = 0.0;
    double wall_s = 0.0;
};

// Full training loop with seeded shuffling, early stopping on validation loss
// and best-epoch weight retention. Returns the best checkpoint.
Checkpoint fit(const TrainConfig& cfg, const std::string& corpus_dir,
               TrainReport* report = nullptr, std::ostream* log = nullptr);

}  // namespace pvad
