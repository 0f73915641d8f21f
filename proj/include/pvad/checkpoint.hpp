#pragma once

#include <string>

#include "pvad/conditioning.hpp"
#include "pvad/embed.hpp"
#include "pvad/train_config.hpp"

namespace pvad {

// Serialized (w, theta, config) container. Round trips are bit-exact.
struct Checkpoint {
    Model model;
    EmbedConfig embed_cfg;
    FeatureConfig feat_cfg;
    TrainConfig train_cfg;
    // Per-mel-bin standardization computed on the training split. Features
    // fed to the model must be normalized with these; empty means identity.
    std::vector<float> feat_mean, feat_std;
    // Training-split embedding centering: raw enrollment embeddings share a
    // large common component (the average speech spectrum); conditioning uses
    // (s - embed_mean) / embed_scale instead. Empty mean = identity.
    std::vector<float> embed_mean;
    double embed_scale = 1.0;
    std::string digest;  // FNV-1a of the parameter blob, filled on save/load
};

// (x - mean) / std per column; identity when the checkpoint carries no stats.
ad::Tensor normalize_features(const Checkpoint& ck, ad::Tensor feats);
void normalize_frame(const Checkpoint& ck, std::vector<float>& frame);

// Centered/scaled conditioning embedding; identity without stored stats.
std::vector<float> normalize_embedding(const Checkpoint& ck, std::vector<float> emb);

std::string fnv1a_hex(const void* data, std::size_t n);

void save_checkpoint(const std::string& path, Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

void save_patch(const std::string& path, const WeightPatch& patch,
                const std::string& checkpoint_digest, const std::string& embedding_digest);
WeightPatch load_patch(const std::string& path, std::string* checkpoint_digest = nullptr,
                       std::string* embedding_digest = nullptr);

}  // namespace pvad
