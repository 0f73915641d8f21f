#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pvad/features.hpp"
#include "pvad/wav.hpp"

namespace pvad {

struct EmbedConfig {
    int dim = 64;
    std::uint64_t proj_seed = 0x50454D42ull;  // fixed projection seed, stored in checkpoints
    FeatureConfig features;
};

struct SpeakerEmbedding {
    std::vector<float> values;  // unit L2 norm
};

// Per-mel-bin mean and standard deviation of log-mel frames (2F dims),
// projected through a fixed seeded random matrix to E dims, L2-normalized.
SpeakerEmbedding embed(const Waveform& enrollment, const EmbedConfig& cfg = {});

SpeakerEmbedding average_embeddings(const std::vector<SpeakerEmbedding>& embs);

double cosine(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

// One-line text header (dim, seed) followed by little-endian float32 values.
void write_embedding(const std::string& path, const SpeakerEmbedding& e, const EmbedConfig& cfg);
SpeakerEmbedding read_embedding(const std::string& path);

}  // namespace pvad
