#pragma once

#include <cstdint>
#include <string>

#include "pvad/conditioning.hpp"

namespace pvad {

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 5.0;  // global L2 norm
    int batch = 4;           // sequences per step
    int max_epochs = 30;
    int patience = 5;          // epochs without significant val-loss improvement
    double improve_eps = 1e-4;  // "significant"
    std::uint64_t seed = 1;
    CondKind mode = CondKind::hywa;
    std::string init_from;  // optional trunk checkpoint to warm-start from
    int hyper_hidden = 576;
    bool class_weights = false;  // optional inverse-frequency frame weights
    // Gaussian noise added to enrollment embeddings during training (then
    // renormalized). Regularizes the embedding -> conditioning map when the
    // corpus has few speakers.
    double embed_jitter = 0.0;
    // L2 penalty on the hypernetwork's weight delta (mean square * lambda);
    // ignored for the other conditioning modes.
    double patch_penalty = 0.0;

    void validate() const {
        if (embed_jitter < 0 || patch_penalty < 0) {
            throw ConfigError("TrainConfig: embed_jitter and patch_penalty must be >= 0");
        }
        if (lr <= 0 || batch <= 0 || max_epochs <= 0 || patience < 0 || grad_clip <= 0) {
            throw ConfigError("TrainConfig: all hyperparameters must be positive");
        }
    }
};

}  // namespace pvad
