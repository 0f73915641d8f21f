#pragma once

#include <vector>

#include "pvad/wav.hpp"

namespace pvad {

struct FeatureConfig {
    int sample_rate = 16000;
    double window_s = 0.025;
    double hop_s = 0.010;
    int fft_size = 512;
    int num_mels = 40;
    double fmin_hz = 0.0;
    double fmax_hz = 8000.0;
    double log_floor = 1e-6;

    int window_samples() const { return static_cast<int>(window_s * sample_rate + 0.5); }
    int hop_samples() const { return static_cast<int>(hop_s * sample_rate + 0.5); }
};

// T x F log-mel matrix; frame t covers samples [t*hop, t*hop + window).
struct FeatureMatrix {
    std::vector<float> values;  // row-major T x F
    int num_frames = 0;
    int num_mels = 0;
    double hop_s = 0.010;
    double window_s = 0.025;

    float at(int t, int f) const {
        return values[static_cast<std::size_t>(t) * num_mels + f];
    }
};

// floor((len - window)/hop) + 1; requires len >= window.
int frame_count(std::size_t num_samples, int window, int hop);

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filterbank center frequencies in Hz for the given config.
std::vector<double> mel_center_frequencies(const FeatureConfig& cfg);

// Hann window -> |FFT|^2 -> mel filterbank -> log(x + floor).
FeatureMatrix log_mel(const Waveform& w, const FeatureConfig& cfg = {});

// In-place iterative radix-2 complex FFT; n must be a power of two.
void fft(std::vector<double>& re, std::vector<double>& im);

}  // namespace pvad
