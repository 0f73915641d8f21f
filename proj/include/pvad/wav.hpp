#pragma once

#include <string>
#include <vector>

#include "pvad/errors.hpp"

namespace pvad {

// Mono audio in [-1, 1].
struct Waveform {
    std::vector<float> samples;
    int sample_rate = 16000;

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

// RIFF/PCM16 mono little-endian. read_wav rejects anything else, naming the
// offending header field.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

}  // namespace pvad
