#include "pvad/features.hpp"

#include <cmath>

namespace pvad {

int frame_count(std::size_t num_samples, int window, int hop) {
    if (num_samples < static_cast<std::size_t>(window)) {
        throw DataError("frame_count: input of " + std::to_string(num_samples) +
                        " samples shorter than one window (" + std::to_string(window) + ")");
    }
    return static_cast<int>((num_samples - static_cast<std::size_t>(window)) / hop) + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies(const FeatureConfig& cfg) {
    const double mel_lo = hz_to_mel(cfg.fmin_hz);
    const double mel_hi = hz_to_mel(cfg.fmax_hz);
    std::vector<double> centers(static_cast<std::size_t>(cfg.num_mels));
    for (int m = 0; m < cfg.num_mels; ++m) {
        const double mel = mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.num_mels + 1);
        centers[static_cast<std::size_t>(m)] = mel_to_hz(mel);
    }
    return centers;
}

void fft(std::vector<double>& re, std::vector<double>& im) {
    const std::size_t n = re.size();
    if (n == 0 || (n & (n - 1)) != 0 || im.size() != n) {
        throw ContractError("fft: size must be a power of two");
    }
    // bit reversal
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (std::size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::size_t a = i + k, b = i + k + len / 2;
                const double tr = re[b] * cr - im[b] * ci;
                const double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

namespace {

// Triangular filter weights over FFT bins, rows = mel filters.
std::vector<double> build_filterbank(const FeatureConfig& cfg) {
    const int bins = cfg.fft_size / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.fmin_hz);
    const double mel_hi = hz_to_mel(cfg.fmax_hz);
    std::vector<double> edges(static_cast<std::size_t>(cfg.num_mels) + 2);
    for (int m = 0; m < cfg.num_mels + 2; ++m) {
        edges[static_cast<std::size_t>(m)] =
            mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.num_mels + 1));
    }
    std::vector<double> fb(static_cast<std::size_t>(cfg.num_mels) * bins, 0.0);
    for (int m = 0; m < cfg.num_mels; ++m) {
        const double lo = edges[static_cast<std::size_t>(m)];
        const double mid = edges[static_cast<std::size_t>(m) + 1];
        const double hi = edges[static_cast<std::size_t>(m) + 2];
        for (int k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * cfg.sample_rate / cfg.fft_size;
            double wgt = 0.0;
            if (f > lo && f < mid) {
                wgt = (f - lo) / (mid - lo);
            } else if (f >= mid && f < hi) {
                wgt = (hi - f) / (hi - mid);
            }
            fb[static_cast<std::size_t>(m) * bins + k] = wgt;
        }
    }
    return fb;
}

}  // namespace

FeatureMatrix log_mel(const Waveform& w, const FeatureConfig& cfg) {
    if (w.sample_rate != cfg.sample_rate) {
        throw DataError("log_mel: sample rate " + std::to_string(w.sample_rate) +
                        " != configured " + std::to_string(cfg.sample_rate));
    }
    const int window = cfg.window_samples();
    const int hop = cfg.hop_samples();
    const int T = frame_count(w.samples.size(), window, hop);
    const int bins = cfg.fft_size / 2 + 1;

    std::vector<double> hann(static_cast<std::size_t>(window));
    for (int i = 0; i < window; ++i) {
        hann[static_cast<std::size_t>(i)] =
            0.5 - 0.5 * std::cos(2.0 * M_PI * i / (window - 1));
    }
    const std::vector<double> fb = build_filterbank(cfg);

    FeatureMatrix out;
    out.num_frames = T;
    out.num_mels = cfg.num_mels;
    out.hop_s = cfg.hop_s;
    out.window_s = cfg.window_s;
    out.values.resize(static_cast<std::size_t>(T) * cfg.num_mels);

    std::vector<double> re(static_cast<std::size_t>(cfg.fft_size));
    std::vector<double> im(static_cast<std::size_t>(cfg.fft_size));
    std::vector<double> power(static_cast<std::size_t>(bins));
    for (int t = 0; t < T; ++t) {
        const std::size_t start = static_cast<std::size_t>(t) * hop;
        for (int i = 0; i < cfg.fft_size; ++i) {
            re[static_cast<std::size_t>(i)] =
                (i < window) ? w.samples[start + i] * hann[static_cast<std::size_t>(i)] : 0.0;
            im[static_cast<std::size_t>(i)] = 0.0;
        }
        fft(re, im);
        for (int k = 0; k < bins; ++k) {
            power[static_cast<std::size_t>(k)] =
                re[static_cast<std::size_t>(k)] * re[static_cast<std::size_t>(k)] +
                im[static_cast<std::size_t>(k)] * im[static_cast<std::size_t>(k)];
        }
        for (int m = 0; m < cfg.num_mels; ++m) {
            double acc = 0.0;
            const double* row = fb.data() + static_cast<std::size_t>(m) * bins;
            for (int k = 0; k < bins; ++k) acc += row[k] * power[static_cast<std::size_t>(k)];
            out.values[static_cast<std::size_t>(t) * cfg.num_mels + m] =
                static_cast<float>(std::log(acc + cfg.log_floor));
        }
    }
    return out;
}

}  // namespace pvad
