#include "pvad/embed.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "pvad/rng.hpp"

namespace pvad {

SpeakerEmbedding embed(const Waveform& enrollment, const EmbedConfig& cfg) {
    if (enrollment.duration_s() < 1.0) {
        throw EnrollmentError("embed: enrollment of " + std::to_string(enrollment.duration_s()) +
                              " s is shorter than 1 s");
    }
    const FeatureMatrix fm = log_mel(enrollment, cfg.features);
    const int F = fm.num_mels, T = fm.num_frames;

    // statistics pooling: per-bin mean and standard deviation
    std::vector<double> stats(static_cast<std::size_t>(2 * F), 0.0);
    for (int f = 0; f < F; ++f) {
        double mean = 0.0;
        for (int t = 0; t < T; ++t) mean += fm.at(t, f);
        mean /= T;
        double var = 0.0;
        for (int t = 0; t < T; ++t) {
            const double d = fm.at(t, f) - mean;
            var += d * d;
        }
        var /= T;
        stats[static_cast<std::size_t>(f)] = mean;
        stats[static_cast<std::size_t>(F + f)] = std::sqrt(var);
    }

    // fixed seeded projection to E dims
    Rng rng(cfg.proj_seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(2 * F));
    SpeakerEmbedding out;
    out.values.assign(static_cast<std::size_t>(cfg.dim), 0.0f);
    for (int j = 0; j < cfg.dim; ++j) {
        double acc = 0.0;
        for (int i = 0; i < 2 * F; ++i) acc += rng.normal() * scale * stats[static_cast<std::size_t>(i)];
        out.values[static_cast<std::size_t>(j)] = static_cast<float>(acc);
    }
    double norm = 0.0;
    for (float v : out.values) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw EnrollmentError("embed: degenerate (zero) embedding");
    for (auto& v : out.values) v = static_cast<float>(v / norm);
    return out;
}

SpeakerEmbedding average_embeddings(const std::vector<SpeakerEmbedding>& embs) {
    if (embs.empty()) throw EnrollmentError("average_embeddings: empty list");
    SpeakerEmbedding out;
    out.values.assign(embs.front().values.size(), 0.0f);
    for (const auto& e : embs) {
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += e.values[i];
    }
    double norm = 0.0;
    for (float v : out.values) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw EnrollmentError("average_embeddings: embeddings cancel out");
    for (auto& v : out.values) v = static_cast<float>(v / norm);
    return out;
}

double cosine(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += static_cast<double>(a.values[i]) * b.values[i];
        na += static_cast<double>(a.values[i]) * a.values[i];
        nb += static_cast<double>(b.values[i]) * b.values[i];
    }
    return dot / std::sqrt(na * nb);
}

void write_embedding(const std::string& path, const SpeakerEmbedding& e, const EmbedConfig& cfg) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("write_embedding: cannot open " + path);
    os << "PVADEMB " << e.values.size() << " " << cfg.proj_seed << "\n";
    os.write(reinterpret_cast<const char*>(e.values.data()),
             static_cast<std::streamsize>(e.values.size() * sizeof(float)));
}

SpeakerEmbedding read_embedding(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("read_embedding: cannot open " + path);
    std::string header;
    std::getline(is, header);
    std::istringstream hs(header);
    std::string magic;
    std::size_t dim = 0;
    std::uint64_t seed = 0;
    hs >> magic >> dim >> seed;
    if (magic != "PVADEMB") throw DataError("read_embedding: bad magic in " + path);
    SpeakerEmbedding e;
    e.values.resize(dim);
    is.read(reinterpret_cast<char*>(e.values.data()),
            static_cast<std::streamsize>(dim * sizeof(float)));
    if (!is) throw DataError("read_embedding: truncated file " + path);
    return e;
}

}  // namespace pvad
