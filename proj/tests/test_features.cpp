#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pvad/features.hpp"
#include "pvad/rng.hpp"
#include "pvad/wav.hpp"

using namespace pvad;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("wav round trips and scaling") {
    const std::string path = tmp_path("pvad_test_silence.wav");
    Waveform w;
    w.sample_rate = 16000;
    w.samples.assign(16000, 0.0f);
    write_wav(path, w);
    const Waveform r = read_wav(path);
    CHECK(r.sample_rate == 16000);
    CHECK(r.samples.size() == 16000);
    for (float v : r.samples) CHECK(v == 0.0f);

    Waveform one;
    one.sample_rate = 16000;
    one.samples = {32767.0f / 32768.0f};
    write_wav(path, one);
    CHECK(read_wav(path).samples[0] == doctest::Approx(0.99997).epsilon(1e-4));

    Rng rng(9);
    Waveform noise;
    noise.sample_rate = 16000;
    for (int i = 0; i < 4000; ++i) noise.samples.push_back(static_cast<float>(rng.range(-1, 1)));
    write_wav(path, noise);
    const Waveform back = read_wav(path);
    for (std::size_t i = 0; i < noise.samples.size(); ++i) {
        CHECK(std::fabs(back.samples[i] - noise.samples[i]) <= 1.0f / 32768.0f);
    }
    std::filesystem::remove(path);
}

TEST_CASE("wav reader rejects malformed input naming the offending field") {
    const std::string path = tmp_path("pvad_test_bad.wav");

    CHECK_THROWS_AS(read_wav(tmp_path("pvad_no_such_file.wav")), DataError);

    {  // wrong RIFF magic
        std::ofstream out(path, std::ios::binary);
        out << "JUNKJUNKJUNKJUNK";
    }
    CHECK_THROWS_AS(read_wav(path), DataError);

    {  // stereo file: build a valid header with num_channels = 2
        Waveform w;
        w.sample_rate = 16000;
        w.samples.assign(32, 0.0f);
        write_wav(path, w);
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(22);  // num_channels field of the fmt chunk
        const std::uint16_t two = 2;
        f.write(reinterpret_cast<const char*>(&two), 2);
    }
    try {
        read_wav(path);
        CHECK(false);
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("Channels") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("log_mel of silence hits the log floor with the formula frame count") {
    Waveform w;
    w.sample_rate = 16000;
    w.samples.assign(16000, 0.0f);
    const FeatureMatrix f = log_mel(w);
    CHECK(f.num_frames == 98);  // floor((16000-400)/160)+1
    CHECK(f.num_mels == 40);
    const float floor_val = std::log(1e-6f);
    for (float v : f.values) CHECK(v == doctest::Approx(floor_val).epsilon(1e-6));
}

TEST_CASE("frame count arithmetic") {
    CHECK(frame_count(16000, 400, 160) == 98);
    CHECK(frame_count(400, 400, 160) == 1);
    CHECK(frame_count(560, 400, 160) == 2);
    CHECK_THROWS_AS(frame_count(399, 400, 160), DataError);
}

TEST_CASE("1 kHz tone peaks in the mel bin nearest 1 kHz in every frame") {
    Waveform w;
    w.sample_rate = 16000;
    for (int i = 0; i < 16000; ++i) {
        w.samples.push_back(0.5f * std::sin(2.0 * M_PI * 1000.0 * i / 16000.0));
    }
    const FeatureConfig cfg;
    const FeatureMatrix f = log_mel(w, cfg);

    const std::vector<double> centers = mel_center_frequencies(cfg);
    int expect = 0;
    for (int m = 1; m < static_cast<int>(centers.size()); ++m) {
        if (std::fabs(centers[static_cast<std::size_t>(m)] - 1000.0) <
            std::fabs(centers[static_cast<std::size_t>(expect)] - 1000.0)) {
            expect = m;
        }
    }
    for (int t = 0; t < f.num_frames; ++t) {
        int arg = 0;
        for (int m = 1; m < f.num_mels; ++m) {
            if (f.at(t, m) > f.at(t, arg)) arg = m;
        }
        CHECK(arg == expect);
    }
}

TEST_CASE("log_mel is scale-monotone and always finite") {
    Rng rng(17);
    Waveform w;
    w.sample_rate = 16000;
    for (int i = 0; i < 8000; ++i) w.samples.push_back(static_cast<float>(rng.range(-0.4, 0.4)));
    const FeatureMatrix a = log_mel(w);
    Waveform w2 = w;
    for (float& v : w2.samples) v *= 2.0f;
    const FeatureMatrix b = log_mel(w2);
    REQUIRE(a.values.size() == b.values.size());
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        CHECK(b.values[i] >= a.values[i]);
        CHECK(std::isfinite(a.values[i]));
    }
}

TEST_CASE("mel scale round trip") {
    for (double hz : {0.0, 100.0, 1000.0, 4000.0, 7999.0}) {
        CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-9));
    }
    CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-12));
}
