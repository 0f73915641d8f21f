#include "pvad/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace pvad {

namespace {

std::uint32_t rd_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t rd_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::ofstream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void wr_u16(std::ofstream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

Waveform read_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("read_wav: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 44) throw DataError("read_wav: " + path + ": file shorter than WAV header");
    if (std::memcmp(bytes.data(), "RIFF", 4) != 0)
        throw DataError("read_wav: " + path + ": missing RIFF chunk id");
    if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw DataError("read_wav: " + path + ": RIFF form type is not WAVE");

    // Walk chunks; require an fmt chunk before data.
    std::size_t pos = 12;
    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    Waveform w;
    while (pos + 8 <= bytes.size()) {
        const char* cid = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t csize = rd_u32(bytes.data() + pos + 4);
        const std::size_t body = pos + 8;
        if (body + csize > bytes.size())
            throw DataError("read_wav: " + path + ": chunk size exceeds file length");
        if (std::memcmp(cid, "fmt ", 4) == 0) {
            if (csize < 16) throw DataError("read_wav: " + path + ": fmt chunk truncated");
            format = rd_u16(bytes.data() + body);
            channels = rd_u16(bytes.data() + body + 2);
            rate = rd_u32(bytes.data() + body + 4);
            bits = rd_u16(bytes.data() + body + 14);
            have_fmt = true;
        } else if (std::memcmp(cid, "data", 4) == 0) {
            if (!have_fmt) throw DataError("read_wav: " + path + ": data chunk before fmt");
            if (format != 1)
                throw DataError("read_wav: " + path + ": AudioFormat " + std::to_string(format) +
                                " is not PCM");
            if (channels != 1)
                throw DataError("read_wav: " + path + ": NumChannels " + std::to_string(channels) +
                                " is not mono");
            if (bits != 16)
                throw DataError("read_wav: " + path + ": BitsPerSample " + std::to_string(bits) +
                                " is not 16");
            const std::size_t n = csize / 2;
            w.samples.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const std::int16_t s = static_cast<std::int16_t>(
                    rd_u16(bytes.data() + body + 2 * i));
                w.samples[i] = static_cast<float>(s) / 32768.0f;
            }
            w.sample_rate = static_cast<int>(rate);
            return w;
        }
        pos = body + csize + (csize & 1);
    }
    throw DataError("read_wav: " + path + ": no data chunk found");
}

void write_wav(const std::string& path, const Waveform& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("write_wav: cannot open " + path);
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
    os.write("RIFF", 4);
    wr_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    wr_u32(os, 16);
    wr_u16(os, 1);  // PCM
    wr_u16(os, 1);  // mono
    wr_u32(os, static_cast<std::uint32_t>(w.sample_rate));
    wr_u32(os, static_cast<std::uint32_t>(w.sample_rate * 2));
    wr_u16(os, 2);
    wr_u16(os, 16);
    os.write("data", 4);
    wr_u32(os, data_bytes);
    for (float v : w.samples) {
        const float clamped = std::clamp(v, -1.0f, 1.0f);
        int q = static_cast<int>(std::lrintf(clamped * 32768.0f));
        q = std::clamp(q, -32768, 32767);
        wr_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
    if (!os) throw DataError("write_wav: write failed for " + path);
}

}  // namespace pvad
