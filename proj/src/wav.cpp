#include "kinflow/wav.hpp"

#include "kinflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace kinflow {

namespace {

std::uint32_t le_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

}  // namespace

WavAudio read_wav_mono(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw FormatError("wav file '" + path + "': cannot open");
    }
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    const std::size_t n = data.size();

    if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
        throw FormatError("wav file '" + path + "': not a RIFF/WAVE file");
    }

    bool have_fmt = false;
    std::uint16_t audio_format = 0, channels = 0, bits = 0;
    std::uint32_t sample_rate = 0;
    const unsigned char* pcm = nullptr;
    std::size_t pcm_bytes = 0;

    // Chunk walk; fmt must precede data per the container rules, but we
    // just collect both and validate at the end.
    std::size_t pos = 12;
    while (pos + 8 <= n) {
        const char* id = data.data() + pos;
        const std::uint32_t chunk_size = le_u32(p + pos + 4);
        pos += 8;
        if (pos + chunk_size > n) {
            throw FormatError("wav file '" + path + "': truncated chunk");
        }
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (chunk_size < 16) {
                throw FormatError("wav file '" + path + "': short fmt chunk");
            }
            audio_format = le_u16(p + pos);
            channels = le_u16(p + pos + 2);
            sample_rate = le_u32(p + pos + 4);
            bits = le_u16(p + pos + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            pcm = p + pos;
            pcm_bytes = chunk_size;
        }
        pos += chunk_size + (chunk_size & 1);  // chunks are word-aligned
    }

    if (!have_fmt || pcm == nullptr) {
        throw FormatError("wav file '" + path + "': missing fmt or data chunk");
    }
    if (audio_format != 1) {
        throw FormatError("wav file '" + path + "': unsupported format (non-PCM)");
    }
    if (channels != 1) {
        throw FormatError("wav file '" + path + "': unsupported format (" +
                          std::to_string(channels) + " channels, need mono)");
    }
    if (bits != 16) {
        throw FormatError("wav file '" + path + "': unsupported format (" + std::to_string(bits) +
                          "-bit, need 16)");
    }

    const std::size_t count = pcm_bytes / 2;
    WavAudio out;
    out.sample_rate = static_cast<int>(sample_rate);
    out.samples.resize(static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) {
        const std::int16_t s = static_cast<std::int16_t>(pcm[2 * i] | (pcm[2 * i + 1] << 8));
        out.samples[static_cast<Eigen::Index>(i)] = static_cast<double>(s) / 32768.0;
    }
    return out;
}

void write_wav_mono(const std::string& path, const Eigen::ArrayXd& samples, int sample_rate) {
    require(sample_rate > 0, "write_wav_mono: sample rate must be positive");

    const std::uint32_t n = static_cast<std::uint32_t>(samples.size());
    const std::uint32_t data_bytes = n * 2;

    std::string out;
    out.reserve(44 + data_bytes);
    out.append("RIFF");
    put_u32(out, 36 + data_bytes);
    out.append("WAVE");
    out.append("fmt ");
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, static_cast<std::uint32_t>(sample_rate));
    put_u32(out, static_cast<std::uint32_t>(sample_rate) * 2);  // byte rate
    put_u16(out, 2);                                            // block align
    put_u16(out, 16);                                           // bits
    out.append("data");
    put_u32(out, data_bytes);
    for (Eigen::Index i = 0; i < samples.size(); ++i) {
        const double x = std::clamp(samples[i], -1.0, 1.0);
        const auto s = static_cast<std::int16_t>(std::lround(x * 32767.0));
        put_u16(out, static_cast<std::uint16_t>(s));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw FormatError("wav file '" + path + "': cannot open for writing");
    }
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) {
        throw FormatError("wav file '" + path + "': write failed");
    }
}

}  // namespace kinflow
