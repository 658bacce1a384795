#pragma once

#include <Eigen/Dense>

#include <string>

namespace kinflow {

struct WavAudio {
    Eigen::ArrayXd samples;  // in [-1, 1], raw int16 / 32768
    int sample_rate = 0;
};

// PCM 16-bit mono only; anything else raises FormatError ("unsupported ...").
WavAudio read_wav_mono(const std::string& path);

// Writes PCM 16-bit mono; samples are clamped to [-1, 1] and rounded.
void write_wav_mono(const std::string& path, const Eigen::ArrayXd& samples, int sample_rate);

}  // namespace kinflow
