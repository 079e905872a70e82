#pragma once

#include <filesystem>

#include "cd3net/dsp.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

/// Mono 16-bit PCM at 16 kHz. Samples are int16 / 32768.
TimeSignal read_wav(const std::filesystem::path& path);

/// Saturating quantization to int16 with rounding to nearest.
void write_wav(const std::filesystem::path& path, const TimeSignal& signal);

}  // namespace CD3NET_ABI
}  // namespace cd3net
