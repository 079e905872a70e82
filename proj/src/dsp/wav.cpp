#include "cd3net/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cd3net/errors.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

void put32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff),
                     char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
  os.write(b, 4);
}

void put16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
  os.write(b, 2);
}

}  // namespace

TimeSignal read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12) throw IoError(name + ": truncated RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw UnsupportedFormat(name + ": not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) {
        throw IoError(name + ": truncated fmt chunk");
      }
      const unsigned char* f = bytes.data() + body;
      const std::uint16_t format = le16(f);
      const std::uint16_t channels = le16(f + 2);
      const std::uint32_t rate = le32(f + 4);
      const std::uint16_t bits = le16(f + 14);
      if (format != 1 || bits != 16) {
        throw UnsupportedFormat(name + ": only 16-bit PCM is supported");
      }
      if (channels != 1) {
        throw UnsupportedFormat(name + ": " + std::to_string(channels) +
                                " channels, only mono is supported");
      }
      if (rate != std::uint32_t(kSampleRate)) {
        throw UnsupportedFormat(name + ": sample rate " + std::to_string(rate) +
                                " Hz, expected 16000");
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw UnsupportedFormat(name + ": data before fmt chunk");
      if (body + size > bytes.size() || size % 2 != 0) {
        throw IoError(name + ": truncated data chunk");
      }
      TimeSignal sig;
      sig.samples.resize(size / 2);
      for (std::size_t i = 0; i < sig.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i));
        sig.samples[i] = static_cast<Real>(v) / Real{32768};
      }
      return sig;
    }
    pos = body + size + (size & 1);
  }
  throw IoError(name + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
}

void write_wav(const std::filesystem::path& path, const TimeSignal& signal) {
  signal.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(signal.size() * 2);
  out.write("RIFF", 4);
  put32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, kSampleRate);
  put32(out, kSampleRate * 2);
  put16(out, 2);
  put16(out, 16);
  out.write("data", 4);
  put32(out, data_bytes);
  for (Real v : signal.samples) {
    const double q = std::round(double(v) * 32768.0);
    put16(out, static_cast<std::uint16_t>(
                   static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0))));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
