#include "gscaec/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fmt/format.h>
#include <fstream>

#include "gscaec/errors.hpp"

namespace gscaec {
namespace {

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put32(std::ofstream& os, std::uint32_t v) {
  const std::array<char, 4> b{char(v & 0xff), char(v >> 8 & 0xff), char(v >> 16 & 0xff),
                              char(v >> 24 & 0xff)};
  os.write(b.data(), 4);
}
void put16(std::ofstream& os, std::uint16_t v) {
  const std::array<char, 2> b{char(v & 0xff), char(v >> 8 & 0xff)};
  os.write(b.data(), 2);
}

}  // namespace

WavData read_wav_pcm16(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError(fmt::format("cannot open WAV file '{}'", path.string()));
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  auto fail = [&](const char* why) {
    return ConfigError(fmt::format("unsupported WAV file '{}': {}", path.string(), why));
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE container");

  WavData out;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw fail("truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw fail("short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      if (le16(f) != 1) throw fail("not PCM");
      if (le16(f + 2) != 1) throw fail("not mono");
      out.sample_rate = static_cast<int>(le32(f + 4));
      if (le16(f + 14) != 16) throw fail("not 16-bit");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      out.samples.resize(size / 2);
      for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i));
        out.samples[i] = v / 32768.0;
      }
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw fail("no data chunk");
}

void write_wav_pcm16(const std::filesystem::path& path, const std::vector<double>& samples,
                     int sample_rate) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError(fmt::format("cannot write WAV file '{}'", path.string()));
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  put32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put32(os, 16);
  put16(os, 1);
  put16(os, 1);
  put32(os, static_cast<std::uint32_t>(sample_rate));
  put32(os, static_cast<std::uint32_t>(sample_rate) * 2);
  put16(os, 2);
  put16(os, 16);
  os.write("data", 4);
  put32(os, data_bytes);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
    put16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
  }
  if (!os) throw ConfigError(fmt::format("write failed for '{}'", path.string()));
}

}  // namespace gscaec
