#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "melex/audio.hpp"
#include "melex/common.hpp"

namespace melex {

// Minimal RIFF/WAVE I/O: 16-bit PCM and 32-bit float, mono or stereo
// (stereo is downmixed on read). Files are written as 32-bit float mono.

namespace wavdetail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 24) & 0xff);
}

inline void put_u16(std::vector<unsigned char>& v, std::uint16_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
}

}  // namespace wavdetail

inline AudioClip read_wav(const std::string& path) {
  using namespace wavdetail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(format_msg("cannot open audio file: ", path));
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError(format_msg("not a RIFF/WAVE file: ", path));
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_off = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t len = read_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(tag, "fmt ", 4) == 0 && body + 16 <= bytes.size()) {
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == 0xFFFE && len >= 40 && body + 26 <= bytes.size()) {
        format = read_u16(bytes.data() + body + 24);  // extensible subformat
      }
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data_off = body;
      data_len = std::min<std::size_t>(len, bytes.size() - body);
    }
    pos = body + len + (len & 1);
  }

  if (rate == 0 || data_off == 0) throw IoError(format_msg("missing fmt/data chunk: ", path));
  if (channels < 1 || channels > 2) {
    throw IoError(format_msg(path, ": unsupported channel count ", channels));
  }

  std::vector<std::vector<float>> chans(channels);
  if (format == 1 && bits == 16) {
    const std::size_t frames = data_len / (2 * channels);
    for (auto& c : chans) c.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
      for (std::uint16_t c = 0; c < channels; ++c) {
        const unsigned char* p = bytes.data() + data_off + (i * channels + c) * 2;
        const std::int16_t s = static_cast<std::int16_t>(p[0] | (p[1] << 8));
        chans[c][i] = static_cast<float>(s) / 32768.0f;
      }
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t frames = data_len / (4 * channels);
    for (auto& c : chans) c.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
      for (std::uint16_t c = 0; c < channels; ++c) {
        float f;
        std::memcpy(&f, bytes.data() + data_off + (i * channels + c) * 4, 4);
        chans[c][i] = f;
      }
    }
  } else {
    throw IoError(format_msg(path, ": unsupported WAV encoding (format ", format,
                             ", ", bits, " bits); expected 16-bit PCM or 32-bit float"));
  }

  if (chans[0].empty()) throw IoError(format_msg(path, ": empty data chunk"));
  AudioClip clip = channels == 1
                       ? AudioClip{std::move(chans[0]), static_cast<int>(rate)}
                       : downmix_to_mono(chans, static_cast<int>(rate));
  clip.validate(path.c_str());
  return clip;
}

inline void write_wav(const std::string& path, const AudioClip& clip) {
  using namespace wavdetail;
  clip.validate("write_wav");
  std::vector<unsigned char> out;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 4);
  out.reserve(58 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 4 + 26 + 8 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  put_u32(out, 18);
  put_u16(out, 3);  // IEEE float
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 4);
  put_u16(out, 4);
  put_u16(out, 32);
  put_u16(out, 0);  // no extension
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (float v : clip.samples) {
    unsigned char b[4];
    std::memcpy(b, &v, 4);
    out.insert(out.end(), b, b + 4);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(format_msg("cannot write audio file: ", path));
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError(format_msg("short write: ", path));
}

}  // namespace melex
