#pragma once

// RIFF/WAVE reader and writer, 16-bit PCM only.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "cwm/audio.hpp"
#include "cwm/error.hpp"

namespace cwm {

namespace wav_detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xfffe;

}  // namespace wav_detail

/// Decodes an in-memory RIFF/WAVE image. Multi-channel input is averaged to mono.
inline AudioClip decode_wav(const std::vector<unsigned char>& bytes) {
  using namespace wav_detail;
  require(bytes.size() >= 12, ErrorCode::kMalformedHeader, "file shorter than RIFF header");
  require(std::memcmp(bytes.data(), "RIFF", 4) == 0 && std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          ErrorCode::kMalformedHeader, "missing RIFF/WAVE magic");

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t len = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      require(len >= 16 && avail >= 16, ErrorCode::kMalformedHeader, "truncated fmt chunk");
      std::uint16_t tag = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (tag == kFormatExtensible) {
        require(len >= 40 && avail >= 40, ErrorCode::kMalformedHeader, "truncated extensible fmt");
        tag = read_u16(chunk + 8 + 24);
      }
      require(tag == kFormatPcm, ErrorCode::kUnsupportedEncoding,
              "only PCM is supported (format tag " + std::to_string(tag) + ")");
      require(bits == 16, ErrorCode::kUnsupportedEncoding,
              "only 16-bit samples are supported (got " + std::to_string(bits) + ")");
      require(channels >= 1, ErrorCode::kMalformedHeader, "zero channels");
      require(rate > 0, ErrorCode::kMalformedHeader, "zero sample rate");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // tolerate writers that leave the size field at 0 or oversize when streaming
      data_len = std::min<std::size_t>(len, avail);
      if (len == 0 || len == 0xffffffffu) data_len = avail;
    }
    pos = body + len + (len & 1);
    if (data && have_fmt) break;
  }
  require(have_fmt, ErrorCode::kMalformedHeader, "missing fmt chunk");
  require(data != nullptr, ErrorCode::kMalformedHeader, "missing data chunk");

  const std::size_t frame_bytes = 2u * channels;
  const std::size_t frames = data_len / frame_bytes;
  std::vector<double> out(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      auto raw = static_cast<std::int16_t>(read_u16(data + f * frame_bytes + 2 * c));
      acc += raw / 32768.0;
    }
    out[f] = acc / channels;
  }
  return AudioClip(std::move(out), static_cast<int>(rate));
}

inline AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kFileNotFound, path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

/// Quantizes to 16-bit PCM; input is clipped to [-1, 1 - 2^-15] first.
inline std::vector<unsigned char> encode_wav(const AudioClip& clip) {
  using namespace wav_detail;
  const auto n = clip.size();
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * n);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(2 * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate()));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate()) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  constexpr double kMax = 1.0 - 1.0 / 32768.0;
  for (double s : clip.samples()) {
    double c = std::clamp(s, -1.0, kMax);
    auto q = static_cast<std::int16_t>(std::lround(c * 32768.0));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

inline void save_wav(const AudioClip& clip, const std::filesystem::path& path) {
  auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::kWriteFailed, path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorCode::kWriteFailed, path.string());
}

}  // namespace cwm
