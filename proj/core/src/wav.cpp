#include "roomsonde/wav.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "roomsonde/errors.hpp"

namespace roomsonde {

namespace {

uint32_t rd_u32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint16_t rd_u16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

void wr_u32(std::string& s, uint32_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
  s.push_back(char((v >> 16) & 0xff));
  s.push_back(char((v >> 24) & 0xff));
}
void wr_u16(std::string& s, uint16_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
}

}  // namespace

Signal load_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::IoFailure, "cannot open " + path);
  std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const uint8_t* p = reinterpret_cast<const uint8_t*>(raw.data());
  const size_t n = raw.size();

  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw Error(Errc::CorruptHeader, "not a RIFF/WAVE file: " + path);

  uint16_t audio_format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  size_t data_len = 0;
  bool have_fmt = false;

  size_t off = 12;
  while (off + 8 <= n) {
    const uint8_t* id = p + off;
    const uint32_t sz = rd_u32(p + off + 4);
    off += 8;
    if (off + sz > n) throw Error(Errc::CorruptHeader, "truncated chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (sz < 16) throw Error(Errc::CorruptHeader, "short fmt chunk in " + path);
      audio_format = rd_u16(p + off);
      channels = rd_u16(p + off + 2);
      rate = rd_u32(p + off + 4);
      bits = rd_u16(p + off + 14);
      if (audio_format == 0xFFFE && sz >= 40) {
        // WAVE_FORMAT_EXTENSIBLE: the subformat GUID starts with the real tag.
        audio_format = rd_u16(p + off + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = p + off;
      data_len = sz;
    }
    off += sz + (sz & 1);
  }

  if (!have_fmt || data == nullptr)
    throw Error(Errc::CorruptHeader, "missing fmt or data chunk in " + path);
  if (channels == 0 || rate == 0)
    throw Error(Errc::CorruptHeader, "zero channels or sample rate in " + path);

  const bool pcm = audio_format == 1 && (bits == 16 || bits == 24 || bits == 32);
  const bool f32 = audio_format == 3 && bits == 32;
  if (!pcm && !f32)
    throw Error(Errc::UnsupportedFormat,
                "only 16/24/32-bit PCM and 32-bit float supported, got format " +
                    std::to_string(audio_format) + "/" + std::to_string(bits) + " bits in " + path);

  const size_t bytes_per_sample = bits / 8;
  const size_t frame_bytes = bytes_per_sample * channels;
  if (frame_bytes == 0 || data_len % frame_bytes != 0)
    throw Error(Errc::CorruptHeader, "data chunk not a whole number of frames in " + path);
  const size_t frames = data_len / frame_bytes;

  Signal s;
  s.sample_rate = int(rate);
  s.samples.resize(frames);
  const double ch_inv = 1.0 / double(channels);
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (uint16_t c = 0; c < channels; ++c) {
      const uint8_t* q = data + i * frame_bytes + c * bytes_per_sample;
      if (f32) {
        uint32_t u = rd_u32(q);
        float fv;
        std::memcpy(&fv, &u, 4);
        acc += double(fv);
      } else if (bits == 16) {
        acc += double(int16_t(rd_u16(q))) / 32768.0;
      } else if (bits == 24) {
        int32_t v = int32_t(uint32_t(q[0]) | uint32_t(q[1]) << 8 | uint32_t(q[2]) << 16);
        if (v & 0x800000) v |= ~0xffffff;  // sign-extend
        acc += double(v) / 8388608.0;
      } else {
        acc += double(int32_t(rd_u32(q))) / 2147483648.0;
      }
    }
    s.samples[i] = acc * ch_inv;
  }
  return s;
}

void save_wav(const std::string& path, const Signal& s, WavFormat format) {
  if (s.sample_rate <= 0) throw Error(Errc::InvalidArgument, "sample rate must be positive");
  const uint32_t n = uint32_t(s.samples.size());
  const bool f32 = format == WavFormat::Float32;
  const uint16_t bits = f32 ? 32 : 16;
  const uint32_t data_bytes = n * (bits / 8);

  std::string out;
  out.reserve(64 + data_bytes);
  out += "RIFF";
  wr_u32(out, 4 + (8 + 16) + (f32 ? 8 + 4 : 0) + 8 + data_bytes);
  out += "WAVE";
  out += "fmt ";
  wr_u32(out, 16);
  wr_u16(out, f32 ? 3 : 1);
  wr_u16(out, 1);
  wr_u32(out, uint32_t(s.sample_rate));
  wr_u32(out, uint32_t(s.sample_rate) * (bits / 8));
  wr_u16(out, bits / 8);
  wr_u16(out, bits);
  if (f32) {
    out += "fact";
    wr_u32(out, 4);
    wr_u32(out, n);
  }
  out += "data";
  wr_u32(out, data_bytes);

  if (f32) {
    for (double v : s.samples) {
      const float fv = float(v);
      uint32_t u;
      std::memcpy(&u, &fv, 4);
      wr_u32(out, u);
    }
  } else {
    for (double v : s.samples) {
      double c = v;
      if (c > 1.0) c = 1.0;
      if (c < -1.0) c = -1.0;
      long q = std::lround(c * 32767.0);
      wr_u16(out, uint16_t(int16_t(q)));
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::IoFailure, "cannot write " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw Error(Errc::IoFailure, "short write to " + path);
}

}  // namespace roomsonde
