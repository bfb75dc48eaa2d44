#include <cstring>
#include <fstream>

#include "roomsonde/errors.hpp"
#include "roomsonde/mfcc.hpp"

namespace roomsonde {

namespace {

constexpr char kMagic[4] = {'R', 'S', 'F', 'T'};
constexpr uint16_t kVersion = 1;

void put_u16(std::string& s, uint16_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char(v >> 8));
}
void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}
uint16_t get_u16(const uint8_t* p) { return uint16_t(p[0] | p[1] << 8); }
uint32_t get_u32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

}  // namespace

void save_features(const std::string& path, const FeatureMatrix& f) {
  std::string out;
  out.append(kMagic, 4);
  put_u16(out, kVersion);
  put_u32(out, f.rows);
  put_u32(out, f.cols);
  out.append(reinterpret_cast<const char*>(f.config_fp.data()), 16);
  for (float v : f.values) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(out, u);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::IoFailure, "cannot write " + path);
  os.write(out.data(), std::streamsize(out.size()));
  if (!os) throw Error(Errc::IoFailure, "short write to " + path);
}

FeatureMatrix load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoFailure, "cannot open " + path);
  std::string raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const uint8_t* p = reinterpret_cast<const uint8_t*>(raw.data());

  if (raw.size() < 30 || std::memcmp(p, kMagic, 4) != 0)
    throw Error(Errc::CorruptHeader, "bad feature file magic in " + path);
  if (get_u16(p + 4) != kVersion)
    throw Error(Errc::CorruptHeader, "unsupported feature file version in " + path);

  FeatureMatrix f;
  f.rows = get_u32(p + 6);
  f.cols = get_u32(p + 10);
  std::memcpy(f.config_fp.data(), p + 14, 16);

  const size_t count = size_t(f.rows) * size_t(f.cols);
  if (raw.size() != 30 + 4 * count)
    throw Error(Errc::CorruptPayload, "feature payload size mismatch in " + path);
  f.values.resize(count);
  for (size_t i = 0; i < count; ++i) {
    const uint32_t u = get_u32(p + 30 + 4 * i);
    float v;
    std::memcpy(&v, &u, 4);
    f.values[i] = v;
  }
  return f;
}

}  // namespace roomsonde
