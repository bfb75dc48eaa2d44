#include "roomsonde/nn/weight_store.hpp"

#include <cstring>
#include <fstream>

#include "roomsonde/errors.hpp"

namespace roomsonde::nn {
namespace {

constexpr char kMagic[4] = {'R', 'S', 'W', 'T'};
constexpr uint16_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_str(std::ostream& os, const std::string& s, size_t max_len) {
  if (s.size() > max_len) throw Error(Errc::InvalidArgument, "string too long for weight file");
  put<uint32_t>(os, uint32_t(s.size()));
  os.write(s.data(), std::streamsize(s.size()));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error(Errc::CorruptPayload, "weight file truncated");
  return v;
}

std::string get_str(std::istream& is, size_t max_len) {
  const uint32_t n = get<uint32_t>(is);
  if (n > max_len) throw Error(Errc::CorruptPayload, "weight file string length");
  std::string s(n, '\0');
  is.read(s.data(), std::streamsize(n));
  if (!is) throw Error(Errc::CorruptPayload, "weight file truncated");
  return s;
}

}  // namespace

void save_weights(const std::string& path, const WeightStore& ws) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::IoFailure, "cannot open for write: " + path);
  os.write(kMagic, 4);
  put<uint16_t>(os, kVersion);
  put_str(os, ws.model_name, 1 << 10);
  os.write(reinterpret_cast<const char*>(ws.model_fp.data()), 16);
  put<int64_t>(os, ws.frames);
  put<int64_t>(os, ws.coeffs);
  put_str(os, ws.mfcc_canonical, 1 << 16);
  os.write(reinterpret_cast<const char*>(ws.mfcc_fp.data()), 16);
  for (int i = 0; i < kNumTargets; ++i) {
    put<double>(os, ws.targets.mean[size_t(i)]);
    put<double>(os, ws.targets.stdev[size_t(i)]);
  }
  put<uint32_t>(os, uint32_t(ws.feat_mean.size()));
  os.write(reinterpret_cast<const char*>(ws.feat_mean.data()),
           std::streamsize(ws.feat_mean.size() * 8));
  os.write(reinterpret_cast<const char*>(ws.feat_std.data()),
           std::streamsize(ws.feat_std.size() * 8));
  put<uint32_t>(os, uint32_t(ws.tensors.size()));
  for (const auto& t : ws.tensors) {
    put<uint16_t>(os, t.layer_index);
    put_str(os, t.name, 1 << 8);
    put<uint8_t>(os, uint8_t(t.dims.size()));
    for (int64_t d : t.dims) put<int64_t>(os, d);
    put<uint64_t>(os, uint64_t(t.data.size()));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             std::streamsize(t.data.size() * sizeof(float)));
  }
  if (!os) throw Error(Errc::IoFailure, "write failed: " + path);
}

WeightStore load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoFailure, "cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(Errc::CorruptHeader, "not a weight file: " + path);
  if (get<uint16_t>(is) != kVersion) throw Error(Errc::CorruptHeader, "weight file version");

  WeightStore ws;
  ws.model_name = get_str(is, 1 << 10);
  is.read(reinterpret_cast<char*>(ws.model_fp.data()), 16);
  ws.frames = get<int64_t>(is);
  ws.coeffs = get<int64_t>(is);
  ws.mfcc_canonical = get_str(is, 1 << 16);
  is.read(reinterpret_cast<char*>(ws.mfcc_fp.data()), 16);
  if (!is) throw Error(Errc::CorruptPayload, "weight file truncated");
  for (int i = 0; i < kNumTargets; ++i) {
    ws.targets.mean[size_t(i)] = get<double>(is);
    ws.targets.stdev[size_t(i)] = get<double>(is);
  }
  const uint32_t n_feat = get<uint32_t>(is);
  if (n_feat > (1u << 16)) throw Error(Errc::CorruptPayload, "weight file feature stats");
  ws.feat_mean.resize(n_feat);
  ws.feat_std.resize(n_feat);
  is.read(reinterpret_cast<char*>(ws.feat_mean.data()), std::streamsize(n_feat * 8));
  is.read(reinterpret_cast<char*>(ws.feat_std.data()), std::streamsize(n_feat * 8));
  if (!is) throw Error(Errc::CorruptPayload, "weight file truncated");
  const uint32_t n_tensors = get<uint32_t>(is);
  if (n_tensors > (1u << 16)) throw Error(Errc::CorruptPayload, "weight file tensor count");
  ws.tensors.resize(n_tensors);
  for (auto& t : ws.tensors) {
    t.layer_index = get<uint16_t>(is);
    t.name = get_str(is, 1 << 8);
    const uint8_t nd = get<uint8_t>(is);
    if (nd > 8) throw Error(Errc::CorruptPayload, "weight file rank");
    t.dims.resize(nd);
    int64_t want = 1;
    for (auto& d : t.dims) {
      d = get<int64_t>(is);
      if (d <= 0 || d > (int64_t(1) << 32)) throw Error(Errc::CorruptPayload, "weight file dim");
      want *= d;
    }
    const uint64_t count = get<uint64_t>(is);
    if (int64_t(count) != want) throw Error(Errc::CorruptPayload, "weight file tensor size");
    t.data.resize(count);
    is.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(count * sizeof(float)));
    if (!is) throw Error(Errc::CorruptPayload, "weight file truncated");
  }
  return ws;
}

WeightStore snapshot(Network<float>& net, const std::string& mfcc_canonical,
                     const Fingerprint& mfcc_fp, const TargetStats& targets,
                     const std::vector<double>& feat_mean, const std::vector<double>& feat_std) {
  WeightStore ws;
  ws.model_name = net.spec().name;
  ws.model_fp = net.spec().fingerprint();
  ws.frames = net.frames();
  ws.coeffs = net.coeffs();
  ws.mfcc_canonical = mfcc_canonical;
  ws.mfcc_fp = mfcc_fp;
  ws.targets = targets;
  ws.feat_mean = feat_mean;
  ws.feat_std = feat_std;
  for (const auto& p : net.params()) {
    WeightStore::Entry e;
    e.layer_index = uint16_t(p.layer_index);
    e.name = p.name;
    e.dims = p.value->shape;
    e.data.assign(p.value->data.begin(), p.value->data.end());
    ws.tensors.push_back(std::move(e));
  }
  return ws;
}

void restore(Network<float>& net, const WeightStore& ws) {
  if (ws.model_fp != net.spec().fingerprint())
    throw Error(Errc::FingerprintMismatch,
                "weight file was written for model '" + ws.model_name + "'");
  auto& params = net.params();
  if (params.size() != ws.tensors.size())
    throw Error(Errc::ShapeMismatch, "weight file tensor count");
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& e = ws.tensors[i];
    auto& p = params[i];
    if (e.layer_index != uint16_t(p.layer_index) || e.name != p.name || e.dims != p.value->shape)
      throw Error(Errc::ShapeMismatch, "weight tensor " + std::to_string(i) + " (" + e.name + ")");
    p.value->data.assign(e.data.begin(), e.data.end());
  }
}

}  // namespace roomsonde::nn
