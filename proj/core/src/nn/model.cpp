#include "roomsonde/nn/model.hpp"

namespace roomsonde::nn {

const char* const kTargetNames[kNumTargets] = {"rt60", "drr", "c50", "c80", "sti", "snr"};

namespace {

LayerSpec conv(int k, int f) {
  LayerSpec l{LayerKind::Conv2D};
  l.kernel = k;
  l.filters = f;
  return l;
}
LayerSpec bn() { return LayerSpec{LayerKind::BatchNorm}; }
LayerSpec act(Act a) {
  LayerSpec l{LayerKind::Activation};
  l.act = a;
  return l;
}
LayerSpec pool() { return LayerSpec{LayerKind::MaxPool}; }
LayerSpec dropout(double p) {
  LayerSpec l{LayerKind::Dropout};
  l.p = p;
  return l;
}
LayerSpec gru(int units) {
  LayerSpec l{LayerKind::Gru};
  l.units = units;
  return l;
}
LayerSpec dense(int units) {
  LayerSpec l{LayerKind::Dense};
  l.units = units;
  return l;
}

void conv_block(std::vector<LayerSpec>& v, int k, int f, Act a) {
  v.push_back(conv(k, f));
  v.push_back(bn());
  v.push_back(act(a));
  v.push_back(pool());
  v.push_back(dropout(0.2));
}

}  // namespace

ModelSpec build_model(const std::string& name) {
  ModelSpec m;
  m.name = name;
  if (name == "baseline_cnn") {
    conv_block(m.layers, 5, 256, Act::Relu);
    conv_block(m.layers, 5, 256, Act::Relu);
    m.layers.push_back(LayerSpec{LayerKind::GlobalFlatten});
    m.layers.push_back(dense(64));
    m.layers.push_back(act(Act::Relu));
    m.layers.push_back(dense(kNumTargets));
  } else if (name == "crnn") {
    conv_block(m.layers, 3, 64, Act::Elu);
    conv_block(m.layers, 3, 128, Act::Elu);
    conv_block(m.layers, 3, 128, Act::Elu);
    conv_block(m.layers, 3, 128, Act::Elu);
    m.layers.push_back(LayerSpec{LayerKind::TimeFlatten});
    m.layers.push_back(gru(32));
    m.layers.push_back(gru(32));
    m.layers.push_back(dense(128));
    m.layers.push_back(act(Act::Elu));
    m.layers.push_back(dense(64));
    m.layers.push_back(act(Act::Elu));
    m.layers.push_back(dense(kNumTargets));
  } else {
    throw Error(Errc::InvalidArgument, "unknown model: " + name);
  }
  return m;
}

std::string ModelSpec::canonical() const {
  std::string s = "model:v1;name=" + name;
  for (const auto& l : layers) {
    s += ";";
    switch (l.kind) {
      case LayerKind::Conv2D:
        s += "conv2d(k=" + std::to_string(l.kernel) + ",f=" + std::to_string(l.filters) + ")";
        break;
      case LayerKind::BatchNorm: s += "batchnorm"; break;
      case LayerKind::Activation: s += l.act == Act::Relu ? "relu" : "elu"; break;
      case LayerKind::MaxPool: s += "maxpool(2)"; break;
      case LayerKind::Dropout: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "dropout(%.6g)", l.p);
        s += buf;
        break;
      }
      case LayerKind::Gru: s += "gru(" + std::to_string(l.units) + ")"; break;
      case LayerKind::Dense: s += "dense(" + std::to_string(l.units) + ")"; break;
      case LayerKind::TimeFlatten: s += "timeflatten"; break;
      case LayerKind::GlobalFlatten: s += "globalflatten"; break;
    }
  }
  return s;
}

Fingerprint ModelSpec::fingerprint() const { return fnv1a_128(canonical()); }

Shape validate_shapes(const ModelSpec& spec, int64_t frames, int64_t coeffs) {
  // shapes carried without the batch axis: (H, W, C) for conv space,
  // (T, F) after TimeFlatten, (F) after GlobalFlatten or a final GRU
  Shape s{frames, coeffs, 1};
  auto fail = [&](size_t i, const std::string& why) {
    throw Error(Errc::ShapeMismatch, "layer " + std::to_string(i) + ": " + why);
  };
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::Conv2D:
        if (s.size() != 3) fail(i, "conv2d expects (H,W,C), got " + shape_str(s));
        s[2] = l.filters;
        break;
      case LayerKind::BatchNorm:
      case LayerKind::Activation:
      case LayerKind::Dropout:
        break;
      case LayerKind::MaxPool:
        if (s.size() != 3) fail(i, "maxpool expects (H,W,C), got " + shape_str(s));
        if (s[0] < 2 || s[1] < 2) fail(i, "maxpool on " + shape_str(s) + " would vanish");
        s[0] /= 2;
        s[1] /= 2;
        break;
      case LayerKind::TimeFlatten:
        if (s.size() != 3) fail(i, "timeflatten expects (H,W,C), got " + shape_str(s));
        s = {s[0], s[1] * s[2]};
        break;
      case LayerKind::GlobalFlatten:
        if (s.size() != 3) fail(i, "globalflatten expects (H,W,C), got " + shape_str(s));
        s = {s[2]};
        break;
      case LayerKind::Gru: {
        if (s.size() != 2) fail(i, "gru expects (T,F), got " + shape_str(s));
        const bool last_gru = i + 1 >= spec.layers.size() || spec.layers[i + 1].kind != LayerKind::Gru;
        s = last_gru ? Shape{int64_t(l.units)} : Shape{s[0], int64_t(l.units)};
        break;
      }
      case LayerKind::Dense:
        if (s.size() != 1) fail(i, "dense expects a flat vector, got " + shape_str(s));
        s = {int64_t(l.units)};
        break;
    }
  }
  return s;
}

int64_t param_count(const ModelSpec& spec, int64_t frames, int64_t coeffs) {
  Shape s{frames, coeffs, 1};
  int64_t total = 0;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::Conv2D:
        total += int64_t(l.kernel) * l.kernel * s[2] * l.filters + l.filters;
        s[2] = l.filters;
        break;
      case LayerKind::BatchNorm:
        total += 2 * s.back();
        break;
      case LayerKind::MaxPool:
        s[0] /= 2;
        s[1] /= 2;
        break;
      case LayerKind::TimeFlatten:
        s = {s[0], s[1] * s[2]};
        break;
      case LayerKind::GlobalFlatten:
        s = {s[2]};
        break;
      case LayerKind::Gru: {
        const int64_t f = s.back(), u = l.units;
        total += 3 * (f * u + u * u + u);
        const bool last_gru = i + 1 >= spec.layers.size() || spec.layers[i + 1].kind != LayerKind::Gru;
        s = last_gru ? Shape{u} : Shape{s[0], u};
        break;
      }
      case LayerKind::Dense:
        total += s[0] * l.units + l.units;
        s = {int64_t(l.units)};
        break;
      default:
        break;
    }
  }
  return total;
}

}  // namespace roomsonde::nn
