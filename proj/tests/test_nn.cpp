#include <doctest.h>

#include <cmath>
#include <fstream>

#include "roomsonde/errors.hpp"
#include "roomsonde/mfcc.hpp"
#include "roomsonde/nn/adam.hpp"
#include "roomsonde/nn/gradcheck.hpp"
#include "roomsonde/nn/network.hpp"
#include "roomsonde/nn/weight_store.hpp"
#include "roomsonde/rng.hpp"
#include "support/helpers.hpp"

using namespace roomsonde;
using namespace roomsonde::nn;

TEST_SUITE_BEGIN("nn");

TEST_CASE("build_model names") {
  CHECK(build_model("baseline_cnn").layers.size() > 0);
  CHECK(build_model("crnn").layers.size() > 0);
  CHECK_THROWS_AS(build_model("perceptron"), Error);
}

TEST_CASE("validate_shapes accepts the canonical input and rejects tiny ones") {
  const ModelSpec cnn = build_model("baseline_cnn");
  const ModelSpec crnn = build_model("crnn");
  const Shape a = validate_shapes(cnn, 798, 32);
  const Shape b = validate_shapes(crnn, 798, 32);
  REQUIRE(a.size() == 1);
  CHECK(a[0] == kNumTargets);
  REQUIRE(b.size() == 1);
  CHECK(b[0] == kNumTargets);
  CHECK_THROWS_AS(validate_shapes(crnn, 8, 32), Error);
}

TEST_CASE("parameter counts are stable") {
  CHECK(param_count(build_model("baseline_cnn"), 798, 32) == 1663174);
  CHECK(param_count(build_model("crnn"), 798, 32) == 417414);
}

TEST_CASE("network trainable count matches the analytic count") {
  for (const char* name : {"baseline_cnn", "crnn"}) {
    const ModelSpec spec = build_model(name);
    Network<float> net(spec, 798, 32);
    CHECK(net.trainable_count() == param_count(spec, 798, 32));
  }
}

TEST_CASE("gradient checks pass") {
  for (const auto& r : run_gradient_checks(0)) {
    INFO(r.name);
    CHECK(r.pass);
    CHECK(r.max_rel < r.tol);
  }
}

TEST_CASE("dense stage forward is x*w + b") {
  DenseStage<double> d(0, 2, 2);
  std::vector<ParamRef<double>> ps;
  d.collect(ps);
  REQUIRE(ps.size() == 2);
  // w = [[1,2],[3,4]], b = [10, 20]
  ps[0].value->data = {1.0, 2.0, 3.0, 4.0};
  ps[1].value->data = {10.0, 20.0};
  auto x = make_tensor<double>({1, 2});
  x->data = {1.0, 1.0};
  const auto y = d.forward(x, false, 0);
  CHECK(y->data[0] == doctest::Approx(14.0));
  CHECK(y->data[1] == doctest::Approx(26.0));
}

TEST_CASE("batchnorm stage normalizes per channel in training") {
  BnStage<double> bn(0, 3);
  auto x = make_tensor<double>({4, 5, 3});
  Rng rng(2);
  for (auto& v : x->data) v = rng.uniform(-4.0, 3.0);
  const auto y = bn.forward(x, true, 0);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    const int64_t m = 4 * 5;
    for (int64_t i = 0; i < m; ++i) mean += y->data[size_t(i * 3 + c)];
    mean /= double(m);
    for (int64_t i = 0; i < m; ++i) {
      const double d = y->data[size_t(i * 3 + c)] - mean;
      var += d * d;
    }
    var /= double(m);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps in the denominator
  }
}

TEST_CASE("maxpool forward and gradient routing") {
  PoolStage<double> pool;
  auto x = make_tensor<double>({1, 2, 2, 1});
  x->data = {1.0, 5.0, 3.0, 2.0};
  const auto y = pool.forward(x, true, 0);
  REQUIRE(y->shape == Shape{1, 1, 1, 1});
  CHECK(y->data[0] == 5.0);

  auto dy = make_tensor<double>({1, 1, 1, 1});
  dy->data = {7.0};
  const auto dx = pool.backward(dy, true);
  CHECK(dx->data[0] == 0.0);
  CHECK(dx->data[1] == 7.0);
  CHECK(dx->data[2] == 0.0);
  CHECK(dx->data[3] == 0.0);
}

TEST_CASE("maxpool drops odd tails") {
  PoolStage<double> pool;
  auto x = make_tensor<double>({1, 5, 3, 2});
  for (int64_t i = 0; i < x->size(); ++i) x->data[size_t(i)] = double(i);
  const auto y = pool.forward(x, false, 0);
  CHECK(y->shape == Shape{1, 2, 1, 2});
}

TEST_CASE("dropout scales kept units and is seed deterministic") {
  DropStage<double> drop(0.5);
  auto x = make_tensor<double>({4, 1000});
  for (auto& v : x->data) v = 1.0;
  const auto y1 = drop.forward(x, true, 77);
  const auto y2 = drop.forward(x, true, 77);
  const auto y3 = drop.forward(x, true, 78);
  CHECK(y1->data == y2->data);
  CHECK(y1->data != y3->data);

  double kept = 0.0, sum = 0.0;
  for (double v : y1->data) {
    if (v != 0.0) {
      CHECK(v == doctest::Approx(2.0));
      kept += 1.0;
    }
    sum += v;
  }
  CHECK(kept / double(x->size()) == doctest::Approx(0.5).epsilon(0.05));
  CHECK(sum / double(x->size()) == doctest::Approx(1.0).epsilon(0.1));

  const auto ye = drop.forward(x, false, 0);
  CHECK(ye->data == x->data);
}

TEST_CASE("activation stage values") {
  ActStage<double> relu(Act::Relu);
  auto x = make_tensor<double>({1, 3});
  x->data = {-2.0, 0.0, 3.0};
  const auto yr = relu.forward(x, false, 0);
  CHECK(yr->data[0] == 0.0);
  CHECK(yr->data[1] == 0.0);
  CHECK(yr->data[2] == 3.0);

  ActStage<double> elu(Act::Elu);
  const auto ye = elu.forward(x, false, 0);
  CHECK(ye->data[0] == doctest::Approx(std::exp(-2.0) - 1.0));
  CHECK(ye->data[2] == 3.0);
}

TEST_CASE("gru single step matches hand math") {
  GruStage<double> gru(0, 1, 1, 1, false);
  std::vector<ParamRef<double>> ps;
  gru.collect(ps);
  REQUIRE(ps.size() == 9);  // wz wr wh uz ur uh bz br bh
  for (auto& p : ps) p.value->data[0] = 0.5;
  auto x = make_tensor<double>({1, 1, 1});
  x->data = {1.0};
  const auto y = gru.forward(x, false, 0);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  // h0 = 0: z = sig(0.5*1 + 0.5), htilde = tanh(0.5*1 + 0.5), h = z*htilde
  const double z = sig(1.0);
  const double htilde = std::tanh(1.0);
  CHECK(y->data[0] == doctest::Approx(z * htilde).epsilon(1e-12));
}

TEST_CASE("gru collect order and fan_in hint") {
  GruStage<double> gru(3, 7, 5, 4, true);
  std::vector<ParamRef<double>> ps;
  gru.collect(ps);
  REQUIRE(ps.size() == 9);
  CHECK(ps[0].name == "wz");
  CHECK(ps[3].name == "uz");
  CHECK(ps[6].name == "bz");
  CHECK(ps[0].fan_in == 9);  // input features + units
  CHECK(ps[0].value->shape == Shape{5, 4});
  CHECK(ps[3].value->shape == Shape{4, 4});
  for (const auto& p : ps) CHECK(p.layer_index == 3);
}

TEST_CASE("adam matches two hand-computed steps") {
  Tensor<double> w({1});
  Tensor<double> g({1});
  w.data[0] = 1.0;
  std::vector<ParamRef<double>> ps{{0, "w", &w, &g, 1}};
  Adam<double> opt(ps, 0.1, 0.9, 0.999, 1e-8);

  g.data[0] = 0.5;
  opt.step();
  // t=1: mhat = 0.5, vhat = 0.25, step = 0.1 * 0.5 / (0.5 + 1e-8)
  const double w1 = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
  CHECK(w.data[0] == doctest::Approx(w1).epsilon(1e-12));

  g.data[0] = -0.25;
  opt.step();
  const double m2 = (0.9 * 0.05 + 0.1 * -0.25) / (1.0 - 0.81);
  const double v2 = (0.999 * 0.00025 + 0.001 * 0.0625) / (1.0 - 0.999 * 0.999);
  const double w2 = w1 - 0.1 * m2 / (std::sqrt(v2) + 1e-8);
  CHECK(w.data[0] == doctest::Approx(w2).epsilon(1e-10));
}

TEST_CASE("mse loss value and gradient") {
  Tensor<double> pred({2, 2});
  Tensor<double> target({2, 2});
  pred.data = {1.0, 2.0, 3.0, 4.0};
  target.data = {1.0, 1.0, 1.0, 1.0};
  Tensor<double> dpred({2, 2});
  const double loss = mse_loss(pred, target, &dpred);
  CHECK(loss == doctest::Approx((0.0 + 1.0 + 4.0 + 9.0) / 4.0));
  CHECK(dpred.data[2] == doctest::Approx(2.0 * 2.0 / 4.0));

  Tensor<double> bad({3});
  CHECK_THROWS_AS(mse_loss(pred, bad), Error);
}

TEST_CASE("small network overfits random data") {
  ModelSpec spec;
  spec.name = "probe";
  spec.layers.push_back({LayerKind::Conv2D, 3, 8, Act::Relu, 0.0, 0});
  spec.layers.push_back({LayerKind::Activation, 0, 0, Act::Elu, 0.0, 0});
  spec.layers.push_back({LayerKind::GlobalFlatten, 0, 0, Act::Relu, 0.0, 0});
  spec.layers.push_back({LayerKind::Dense, 0, 0, Act::Relu, 0.0, 6});

  Network<double> net(spec, 6, 5);
  net.init_params(1);
  auto x = make_tensor<double>({8, 6, 5});
  Tensor<double> y({8, 6});
  Rng rng(4);
  for (auto& v : x->data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : y.data) v = rng.uniform(-1.0, 1.0);

  Adam<double> opt(net.params(), 1e-2);
  double loss = 0.0;
  for (int step = 0; step < 500; ++step) {
    net.zero_grad();
    const auto pred = net.forward(x, true, uint64_t(step));
    Tensor<double> dpred(pred->shape);
    loss = mse_loss(*pred, y, &dpred);
    net.backward(std::make_shared<Tensor<double>>(dpred));
    opt.step();
  }
  CHECK(loss < 1e-3);
}

TEST_CASE("weight store round trip restores the network exactly") {
  testutil::TempDir tmp("rswt");
  const ModelSpec spec = build_model("crnn");
  Network<float> net(spec, 32, 32);
  net.init_params(12);

  MfccConfig cfg;
  TargetStats ts;
  for (int i = 0; i < kNumTargets; ++i) {
    ts.mean[size_t(i)] = double(i);
    ts.stdev[size_t(i)] = 1.0 + double(i);
  }
  const std::vector<double> fm(32, 0.25), fs(32, 2.0);
  WeightStore ws = snapshot(net, cfg.canonical(), cfg.fingerprint(), ts, fm, fs);
  CHECK(ws.model_name == "crnn");
  CHECK(ws.frames == 32);
  save_weights(tmp / "w.rswt", ws);
  const WeightStore ld = load_weights(tmp / "w.rswt");
  CHECK(ld.model_name == ws.model_name);
  CHECK(ld.model_fp == ws.model_fp);
  CHECK(ld.mfcc_canonical == ws.mfcc_canonical);
  CHECK(ld.feat_mean == ws.feat_mean);
  CHECK(ld.targets.mean == ts.mean);
  REQUIRE(ld.tensors.size() == ws.tensors.size());
  for (size_t i = 0; i < ws.tensors.size(); ++i) CHECK(ld.tensors[i].data == ws.tensors[i].data);

  Network<float> other(spec, 32, 32);
  other.init_params(99);
  restore(other, ld);
  auto x = make_tensor<float>({2, 32, 32});
  Rng rng(5);
  for (auto& v : x->data) v = float(rng.uniform(-1.0, 1.0));
  const auto a = net.forward(x, false, 0);
  const auto b = other.forward(x, false, 0);
  CHECK(a->data == b->data);
}

TEST_CASE("restore rejects a different architecture") {
  const ModelSpec crnn = build_model("crnn");
  Network<float> net(crnn, 32, 32);
  net.init_params(1);
  MfccConfig cfg;
  WeightStore ws = snapshot(net, cfg.canonical(), cfg.fingerprint(), TargetStats{},
                            std::vector<double>(32, 0.0), std::vector<double>(32, 1.0));
  ws.model_fp[0] ^= 0xff;
  CHECK_THROWS_AS(restore(net, ws), Error);
}

TEST_CASE("weight file detects truncation") {
  testutil::TempDir tmp("rswt");
  const ModelSpec spec = build_model("crnn");
  Network<float> net(spec, 32, 32);
  net.init_params(3);
  MfccConfig cfg;
  save_weights(tmp / "w.rswt", snapshot(net, cfg.canonical(), cfg.fingerprint(), TargetStats{},
                                        std::vector<double>(32, 0.0), std::vector<double>(32, 1.0)));
  auto bytes = testutil::read_file(tmp / "w.rswt");
  REQUIRE(bytes.size() > 96);
  bytes.resize(bytes.size() * 2 / 3);
  std::ofstream(tmp / "cut.rswt", std::ios::binary) << bytes;
  CHECK_THROWS_AS(load_weights(tmp / "cut.rswt"), Error);
}

TEST_SUITE_END();
