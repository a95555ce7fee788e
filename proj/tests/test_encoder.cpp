#include <cmath>
#include <cstdint>
#include <cstring>

#include "doctest.h"

#include "ciaosr/encoder.hpp"
#include "ciaosr/ops.hpp"

using namespace ciaosr;

namespace {

template <typename T>
Tensor<T> rand_image(std::size_t h, std::size_t w, Rng& rng, bool rg = false) {
  Tensor<T> t(Shape{1, 3, h, w}, T(0), rg);
  for (T& v : t.data()) v = static_cast<T>(rng.uniform());
  return t;
}

std::uint64_t fnv(std::span<const double> xs) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double x : xs) {
    unsigned char b[sizeof x];
    std::memcpy(b, &x, sizeof x);
    for (unsigned char c : b) h = (h ^ c) * 1099511628211ULL;
  }
  return h;
}

}  // namespace

TEST_CASE("zero weights give a zero feature map") {
  Encoder<float> enc({2, 8, 3});
  ParamList<float> params;
  enc.collect(params, "enc");
  for (auto& p : params)
    for (float& v : p.tensor.data()) v = 0;
  Rng rng(1);
  const auto f = enc.encode(rand_image<float>(9, 7, rng));
  for (float v : f.data()) CHECK(v == 0.0f);
}

TEST_CASE("parameter layout") {
  Encoder<float> enc({3, 16, 3});
  ParamList<float> params;
  enc.collect(params, "enc");
  CHECK(params.size() == 2 * (2 + 2 * 3));
  CHECK(params.front().name == "enc.head.weight");
  CHECK(params.back().name == "enc.tail.bias");
  // head 3->16, six 16->16 body convs, tail 16->16, all 3x3 with bias
  const std::size_t expect = (3 * 16 * 9 + 16) + 7 * (16 * 16 * 9 + 16);
  CHECK(count_parameters(params) == expect);
  CHECK_THROWS_AS(Encoder<float>({1, 0, 3}), std::invalid_argument);
}

TEST_CASE("encoder keeps spatial size") {
  Encoder<float> enc({2, 8, 3});
  Rng rng(2);
  enc.init(rng);
  for (int t = 0; t < 12; ++t) {
    const auto h = static_cast<std::size_t>(8 + rng.uniform() * 26), w = static_cast<std::size_t>(8 + rng.uniform() * 26);
    const auto f = enc.encode(rand_image<float>(h, w, rng));
    CHECK(f.shape() == Shape{1, 8, h, w});
    for (float v : f.data()) REQUIRE(std::isfinite(v));
  }
  const auto tiny = enc.encode(rand_image<float>(1, 1, rng));
  CHECK(tiny.shape() == Shape{1, 8, 1, 1});
}

TEST_CASE("wrong channel count is rejected") {
  Encoder<float> enc({1, 8, 3});
  CHECK_THROWS_AS(enc.encode(Tensor<float>(Shape{1, 4, 8, 8})), ShapeError);
  CHECK_THROWS_AS(enc.encode(Tensor<float>(Shape{3, 8, 8})), ShapeError);
}

TEST_CASE("encoder equals explicit conv composition") {
  Encoder<double> enc({2, 6, 3});
  Rng rng(3);
  enc.init(rng);
  ParamList<double> p;
  enc.collect(p, "e");
  const auto img = rand_image<double>(10, 11, rng);
  auto conv = [&](const Tensor<double>& x, std::size_t k) { return conv2d(x, p[2 * k].tensor, p[2 * k + 1].tensor, 1); };
  const auto head = conv(img, 0);
  auto x = head;
  for (std::size_t b = 0; b < 2; ++b) x = add(x, conv(relu(conv(x, 1 + 2 * b)), 2 + 2 * b));
  const auto ref = add(head, conv(x, 5));
  const auto out = enc.encode(img);
  REQUIRE(out.numel() == ref.numel());
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.raw()[i] == doctest::Approx(ref.raw()[i]).epsilon(1e-12));
}

TEST_CASE("fixed seed forward is reproducible and matches the frozen golden value") {
  auto run = [] {
    Encoder<double> enc({4, 16, 3});
    Rng rng(7);
    enc.init(rng);
    Rng data(11);
    return enc.encode(rand_image<double>(8, 8, data));
  };
  const auto a = run(), b = run();
  CHECK(fnv(a.data()) == fnv(b.data()));
  double s = 0, s2 = 0;
  for (double v : a.data()) {
    s += v;
    s2 += v * v;
  }
  // recorded once from this implementation
  CHECK(s == doctest::Approx(-52.137114143365871).epsilon(1e-9));
  CHECK(s2 == doctest::Approx(136.43263036702396).epsilon(1e-9));
}

TEST_CASE("every parameter receives gradient") {
  Encoder<double> enc({2, 6, 3});
  Rng rng(5);
  enc.init(rng);
  ParamList<double> params;
  enc.collect(params, "enc");
  backward(sum(enc.encode(rand_image<double>(9, 9, rng))));
  for (auto& p : params) {
    INFO(p.name);
    REQUIRE(p.tensor.has_grad());
    double m = 0;
    for (double g : p.tensor.grad()) m = std::max(m, std::abs(g));
    CHECK(m > 0.0);
  }
}
