#include <cmath>
#include <vector>

#include "doctest.h"

#include "ciaosr/gradcheck.hpp"
#include "ciaosr/ops.hpp"
#include "ciaosr/optim.hpp"
#include "ciaosr/rng.hpp"

using namespace ciaosr;

namespace {

template <typename T>
Tensor<T> rand_t(Shape s, Rng& rng, bool rg = false, double lo = -1, double hi = 1) {
  Tensor<T> t(std::move(s), T(0), rg);
  for (T& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
double max_diff(const Tensor<T>& a, const std::vector<double>& b) {
  REQUIRE(a.numel() == b.size());
  double m = 0;
  for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a.raw()[i]) - b[i]));
  return m;
}

}  // namespace

TEST_CASE("tensor invariants") {
  Tensor<float> t(Shape{2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(shape_numel(t.shape()) == t.data().size());
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  Tensor<double> x(Shape{3}, std::vector<double>{1, 2, 3}, true);
  backward(sum(x));
  REQUIRE(x.has_grad());
  CHECK(x.grad().size() == x.numel());
}

TEST_CASE("matmul examples and triple-loop oracle") {
  Rng rng(1);
  Tensor<double> eye(Shape{3, 3});
  for (int i = 0; i < 3; ++i) eye.at({std::size_t(i), std::size_t(i)}) = 1;
  auto b = rand_t<double>({3, 3}, rng);
  CHECK(max_diff(matmul(eye, b), std::vector<double>(b.data().begin(), b.data().end())) == 0.0);

  Tensor<float> m(Shape{2, 2}, std::vector<float>{1, 2, 3, 4});
  Tensor<float> i2(Shape{2, 2}, std::vector<float>{1, 0, 0, 1});
  CHECK(max_diff(matmul(m, i2), {1, 2, 3, 4}) == 0.0);

  auto a = rand_t<float>({4, 5}, rng), c = rand_t<float>({5, 3}, rng);
  std::vector<double> ref(12, 0.0);
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 5; ++k)
      for (int col = 0; col < 3; ++col) ref[r * 3 + col] += double(a.raw()[r * 5 + k]) * c.raw()[k * 3 + col];
  CHECK(max_diff(matmul(a, c), ref) < 1e-6);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("bmm matches per-batch matmul") {
  Rng rng(2);
  auto a = rand_t<double>({3, 2, 4}, rng), b = rand_t<double>({3, 4, 5}, rng), bt = rand_t<double>({3, 5, 4}, rng);
  const auto out = bmm(a, b), outt = bmm(a, bt, true);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double r = 0, rt = 0;
        for (std::size_t k = 0; k < 4; ++k) {
          r += a.at({n, i, k}) * b.at({n, k, j});
          rt += a.at({n, i, k}) * bt.at({n, j, k});
        }
        CHECK(std::abs(out.at({n, i, j}) - r) < 1e-12);
        CHECK(std::abs(outt.at({n, i, j}) - rt) < 1e-12);
      }
}

TEST_CASE("conv2d examples and naive oracle") {
  Rng rng(3);
  auto x = rand_t<float>({1, 2, 5, 5}, rng);
  Tensor<float> delta(Shape{2, 2, 1, 1}, std::vector<float>{1, 0, 0, 1});
  Tensor<float> zero_bias(Shape{2});
  CHECK(max_diff(conv2d(x, delta, zero_bias, 0), std::vector<double>(x.data().begin(), x.data().end())) == 0.0);

  Tensor<float> zw(Shape{3, 2, 3, 3});
  Tensor<float> bias(Shape{3}, std::vector<float>{0.5f, -1.0f, 2.0f});
  const auto allbias = conv2d(x, zw, bias, 1);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 25; ++i) CHECK(allbias.raw()[o * 25 + i] == bias.raw()[o]);

  auto w = rand_t<float>({3, 2, 3, 3}, rng);
  for (int pad : {0, 1, 2}) {
    const int ho = 5 + 2 * pad - 2;
    std::vector<double> ref(3 * ho * ho);
    for (int o = 0; o < 3; ++o)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < ho; ++xx) {
          double acc = bias.raw()[o];
          for (int c = 0; c < 2; ++c)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int sy = y + ky - pad, sx = xx + kx - pad;
                if (sy < 0 || sy >= 5 || sx < 0 || sx >= 5) continue;
                acc += double(w.raw()[((o * 2 + c) * 3 + ky) * 3 + kx]) * x.raw()[(c * 5 + sy) * 5 + sx];
              }
          ref[(o * ho + y) * ho + xx] = acc;
        }
    const auto out = conv2d(x, w, bias, pad);
    CHECK(out.size(2) == std::size_t(ho));
    CHECK(max_diff(out, ref) < 1e-5);
  }
  CHECK_THROWS_AS(conv2d(x, rand_t<float>({3, 4, 3, 3}, rng), bias, 1), ShapeError);
  CHECK_THROWS_AS(conv2d(x, rand_t<float>({3, 2, 2, 2}, rng), bias, 1), ShapeError);
}

TEST_CASE("softmax examples and properties") {
  Tensor<double> z(Shape{4}, std::vector<double>{0, 0, 0, 0});
  CHECK(max_diff(softmax(z, 0), {0.25, 0.25, 0.25, 0.25}) < 1e-15);
  const double x = 0.37;
  Tensor<double> two(Shape{2}, std::vector<double>{x, x + std::log(2.0)});
  CHECK(max_diff(softmax(two, 0), {1.0 / 3, 2.0 / 3}) < 1e-12);

  Rng rng(4);
  auto v = rand_t<double>({7}, rng, false, -5, 5);
  double denom = 0;
  for (double e : v.data()) denom += std::exp(e);
  std::vector<double> ref;
  for (double e : v.data()) ref.push_back(std::exp(e) / denom);
  CHECK(max_diff(softmax(v, 0), ref) < 1e-7);

  auto big = rand_t<float>({3, 5, 4}, rng, false, -20, 20);
  for (int axis : {0, 1, 2}) {
    const auto s = softmax(big, axis);
    const auto shifted = softmax(affine(big, 1.0f, 7.5f), axis);
    for (std::size_t i = 0; i < s.numel(); ++i) {
      CHECK(s.raw()[i] > 0.0f);
      CHECK(s.raw()[i] < 1.0f + 1e-7f);
      CHECK(std::abs(s.raw()[i] - shifted.raw()[i]) < 1e-6);
    }
    // sums along the axis
    const auto total = sum(s);
    CHECK(std::abs(total.item() - static_cast<float>(big.numel() / big.size(axis))) < 1e-4);
  }
  Tensor<float> huge(Shape{3}, std::vector<float>{1000, 1001, 999});
  const auto sh = softmax(huge, 0);
  for (float p : sh.data()) CHECK(std::isfinite(p));
}

TEST_CASE("softmax rows sum to one individually") {
  Rng rng(5);
  auto x = rand_t<double>({6, 9}, rng, false, -8, 8);
  const auto s = softmax(x, 1);
  for (std::size_t r = 0; r < 6; ++r) {
    double acc = 0;
    for (std::size_t c = 0; c < 9; ++c) acc += s.at({r, c});
    CHECK(std::abs(acc - 1.0) < 1e-6);
  }
}

TEST_CASE("unfold examples") {
  Tensor<float> c(Shape{1, 2, 4, 3}, 0.7f);
  const auto uc = unfold(c, 3);
  for (float v : uc.data()) CHECK(v == 0.7f);

  Tensor<float> one(Shape{1, 1, 1, 1}, 5.0f);
  const auto u1 = unfold(one, 3);
  CHECK(u1.shape() == Shape{1, 9, 1, 1});
  for (float v : u1.data()) CHECK(v == 5.0f);

  Tensor<float> ramp(Shape{1, 1, 3, 3}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto u = unfold(ramp, 3);
  for (std::size_t ch = 0; ch < 9; ++ch) CHECK(u.at({0, ch, 1, 1}) == float(ch + 1));
  // corner (0,0) replicates the edge: neighbourhood rows {1,1,2},{1,1,2},{4,4,5}
  const float corner[9] = {1, 1, 2, 1, 1, 2, 4, 4, 5};
  for (std::size_t ch = 0; ch < 9; ++ch) CHECK(u.at({0, ch, 0, 0}) == corner[ch]);
  CHECK_THROWS_AS(unfold(ramp, 2), ShapeError);
}

TEST_CASE("unfold center channel is identity") {
  Rng rng(6);
  auto x = rand_t<float>({2, 3, 5, 6}, rng);
  const auto u = unfold(x, 3);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 5; ++y)
        for (std::size_t xx = 0; xx < 6; ++xx) CHECK(u.at({n, c * 9 + 4, y, xx}) == x.at({n, c, y, xx}));
}

TEST_CASE("avg_downsample examples and block-mean oracle") {
  Tensor<float> c(Shape{1, 1, 6, 6}, 0.3f);
  const auto dc = avg_downsample(c, 2);
  for (float v : dc.data()) CHECK(std::abs(v - 0.3f) < 1e-7);

  Tensor<float> m(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  const auto d = avg_downsample(m, 2);
  CHECK(d.shape() == Shape{1, 1, 1, 1});
  CHECK(d.item() == 2.5f);

  Rng rng(7);
  auto x = rand_t<double>({1, 2, 6, 6}, rng);
  std::vector<double> ref;
  for (int ch = 0; ch < 2; ++ch)
    for (int by = 0; by < 2; ++by)
      for (int bx = 0; bx < 2; ++bx) {
        double acc = 0;
        for (int y = 0; y < 3; ++y)
          for (int xx = 0; xx < 3; ++xx) acc += x.raw()[(ch * 6 + by * 3 + y) * 6 + bx * 3 + xx];
        ref.push_back(acc / 9);
      }
  CHECK(max_diff(avg_downsample(x, 3), ref) < 1e-6);

  auto odd = rand_t<float>({1, 1, 7, 5}, rng);
  CHECK(avg_downsample(odd, 2).shape() == Shape{1, 1, 3, 2});
  CHECK(avg_downsample(odd, 2).at({0, 0, 2, 1}) ==
        doctest::Approx((odd.at({0, 0, 4, 2}) + odd.at({0, 0, 4, 3}) + odd.at({0, 0, 5, 2}) + odd.at({0, 0, 5, 3})) / 4)
            .epsilon(1e-6));
  CHECK_THROWS(avg_downsample(odd, 0));
  CHECK_THROWS(avg_downsample(odd, 6));
}

TEST_CASE("avg_downsample preserves the global mean") {
  Rng rng(8);
  auto x = rand_t<double>({1, 3, 12, 12}, rng);
  for (int s : {2, 3, 4}) CHECK(std::abs(mean(avg_downsample(x, s)).item() - mean(x).item()) < 1e-6);
}

TEST_CASE("permute, concat, narrow, gather_rows against index oracles") {
  Rng rng(9);
  auto x = rand_t<float>({2, 3, 4}, rng);
  const auto p = permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 4; ++c) CHECK(p.at({c, a, b}) == x.at({a, b, c}));

  auto y = rand_t<float>({2, 1, 4}, rng);
  const auto cat = concat(std::vector<Tensor<float>>{x, y}, 1);
  CHECK(cat.shape() == Shape{2, 4, 4});
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(cat.at({a, 3, c}) == y.at({a, 0, c}));
      CHECK(cat.at({a, 1, c}) == x.at({a, 1, c}));
    }
  const auto nr = narrow(x, 2, 1, 2);
  CHECK(nr.shape() == Shape{2, 3, 2});
  CHECK(nr.at({1, 2, 1}) == x.at({1, 2, 2}));
  CHECK_THROWS_AS(narrow(x, 2, 3, 2), ShapeError);

  auto table = rand_t<float>({4, 3}, rng);
  const auto g = gather_rows(table, {3, 3, 0});
  CHECK(g.at({1, 2}) == table.at({3, 2}));
  CHECK(g.at({2, 0}) == table.at({0, 0}));
  CHECK_THROWS(gather_rows(table, {4}));
  CHECK_THROWS_AS(reshape(x, Shape{5, 5}), ShapeError);
}

TEST_CASE("backward examples") {
  Tensor<double> x(Shape{2, 3}, 0.5, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor<double> v(Shape{2}, std::vector<double>{1, -2}, true);
  backward(sum(mul(v, v)));
  CHECK(v.grad()[0] == 2.0);
  CHECK(v.grad()[1] == -4.0);
}

TEST_CASE("backward accumulates through shared inputs and visits each node once") {
  Tensor<double> x(Shape{3}, std::vector<double>{1, 2, 3}, true);
  const auto a = affine(x, 2.0, 0.0);
  const auto b = add(a, a);           // diamond: a feeds b twice
  const auto loss = sum(mul(b, x));   // loss = sum(4 x^2)
  CHECK(Tape<double>::current().size() == 4);
  backward(loss);
  CHECK(last_backward_visits() == 4);
  CHECK(Tape<double>::current().size() == 0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(8 * x.raw()[i]));
}

TEST_CASE("tape order is topological") {
  Rng rng(10);
  auto a = rand_t<double>({2, 2}, rng, true), b = rand_t<double>({2, 2}, rng, true);
  const auto c = matmul(a, b);
  const auto d = relu(add(c, a));
  const auto e = sum(d);
  const auto& entries = Tape<double>::current().entries();
  for (std::size_t i = 0; i < entries.size(); ++i)
    for (const auto& in : entries[i].inputs)
      for (std::size_t j = i; j < entries.size(); ++j) CHECK(entries[j].output != in);
  backward(e);
}

TEST_CASE("backward errors") {
  Tensor<double> x(Shape{2}, 1.0, true);
  const auto y = affine(x, 2.0, 1.0);
  CHECK_THROWS_AS(backward(y), AutodiffError);  // not scalar
  Tape<double>::current().clear();
  Tensor<double> c(Shape{2}, 1.0, false);
  CHECK_THROWS_AS(backward(sum(c)), AutodiffError);  // nothing requires grad
  Tensor<double> s = Tensor<double>::scalar(1.0, true);
  CHECK_THROWS_AS(backward(affine(s, 1.0, 0.0).detach()), AutodiffError);
}

TEST_CASE("no-grad guard disables recording") {
  Tensor<double> x(Shape{2}, 1.0, true);
  {
    NoGradGuard g;
    const auto y = sum(mul(x, x));
    CHECK_FALSE(y.requires_grad());
    CHECK(Tape<double>::current().size() == 0);
  }
  CHECK(grad_enabled());
}

TEST_CASE("finite checks raise at op boundaries") {
  const bool prev = finite_checks();
  set_finite_checks(true);
  Tensor<float> a(Shape{1}, 3e38f);
  CHECK_THROWS_AS(affine(a, 10.0f, 0.0f), NonFiniteError);
  set_finite_checks(prev);
}

TEST_CASE("composite conv-softmax-l1 graph passes central differences") {
  Rng rng(11);
  auto img = rand_t<double>({1, 2, 5, 4}, rng, true);
  auto w = rand_t<double>({3, 2, 3, 3}, rng, true);
  auto b = rand_t<double>({3}, rng, true);
  Tensor<double> target(Shape{1, 3, 5, 4});
  for (std::size_t i = 0; i < target.numel(); ++i) target.raw()[i] = (i % 3 == 0) ? 2.0 : -1.0;
  GradcheckOptions opt;
  opt.stencil = 3;
  const auto r = check_gradient(
      "conv_softmax_l1", [=] { return l1_loss(softmax(conv2d(img, w, b, 1), 1), target); }, {img, w, b}, 1e-4, opt);
  CHECK(r.probes > 0);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("every op passes the finite-difference suite") {
  for (int stencil : {3, 5}) {
    GradcheckOptions opt;
    opt.stencil = stencil;
    for (const auto& r : run_gradcheck("tensor", opt)) {
      CAPTURE(r.name);
      CAPTURE(stencil);
      CHECK(r.probes > 0);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("a corrupted backward rule is caught") {
  GradcheckOptions opt;
  opt.include_faulty = true;
  bool saw = false;
  for (const auto& r : run_gradcheck("tensor", opt))
    if (r.name == "faulty_square") {
      saw = true;
      CHECK_FALSE(r.passed());
      CHECK(r.max_rel_error > 0.3);
    }
  CHECK(saw);
}

TEST_CASE("probes straddling a relu kink are skipped, not scored") {
  Tensor<double> x(Shape{3}, std::vector<double>{0.0004, -0.5, 0.7}, true);
  GradcheckOptions opt;
  const auto r = check_gradient("relu_kink", [=] { return relu(x); }, {x}, 1e-4, opt);
  CHECK(r.skipped == 1);
  CHECK(r.probes == 2);
  CHECK(r.passed());
}

TEST_CASE("adam examples") {
  {
    Tensor<double> p(Shape{3}, std::vector<double>{1, 2, 3}, true);
    ParamList<double> params{{"p", p}};
    AdamState<double> st;
    for (int i = 0; i < 3; ++i) {
      p.zero_grad();
      p.mutable_grad();  // zero-filled gradient
      adam_step(params, st, 0.1);
      CHECK(st.step == i + 1);
    }
    CHECK(p.raw()[0] == 1.0);
    CHECK(p.raw()[2] == 3.0);
  }
  {
    Tensor<double> p = Tensor<double>::scalar(0.5, true);
    ParamList<double> params{{"p", p}};
    AdamState<double> st;
    p.mutable_grad()[0] = 1.0;
    adam_step(params, st, 0.1);
    CHECK(std::abs((0.5 - p.item()) - 0.1) < 1e-6);
    CHECK(st.m[0].size() == 1);
    CHECK(st.v[0].size() == 1);
  }
}

TEST_CASE("adam matches a scripted oracle on theta^2") {
  Tensor<double> p = Tensor<double>::scalar(1.0, true);
  ParamList<double> params{{"theta", p}};
  AdamState<double> st;
  double theta = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 10; ++t) {
    p.zero_grad();
    backward(sum(mul(p, p)));
    adam_step(params, st, lr);

    const double g = 2 * theta;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    theta -= lr * mh / (std::sqrt(vh) + eps);
    CHECK(std::abs(p.item() - theta) < 1e-6);
  }
}

TEST_CASE("gradient clipping bounds the global norm") {
  Tensor<double> a(Shape{2}, std::vector<double>{0, 0}, true), b(Shape{1}, 0.0, true);
  a.mutable_grad()[0] = 3;
  a.mutable_grad()[1] = 4;
  b.mutable_grad()[0] = 12;
  ParamList<double> params{{"a", a}, {"b", b}};
  CHECK(clip_grad_norm(params, 6.5) == doctest::Approx(13.0));
  CHECK(a.grad()[0] == doctest::Approx(1.5));
  CHECK(b.grad()[0] == doctest::Approx(6.0));
  CHECK(clip_grad_norm(params, 100.0) == doctest::Approx(6.5));
  CHECK(a.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("rng streams are reproducible and split independently") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c = Rng(42).split(0), d = Rng(42).split(1);
  CHECK(c.next_u64() != d.next_u64());
  Rng e(7);
  std::vector<int> hist(5, 0);
  for (int i = 0; i < 5000; ++i) ++hist[e.below(5)];
  for (int h : hist) CHECK(h > 850);
  for (int i = 0; i < 1000; ++i) {
    const double u = e.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}
