#include "ciaosr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "ciaosr/model.hpp"
#include "ciaosr/ops.hpp"
#include "ciaosr/rng.hpp"

namespace ciaosr {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
  return std::abs(analytic - numeric) / denom;
}

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

struct KinkScope {
  KinkScope() { set_kink_tracking(true); }
  ~KinkScope() { set_kink_tracking(false); }
};

double weighted_sum(const Tensor<double>& out, const std::vector<double>& r) {
  double acc = 0;
  for (std::size_t i = 0; i < r.size(); ++i) acc += out.raw()[i] * r[i];
  return acc;
}

}  // namespace

GradcheckResult check_gradient(const std::string& name, const std::function<Tensor<double>()>& f,
                               const std::vector<Tensor<double>>& inputs, double tolerance,
                               const GradcheckOptions& opt) {
  GradcheckResult res;
  res.name = name;
  res.tolerance = tolerance;
  Rng rng = Rng(opt.seed).split(name_hash(name));

  std::vector<Tensor<double>> leaves = inputs;
  for (auto& t : leaves) {
    if (!t.requires_grad()) throw std::invalid_argument("gradcheck: input of " + name + " does not require grad");
    t.zero_grad();
  }
  Tape<double>::current().clear();

  std::vector<double> r;
  std::uint64_t base_signature = 0;
  {
    KinkScope kinks;
    Tensor<double> out = f();
    base_signature = take_kink_signature();
    r.resize(out.numel());
    for (double& v : r) v = rng.uniform(-1.0, 1.0);
    const Tensor<double> proj(out.shape(), std::vector<double>(r));
    backward(sum(mul(out, proj)));
  }

  std::size_t input_index = 0;
  auto probe = [&](Tensor<double>& t, std::size_t i) {
    const double analytic = t.has_grad() ? t.grad()[i] : 0.0;
    NoGradGuard no_grad;
    KinkScope kinks;
    const double x0 = t.raw()[i];
    auto eval_at = [&](double offset, bool& straddled) {
      t.raw()[i] = x0 + offset;
      const double v = weighted_sum(f(), r);
      straddled = straddled || take_kink_signature() != base_signature;
      return v;
    };
    bool straddled = false;
    const double h = opt.eps;
    double numeric;
    if (opt.stencil == 3) {
      numeric = (eval_at(h, straddled) - eval_at(-h, straddled)) / (2 * h);
    } else {
      const double f1 = eval_at(h, straddled), fm1 = eval_at(-h, straddled);
      const double f2 = eval_at(2 * h, straddled), fm2 = eval_at(-2 * h, straddled);
      numeric = (8 * (f1 - fm1) - (f2 - fm2)) / (12 * h);
    }
    t.raw()[i] = x0;
    if (straddled) {
      ++res.skipped;
      return;
    }
    const double err = relative_error(analytic, numeric);
    if (err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_input = input_index;
      res.worst_element = i;
      res.worst_analytic = analytic;
      res.worst_numeric = numeric;
    }
    ++res.probes;
  };

  for (auto& t : leaves) {
    ++input_index;
    const std::size_t n = t.numel();
    if (n <= opt.max_probes) {
      for (std::size_t i = 0; i < n; ++i) probe(t, i);
      continue;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = 0; i < opt.max_probes; ++i) {
      std::swap(order[i], order[i + rng.below(n - i)]);
      probe(t, order[i]);
    }
  }
  for (auto& t : leaves) t.zero_grad();
  // A check where every probe straddled a kink proves nothing.
  if (res.probes == 0) res.max_rel_error = std::numeric_limits<double>::infinity();
  return res;
}

Tensor<double> faulty_square(const Tensor<double>& x) {
  Tensor<double> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out.raw()[i] = x.raw()[i] * x.raw()[i];
  if (grad_enabled() && x.requires_grad()) {
    auto* nx = x.node().get();
    auto* no = out.node().get();
    out.node()->requires_grad = true;
    out.node()->is_leaf = false;
    Tape<double>::current().record({"faulty_square", {x.node()}, out.node(), [nx, no] {
                                      auto& g = nx->grad_buffer();
                                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += nx->data[i] * no->grad[i];
                                    }});
  }
  return out;
}

namespace {

using T = double;

Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape), T(0), true);
  for (T& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Values kept at least `gap` away from zero, so ReLU/abs kinks are far from
// every probe.
Tensor<T> away_from_zero(Shape shape, Rng& rng, double gap = 0.05) {
  Tensor<T> t(std::move(shape), T(0), true);
  for (T& v : t.data()) {
    const double m = rng.uniform(gap, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

std::vector<GradcheckResult> tensor_suite(const GradcheckOptions& opt) {
  Rng rng = Rng(opt.seed).split(101);
  const double tol = opt.op_tolerance;
  std::vector<GradcheckResult> out;
  auto run = [&](const std::string& name, std::vector<Tensor<T>> in, std::function<Tensor<T>()> f) {
    out.push_back(check_gradient(name, f, in, tol, opt));
  };

  {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
    run("matmul", {a, b}, [=] { return matmul(a, b); });
  }
  {
    auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 4, 5}, rng), bt = random_tensor({2, 5, 4}, rng);
    run("bmm", {a, b}, [=] { return bmm(a, b); });
    run("bmm_transpose_b", {a, bt}, [=] { return bmm(a, bt, true); });
  }
  {
    auto a = random_tensor({3, 5}, rng), b = random_tensor({3, 5}, rng);
    run("add", {a, b}, [=] { return add(a, b); });
    run("sub", {a, b}, [=] { return sub(a, b); });
    run("mul", {a, b}, [=] { return mul(a, b); });
    run("mul_self", {a}, [=] { return mul(a, a); });
    run("affine", {a}, [=] { return affine(a, T(1.7), T(-0.3)); });
  }
  {
    auto x = random_tensor({4, 6}, rng), b = random_tensor({6}, rng);
    run("add_bias", {x, b}, [=] { return add_bias(x, b); });
  }
  {
    auto x = away_from_zero({5, 7}, rng);
    run("relu", {x}, [=] { return relu(x); });
  }
  {
    auto x = random_tensor({3, 4, 5}, rng, -3, 3);
    run("softmax_last", {x}, [=] { return softmax(x, -1); });
    run("softmax_middle", {x}, [=] { return softmax(x, 1); });
    run("softmax_first", {x}, [=] { return softmax(x, 0); });
  }
  {
    auto x = random_tensor({3, 4}, rng);
    run("sum", {x}, [=] { return sum(x); });
    run("mean", {x}, [=] { return mean(x); });
    Tensor<T> target(Shape{3, 4});
    for (std::size_t i = 0; i < 12; ++i) target.raw()[i] = x.raw()[i] + (i % 2 ? 0.3 : -0.3);
    run("l1_loss", {x}, [=] { return l1_loss(x, target); });
  }
  {
    auto x = random_tensor({2, 3, 4}, rng);
    run("reshape", {x}, [=] { return reshape(x, Shape{6, 4}); });
    run("permute", {x}, [=] { return permute(x, {2, 0, 1}); });
    run("narrow", {x}, [=] { return narrow(x, 2, 1, 2); });
    auto y = random_tensor({2, 2, 4}, rng), z = random_tensor({2, 1, 4}, rng);
    run("concat", {x, y, z}, [=] { return concat(std::vector<Tensor<T>>{x, y, z}, 1); });
  }
  {
    auto x = random_tensor({5, 3}, rng);
    const std::vector<std::size_t> idx = {4, 0, 0, 2, 4, 4, 1};
    run("gather_rows", {x}, [=] { return gather_rows(x, idx); });
  }
  {
    auto img = random_tensor({2, 3, 6, 5}, rng);
    auto w3 = random_tensor({4, 3, 3, 3}, rng), b3 = random_tensor({4}, rng);
    auto w1 = random_tensor({2, 3, 1, 1}, rng), b1 = random_tensor({2}, rng);
    run("conv2d_3x3_pad1", {img, w3, b3}, [=] { return conv2d(img, w3, b3, 1); });
    run("conv2d_3x3_pad0", {img, w3, b3}, [=] { return conv2d(img, w3, b3, 0); });
    run("conv2d_1x1", {img, w1, b1}, [=] { return conv2d(img, w1, b1, 0); });
    run("unfold_3", {img}, [=] { return unfold(img, 3); });
    auto big = random_tensor({1, 2, 7, 8}, rng);
    run("avg_downsample_2", {big}, [=] { return avg_downsample(big, 2); });
    run("avg_downsample_3", {big}, [=] { return avg_downsample(big, 3); });
  }
  if (opt.include_faulty) {
    auto x = random_tensor({3, 3}, rng, 0.5, 1.5);
    run("faulty_square", {x}, [=] { return faulty_square(x); });
  }
  for (auto& r : out) r.suite = "tensor";
  return out;
}

ModelConfig tiny_model(HeadVariant variant, int local_size) {
  ModelConfig cfg;
  cfg.encoder.n_resblocks = 1;
  cfg.encoder.n_feats = 4;
  cfg.nonlocal.channels = 3;
  cfg.head.variant = variant;
  cfg.head.local_size = local_size;
  cfg.head.query_hidden = {8};
  cfg.head.key_hidden = {8};
  cfg.head.value_hidden = {8};
  cfg.head.weight_hidden = {6};
  cfg.head.liif_hidden = {8, 8};
  cfg.head.value_dim = 6;
  return cfg;
}

void randomize(ParamList<T>& params, Rng& rng) {
  for (auto& p : params)
    if (p.name.ends_with(".bias"))
      for (T& v : p.tensor.data()) v = rng.uniform(-0.1, 0.1);
}

QueryBatch random_queries(std::size_t items, std::size_t per_item, Rng& rng) {
  QueryBatch q;
  q.per_item = per_item;
  for (std::size_t b = 0; b < items; ++b) q.scales.push_back({rng.uniform(1.0, 4.0), rng.uniform(1.0, 4.0)});
  for (std::size_t i = 0; i < items * per_item; ++i) q.coords.push_back({rng.uniform(-0.99, 0.99), rng.uniform(-0.99, 0.99)});
  return q;
}

std::vector<GradcheckResult> head_suite(const GradcheckOptions& opt) {
  Rng rng = Rng(opt.seed).split(202);
  std::vector<GradcheckResult> out;
  struct Case {
    std::string name;
    HeadVariant variant;
    int local_size;
  };
  const std::vector<Case> cases = {{"model_full_local2", HeadVariant::kFull, 2},
                                   {"model_full_local1", HeadVariant::kFull, 1},
                                   {"model_full_local3", HeadVariant::kFull, 3},
                                   {"model_no_nonlocal", HeadVariant::kNoNonLocal, 2},
                                   {"model_mlp_weights", HeadVariant::kMlpWeights, 2},
                                   {"model_liif", HeadVariant::kLiif, 2}};
  for (const auto& c : cases) {
    auto model = std::make_shared<SrModel<T>>(tiny_model(c.variant, c.local_size));
    model->init(rng);
    ParamList<T> params = model->parameters();
    randomize(params, rng);
    auto lr = random_tensor({2, 3, 5, 6}, rng, 0.0, 1.0);
    const QueryBatch batch = random_queries(2, 7, rng);
    std::vector<Tensor<T>> inputs = {lr};
    for (auto& p : params) inputs.push_back(p.tensor);
    out.push_back(check_gradient(c.name, [model, lr, batch] { return model->predict(lr, batch); }, inputs,
                                 opt.module_tolerance, opt));
  }
  {
    auto model = std::make_shared<SrModel<T>>(tiny_model(HeadVariant::kFull, 2));
    model->init(rng);
    ParamList<T> params = model->parameters();
    randomize(params, rng);
    auto lr = random_tensor({1, 3, 4, 4}, rng, 0.0, 1.0);
    std::vector<Tensor<T>> inputs = {lr};
    for (auto& p : model->head_parameters()) inputs.push_back(p.tensor);
    out.push_back(check_gradient("render_full_4x4_to_7x9", [model, lr] { return model->render(lr, 7, 9); }, inputs,
                                 opt.module_tolerance, opt));
  }
  for (auto& r : out) r.suite = "head";
  return out;
}

std::vector<GradcheckResult> nonlocal_suite(const GradcheckOptions& opt) {
  Rng rng = Rng(opt.seed).split(303);
  std::vector<GradcheckResult> out;
  NonLocalConfig cfg;
  cfg.channels = 3;
  auto nl = std::make_shared<NonLocalAttention<T>>(4, cfg);
  nl->init(rng);
  ParamList<T> params;
  nl->collect(params, "nonlocal");
  randomize(params, rng);
  auto feat = random_tensor({2, 4, 8, 8}, rng);
  std::vector<Tensor<T>> inputs = {feat};
  for (auto& p : params) inputs.push_back(p.tensor);
  out.push_back(check_gradient("nonlocal_8x8", [nl, feat] { return nl->forward(feat); }, inputs,
                               opt.module_tolerance, opt));
  auto odd = random_tensor({1, 4, 7, 5}, rng);
  inputs[0] = odd;
  out.push_back(check_gradient("nonlocal_7x5", [nl, odd] { return nl->forward(odd); }, inputs,
                               opt.module_tolerance, opt));
  auto wide = random_tensor({1, 4, 9, 10}, rng);
  inputs[0] = wide;
  out.push_back(check_gradient("nonlocal_tiled_9x10", [nl, wide] { return nl->forward_tiled(wide, 5); }, inputs,
                               opt.module_tolerance, opt));
  for (auto& r : out) r.suite = "nonlocal";
  return out;
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck(const std::string& suite, const GradcheckOptions& opt) {
  if (!(opt.eps > 0)) throw std::invalid_argument("gradcheck: eps must be > 0");
  if (opt.stencil != 3 && opt.stencil != 5) throw std::invalid_argument("gradcheck: stencil must be 3 or 5");
  std::vector<GradcheckResult> out;
  auto take = [&](std::vector<GradcheckResult> part) { out.insert(out.end(), part.begin(), part.end()); };
  if (suite == "tensor" || suite == "all") take(tensor_suite(opt));
  if (suite == "head" || suite == "all") take(head_suite(opt));
  if (suite == "nonlocal" || suite == "all") take(nonlocal_suite(opt));
  if (out.empty() && suite != "tensor" && suite != "head" && suite != "nonlocal" && suite != "all")
    throw std::invalid_argument("gradcheck: unknown module '" + suite + "' (expected all, tensor, head or nonlocal)");
  if (opt.include_faulty && suite != "tensor" && suite != "all") {
    Rng rng = Rng(opt.seed).split(404);
    auto x = random_tensor({3, 3}, rng, 0.5, 1.5);
    auto r = check_gradient("faulty_square", [x] { return faulty_square(x); }, {x}, opt.op_tolerance, opt);
    r.suite = "tensor";
    out.push_back(r);
  }
  return out;
}

}  // namespace ciaosr
