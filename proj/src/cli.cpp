#include "ciaosr/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "ciaosr/checkpoint.hpp"
#include "ciaosr/evaluate.hpp"
#include "ciaosr/gradcheck.hpp"
#include "ciaosr/image_io.hpp"
#include "ciaosr/log.hpp"
#include "ciaosr/trainer.hpp"

namespace ciaosr {
namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::vector<double> scales_arg(const std::string& text, const char* flag) {
  try {
    return parse_scale_list(text);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string(flag) + ": " + e.what());
  }
}

std::pair<int, int> parse_size(const std::string& text) {
  const auto x = text.find('x');
  int h = 0, w = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument("");
    std::size_t uh = 0, uw = 0;
    h = std::stoi(text.substr(0, x), &uh);
    w = std::stoi(text.substr(x + 1), &uw);
    if (uh != x || uw != text.size() - x - 1) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw UsageError("--size: expected HxW, got '" + text + "'");
  }
  if (h < 1 || w < 1) throw UsageError("--size: dimensions must be positive");
  return {h, w};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

ModelConfig preset_model(const std::string& preset, HeadVariant variant, int local_size) {
  if (preset == "desk") return desk_model_config(variant, local_size);
  if (preset == "smoke") return smoke_model_config(variant, local_size);
  throw UsageError("--preset: expected desk or smoke, got '" + preset + "'");
}

TrainConfig preset_train(const std::string& preset) {
  if (preset == "desk") return desk_train_config();
  if (preset == "smoke") return smoke_train_config();
  throw UsageError("--preset: expected desk or smoke, got '" + preset + "'");
}

double tail_mean(const std::vector<LossRecord>& losses, std::size_t n) {
  n = std::min(n, losses.size());
  double acc = 0;
  for (std::size_t i = losses.size() - n; i < losses.size(); ++i) acc += losses[i].loss;
  return n ? acc / static_cast<double>(n) : 0.0;
}

TrainOutputs progress_printer(std::ostream& out, const TrainConfig& cfg) {
  TrainOutputs o;
  auto acc = std::make_shared<double>(0.0);
  o.on_step = [&out, acc, iters = cfg.iters_per_epoch, epochs = cfg.epochs](const LossRecord& r) {
    *acc += r.loss;
    if ((r.step + 1) % iters == 0) {
      out << "epoch " << (r.step + 1) / iters << "/" << epochs << " lr " << fmt("%.3g", r.lr) << " mean loss "
          << fmt("%.6f", *acc / iters) << "\n";
      out.flush();
      *acc = 0;
    }
    return true;
  };
  return o;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config, loss_csv, preset = "desk", variant = "full";
  int local_size = 2;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

HeadVariant variant_arg(const std::string& name) {
  try {
    return parse_variant(name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--variant: ") + e.what());
  }
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const HeadVariant variant = variant_arg(a.variant);
  if (a.local_size < 1 || a.local_size > 3) throw UsageError("--local-size: expected 1, 2 or 3");
  ModelConfig mcfg = preset_model(a.preset, variant, a.local_size);
  TrainConfig tcfg = preset_train(a.preset);
  if (!a.config.empty()) {
    const auto bytes = read_file(a.config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("--config: " + std::string(e.what()));
    }
    if (j.contains("model")) mcfg = model_config_from_json(j.at("model"));
    if (j.contains("train")) tcfg = train_config_from_json(j.at("train"), tcfg);
  }
  if (a.seed_opt->count()) tcfg.seed = a.seed;
  TrainOutputs outputs = progress_printer(out, tcfg);
  outputs.checkpoint = a.out;
  outputs.loss_csv = a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv;
  const TrainResult r = train(std::filesystem::path(a.data), mcfg, tcfg, outputs);
  if (r.losses.empty()) {
    out << "no training steps; checkpoint holds the initialization\n";
  } else {
    out << "final loss " << fmt("%.6f", r.losses.back().loss) << " (mean of last 10 steps "
        << fmt("%.6f", tail_mean(r.losses, 10)) << ")\n";
  }
  out << "wrote " << a.out << " and " << outputs.loss_csv->string() << "\n";
  return kExitOk;
}

// ---- sr ------------------------------------------------------------------

struct SrArgs {
  std::string ckpt, in, out, size, steps, gt;
  double scale = 0;
  CLI::Option* scale_opt = nullptr;
};

int cmd_sr(const SrArgs& a, std::ostream& out) {
  std::optional<std::vector<double>> steps;
  if (!a.steps.empty()) {
    steps = scales_arg(a.steps, "--steps");
    for (double s : *steps)
      if (!(s > 1.0)) throw UsageError("--steps: every step must exceed 1");
  }
  if (a.scale_opt->count() && (!(a.scale >= 1.0) || !std::isfinite(a.scale)))
    throw UsageError("--scale: must be a finite real >= 1");
  if (!a.scale_opt->count() && a.size.empty() && !steps) throw UsageError("sr: one of --scale, --size or --steps is required");
  std::optional<std::pair<int, int>> size;
  if (!a.size.empty()) size = parse_size(a.size);

  const SrModel<float> model = model_from_checkpoint(load_checkpoint(a.ckpt));
  const Tensor<float> img = load_image(a.in);
  const int h = static_cast<int>(img.size(1)), w = static_cast<int>(img.size(2));
  int ho, wo;
  if (size) {
    std::tie(ho, wo) = *size;
  } else {
    double s = a.scale;
    if (!a.scale_opt->count()) {
      s = 1;
      for (double v : *steps) s *= v;
    }
    ho = scaled_size(h, s);
    wo = scaled_size(w, s);
  }
  const Tensor<float> sr = steps ? chain_render(model, img, *steps, ho, wo) : super_resolve(model, img, ho, wo);
  save_image(sr, a.out);
  out << "input " << h << "x" << w << " output " << ho << "x" << wo;
  if (steps) {
    out << " steps ";
    for (std::size_t i = 0; i < steps->size(); ++i) out << (i ? "," : "") << (*steps)[i];
  }
  out << "\n";
  if (!a.gt.empty()) {
    const Tensor<float> gt = load_image(a.gt);
    if (gt.shape() != sr.shape())
      throw std::runtime_error("--gt: ground truth is " + shape_string(gt.shape()) + ", output is " +
                               shape_string(sr.shape()));
    const double s = std::max(static_cast<double>(ho) / h, static_cast<double>(wo) / w);
    const MethodScores m = score(sr, gt, s);
    out << "psnr_rgb " << fmt("%.4f", m.psnr_rgb) << " psnr_y " << fmt("%.4f", m.psnr_y) << " ssim "
        << fmt("%.5f", m.ssim) << "\n";
  }
  out << "wrote " << a.out << "\n";
  return kExitOk;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, data, scales = "2,3,4,6,8,12", metric, baseline = "bicubic", baseline_ckpt, out;
};

std::string keep_metric_columns(const std::string& csv, const std::string& metric) {
  if (metric.empty()) return csv;
  const std::string drop = metric == "rgb" ? "psnr_y" : "psnr_rgb";
  std::vector<std::vector<std::string>> rows;
  for (const auto& line : split(csv, '\n'))
    if (!line.empty()) rows.push_back(split(line, ','));
  std::vector<bool> keep(rows[0].size());
  for (std::size_t c = 0; c < keep.size(); ++c) keep[c] = !rows[0][c].ends_with(drop);
  std::ostringstream out;
  for (const auto& row : rows) {
    bool first = true;
    for (std::size_t c = 0; c < row.size(); ++c)
      if (keep[c]) {
        out << (first ? "" : ",") << row[c];
        first = false;
      }
    out << "\n";
  }
  return out.str();
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto scales = scales_arg(a.scales, "--scales");
  if (!a.metric.empty() && a.metric != "rgb" && a.metric != "y") throw UsageError("--metric: expected rgb or y");
  if (a.baseline != "bicubic" && a.baseline != "liif") throw UsageError("--baseline: expected bicubic or liif");
  if (a.baseline == "liif" && a.baseline_ckpt.empty()) throw UsageError("--baseline liif needs --baseline-ckpt");

  const SrModel<float> model = model_from_checkpoint(load_checkpoint(a.ckpt));
  const auto images = load_image_dir(a.data);
  if (images.empty()) throw std::runtime_error("eval: no .png/.ppm images in " + a.data);
  std::optional<SrModel<float>> liif;
  Upscaler liif_up;
  if (a.baseline == "liif") {
    liif.emplace(model_from_checkpoint(load_checkpoint(a.baseline_ckpt)));
    if (liif->config().head.variant != HeadVariant::kLiif)
      throw std::runtime_error("--baseline-ckpt: checkpoint is variant '" + variant_name(liif->config().head.variant) +
                               "', expected liif");
    liif_up = model_upscaler(*liif);
  }
  const auto rows = evaluate(model_upscaler(model), images, scales, liif ? &liif_up : nullptr);
  const std::string csv = keep_metric_columns(metric_csv(rows, liif ? "liif" : ""), a.metric);
  out << csv;
  if (!a.out.empty()) write_text(a.out, csv);
  return kExitOk;
}

// ---- ablate --------------------------------------------------------------

struct AblateArgs {
  std::string data, val, variants = "full,no_nonlocal,mlp_weights,liif", local_sizes = "2", preset = "desk",
                         scales = "2,6", out, ckpt_dir;
  std::uint64_t seed = 0;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  std::vector<HeadVariant> variants;
  for (const auto& name : split(a.variants, ',')) {
    try {
      variants.push_back(parse_variant(name));
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--variants: ") + e.what());
    }
  }
  std::vector<int> sizes;
  for (const auto& s : split(a.local_sizes, ',')) {
    if (s != "1" && s != "2" && s != "3") throw UsageError("--local-size: expected values in {1,2,3}, got '" + s + "'");
    sizes.push_back(std::stoi(s));
  }
  if (variants.empty() || sizes.empty()) throw UsageError("ablate: empty variant or local-size list");
  const auto scales = scales_arg(a.scales, "--scales");
  TrainConfig tcfg = preset_train(a.preset);
  tcfg.seed = a.seed;
  preset_model(a.preset, HeadVariant::kFull, 2);

  const auto train_images = load_image_dir(a.data);
  if (train_images.empty()) throw std::runtime_error("ablate: no .png/.ppm images in " + a.data);
  std::vector<Tensor<float>> val_images;
  if (a.val.empty()) {
    warn_once("ablate: no --val directory; scoring on the training images");
    val_images = train_images;
  } else {
    val_images = load_image_dir(a.val);
    if (val_images.empty()) throw std::runtime_error("ablate: no .png/.ppm images in " + a.val);
  }
  if (!a.ckpt_dir.empty()) std::filesystem::create_directories(a.ckpt_dir);

  std::ostringstream table;
  table << "variant,local_size,params,head_params,final_loss";
  for (double s : scales) table << ",psnr_x" << s << ",bicubic_psnr_x" << s;
  table << "\n";
  std::vector<std::pair<HeadVariant, double>> first_scale_psnr;
  for (HeadVariant v : variants) {
    for (int ls : sizes) {
      // The area-weighted ensemble always uses the 2x2 neighbourhood.
      if (v == HeadVariant::kLiif && ls != 2) {
        if (std::find(sizes.begin(), sizes.end(), 2) != sizes.end()) continue;
        ls = 2;
      }
      const ModelConfig mcfg = preset_model(a.preset, v, ls);
      const std::string tag = variant_name(v) + "_local" + std::to_string(ls);
      out << "training " << tag << "\n";
      out.flush();
      TrainOutputs outputs;
      if (!a.ckpt_dir.empty()) {
        outputs.checkpoint = std::filesystem::path(a.ckpt_dir) / (tag + ".ckpt");
        outputs.loss_csv = std::filesystem::path(a.ckpt_dir) / (tag + ".loss.csv");
      }
      const TrainResult r = train(train_images, mcfg, tcfg, outputs);
      const SrModel<float> model = model_from_checkpoint(r.checkpoint);
      const auto rows = evaluate(model_upscaler(model), val_images, scales);
      table << variant_name(v) << ',' << ls << ',' << count_parameters(model.parameters()) << ','
            << count_parameters(model.head_parameters()) << ',' << fmt("%.6f", tail_mean(r.losses, 10));
      for (double s : scales) {
        const auto it = std::find_if(rows.begin(), rows.end(), [s](const ScaleRow& row) { return row.scale == s; });
        if (it == rows.end())
          table << ",n/a,n/a";
        else
          table << ',' << fmt("%.4f", it->model.psnr_rgb) << ',' << fmt("%.4f", it->bicubic.psnr_rgb);
        if (s == scales.front() && ls == sizes.front() && it != rows.end())
          first_scale_psnr.emplace_back(v, it->model.psnr_rgb);
      }
      table << "\n";
    }
  }
  out << table.str();
  auto find = [&](HeadVariant v) -> std::optional<double> {
    for (const auto& [var, p] : first_scale_psnr)
      if (var == v) return p;
    return std::nullopt;
  };
  const auto full = find(HeadVariant::kFull), mlp = find(HeadVariant::kMlpWeights), li = find(HeadVariant::kLiif);
  if (full && mlp && li) {
    const bool holds = *full >= *mlp && *mlp >= *li;
    out << "note: ordering full >= mlp_weights >= liif at x" << scales.front() << ": "
        << (holds ? "holds" : "does not hold") << " (desk-scale smoke result, not asserted)\n";
  }
  if (!a.out.empty()) write_text(a.out, table.str());
  return kExitOk;
}

// ---- gradcheck -----------------------------------------------------------

struct GradcheckArgs {
  std::string module = "all";
  double eps = 1e-3;
  std::uint64_t seed = 0;
  bool faulty = false;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  if (a.module != "all" && a.module != "tensor" && a.module != "head" && a.module != "nonlocal")
    throw UsageError("--module: expected all, tensor, head or nonlocal");
  if (!(a.eps > 0)) throw UsageError("--eps: must be > 0");
  GradcheckOptions opt;
  opt.eps = a.eps;
  opt.seed = a.seed;
  opt.include_faulty = a.faulty;
  const auto results = run_gradcheck(a.module, opt);
  out << "suite,check,max_rel_error,tolerance,probes,skipped,status,worst_input,worst_analytic,worst_numeric\n";
  bool ok = true;
  for (const auto& r : results) {
    out << r.suite << ',' << r.name << ',' << fmt("%.3e", r.max_rel_error) << ',' << fmt("%.0e", r.tolerance) << ','
        << r.probes << ',' << r.skipped << ',' << (r.passed() ? "PASS" : "FAIL") << ',' << r.worst_input - 1 << ':'
        << r.worst_element << ',' << fmt("%.9g", r.worst_analytic) << ',' << fmt("%.9g", r.worst_numeric) << "\n";
    ok = ok && r.passed();
  }
  out << (ok ? "all checks passed" : "gradient check FAILED") << " (eps " << fmt("%g", a.eps) << ")\n";
  return ok ? kExitOk : kExitRuntime;
}

// ---- bench ---------------------------------------------------------------

struct BenchArgs {
  std::string ckpt, in, size;
  double scale = 4;
  int repeat = 5;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  if (a.repeat < 1) throw UsageError("--repeat: must be >= 1");
  if (!(a.scale >= 1.0) || !std::isfinite(a.scale)) throw UsageError("--scale: must be a finite real >= 1");
  const nlohmann::json header = read_checkpoint_header(a.ckpt);
  std::size_t header_params = 0;
  for (const auto& p : header.at("params")) header_params += shape_numel(p.at("shape").get<Shape>());
  const SrModel<float> model = model_from_checkpoint(load_checkpoint(a.ckpt));
  const Tensor<float> img = load_image(a.in);
  int ho = scaled_size(static_cast<int>(img.size(1)), a.scale), wo = scaled_size(static_cast<int>(img.size(2)), a.scale);
  if (!a.size.empty()) std::tie(ho, wo) = parse_size(a.size);

  std::vector<double> ms;
  for (int i = 0; i < a.repeat; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor<float> sr = super_resolve(model, img, ho, wo);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                          : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  out << "metric,value\n";
  out << "variant," << variant_name(model.config().head.variant) << "\n";
  out << "params," << count_parameters(model.parameters()) << "\n";
  out << "params_from_header," << header_params << "\n";
  out << "head_params," << count_parameters(model.head_parameters()) << "\n";
  out << "input," << img.size(1) << "x" << img.size(2) << "\n";
  out << "output," << ho << "x" << wo << "\n";
  out << "repeat," << a.repeat << "\n";
  out << "median_ms," << fmt("%.3f", median) << "\n";
  out << "queries_per_sec," << fmt("%.1f", static_cast<double>(ho) * wo / (median / 1000.0)) << "\n";
  return kExitOk;
}

// ---- make-textures -------------------------------------------------------

struct TextureArgs {
  std::string out;
  int count = 8;
  int size = 96;
  std::uint64_t seed = 0;
};

int cmd_textures(const TextureArgs& a, std::ostream& out) {
  if (a.count < 1 || a.size < 8) throw UsageError("make-textures: --count >= 1 and --size >= 8");
  write_texture_set(a.out, a.count, a.size, a.seed);
  out << "wrote " << a.count << " textures of " << a.size << "x" << a.size << " to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Arbitrary-scale image super-resolution with implicit attention.", "ciaosr");
  app.require_subcommand(1);
  app.fallthrough(false);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint plus loss CSV");
  train_cmd->add_option("--data", ta.data, "Directory of training images (.png/.ppm)")->required();
  train_cmd->add_option("--out", ta.out, "Checkpoint path")->required();
  train_cmd->add_option("--config", ta.config, "JSON file with optional \"model\" and \"train\" objects");
  train_cmd->add_option("--preset", ta.preset, "desk or smoke (default desk)");
  train_cmd->add_option("--variant", ta.variant, "full, no_nonlocal, mlp_weights or liif");
  train_cmd->add_option("--local-size", ta.local_size, "Local ensemble size 1, 2 or 3");
  train_cmd->add_option("--loss-csv", ta.loss_csv, "Loss log path (default <out>.loss.csv)");
  ta.seed_opt = train_cmd->add_option("--seed", ta.seed, "RNG seed");

  SrArgs sa;
  auto* sr_cmd = app.add_subcommand("sr", "Super-resolve one image");
  sr_cmd->add_option("--ckpt", sa.ckpt, "Checkpoint")->required();
  sr_cmd->add_option("--in", sa.in, "Input image")->required();
  sr_cmd->add_option("--out", sa.out, "Output image (.png or .ppm)")->required();
  sa.scale_opt = sr_cmd->add_option("--scale", sa.scale, "Real magnification >= 1");
  auto* size_opt = sr_cmd->add_option("--size", sa.size, "Exact output size HxW");
  sr_cmd->add_option("--steps", sa.steps, "Render through a chain of scales, e.g. 2,6");
  sr_cmd->add_option("--gt", sa.gt, "Ground truth; prints PSNR/SSIM of the output");
  sa.scale_opt->excludes(size_opt);

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a directory of GT images");
  eval_cmd->add_option("--ckpt", ea.ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--data", ea.data, "Directory of GT images")->required();
  eval_cmd->add_option("--scales", ea.scales, "Comma-separated scales (default 2,3,4,6,8,12)");
  eval_cmd->add_option("--metric", ea.metric, "Only report rgb or y PSNR (default both)");
  eval_cmd->add_option("--baseline", ea.baseline, "bicubic (always reported) or liif");
  eval_cmd->add_option("--baseline-ckpt", ea.baseline_ckpt, "Checkpoint of the liif baseline");
  eval_cmd->add_option("--out", ea.out, "Also write the CSV here");

  AblateArgs aa;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare head variants under one preset and seed");
  ablate_cmd->add_option("--data", aa.data, "Directory of training images")->required();
  ablate_cmd->add_option("--val", aa.val, "Held-out images for scoring (default: training images)");
  ablate_cmd->add_option("--variants", aa.variants, "Comma-separated variants");
  ablate_cmd->add_option("--local-size", aa.local_sizes, "Comma-separated local sizes (default 2)");
  ablate_cmd->add_option("--preset", aa.preset, "desk or smoke (default desk)");
  ablate_cmd->add_option("--scales", aa.scales, "Scoring scales (default 2,6)");
  ablate_cmd->add_option("--seed", aa.seed, "RNG seed");
  ablate_cmd->add_option("--out", aa.out, "Also write the table here");
  ablate_cmd->add_option("--ckpt-dir", aa.ckpt_dir, "Keep each variant's checkpoint and loss CSV here");

  GradcheckArgs ga;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every backward rule");
  grad_cmd->add_option("--module", ga.module, "all, tensor, head or nonlocal");
  grad_cmd->add_option("--eps", ga.eps, "Central-difference step (default 1e-3)");
  grad_cmd->add_option("--seed", ga.seed, "RNG seed");
  grad_cmd->add_flag("--inject-faulty", ga.faulty, "")->group("");

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "Parameter counts and render timing");
  bench_cmd->add_option("--ckpt", ba.ckpt, "Checkpoint")->required();
  bench_cmd->add_option("--in", ba.in, "Input image")->required();
  auto* bench_scale = bench_cmd->add_option("--scale", ba.scale, "Magnification (default 4)");
  auto* bench_size = bench_cmd->add_option("--size", ba.size, "Exact output size HxW");
  bench_cmd->add_option("--repeat", ba.repeat, "Timed renders; the median is reported (default 5)");
  bench_scale->excludes(bench_size);

  TextureArgs xa;
  auto* tex_cmd = app.add_subcommand("make-textures", "Write a seeded synthetic texture set");
  tex_cmd->add_option("--out", xa.out, "Output directory")->required();
  tex_cmd->add_option("--count", xa.count, "Number of images (default 8)");
  tex_cmd->add_option("--size", xa.size, "Side length in pixels (default 96)");
  tex_cmd->add_option("--seed", xa.seed, "RNG seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    CLI::App* shown = &app;
    for (auto* sub : app.get_subcommands({}))
      if (sub->parsed()) shown = sub;
    err << shown->help();
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(ta, out);
    if (sr_cmd->parsed()) return cmd_sr(sa, out);
    if (eval_cmd->parsed()) return cmd_eval(ea, out);
    if (ablate_cmd->parsed()) return cmd_ablate(aa, out);
    if (grad_cmd->parsed()) return cmd_gradcheck(ga, out);
    if (bench_cmd->parsed()) return cmd_bench(ba, out);
    if (tex_cmd->parsed()) return cmd_textures(xa, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ciaosr
