#include "groundcheck/alignhead.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "groundcheck/interp.hpp"
#include "groundcheck/refgame.hpp"
#include "groundcheck/rng.hpp"

namespace groundcheck {

namespace {

using nlohmann::json;

std::string sanitize(const std::string& id) {
  std::string out;
  for (char c : id)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

void fill_uniform(Tensor& t, double bound, rng::Engine& eng) {
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = rng::uniform(eng, -bound, bound);
}

// Transposed convolution, channel-last. Kernel layout (k, k, in, out).
Tensor deconv_forward(const Tensor& in, const StageWeights& w,
                      const StageConfig& cfg) {
  const int hin = static_cast<int>(in.dim(0));
  const int win = static_cast<int>(in.dim(1));
  const int cin = static_cast<int>(in.dim(2));
  const int cout = cfg.out_channels;
  const int hout = deconv_output_size(hin, cfg);
  const int wout = deconv_output_size(win, cfg);
  if (hout < 1 || wout < 1)
    throw GeometryError("deconv stage produces an empty output");
  Tensor out({static_cast<std::size_t>(hout), static_cast<std::size_t>(wout),
              static_cast<std::size_t>(cout)});
  for (int y = 0; y < hout; ++y)
    for (int x = 0; x < wout; ++x)
      for (int oc = 0; oc < cout; ++oc) out.at(y, x, oc) = w.bias[oc];
  for (int iy = 0; iy < hin; ++iy) {
    for (int ix = 0; ix < win; ++ix) {
      for (int ky = 0; ky < cfg.kernel; ++ky) {
        const int oy = iy * cfg.stride - cfg.padding + ky;
        if (oy < 0 || oy >= hout) continue;
        for (int kx = 0; kx < cfg.kernel; ++kx) {
          const int ox = ix * cfg.stride - cfg.padding + kx;
          if (ox < 0 || ox >= wout) continue;
          const double* iv = &in.at(iy, ix, 0);
          double* ov = &out.at(oy, ox, 0);
          for (int ic = 0; ic < cin; ++ic) {
            const double v = iv[ic];
            if (v == 0.0) continue;
            const double* kv = &w.kernel.at4(ky, kx, ic, 0);
            for (int oc = 0; oc < cout; ++oc) ov[oc] += v * kv[oc];
          }
        }
      }
    }
  }
  return out;
}

void deconv_backward(const Tensor& in, const StageWeights& w,
                     const StageConfig& cfg, const Tensor& grad_out,
                     Tensor& grad_in, StageWeights& grad_w) {
  const int hin = static_cast<int>(in.dim(0));
  const int win = static_cast<int>(in.dim(1));
  const int cin = static_cast<int>(in.dim(2));
  const int cout = cfg.out_channels;
  const int hout = static_cast<int>(grad_out.dim(0));
  const int wout = static_cast<int>(grad_out.dim(1));
  for (int y = 0; y < hout; ++y)
    for (int x = 0; x < wout; ++x)
      for (int oc = 0; oc < cout; ++oc) grad_w.bias[oc] += grad_out.at(y, x, oc);
  for (int iy = 0; iy < hin; ++iy) {
    for (int ix = 0; ix < win; ++ix) {
      for (int ky = 0; ky < cfg.kernel; ++ky) {
        const int oy = iy * cfg.stride - cfg.padding + ky;
        if (oy < 0 || oy >= hout) continue;
        for (int kx = 0; kx < cfg.kernel; ++kx) {
          const int ox = ix * cfg.stride - cfg.padding + kx;
          if (ox < 0 || ox >= wout) continue;
          const double* gv = &grad_out.at(oy, ox, 0);
          const double* iv = &in.at(iy, ix, 0);
          double* giv = &grad_in.at(iy, ix, 0);
          for (int ic = 0; ic < cin; ++ic) {
            const double* kv = &w.kernel.at4(ky, kx, ic, 0);
            double* gkv = &grad_w.kernel.at4(ky, kx, ic, 0);
            double acc = 0.0;
            const double v = iv[ic];
            for (int oc = 0; oc < cout; ++oc) {
              acc += gv[oc] * kv[oc];
              gkv[oc] += v * gv[oc];
            }
            giv[ic] += acc;
          }
        }
      }
    }
  }
}

HeadGradients zero_gradients(const HeadWeights& w, const Tensor* input) {
  HeadGradients g;
  for (const auto& s : w.stages)
    g.stages.push_back(StageWeights{Tensor(s.kernel.shape()), Tensor(s.bias.shape())});
  g.projection_kernel = Tensor(w.projection_kernel.shape());
  g.projection_bias = Tensor(w.projection_bias.shape());
  if (input != nullptr) g.input = Tensor(input->shape());
  return g;
}

void scale_add(HeadGradients& acc, const HeadGradients& g, double scale) {
  for (std::size_t s = 0; s < acc.stages.size(); ++s) {
    for (std::size_t i = 0; i < acc.stages[s].kernel.size(); ++i)
      acc.stages[s].kernel[i] += scale * g.stages[s].kernel[i];
    for (std::size_t i = 0; i < acc.stages[s].bias.size(); ++i)
      acc.stages[s].bias[i] += scale * g.stages[s].bias[i];
  }
  for (std::size_t i = 0; i < acc.projection_kernel.size(); ++i)
    acc.projection_kernel[i] += scale * g.projection_kernel[i];
  acc.projection_bias[0] += scale * g.projection_bias[0];
}

void sgd_update(HeadWeights& w, const HeadGradients& g, double lr, double wd) {
  auto update = [lr, wd](Tensor& param, const Tensor& grad) {
    for (std::size_t i = 0; i < param.size(); ++i)
      param[i] -= lr * grad[i] + lr * wd * param[i];
  };
  for (std::size_t s = 0; s < w.stages.size(); ++s) {
    update(w.stages[s].kernel, g.stages[s].kernel);
    update(w.stages[s].bias, g.stages[s].bias);
  }
  update(w.projection_kernel, g.projection_kernel);
  update(w.projection_bias, g.projection_bias);
}

void ema_update(HeadWeights& shadow, const HeadWeights& w, double decay) {
  auto blend = [decay](Tensor& s, const Tensor& v) {
    for (std::size_t i = 0; i < s.size(); ++i)
      s[i] = decay * s[i] + (1.0 - decay) * v[i];
  };
  for (std::size_t s = 0; s < w.stages.size(); ++s) {
    blend(shadow.stages[s].kernel, w.stages[s].kernel);
    blend(shadow.stages[s].bias, w.stages[s].bias);
  }
  blend(shadow.projection_kernel, w.projection_kernel);
  blend(shadow.projection_bias, w.projection_bias);
}

}  // namespace

void FeatureBundle::validate() const {
  if (patches.rank() != 3 || tokens.rank() != 2)
    throw ValidationError("bundle '" + example_id + "': bad tensor ranks");
  if (patch_size <= 0 || image_height <= 0 || image_width <= 0)
    throw ValidationError("bundle '" + example_id + "': bad dims");
  if (image_height % patch_size != 0 || image_width % patch_size != 0)
    throw ValidationError("bundle '" + example_id +
                          "': image dims not divisible by patch size");
  if (grid_h() != image_height / patch_size || grid_w() != image_width / patch_size)
    throw ValidationError("bundle '" + example_id + "': grid does not cover image");
  if (d_p() <= 0 || d_q() <= 0)
    throw ValidationError("bundle '" + example_id + "': feature dims must be positive");
}

HeadConfig HeadConfig::default_config(int target_height, int target_width) {
  HeadConfig c;
  c.stages = {StageConfig{256, 4, 2, 1}, StageConfig{128, 4, 2, 1},
              StageConfig{64, 4, 2, 1}};
  c.target_height = target_height;
  c.target_width = target_width;
  return c;
}

void HeadConfig::validate() const {
  if (stages.empty()) throw ValidationError("head config needs >= 1 stage");
  if (target_height <= 0 || target_width <= 0)
    throw ValidationError("head config target dims must be positive");
  for (const auto& s : stages) {
    if (s.out_channels <= 0 || s.kernel <= 0 || s.stride <= 0 || s.padding < 0)
      throw ValidationError("bad stage config");
  }
}

std::string head_config_to_json(const HeadConfig& config) {
  json j;
  j["stages"] = json::array();
  for (const auto& s : config.stages)
    j["stages"].push_back({{"out_channels", s.out_channels},
                           {"kernel", s.kernel},
                           {"stride", s.stride},
                           {"padding", s.padding}});
  j["target_h"] = config.target_height;
  j["target_w"] = config.target_width;
  return j.dump();
}

HeadConfig head_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("head config json: ") + e.what());
  }
  HeadConfig c;
  for (const auto& js : j.at("stages")) {
    StageConfig s;
    s.out_channels = js.at("out_channels").get<int>();
    s.kernel = js.value("kernel", 4);
    s.stride = js.value("stride", 2);
    s.padding = js.value("padding", 1);
    c.stages.push_back(s);
  }
  c.target_height = j.at("target_h").get<int>();
  c.target_width = j.at("target_w").get<int>();
  c.validate();
  return c;
}

HeadWeights init_head_weights(const HeadConfig& config, int in_channels,
                              std::uint64_t seed) {
  config.validate();
  if (in_channels <= 0) throw ValidationError("in_channels must be positive");
  auto eng = rng::derived_engine(seed, rng::fnv1a("head-init"));
  HeadWeights w;
  int cin = in_channels;
  for (const auto& s : config.stages) {
    StageWeights sw;
    sw.kernel = Tensor({static_cast<std::size_t>(s.kernel),
                        static_cast<std::size_t>(s.kernel),
                        static_cast<std::size_t>(cin),
                        static_cast<std::size_t>(s.out_channels)});
    sw.bias = Tensor({static_cast<std::size_t>(s.out_channels)});
    const double bound = std::sqrt(1.0 / (static_cast<double>(cin) * s.kernel * s.kernel));
    fill_uniform(sw.kernel, bound, eng);
    fill_uniform(sw.bias, bound, eng);
    w.stages.push_back(std::move(sw));
    cin = s.out_channels;
  }
  w.projection_kernel = Tensor({static_cast<std::size_t>(cin)});
  w.projection_bias = Tensor(std::vector<std::size_t>{});
  const double bound = std::sqrt(1.0 / static_cast<double>(cin));
  fill_uniform(w.projection_kernel, bound, eng);
  fill_uniform(w.projection_bias, bound, eng);
  return w;
}

std::uint64_t head_checksum(const HeadWeights& w) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& s : w.stages) {
    h = tensor_checksum(s.kernel, h);
    h = tensor_checksum(s.bias, h);
  }
  h = tensor_checksum(w.projection_kernel, h);
  h = tensor_checksum(w.projection_bias, h);
  return h;
}

QueryVector pool_query(const Tensor& tokens, int span_begin, int span_end) {
  const int t = static_cast<int>(tokens.dim(0));
  const int d = static_cast<int>(tokens.dim(1));
  if (span_begin < 0 || span_begin > span_end || span_end >= t)
    throw ValidationError("pool_query: span out of range");
  QueryVector q(static_cast<std::size_t>(d), 0.0);
  for (int i = span_begin; i <= span_end; ++i)
    for (int c = 0; c < d; ++c) q[c] += tokens.at(i, c);
  const double n = span_end - span_begin + 1;
  for (double& v : q) v /= n;
  return q;
}

Tensor tile_concat(const Tensor& patches, const QueryVector& query) {
  const int gh = static_cast<int>(patches.dim(0));
  const int gw = static_cast<int>(patches.dim(1));
  const int dp = static_cast<int>(patches.dim(2));
  const int dq = static_cast<int>(query.size());
  Tensor out({static_cast<std::size_t>(gh), static_cast<std::size_t>(gw),
              static_cast<std::size_t>(dp + dq)});
  for (int y = 0; y < gh; ++y) {
    for (int x = 0; x < gw; ++x) {
      double* o = &out.at(y, x, 0);
      const double* p = &patches.at(y, x, 0);
      for (int c = 0; c < dp; ++c) o[c] = p[c];
      for (int c = 0; c < dq; ++c) o[dp + c] = query[c];
    }
  }
  return out;
}

int deconv_output_size(int in, const StageConfig& stage) {
  return (in - 1) * stage.stride - 2 * stage.padding + stage.kernel;
}

ForwardTrace head_forward(const Tensor& combined, const HeadWeights& weights,
                          const HeadConfig& config) {
  config.validate();
  if (combined.rank() != 3)
    throw GeometryError("head_forward: combined map must be rank 3");
  if (weights.stages.size() != config.stages.size())
    throw GeometryError("head_forward: weights/config stage count differ");
  if (combined.dim(2) != weights.stages.front().kernel.dim(2))
    throw GeometryError("head_forward: input channels differ from kernel");

  ForwardTrace trace;
  Tensor cur = combined;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    trace.stage_inputs.push_back(cur);
    Tensor pre = deconv_forward(cur, weights.stages[s], config.stages[s]);
    Tensor post = pre;
    for (std::size_t i = 0; i < post.size(); ++i)
      if (post[i] < 0.0) post[i] = 0.0;
    trace.stage_preact.push_back(std::move(pre));
    trace.stage_outputs.push_back(post);
    cur = std::move(post);
  }
  const int h = static_cast<int>(cur.dim(0));
  const int w = static_cast<int>(cur.dim(1));
  const int c = static_cast<int>(cur.dim(2));
  if (c != static_cast<int>(weights.projection_kernel.dim(0)))
    throw GeometryError("head_forward: projection channels differ");
  if (h > config.target_height || w > config.target_width)
    throw GeometryError("head_forward: stage output exceeds target dims");
  Tensor projected({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = weights.projection_bias[0];
      const double* v = &cur.at(y, x, 0);
      for (int ch = 0; ch < c; ++ch) acc += v[ch] * weights.projection_kernel[ch];
      projected.at(y, x) = acc;
    }
  }
  trace.projected = projected;
  trace.logits = (h == config.target_height && w == config.target_width)
                     ? projected
                     : resize_bilinear(projected, config.target_height,
                                       config.target_width);
  trace.output = softmax_global(trace.logits);
  return trace;
}

HeadGradients head_backward(const Tensor& combined, const HeadWeights& weights,
                            const HeadConfig& config, const ForwardTrace& trace,
                            const SegMap& gold, bool with_input_grad) {
  if (gold.dims.height != config.target_height ||
      gold.dims.width != config.target_width)
    throw GeometryError("head_backward: gold dims differ from target");
  HeadGradients grads = zero_gradients(weights, with_input_grad ? &combined : nullptr);

  // dL/dz at the pre-softmax layer is exactly (output - gold).
  Tensor g_logits({static_cast<std::size_t>(config.target_height),
                   static_cast<std::size_t>(config.target_width)});
  for (std::size_t i = 0; i < g_logits.size(); ++i)
    g_logits[i] = trace.output.values[i] - gold.values[i];

  const int h = static_cast<int>(trace.projected.dim(0));
  const int w = static_cast<int>(trace.projected.dim(1));
  Tensor g_projected = (h == config.target_height && w == config.target_width)
                           ? g_logits
                           : resize_bilinear_adjoint(g_logits, h, w);

  // Projection backward.
  const Tensor& last = trace.stage_outputs.back();
  const int c = static_cast<int>(last.dim(2));
  Tensor g_stage({static_cast<std::size_t>(h), static_cast<std::size_t>(w),
                  static_cast<std::size_t>(c)});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double g = g_projected.at(y, x);
      grads.projection_bias[0] += g;
      const double* v = &last.at(y, x, 0);
      double* gs = &g_stage.at(y, x, 0);
      for (int ch = 0; ch < c; ++ch) {
        grads.projection_kernel[ch] += g * v[ch];
        gs[ch] = g * weights.projection_kernel[ch];
      }
    }
  }

  // Stages in reverse: ReLU mask, then deconv adjoints.
  for (int s = static_cast<int>(config.stages.size()) - 1; s >= 0; --s) {
    Tensor g_pre = g_stage;
    const Tensor& pre = trace.stage_preact[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < g_pre.size(); ++i)
      if (pre[i] <= 0.0) g_pre[i] = 0.0;
    const Tensor& stage_in = trace.stage_inputs[static_cast<std::size_t>(s)];
    Tensor g_in(stage_in.shape());
    deconv_backward(stage_in, weights.stages[static_cast<std::size_t>(s)],
                    config.stages[static_cast<std::size_t>(s)], g_pre, g_in,
                    grads.stages[static_cast<std::size_t>(s)]);
    g_stage = std::move(g_in);
  }
  if (with_input_grad) grads.input = std::move(g_stage);
  return grads;
}

double l1_point_loss(Point pred, Point gold, ImageDims dims) {
  if (dims.height <= 0 || dims.width <= 0)
    throw GeometryError("l1_point_loss: empty dims");
  return std::abs(pred.x - gold.x) / dims.width +
         std::abs(pred.y - gold.y) / dims.height;
}

void LossWeights::validate() const {
  if (alpha_task < 0.0 || alpha_grounding < 0.0)
    throw ValidationError("loss weights must be non-negative");
  if (alpha_task == 0.0 && alpha_grounding == 0.0)
    throw ValidationError("loss weights cannot both be zero");
}

double finetune_loss(double task_loss, const std::vector<double>& grounding_losses,
                     const LossWeights& w) {
  w.validate();
  double grounding = 0.0;
  if (!grounding_losses.empty()) {
    for (double g : grounding_losses) grounding += g;
    grounding /= static_cast<double>(grounding_losses.size());
  }
  return w.alpha_task * task_loss + w.alpha_grounding * grounding;
}

std::pair<int, int> task_query_span(const Example& ex) {
  if (ex.task_query_span) return *ex.task_query_span;
  return {0, static_cast<int>(ex.tokens.size()) - 1};
}

SegMap task_gold_map(const Example& ex, double sigma) {
  if (const auto* p = std::get_if<PointTarget>(&ex.task))
    return gold_map_gaussian(p->point, sigma, ex.image_dims);
  const auto& c = std::get<ChoiceTarget>(ex.task);
  if (ex.image_dims.height % c.n_candidates != 0)
    throw ValidationError("example '" + ex.id +
                          "': image height not divisible by candidate count");
  const Layout layout{c.n_candidates, ex.image_dims.height / c.n_candidates,
                      ex.image_dims.width};
  Region r;
  r.dims = ex.image_dims;
  r.boxes.push_back(layout.cell_box(c.index));
  return gold_map_from_region(r);
}

TrainResult train_head(const std::vector<FeatureBundle>& bundles,
                       const ExampleSet& examples, const HeadConfig& config,
                       const TrainHyper& hyper) {
  config.validate();
  hyper.loss_weights.validate();
  std::map<std::string, const FeatureBundle*> by_id;
  for (const auto& b : bundles) {
    b.validate();
    by_id[b.example_id] = &b;
  }
  for (const auto& ex : examples.examples)
    if (!by_id.count(ex.id))
      throw ValidationError("no feature bundle for example '" + ex.id + "'");
  if (examples.examples.empty()) throw ValidationError("train_head: no examples");

  const auto& first = *by_id.at(examples.examples.front().id);
  const int in_channels = first.d_p() + first.d_q();

  TrainResult result;
  result.weights = init_head_weights(config, in_channels, hyper.seed);
  if (hyper.ema_decay) result.ema_weights = result.weights;

  auto eval_mean_iou = [&](const HeadWeights& w) -> std::optional<double> {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& ex : examples.examples) {
      const auto& bundle = *by_id.at(ex.id);
      double ex_total = 0.0;
      std::size_t ex_n = 0;
      for (const auto& phrase : ex.phrases) {
        if (!phrase.gold_region) continue;
        const auto q = pool_query(bundle.tokens, phrase.span_begin, phrase.span_end);
        const auto trace = head_forward(tile_concat(bundle.patches, q), w, config);
        if (trace.output.max_value() <= 0.0) continue;
        ex_total += iou(normalize_threshold(trace.output, hyper.eval_threshold),
                        rasterize(*phrase.gold_region));
        ++ex_n;
      }
      if (ex_n > 0) {
        total += ex_total / static_cast<double>(ex_n);
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
  };

  auto order_eng = rng::derived_engine(hyper.seed, rng::fnv1a("batch-order"));
  std::vector<std::size_t> order = rng::permutation(examples.examples.size(), order_eng);
  std::size_t cursor = 0;
  const std::size_t batch =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(hyper.batch_size, 1)),
                            examples.examples.size());

  for (int step = 0; step < hyper.steps; ++step) {
    std::vector<std::size_t> batch_idx;
    for (std::size_t i = 0; i < batch; ++i) {
      if (cursor == order.size()) {
        order = rng::permutation(examples.examples.size(), order_eng);
        cursor = 0;
      }
      batch_idx.push_back(order[cursor++]);
    }

    HeadGradients acc = zero_gradients(result.weights, nullptr);
    double batch_loss = 0.0;
    for (std::size_t idx : batch_idx) {
      const Example& ex = examples.examples[idx];
      const FeatureBundle& bundle = *by_id.at(ex.id);

      const auto [tb, te] = task_query_span(ex);
      const Tensor combined_task =
          tile_concat(bundle.patches, pool_query(bundle.tokens, tb, te));
      const auto trace_task = head_forward(combined_task, result.weights, config);
      const SegMap gold_task = task_gold_map(ex, hyper.gaussian_sigma);
      const double task_loss = kl_divergence(gold_task, trace_task.output);
      const auto g_task = head_backward(combined_task, result.weights, config,
                                        trace_task, gold_task);
      scale_add(acc, g_task,
                hyper.loss_weights.alpha_task / static_cast<double>(batch_idx.size()));

      std::vector<double> grounding_losses;
      std::vector<std::size_t> annotated;
      for (std::size_t p = 0; p < ex.phrases.size(); ++p)
        if (ex.phrases[p].gold_region) annotated.push_back(p);
      for (std::size_t p : annotated) {
        const auto& phrase = ex.phrases[p];
        const Tensor combined = tile_concat(
            bundle.patches,
            pool_query(bundle.tokens, phrase.span_begin, phrase.span_end));
        const auto trace = head_forward(combined, result.weights, config);
        const SegMap gold = gold_map_from_region(*phrase.gold_region);
        grounding_losses.push_back(kl_divergence(gold, trace.output));
        const auto g = head_backward(combined, result.weights, config, trace, gold);
        scale_add(acc, g,
                  hyper.loss_weights.alpha_grounding /
                      (static_cast<double>(batch_idx.size()) *
                       static_cast<double>(annotated.size())));
      }
      batch_loss += finetune_loss(task_loss, grounding_losses, hyper.loss_weights) /
                    static_cast<double>(batch_idx.size());
    }

    if (!std::isfinite(batch_loss))
      throw TrainingDivergence("train_head: non-finite loss at step " +
                               std::to_string(step));
    sgd_update(result.weights, acc, hyper.lr, hyper.weight_decay);
    if (result.ema_weights)
      ema_update(*result.ema_weights, result.weights, *hyper.ema_decay);

    CurvePoint point;
    point.step = step + 1;
    point.loss = batch_loss;
    if (hyper.eval_every > 0 && (step + 1) % hyper.eval_every == 0)
      point.val_mean_iou = eval_mean_iou(result.weights);
    result.curve.push_back(point);
  }
  return result;
}

void save_head_weights(const HeadWeights& w, const std::string& dir) {
  std::filesystem::create_directories(dir);
  json j;
  j["stages"] = json::array();
  for (std::size_t s = 0; s < w.stages.size(); ++s) {
    const std::string kname = "s" + std::to_string(s) + "_kernel.gtf";
    const std::string bname = "s" + std::to_string(s) + "_bias.gtf";
    write_gtf((std::filesystem::path(dir) / kname).string(), w.stages[s].kernel);
    write_gtf((std::filesystem::path(dir) / bname).string(), w.stages[s].bias);
    j["stages"].push_back({{"kernel", kname}, {"bias", bname}});
  }
  write_gtf((std::filesystem::path(dir) / "proj_kernel.gtf").string(),
            w.projection_kernel);
  write_gtf((std::filesystem::path(dir) / "proj_bias.gtf").string(),
            w.projection_bias);
  j["projection_kernel"] = "proj_kernel.gtf";
  j["projection_bias"] = "proj_bias.gtf";
  std::ofstream out(std::filesystem::path(dir) / "index.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write weights index in " + dir);
  out << j.dump(2) << "\n";
}

HeadWeights load_head_weights(const std::string& dir) {
  std::ifstream in(std::filesystem::path(dir) / "index.json");
  if (!in) throw FormatError("cannot open weights index in " + dir);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("weights index: ") + e.what());
  }
  HeadWeights w;
  for (const auto& js : j.at("stages")) {
    StageWeights sw;
    sw.kernel = read_gtf(
        (std::filesystem::path(dir) / js.at("kernel").get<std::string>()).string());
    sw.bias = read_gtf(
        (std::filesystem::path(dir) / js.at("bias").get<std::string>()).string());
    w.stages.push_back(std::move(sw));
  }
  w.projection_kernel = read_gtf(
      (std::filesystem::path(dir) / j.at("projection_kernel").get<std::string>()).string());
  w.projection_bias = read_gtf(
      (std::filesystem::path(dir) / j.at("projection_bias").get<std::string>()).string());
  return w;
}

void save_bundles(const std::vector<FeatureBundle>& bundles, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / "bundles.jsonl", std::ios::trunc);
  if (!out) throw FormatError("cannot write bundle index in " + dir);
  for (const auto& b : bundles) {
    const std::string stem = sanitize(b.example_id);
    const std::string pfile = stem + "_patches.gtf";
    const std::string tfile = stem + "_tokens.gtf";
    write_gtf((std::filesystem::path(dir) / pfile).string(), b.patches,
              GtfDtype::f64);
    write_gtf((std::filesystem::path(dir) / tfile).string(), b.tokens,
              GtfDtype::f64);
    json j = {{"id", b.example_id},     {"patches", pfile},
              {"tokens", tfile},        {"image_h", b.image_height},
              {"image_w", b.image_width}, {"patch", b.patch_size}};
    out << j.dump() << "\n";
  }
}

std::vector<FeatureBundle> load_bundles(const std::string& dir) {
  const auto index = std::filesystem::path(dir) / "bundles.jsonl";
  std::ifstream in(index);
  if (!in) throw FormatError("cannot open: " + index.string());
  std::vector<FeatureBundle> bundles;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(index.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
    FeatureBundle b;
    b.example_id = j.at("id").get<std::string>();
    b.patches = read_gtf(
        (std::filesystem::path(dir) / j.at("patches").get<std::string>()).string());
    b.tokens = read_gtf(
        (std::filesystem::path(dir) / j.at("tokens").get<std::string>()).string());
    b.image_height = j.at("image_h").get<int>();
    b.image_width = j.at("image_w").get<int>();
    b.patch_size = j.at("patch").get<int>();
    b.validate();
    bundles.push_back(std::move(b));
  }
  return bundles;
}

}  // namespace groundcheck
