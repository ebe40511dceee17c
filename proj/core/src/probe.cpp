#include "groundcheck/probe.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "groundcheck/interp.hpp"
#include "groundcheck/rng.hpp"

namespace groundcheck {

namespace {

std::string sanitize(const std::string& id) {
  std::string out;
  for (char c : id)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

Tensor probe_logits(const ProbeFeatures& features, const ProbeWeights& weights) {
  const int h = static_cast<int>(features.map.dim(0));
  const int w = static_cast<int>(features.map.dim(1));
  const int c = static_cast<int>(features.map.dim(2));
  if (c != static_cast<int>(weights.weights.size()))
    throw GeometryError("probe: weight count differs from channels");
  Tensor logits({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* v = &features.map.at(y, x, 0);
      double acc = weights.bias;
      for (int ch = 0; ch < c; ++ch) acc += v[ch] * weights.weights[ch];
      logits.at(y, x) = acc;
    }
  }
  return logits;
}

}  // namespace

ProbeFeatures tap_concat(const std::vector<Tensor>& stage_maps) {
  if (stage_maps.empty()) throw ValidationError("tap_concat: no stage maps");
  for (const auto& m : stage_maps)
    if (m.rank() != 3) throw ValidationError("tap_concat: stage maps must be rank 3");
  const int h = static_cast<int>(stage_maps.back().dim(0));
  const int w = static_cast<int>(stage_maps.back().dim(1));
  int c_total = 0;
  for (const auto& m : stage_maps) c_total += static_cast<int>(m.dim(2));

  ProbeFeatures out;
  out.map = Tensor({static_cast<std::size_t>(h), static_cast<std::size_t>(w),
                    static_cast<std::size_t>(c_total)});
  int offset = 0;
  for (const auto& m : stage_maps) {
    const Tensor resized =
        (static_cast<int>(m.dim(0)) == h && static_cast<int>(m.dim(1)) == w)
            ? m
            : resize_bilinear(m, h, w);
    const int c = static_cast<int>(resized.dim(2));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch)
          out.map.at(y, x, offset + ch) = resized.at(y, x, ch);
    offset += c;
  }
  return out;
}

SegMap probe_forward(const ProbeFeatures& features, const ProbeWeights& weights,
                     ImageDims target) {
  const Tensor logits = probe_logits(features, weights);
  const Tensor resized =
      (static_cast<int>(logits.dim(0)) == target.height &&
       static_cast<int>(logits.dim(1)) == target.width)
          ? logits
          : resize_bilinear(logits, target.height, target.width);
  return softmax_global(resized);
}

ProbeBackwardResult probe_backward(const ProbeFeatures& features,
                                   const ProbeWeights& weights,
                                   const SegMap& gold) {
  ProbeBackwardResult result;
  result.output = probe_forward(features, weights, gold.dims);
  result.loss = kl_divergence(gold, result.output);

  // dL/dz = output - gold at the resized logits, pulled back through the
  // resize and the per-pixel linear map.
  Tensor g_logits({static_cast<std::size_t>(gold.dims.height),
                   static_cast<std::size_t>(gold.dims.width)});
  for (std::size_t i = 0; i < g_logits.size(); ++i)
    g_logits[i] = result.output.values[i] - gold.values[i];

  const int h = static_cast<int>(features.map.dim(0));
  const int w = static_cast<int>(features.map.dim(1));
  const int c = static_cast<int>(features.map.dim(2));
  const Tensor g_small =
      (h == gold.dims.height && w == gold.dims.width)
          ? g_logits
          : resize_bilinear_adjoint(g_logits, h, w);

  result.grad.weights.assign(static_cast<std::size_t>(c), 0.0);
  result.grad.bias = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double g = g_small.at(y, x);
      result.grad.bias += g;
      const double* v = &features.map.at(y, x, 0);
      for (int ch = 0; ch < c; ++ch) result.grad.weights[ch] += g * v[ch];
    }
  }
  return result;
}

ProbeTrainResult train_probe_samples(const std::vector<ProbeSample>& samples,
                                     const ProbeHyper& hyper) {
  if (samples.empty()) throw ValidationError("train_probe: no samples");
  const int c = static_cast<int>(samples.front().features.map.dim(2));
  for (const auto& s : samples)
    if (static_cast<int>(s.features.map.dim(2)) != c)
      throw ValidationError("train_probe: inconsistent channel counts");

  ProbeTrainResult result;
  result.weights.weights.assign(static_cast<std::size_t>(c), 0.0);
  result.weights.bias = 0.0;

  std::vector<SegMap> golds;
  golds.reserve(samples.size());
  for (const auto& s : samples) golds.push_back(gold_map_from_region(s.gold));

  auto eval_mean_iou = [&]() -> std::optional<double> {
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const SegMap out =
          probe_forward(samples[i].features, result.weights, golds[i].dims);
      if (out.max_value() <= 0.0) continue;
      total += iou(normalize_threshold(out, hyper.eval_threshold),
                   rasterize(samples[i].gold));
    }
    return total / static_cast<double>(samples.size());
  };

  auto order_eng = rng::derived_engine(hyper.seed, rng::fnv1a("probe-order"));
  std::vector<std::size_t> order = rng::permutation(samples.size(), order_eng);
  std::size_t cursor = 0;
  const std::size_t batch = std::min<std::size_t>(
      static_cast<std::size_t>(std::max(hyper.batch_size, 1)), samples.size());

  for (int step = 0; step < hyper.steps; ++step) {
    std::vector<double> g_w(static_cast<std::size_t>(c), 0.0);
    double g_b = 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      if (cursor == order.size()) {
        order = rng::permutation(samples.size(), order_eng);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      const auto r = probe_backward(samples[idx].features, result.weights, golds[idx]);
      loss += r.loss / static_cast<double>(batch);
      for (int ch = 0; ch < c; ++ch)
        g_w[static_cast<std::size_t>(ch)] +=
            r.grad.weights[static_cast<std::size_t>(ch)] / static_cast<double>(batch);
      g_b += r.grad.bias / static_cast<double>(batch);
    }
    if (!std::isfinite(loss))
      throw TrainingDivergence("train_probe: non-finite loss at step " +
                               std::to_string(step));
    for (int ch = 0; ch < c; ++ch)
      result.weights.weights[static_cast<std::size_t>(ch)] -=
          hyper.lr * g_w[static_cast<std::size_t>(ch)];
    result.weights.bias -= hyper.lr * g_b;

    CurvePoint point;
    point.step = step + 1;
    point.loss = loss;
    if (hyper.eval_every > 0 && (step + 1) % hyper.eval_every == 0)
      point.val_mean_iou = eval_mean_iou();
    result.curve.push_back(point);
  }
  return result;
}

std::vector<ProbeSample> collect_probe_samples(
    const std::vector<FeatureBundle>& bundles, const ExampleSet& examples,
    const HeadWeights& head, const HeadConfig& config,
    const std::string& cache_dir) {
  std::map<std::string, const FeatureBundle*> by_id;
  for (const auto& b : bundles) by_id[b.example_id] = &b;
  const std::uint64_t checksum = head_checksum(head);
  std::ostringstream key;
  key << std::hex << checksum;
  if (!cache_dir.empty()) std::filesystem::create_directories(cache_dir);

  std::vector<ProbeSample> samples;
  for (const auto& ex : examples.examples) {
    auto it = by_id.find(ex.id);
    if (it == by_id.end())
      throw ValidationError("no feature bundle for example '" + ex.id + "'");
    const FeatureBundle& bundle = *it->second;
    for (std::size_t p = 0; p < ex.phrases.size(); ++p) {
      const auto& phrase = ex.phrases[p];
      if (!phrase.gold_region) continue;

      std::vector<Tensor> stage_maps;
      bool from_cache = false;
      if (!cache_dir.empty()) {
        from_cache = true;
        for (std::size_t s = 0; s < config.stages.size(); ++s) {
          const auto path = std::filesystem::path(cache_dir) /
                            (key.str() + "_" + sanitize(ex.id) + "_p" +
                             std::to_string(p) + "_s" + std::to_string(s) + ".gtf");
          if (!std::filesystem::exists(path)) {
            from_cache = false;
            stage_maps.clear();
            break;
          }
          stage_maps.push_back(read_gtf(path.string()));
        }
      }
      if (!from_cache) {
        const auto q = pool_query(bundle.tokens, phrase.span_begin, phrase.span_end);
        const auto trace = head_forward(tile_concat(bundle.patches, q), head, config);
        stage_maps = trace.stage_outputs;
        if (!cache_dir.empty()) {
          for (std::size_t s = 0; s < stage_maps.size(); ++s) {
            const auto path = std::filesystem::path(cache_dir) /
                              (key.str() + "_" + sanitize(ex.id) + "_p" +
                               std::to_string(p) + "_s" + std::to_string(s) + ".gtf");
            write_gtf(path.string(), stage_maps[s]);
          }
        }
      }
      ProbeSample sample;
      sample.features = tap_concat(stage_maps);
      sample.gold = *phrase.gold_region;
      samples.push_back(std::move(sample));
    }
  }
  return samples;
}

ProbeTrainResult train_probe(const std::vector<FeatureBundle>& bundles,
                             const ExampleSet& examples, const HeadWeights& head,
                             const HeadConfig& config, const std::string& cache_dir,
                             const ProbeHyper& hyper) {
  const std::uint64_t before = head_checksum(head);
  auto samples = collect_probe_samples(bundles, examples, head, config, cache_dir);
  auto result = train_probe_samples(samples, hyper);
  if (head_checksum(head) != before)
    throw ValidationError("train_probe: head weights changed during probing");
  return result;
}

void save_probe_weights(const ProbeWeights& w, const std::string& path) {
  Tensor t({w.weights.size() + 1});
  for (std::size_t i = 0; i < w.weights.size(); ++i) t[i] = w.weights[i];
  t[w.weights.size()] = w.bias;
  write_gtf(path, t);
}

ProbeWeights load_probe_weights(const std::string& path) {
  const Tensor t = read_gtf(path);
  if (t.rank() != 1 || t.size() < 1)
    throw FormatError("probe weights must be a rank-1 tensor: " + path);
  ProbeWeights w;
  w.weights.assign(t.data(), t.data() + t.size() - 1);
  w.bias = t[t.size() - 1];
  return w;
}

}  // namespace groundcheck
