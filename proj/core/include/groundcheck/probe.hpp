#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "groundcheck/alignhead.hpp"
#include "groundcheck/geometry.hpp"
#include "groundcheck/tensor.hpp"

namespace groundcheck {

// Stage maps interpolated to the last stage's spatial size and
// channel-concatenated in stage order.
struct ProbeFeatures {
  Tensor map;  // (h_last, w_last, c_total)
};

// A per-pixel linear functional: one weight per channel plus a bias.
struct ProbeWeights {
  std::vector<double> weights;
  double bias = 0.0;
};

ProbeFeatures tap_concat(const std::vector<Tensor>& stage_maps);

// Per-pixel dot product, bilinear resize to the target dims, global softmax.
SegMap probe_forward(const ProbeFeatures& features, const ProbeWeights& weights,
                     ImageDims target);

struct ProbeGradients {
  std::vector<double> weights;
  double bias = 0.0;
};

// KL(gold || probe output) plus its analytic gradient.
struct ProbeBackwardResult {
  double loss = 0.0;
  SegMap output;
  ProbeGradients grad;
};

ProbeBackwardResult probe_backward(const ProbeFeatures& features,
                                   const ProbeWeights& weights,
                                   const SegMap& gold);

struct ProbeHyper {
  double lr = 1e-2;
  int steps = 500;
  int batch_size = 8;
  std::uint64_t seed = 0;
  int eval_every = 0;
  double eval_threshold = 0.5;
};

struct ProbeSample {
  ProbeFeatures features;
  Region gold;
};

struct ProbeTrainResult {
  ProbeWeights weights;
  std::vector<CurvePoint> curve;
};

// SGD on KL over (features, gold region) samples. Convex in the weights
// for fixed features.
ProbeTrainResult train_probe_samples(const std::vector<ProbeSample>& samples,
                                     const ProbeHyper& hyper);

// Full protocol: taps stage maps from head forward passes (cached to GTF
// under cache_dir, keyed by head checksum, example and phrase), then
// trains the probe on phrase annotations. Asserts the head weights are
// unchanged afterwards.
ProbeTrainResult train_probe(const std::vector<FeatureBundle>& bundles,
                             const ExampleSet& examples, const HeadWeights& head,
                             const HeadConfig& config, const std::string& cache_dir,
                             const ProbeHyper& hyper);

// Probe samples for an example set, loading or filling the cache.
std::vector<ProbeSample> collect_probe_samples(
    const std::vector<FeatureBundle>& bundles, const ExampleSet& examples,
    const HeadWeights& head, const HeadConfig& config,
    const std::string& cache_dir);

void save_probe_weights(const ProbeWeights& w, const std::string& path);
ProbeWeights load_probe_weights(const std::string& path);

}  // namespace groundcheck
