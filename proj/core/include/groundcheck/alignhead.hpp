#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "groundcheck/dataset.hpp"
#include "groundcheck/geometry.hpp"
#include "groundcheck/tensor.hpp"

namespace groundcheck {

// Frozen-encoder output for one example: a patch feature grid and token
// representations. The grid covers the image exactly (dims divisible by
// the patch size).
struct FeatureBundle {
  std::string example_id;
  Tensor patches;  // (grid_h, grid_w, d_p)
  Tensor tokens;   // (n_tokens, d_q)
  int image_height = 0;
  int image_width = 0;
  int patch_size = 0;

  int grid_h() const { return static_cast<int>(patches.dim(0)); }
  int grid_w() const { return static_cast<int>(patches.dim(1)); }
  int d_p() const { return static_cast<int>(patches.dim(2)); }
  int n_tokens() const { return static_cast<int>(tokens.dim(0)); }
  int d_q() const { return static_cast<int>(tokens.dim(1)); }
  void validate() const;
};

using QueryVector = std::vector<double>;

struct StageConfig {
  int out_channels = 0;
  int kernel = 4;
  int stride = 2;
  int padding = 1;
};

// Transposed-convolution stages with ReLU after each, a 1x1 projection to
// one channel, bilinear resize to the target dims, then a global softmax.
struct HeadConfig {
  std::vector<StageConfig> stages;
  int target_height = 0;
  int target_width = 0;

  static HeadConfig default_config(int target_height, int target_width);
  void validate() const;
};

std::string head_config_to_json(const HeadConfig& config);
HeadConfig head_config_from_json(const std::string& json_text);

struct StageWeights {
  Tensor kernel;  // (k, k, in_ch, out_ch)
  Tensor bias;    // (out_ch)
};

struct HeadWeights {
  std::vector<StageWeights> stages;
  Tensor projection_kernel;  // (c_last)
  Tensor projection_bias;    // scalar
};

// Uniform in +-sqrt(1/fan_in), seeded.
HeadWeights init_head_weights(const HeadConfig& config, int in_channels,
                              std::uint64_t seed);

std::uint64_t head_checksum(const HeadWeights& w);
void save_head_weights(const HeadWeights& w, const std::string& dir);
HeadWeights load_head_weights(const std::string& dir);

// Arithmetic mean of token vectors over the inclusive span.
QueryVector pool_query(const Tensor& tokens, int span_begin, int span_end);

// (grid_h, grid_w, d_p + d_q): patch features with the query tiled into
// the trailing channels of every cell.
Tensor tile_concat(const Tensor& patches, const QueryVector& query);

// (in - 1) * stride - 2 * padding + kernel
int deconv_output_size(int in, const StageConfig& stage);

struct ForwardTrace {
  std::vector<Tensor> stage_inputs;    // input to each deconv
  std::vector<Tensor> stage_preact;    // deconv output before ReLU
  std::vector<Tensor> stage_outputs;   // after ReLU (probe taps)
  Tensor projected;                    // (h_last, w_last) logits
  Tensor logits;                       // (H, W) after bilinear resize
  SegMap output;                       // global softmax
};

ForwardTrace head_forward(const Tensor& combined, const HeadWeights& weights,
                          const HeadConfig& config);

struct HeadGradients {
  std::vector<StageWeights> stages;    // same shapes as weights
  Tensor projection_kernel;
  Tensor projection_bias;
  Tensor input;                        // filled when requested
};

// Analytic gradients of KL(gold || softmax output) with respect to every
// weight; dL/dz at the pre-softmax layer is (output - gold).
HeadGradients head_backward(const Tensor& combined, const HeadWeights& weights,
                            const HeadConfig& config, const ForwardTrace& trace,
                            const SegMap& gold, bool with_input_grad = false);

// |dx| + |dy| on coordinates normalized to [0, 1] by the image dims.
double l1_point_loss(Point pred, Point gold, ImageDims dims);

struct LossWeights {
  double alpha_task = 0.5;
  double alpha_grounding = 0.5;
  void validate() const;
};

// alpha_task * task + alpha_grounding * mean(grounding); an empty
// grounding list contributes nothing.
double finetune_loss(double task_loss, const std::vector<double>& grounding_losses,
                     const LossWeights& w);

struct TrainHyper {
  double lr = 1e-4;
  double weight_decay = 0.01;
  int steps = 1000;
  int batch_size = 8;
  std::uint64_t seed = 0;
  std::optional<double> ema_decay;  // e.g. 0.9998
  double gaussian_sigma = kDefaultGaussianSigma;  // point-task gold maps
  LossWeights loss_weights;
  int eval_every = 0;      // 0 = no validation curve
  double eval_threshold = 0.5;
};

struct CurvePoint {
  int step = 0;
  double loss = 0.0;
  std::optional<double> val_mean_iou;
};

struct TrainResult {
  HeadWeights weights;
  std::optional<HeadWeights> ema_weights;
  std::vector<CurvePoint> curve;
};

// Mini-batch SGD with decoupled weight decay on finetune_loss. Batching
// order comes from the seed; accumulation is in fixed example order, so a
// run is bit-reproducible at a fixed thread count of one.
TrainResult train_head(const std::vector<FeatureBundle>& bundles,
                       const ExampleSet& examples, const HeadConfig& config,
                       const TrainHyper& hyper);

// Gold map for an example's task annotation: a Gaussian around the target
// point, or the uniform map over the target cell for choice tasks.
SegMap task_gold_map(const Example& ex, double sigma);

// Query span used for the task forward pass: the example's task_query_span
// when present, otherwise the whole token sequence.
std::pair<int, int> task_query_span(const Example& ex);

// Bundle index file: one JSON line per bundle with GTF tensor paths.
void save_bundles(const std::vector<FeatureBundle>& bundles, const std::string& dir);
std::vector<FeatureBundle> load_bundles(const std::string& dir);

}  // namespace groundcheck
