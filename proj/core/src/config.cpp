#include "groundcheck/config.hpp"

#include <nlohmann/json.hpp>

#include "groundcheck/alignhead.hpp"
#include "groundcheck/metrics.hpp"

namespace groundcheck {

FlavorDefaults kilogram_rg_defaults() {
  FlavorDefaults d;
  d.n_candidates = 10;
  d.n_distractors = 9;
  d.cell_height = 200;
  d.cell_width = 200;
  d.top_m = 20;
  return d;
}

FlavorDefaults flickr_rg_defaults() {
  FlavorDefaults d;
  d.n_candidates = 6;
  d.n_distractors = 5;
  d.cell_height = 384;
  d.cell_width = 384;
  d.top_m = 20;
  return d;
}

std::vector<double> default_sweep_fractions() {
  return {0.0, 5.0, 10.0, 20.0, 50.0, 70.0, 100.0};
}

std::string protocol_defaults_json() {
  const TrainHyper hyper;
  const LossWeights weights;
  nlohmann::json j;
  j["slack_radius"] = kDefaultSlackRadius;
  j["recall_iou_threshold"] = kDefaultRecallIou;
  j["gaussian_sigma"] = kDefaultGaussianSigma;
  j["alpha_task"] = weights.alpha_task;
  j["alpha_grounding"] = weights.alpha_grounding;
  j["lr"] = hyper.lr;
  j["weight_decay"] = hyper.weight_decay;
  j["ema_decay"] = 0.9998;
  const auto kg = kilogram_rg_defaults();
  j["kilogram_rg"] = {{"n_candidates", kg.n_candidates},
                      {"n_distractors", kg.n_distractors},
                      {"cell_height", kg.cell_height},
                      {"cell_width", kg.cell_width},
                      {"top_m", kg.top_m}};
  const auto fl = flickr_rg_defaults();
  j["flickr_rg"] = {{"n_candidates", fl.n_candidates},
                    {"n_distractors", fl.n_distractors},
                    {"cell_height", fl.cell_height},
                    {"cell_width", fl.cell_width},
                    {"top_m", fl.top_m}};
  j["sweep_fractions"] = default_sweep_fractions();
  return j.dump(2);
}

}  // namespace groundcheck
