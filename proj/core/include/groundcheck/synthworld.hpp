#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "groundcheck/alignhead.hpp"
#include "groundcheck/dataset.hpp"
#include "groundcheck/metrics.hpp"

namespace groundcheck {

enum class WorldVariant { sdr, game };

// Feature-space synthesis: objects are unit signature vectors planted at
// patch cells, not rendered pixels. Signatures come from a basis
// vocabulary (channels 1..d_p-1); channel 0 is reserved for a task marker
// at the designated cell in the sdr variant, so task training alone does
// not teach query-conditional grounding.
struct WorldConfig {
  int n_examples = 100;
  int image_height = 32;  // per candidate cell for the game variant
  int image_width = 32;
  int patch_size = 8;
  int n_objects = 3;
  int d_p = 8;
  int d_q = 8;                 // must equal d_p (shared signature space)
  double feature_noise = 0.0;  // sigma_f
  double task_noise = 0.0;     // eta
  WorldVariant variant = WorldVariant::sdr;
  int n_candidates = 6;        // game variant
  std::uint64_t seed = 0;

  void validate() const;
  int grid_h() const { return image_height / patch_size; }
  int grid_w() const { return image_width / patch_size; }
  // Cells per concatenated image (the chance level for grounding).
  int total_cells() const {
    const int per = grid_h() * grid_w();
    return variant == WorldVariant::game ? per * n_candidates : per;
  }
  // Point-task slack small enough that a wrong cell is a miss.
  double eval_slack() const { return patch_size / 4.0; }
};

struct SynthWorld {
  WorldConfig config;
  ExampleSet examples;
  std::vector<FeatureBundle> bundles;
};

SynthWorld gen_world(const WorldConfig& cfg);

// fidelity is the per-phrase probability of grounding a phrase at its true
// location. The simulated predictor grounds phrases in the frame of its
// own task prediction: a wrong task anchor drags its phrase predictions to
// the wrong cell, which is what couples task success to grounding quality.
struct SimPredictor {
  double fidelity = 1.0;
  std::uint64_t seed = 0;
};

std::vector<PredictionRecord> simulate(const SynthWorld& world,
                                       const SimPredictor& predictor);

struct SweepRow {
  double fidelity = 0.0;
  double task_metric = 0.0;  // accuracy
  double mean_iou = 0.0;
  std::optional<double> correlation;
};

std::vector<SweepRow> fidelity_sweep(const WorldConfig& cfg,
                                     const std::vector<double>& fidelities,
                                     double eta);

std::string sweep_rows_to_csv(const std::vector<SweepRow>& rows);

// Report config matched to a world (boxes mode, world slack).
ReportConfig world_report_config(const WorldConfig& cfg);

std::string world_config_to_json(const WorldConfig& cfg);
WorldConfig world_config_from_json(const std::string& json_text);

}  // namespace groundcheck
