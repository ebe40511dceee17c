#include "groundcheck/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "groundcheck/refgame.hpp"
#include "groundcheck/rng.hpp"

namespace groundcheck {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

BoundingBox cell_pixel_box(int cell, int grid_w, int patch) {
  const int cy = cell / grid_w;
  const int cx = cell % grid_w;
  return BoundingBox{cx * patch, cy * patch, (cx + 1) * patch, (cy + 1) * patch};
}

Point cell_center(const BoundingBox& box) {
  return Point{box.x_min + (box.width() - 1) / 2.0,
               box.y_min + (box.height() - 1) / 2.0};
}

void add_noise(Tensor& t, double sigma, rng::Engine& eng) {
  if (sigma <= 0.0) return;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += sigma * rng::gaussian(eng);
}

struct TextPlan {
  std::string text;
  std::vector<std::pair<int, int>> phrase_spans;
  int n_tokens = 0;
};

// "find the obj<a> , the obj<b> , ..." — alnum words plus comma tokens so
// the raw string re-tokenizes to exactly this layout.
TextPlan make_text(const std::vector<int>& signatures) {
  TextPlan plan;
  std::vector<std::string> tokens{"find"};
  for (int s : signatures) {
    const int begin = static_cast<int>(tokens.size());
    tokens.push_back("the");
    tokens.push_back("obj" + std::to_string(s));
    plan.phrase_spans.emplace_back(begin, begin + 1);
    tokens.push_back(",");
  }
  std::string text;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) text += " ";
    text += tokens[i];
  }
  plan.text = text;
  plan.n_tokens = static_cast<int>(tokens.size());
  return plan;
}

// Token vectors: phrase tokens carry their object's signature; filler
// tokens are zero. Everything gets feature noise on top.
Tensor make_tokens(const TextPlan& plan, const std::vector<int>& signatures,
                   int d_q, double noise, rng::Engine& eng) {
  Tensor tokens({static_cast<std::size_t>(plan.n_tokens),
                 static_cast<std::size_t>(d_q)});
  for (std::size_t i = 0; i < signatures.size(); ++i) {
    const auto [b, e] = plan.phrase_spans[i];
    for (int t = b; t <= e; ++t) tokens.at(t, signatures[i]) = 1.0;
  }
  add_noise(tokens, noise, eng);
  return tokens;
}

}  // namespace

void WorldConfig::validate() const {
  if (n_examples <= 0) throw ValidationError("world: n_examples must be positive");
  if (patch_size <= 0 || image_height % patch_size != 0 ||
      image_width % patch_size != 0)
    throw ValidationError("world: image dims must be divisible by patch size");
  if (d_p != d_q)
    throw ValidationError("world: d_p and d_q must match (shared signature space)");
  if (n_objects < 1 || n_objects > d_p - 1)
    throw ValidationError("world: n_objects must be in [1, d_p - 1]");
  if (n_objects > grid_h() * grid_w())
    throw ValidationError("world: more objects than grid cells");
  if (feature_noise < 0.0) throw ValidationError("world: feature noise must be >= 0");
  if (task_noise < 0.0 || task_noise > 1.0)
    throw ValidationError("world: task noise must be in [0, 1]");
  if (variant == WorldVariant::game && n_candidates < 2)
    throw ValidationError("world: game variant needs >= 2 candidates");
}

SynthWorld gen_world(const WorldConfig& cfg) {
  cfg.validate();
  SynthWorld world;
  world.config = cfg;
  world.examples.split = "train";
  world.examples.provenance = "synthworld seed " + std::to_string(cfg.seed);

  const int gh = cfg.grid_h(), gw = cfg.grid_w();
  const int cells_per_image = gh * gw;

  for (int e = 0; e < cfg.n_examples; ++e) {
    auto eng = rng::derived_engine(cfg.seed, static_cast<std::uint64_t>(e));
    Example ex;
    ex.id = "ex" + std::to_string(e);

    // Signature indices leave channel 0 free for the task marker.
    auto pick_signatures = [&]() {
      auto raw = rng::sample_without_replacement(
          static_cast<std::size_t>(cfg.d_p - 1),
          static_cast<std::size_t>(cfg.n_objects), eng);
      std::vector<int> sig;
      for (auto r : raw) sig.push_back(static_cast<int>(r) + 1);
      return sig;
    };

    if (cfg.variant == WorldVariant::sdr) {
      const auto signatures = pick_signatures();
      const auto cells = rng::sample_without_replacement(
          static_cast<std::size_t>(cells_per_image),
          static_cast<std::size_t>(cfg.n_objects), eng);

      ex.image_dims = ImageDims{cfg.image_height, cfg.image_width};
      ex.image_ref = "synth://" + ex.id;
      const TextPlan plan = make_text(signatures);
      ex.text = plan.text;
      ex.tokens = tokenize(plan.text);
      ex.text_id = "txt" + std::to_string(e);

      FeatureBundle bundle;
      bundle.example_id = ex.id;
      bundle.image_height = cfg.image_height;
      bundle.image_width = cfg.image_width;
      bundle.patch_size = cfg.patch_size;
      bundle.patches = Tensor({static_cast<std::size_t>(gh),
                               static_cast<std::size_t>(gw),
                               static_cast<std::size_t>(cfg.d_p)});
      add_noise(bundle.patches, cfg.feature_noise, eng);
      for (int i = 0; i < cfg.n_objects; ++i) {
        const int cell = static_cast<int>(cells[static_cast<std::size_t>(i)]);
        bundle.patches.at(cell / gw, cell % gw, signatures[static_cast<std::size_t>(i)]) = 1.0;
      }
      // Task marker at the designated (first) object's cell.
      const int designated = static_cast<int>(cells[0]);
      bundle.patches.at(designated / gw, designated % gw, 0) = 1.0;
      bundle.tokens = make_tokens(plan, signatures, cfg.d_q, cfg.feature_noise, eng);

      for (int i = 0; i < cfg.n_objects; ++i) {
        Phrase ph;
        ph.span_begin = plan.phrase_spans[static_cast<std::size_t>(i)].first;
        ph.span_end = plan.phrase_spans[static_cast<std::size_t>(i)].second;
        ph.surface = "the obj" + std::to_string(signatures[static_cast<std::size_t>(i)]);
        Region r;
        r.dims = ex.image_dims;
        r.boxes.push_back(cell_pixel_box(static_cast<int>(cells[static_cast<std::size_t>(i)]),
                                         gw, cfg.patch_size));
        ph.gold_region = std::move(r);
        ex.phrases.push_back(std::move(ph));
      }
      ex.task = PointTarget{cell_center(*ex.phrases.front().gold_region->boxes.begin())};
      world.bundles.push_back(std::move(bundle));
    } else {
      // Game variant: candidates stacked vertically; the text describes
      // the target candidate's objects.
      const int n_cand = cfg.n_candidates;
      ex.image_dims = ImageDims{cfg.image_height * n_cand, cfg.image_width};
      ex.image_ref = "synth://" + ex.id;
      const int target = static_cast<int>(rng::bounded(eng, static_cast<std::uint64_t>(n_cand)));

      FeatureBundle bundle;
      bundle.example_id = ex.id;
      bundle.image_height = ex.image_dims.height;
      bundle.image_width = ex.image_dims.width;
      bundle.patch_size = cfg.patch_size;
      bundle.patches = Tensor({static_cast<std::size_t>(gh * n_cand),
                               static_cast<std::size_t>(gw),
                               static_cast<std::size_t>(cfg.d_p)});
      add_noise(bundle.patches, cfg.feature_noise, eng);

      std::vector<int> target_signatures;
      std::vector<int> target_cells;
      for (int c = 0; c < n_cand; ++c) {
        const auto signatures = pick_signatures();
        const auto cells = rng::sample_without_replacement(
            static_cast<std::size_t>(cells_per_image),
            static_cast<std::size_t>(cfg.n_objects), eng);
        for (int i = 0; i < cfg.n_objects; ++i) {
          const int cell = static_cast<int>(cells[static_cast<std::size_t>(i)]);
          const int row = c * gh + cell / gw;
          bundle.patches.at(row, cell % gw, signatures[static_cast<std::size_t>(i)]) = 1.0;
        }
        if (c == target) {
          target_signatures = signatures;
          for (int i = 0; i < cfg.n_objects; ++i)
            target_cells.push_back(static_cast<int>(cells[static_cast<std::size_t>(i)]));
        }
      }

      const TextPlan plan = make_text(target_signatures);
      ex.text = plan.text;
      ex.tokens = tokenize(plan.text);
      ex.text_id = "cap" + std::to_string(e);
      bundle.tokens = make_tokens(plan, target_signatures, cfg.d_q, cfg.feature_noise, eng);

      for (int i = 0; i < cfg.n_objects; ++i) {
        Phrase ph;
        ph.span_begin = plan.phrase_spans[static_cast<std::size_t>(i)].first;
        ph.span_end = plan.phrase_spans[static_cast<std::size_t>(i)].second;
        ph.surface = "the obj" + std::to_string(target_signatures[static_cast<std::size_t>(i)]);
        BoundingBox box = cell_pixel_box(target_cells[static_cast<std::size_t>(i)], gw,
                                         cfg.patch_size);
        box.y_min += target * cfg.image_height;
        box.y_max += target * cfg.image_height;
        Region r;
        r.dims = ex.image_dims;
        r.boxes.push_back(box);
        ph.gold_region = std::move(r);
        ex.phrases.push_back(std::move(ph));
      }
      ex.task = ChoiceTarget{target, n_cand};
      world.bundles.push_back(std::move(bundle));
    }
    ex.validate();
    world.examples.examples.push_back(std::move(ex));
  }
  return world;
}

std::vector<PredictionRecord> simulate(const SynthWorld& world,
                                       const SimPredictor& predictor) {
  if (predictor.fidelity < 0.0 || predictor.fidelity > 1.0)
    throw ValidationError("simulate: fidelity must be in [0, 1]");
  const WorldConfig& cfg = world.config;
  const int gw = cfg.grid_w();
  const double eta = cfg.task_noise;

  std::vector<PredictionRecord> records;
  records.reserve(world.examples.examples.size());
  for (std::size_t e = 0; e < world.examples.examples.size(); ++e) {
    const Example& ex = world.examples.examples[e];
    auto eng = rng::derived_engine(predictor.seed, static_cast<std::uint64_t>(e));

    std::vector<bool> intent(ex.phrases.size());
    for (std::size_t p = 0; p < ex.phrases.size(); ++p)
      intent[p] = rng::uniform01(eng) < predictor.fidelity;
    const bool coin_ok = rng::uniform01(eng) < 1.0 - eta;
    const bool chain_ok = !intent.empty() && intent[0];

    PredictionRecord rec;
    rec.id = ex.id;

    int cell_shift_x = 0, cell_shift_y = 0;  // task anchor error, in cells
    if (const auto* pt = std::get_if<PointTarget>(&ex.task)) {
      if (chain_ok && coin_ok) {
        rec.task_point = pt->point;
      } else {
        rec.task_point.x = static_cast<double>(
            rng::bounded(eng, static_cast<std::uint64_t>(ex.image_dims.width)));
        rec.task_point.y = static_cast<double>(
            rng::bounded(eng, static_cast<std::uint64_t>(ex.image_dims.height)));
      }
      cell_shift_x = static_cast<int>(rec.task_point.x) / cfg.patch_size -
                     static_cast<int>(pt->point.x) / cfg.patch_size;
      cell_shift_y = static_cast<int>(rec.task_point.y) / cfg.patch_size -
                     static_cast<int>(pt->point.y) / cfg.patch_size;
    } else {
      const auto& ct = std::get<ChoiceTarget>(ex.task);
      const int choice =
          (chain_ok && coin_ok)
              ? ct.index
              : static_cast<int>(rng::bounded(eng, static_cast<std::uint64_t>(ct.n_candidates)));
      const int cell_h = ex.image_dims.height / ct.n_candidates;
      rec.task_point = Point{(ex.image_dims.width - 1) / 2.0,
                             choice * cell_h + (cell_h - 1) / 2.0};
      cell_shift_y = (choice - ct.index) * (cell_h / cfg.patch_size);
    }

    const int grid_rows = ex.image_dims.height / cfg.patch_size;
    for (std::size_t p = 0; p < ex.phrases.size(); ++p) {
      const Phrase& phrase = ex.phrases[p];
      PhrasePrediction pp;
      pp.span_begin = phrase.span_begin;
      pp.span_end = phrase.span_end;
      BoundingBox box;
      if (intent[p]) {
        // Grounded in the frame of the task anchor: exact gold when the
        // anchor is right, translated (toroidal on the cell grid) when not.
        box = phrase.gold_region->boxes.front();
        int cx = box.x_min / cfg.patch_size + cell_shift_x;
        int cy = box.y_min / cfg.patch_size + cell_shift_y;
        cx = ((cx % gw) + gw) % gw;
        cy = ((cy % grid_rows) + grid_rows) % grid_rows;
        box = BoundingBox{cx * cfg.patch_size, cy * cfg.patch_size,
                          (cx + 1) * cfg.patch_size, (cy + 1) * cfg.patch_size};
      } else {
        const int cell = static_cast<int>(
            rng::bounded(eng, static_cast<std::uint64_t>(grid_rows * gw)));
        box = cell_pixel_box(cell, gw, cfg.patch_size);
      }
      pp.boxes.push_back(RankedBox{box, 1.0});
      rec.phrases.push_back(std::move(pp));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

ReportConfig world_report_config(const WorldConfig& cfg) {
  ReportConfig rc;
  rc.mode = GroundingMode::boxes;
  rc.slack = cfg.eval_slack();
  rc.tag = "synth";
  return rc;
}

std::vector<SweepRow> fidelity_sweep(const WorldConfig& cfg,
                                     const std::vector<double>& fidelities,
                                     double eta) {
  WorldConfig wc = cfg;
  wc.task_noise = eta;
  const SynthWorld world = gen_world(wc);
  const ReportConfig rc = world_report_config(wc);

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < fidelities.size(); ++i) {
    SimPredictor predictor;
    predictor.fidelity = fidelities[i];
    predictor.seed = rng::derive_seed(wc.seed, 0x5157 + i);
    const auto records = simulate(world, predictor);
    const auto [tasks, groundings] = score_examples(world.examples, records, rc);

    SweepRow row;
    row.fidelity = fidelities[i];
    std::size_t correct = 0;
    for (const auto& t : tasks) correct += t.correct(rc.slack);
    row.task_metric = static_cast<double>(correct) / static_cast<double>(tasks.size());
    double iou_total = 0.0;
    std::size_t iou_n = 0;
    for (const auto& g : groundings) {
      if (!g.has_annotations()) continue;
      iou_total += g.mean_iou;
      ++iou_n;
    }
    row.mean_iou = iou_n == 0 ? 0.0 : iou_total / static_cast<double>(iou_n);
    try {
      row.correlation = correlate(tasks, groundings, rc.slack).r;
    } catch (const UndefinedCorrelation&) {
      row.correlation = std::nullopt;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_rows_to_csv(const std::vector<SweepRow>& rows) {
  std::string csv = "rho,task_accuracy,mean_iou,correlation\n";
  for (const auto& r : rows) {
    csv += fmt(r.fidelity);
    csv += ",";
    csv += fmt(r.task_metric);
    csv += ",";
    csv += fmt(r.mean_iou);
    csv += ",";
    csv += r.correlation ? fmt(*r.correlation) : "n/a";
    csv += "\n";
  }
  return csv;
}

std::string world_config_to_json(const WorldConfig& cfg) {
  json j;
  j["n_examples"] = cfg.n_examples;
  j["image_h"] = cfg.image_height;
  j["image_w"] = cfg.image_width;
  j["patch"] = cfg.patch_size;
  j["n_objects"] = cfg.n_objects;
  j["d_p"] = cfg.d_p;
  j["d_q"] = cfg.d_q;
  j["feature_noise"] = cfg.feature_noise;
  j["task_noise"] = cfg.task_noise;
  j["variant"] = cfg.variant == WorldVariant::game ? "game" : "sdr";
  j["n_candidates"] = cfg.n_candidates;
  j["seed"] = cfg.seed;
  return j.dump(2);
}

WorldConfig world_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("world config json: ") + e.what());
  }
  WorldConfig cfg;
  cfg.n_examples = j.value("n_examples", cfg.n_examples);
  cfg.image_height = j.value("image_h", cfg.image_height);
  cfg.image_width = j.value("image_w", cfg.image_width);
  cfg.patch_size = j.value("patch", cfg.patch_size);
  cfg.n_objects = j.value("n_objects", cfg.n_objects);
  cfg.d_p = j.value("d_p", cfg.d_p);
  cfg.d_q = j.value("d_q", cfg.d_q);
  cfg.feature_noise = j.value("feature_noise", cfg.feature_noise);
  cfg.task_noise = j.value("task_noise", cfg.task_noise);
  const std::string variant = j.value("variant", std::string("sdr"));
  if (variant == "game")
    cfg.variant = WorldVariant::game;
  else if (variant == "sdr")
    cfg.variant = WorldVariant::sdr;
  else
    throw FormatError("world config: variant must be 'sdr' or 'game'");
  cfg.n_candidates = j.value("n_candidates", cfg.n_candidates);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

}  // namespace groundcheck
