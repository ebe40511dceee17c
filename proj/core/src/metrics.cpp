#include "groundcheck/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "groundcheck/tensor.hpp"

namespace groundcheck {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt(*v) : std::string("n/a");
}

Layout layout_for(const Example& ex, const ChoiceTarget& choice) {
  if (ex.image_dims.height % choice.n_candidates != 0)
    throw ValidationError("example '" + ex.id +
                          "': image height not divisible by candidate count");
  return Layout{choice.n_candidates, ex.image_dims.height / choice.n_candidates,
                ex.image_dims.width};
}

TaskScore task_score_for(const Example& ex, const PredictionRecord& pred,
                         const ReportConfig&) {
  TaskScore score;
  score.id = ex.id;
  score.text_id = ex.text_id;
  if (const auto* p = std::get_if<PointTarget>(&ex.task)) {
    score.variant = TaskVariant::continuous;
    const double dx = pred.task_point.x - p->point.x;
    const double dy = pred.task_point.y - p->point.y;
    score.value = std::sqrt(dx * dx + dy * dy);
  } else {
    const auto& c = std::get<ChoiceTarget>(ex.task);
    const Layout layout = layout_for(ex, c);
    const int choice = point_to_choice(pred.task_point, layout);
    score.variant = TaskVariant::binary;
    score.value = choice == c.index ? 1.0 : 0.0;
  }
  return score;
}

const PhrasePrediction* find_phrase(const PredictionRecord& pred,
                                    const Phrase& phrase) {
  for (const auto& pp : pred.phrases)
    if (pp.span_begin == phrase.span_begin && pp.span_end == phrase.span_end)
      return &pp;
  return nullptr;
}

double phrase_iou(const Phrase& phrase, const PhrasePrediction& pp,
                  GroundingMode mode, double threshold, bool& usable) {
  usable = true;
  const BinaryMask gold = rasterize(*phrase.gold_region);
  if (mode == GroundingMode::mask) {
    if (!pp.mask) {
      usable = false;
      return 0.0;
    }
    if (pp.mask->dims != phrase.gold_region->dims)
      throw GeometryError("predicted mask dims differ from image dims");
    if (pp.mask->max_value() <= 0.0) return 0.0;  // degenerate map: a miss
    return iou(normalize_threshold(*pp.mask, threshold), gold);
  }
  if (pp.boxes.empty()) {
    usable = false;
    return 0.0;
  }
  Region top;
  top.dims = phrase.gold_region->dims;
  top.boxes.push_back(pp.boxes.front().box);
  return iou(rasterize(top), gold);
}

}  // namespace

bool sdr_accuracy(Point pred, Point gold, double slack) {
  const double dx = pred.x - gold.x, dy = pred.y - gold.y;
  return std::sqrt(dx * dx + dy * dy) <= slack;
}

double consistency(const std::vector<TaskScore>& scores, double slack) {
  std::map<std::string, bool> all_correct;
  for (const auto& s : scores) {
    auto [it, inserted] = all_correct.emplace(s.text_id, true);
    it->second = it->second && s.correct(slack);
  }
  if (all_correct.empty()) return 0.0;
  std::size_t good = 0;
  for (const auto& [_, ok] : all_correct) good += ok;
  return static_cast<double>(good) / static_cast<double>(all_correct.size());
}

GroundingScore grounding_scores(const Example& ex, const PredictionRecord& pred,
                                GroundingMode mode, double threshold) {
  GroundingScore score;
  score.id = ex.id;
  for (const auto& phrase : ex.phrases) {
    if (!phrase.gold_region) continue;
    const PhrasePrediction* pp = find_phrase(pred, phrase);
    if (pp == nullptr) {
      score.phrase_ious.push_back(0.0);
      ++score.missing_predictions;
      continue;
    }
    bool usable = true;
    score.phrase_ious.push_back(phrase_iou(phrase, *pp, mode, threshold, usable));
    if (!usable) ++score.missing_predictions;
  }
  if (!score.phrase_ious.empty()) {
    double total = 0.0;
    for (double v : score.phrase_ious) total += v;
    score.mean_iou = total / static_cast<double>(score.phrase_ious.size());
  }
  return score;
}

bool recall_at_k(const std::vector<RankedBox>& ranked, const Region& gold,
                 int k, double iou_threshold) {
  const BinaryMask gold_mask = rasterize(gold);
  const int n = std::min<int>(k, static_cast<int>(ranked.size()));
  for (int i = 0; i < n; ++i) {
    Region r;
    r.dims = gold.dims;
    r.boxes.push_back(ranked[i].box);
    if (iou(rasterize(r), gold_mask) >= iou_threshold) return true;
  }
  return false;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size())
    throw ValidationError("pearson: length mismatch");
  const std::size_t n = xs.size();
  if (n < 2) throw UndefinedCorrelation("pearson: fewer than 2 pairs");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0)
    throw UndefinedCorrelation("pearson: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

double point_biserial(const std::vector<int>& bins, const std::vector<double>& ys) {
  if (bins.size() != ys.size())
    throw ValidationError("point_biserial: length mismatch");
  const std::size_t n = bins.size();
  if (n < 2) throw UndefinedCorrelation("point_biserial: fewer than 2 pairs");
  double m1 = 0.0, m0 = 0.0;
  std::size_t n1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (bins[i] != 0) {
      m1 += ys[i];
      ++n1;
    } else {
      m0 += ys[i];
    }
  }
  const std::size_t n0 = n - n1;
  if (n1 == 0 || n0 == 0)
    throw UndefinedCorrelation("point_biserial: single class");
  m1 /= static_cast<double>(n1);
  m0 /= static_cast<double>(n0);
  double mean = 0.0;
  for (double y : ys) mean += y;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double y : ys) var += (y - mean) * (y - mean);
  var /= static_cast<double>(n);  // population variance preserves the
                                  // pearson-on-binary identity
  if (var <= 0.0) throw UndefinedCorrelation("point_biserial: constant ys");
  const double p = static_cast<double>(n1) / static_cast<double>(n);
  const double q = 1.0 - p;
  return (m1 - m0) / std::sqrt(var) * std::sqrt(p * q);
}

Correlation correlate(const std::vector<TaskScore>& task,
                      const std::vector<GroundingScore>& grounding,
                      double slack) {
  std::map<std::string, const GroundingScore*> by_id;
  for (const auto& g : grounding) by_id[g.id] = &g;
  std::vector<const TaskScore*> usable;
  for (const auto& t : task) {
    auto it = by_id.find(t.id);
    if (it != by_id.end() && it->second->has_annotations()) usable.push_back(&t);
  }
  if (usable.size() < 2)
    throw UndefinedCorrelation("correlate: fewer than 2 usable pairs");
  const TaskVariant variant = usable.front()->variant;
  for (const auto* t : usable)
    if (t->variant != variant)
      throw ValidationError("correlate: mixed task variants");
  Correlation out;
  out.variant = variant;
  if (variant == TaskVariant::binary) {
    std::vector<int> bins;
    std::vector<double> ys;
    for (const auto* t : usable) {
      bins.push_back(t->correct(slack) ? 1 : 0);
      ys.push_back(by_id.at(t->id)->mean_iou);
    }
    out.r = point_biserial(bins, ys);
  } else {
    // Negated distance, so positive r means better grounding tracks
    // better task performance.
    std::vector<double> xs, ys;
    for (const auto* t : usable) {
      xs.push_back(-t->value);
      ys.push_back(by_id.at(t->id)->mean_iou);
    }
    out.r = pearson(xs, ys);
  }
  return out;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(static_cast<double>(i) / 20.0);
  return grid;
}

double calibrate_threshold(const std::vector<SegMap>& val_preds,
                           const std::vector<Region>& val_golds,
                           const std::vector<double>& grid) {
  if (val_preds.empty() || val_preds.size() != val_golds.size())
    throw ValidationError("calibrate_threshold: empty or mismatched inputs");
  if (grid.empty()) throw ValidationError("calibrate_threshold: empty grid");
  std::vector<BinaryMask> gold_masks;
  gold_masks.reserve(val_golds.size());
  for (const auto& g : val_golds) gold_masks.push_back(rasterize(g));
  double best_t = grid.front();
  double best_score = -1.0;
  for (double t : grid) {
    double total = 0.0;
    for (std::size_t i = 0; i < val_preds.size(); ++i) {
      if (val_preds[i].max_value() <= 0.0) continue;  // scores 0
      total += iou(normalize_threshold(val_preds[i], t), gold_masks[i]);
    }
    const double score = total / static_cast<double>(val_preds.size());
    if (score > best_score) {
      best_score = score;
      best_t = t;
    }
  }
  return best_t;
}

std::pair<std::vector<TaskScore>, std::vector<GroundingScore>> score_examples(
    const ExampleSet& examples, const std::vector<PredictionRecord>& predictions,
    const ReportConfig& config) {
  std::map<std::string, const PredictionRecord*> by_id;
  for (const auto& p : predictions) by_id[p.id] = &p;

  std::vector<std::string> missing, orphans;
  std::set<std::string> example_ids;
  for (const auto& ex : examples.examples) {
    example_ids.insert(ex.id);
    if (!by_id.count(ex.id)) missing.push_back(ex.id);
  }
  for (const auto& p : predictions)
    if (!example_ids.count(p.id)) orphans.push_back(p.id);
  if (!missing.empty() || !orphans.empty()) {
    std::string msg = "prediction/example id mismatch;";
    if (!missing.empty()) {
      msg += " unpredicted examples:";
      for (const auto& id : missing) msg += " " + id;
    }
    if (!orphans.empty()) {
      msg += " orphan predictions:";
      for (const auto& id : orphans) msg += " " + id;
    }
    throw ValidationError(msg);
  }

  // Fixed id order makes aggregation invariant to input order.
  std::vector<const Example*> ordered;
  for (const auto& ex : examples.examples) ordered.push_back(&ex);
  std::sort(ordered.begin(), ordered.end(),
            [](const Example* a, const Example* b) { return a->id < b->id; });

  std::vector<TaskScore> tasks;
  std::vector<GroundingScore> groundings;
  for (const auto* ex : ordered) {
    const auto& pred = *by_id.at(ex->id);
    tasks.push_back(task_score_for(*ex, pred, config));
    groundings.push_back(grounding_scores(*ex, pred, config.mode, config.threshold));
  }
  return {std::move(tasks), std::move(groundings)};
}

MetricReport report(const ExampleSet& examples,
                    const std::vector<PredictionRecord>& predictions,
                    const ReportConfig& config) {
  if (examples.examples.empty()) throw ValidationError("report: no examples");
  if (predictions.empty()) throw ValidationError("report: empty prediction set");
  auto [tasks, groundings] = score_examples(examples, predictions, config);

  MetricReport rep;
  rep.tag = config.tag;
  rep.task_variant = tasks.front().variant;
  rep.n_examples = tasks.size();

  std::size_t correct = 0;
  double dist_total = 0.0;
  for (const auto& t : tasks) {
    correct += t.correct(config.slack);
    dist_total += t.value;
  }
  rep.task_accuracy = static_cast<double>(correct) / static_cast<double>(tasks.size());
  rep.consistency = consistency(tasks, config.slack);
  if (rep.task_variant == TaskVariant::continuous)
    rep.mean_distance = dist_total / static_cast<double>(tasks.size());

  double macro_total = 0.0, micro_total = 0.0;
  std::size_t micro_n = 0;
  for (const auto& g : groundings) {
    if (!g.has_annotations()) continue;
    ++rep.n_grounded_examples;
    rep.n_missing_predictions += static_cast<std::size_t>(g.missing_predictions);
    macro_total += g.mean_iou;
    for (double v : g.phrase_ious) micro_total += v;
    micro_n += g.phrase_ious.size();
  }
  if (rep.n_grounded_examples > 0) {
    rep.mean_iou = macro_total / static_cast<double>(rep.n_grounded_examples);
    rep.mean_iou_micro = micro_total / static_cast<double>(micro_n);
  }

  if (config.mode == GroundingMode::boxes) {
    std::map<std::string, const PredictionRecord*> by_id;
    for (const auto& p : predictions) by_id[p.id] = &p;
    std::map<int, std::size_t> hits;
    std::size_t phrase_n = 0;
    std::vector<const Example*> ordered;
    for (const auto& ex : examples.examples) ordered.push_back(&ex);
    std::sort(ordered.begin(), ordered.end(),
              [](const Example* a, const Example* b) { return a->id < b->id; });
    for (const auto* ex : ordered) {
      const auto& pred = *by_id.at(ex->id);
      for (const auto& phrase : ex->phrases) {
        if (!phrase.gold_region) continue;
        ++phrase_n;
        const PhrasePrediction* pp = find_phrase(pred, phrase);
        if (pp == nullptr) continue;
        for (int k : config.recall_ks)
          hits[k] += recall_at_k(pp->boxes, *phrase.gold_region, k, config.recall_iou);
      }
    }
    for (int k : config.recall_ks)
      rep.recall[k] = phrase_n == 0
                          ? std::optional<double>{}
                          : std::optional<double>{static_cast<double>(hits[k]) /
                                                  static_cast<double>(phrase_n)};
  } else {
    for (int k : config.recall_ks) rep.recall[k] = std::nullopt;
  }

  try {
    const Correlation c = correlate(tasks, groundings, config.slack);
    rep.correlation = c.r;
    rep.correlation_variant = c.variant;
  } catch (const UndefinedCorrelation&) {
    rep.correlation = std::nullopt;
    rep.correlation_variant = rep.task_variant;
  }
  return rep;
}

std::string MetricReport::csv_header() {
  return "tag,n_examples,n_grounded,n_missing_predictions,task_variant,"
         "task_accuracy,consistency,mean_distance,mean_iou,mean_iou_micro,"
         "recall_at_1,recall_at_5,recall_at_10,correlation,correlation_variant";
}

std::string MetricReport::csv_row() const {
  auto recall_at = [this](int k) -> std::string {
    auto it = recall.find(k);
    if (it == recall.end() || !it->second) return "n/a";
    return fmt(*it->second);
  };
  std::ostringstream ss;
  ss << tag << ',' << n_examples << ',' << n_grounded_examples << ','
     << n_missing_predictions << ','
     << (task_variant == TaskVariant::binary ? "binary" : "continuous") << ','
     << fmt(task_accuracy) << ',' << fmt(consistency) << ','
     << fmt_opt(mean_distance) << ',' << fmt(mean_iou) << ','
     << fmt(mean_iou_micro) << ',' << recall_at(1) << ',' << recall_at(5) << ','
     << recall_at(10) << ',' << fmt_opt(correlation) << ','
     << (correlation_variant == TaskVariant::binary ? "point_biserial" : "pearson");
  return ss.str();
}

std::string MetricReport::to_text() const {
  std::ostringstream ss;
  ss << "report [" << tag << "]\n"
     << "  examples:            " << n_examples << " (" << n_grounded_examples
     << " with grounding annotations)\n"
     << "  missing predictions: " << n_missing_predictions << "\n"
     << "  task accuracy:       " << fmt(task_accuracy) << "\n"
     << "  consistency:         " << fmt(consistency) << "\n";
  if (mean_distance) ss << "  mean distance:       " << fmt(*mean_distance) << "\n";
  ss << "  grounding mean-IoU:  " << fmt(mean_iou) << " (micro "
     << fmt(mean_iou_micro) << ")\n";
  for (const auto& [k, v] : recall)
    ss << "  recall@" << k << ":            " << fmt_opt(v) << "\n";
  ss << "  correlation:         " << fmt_opt(correlation) << " ("
     << (correlation_variant == TaskVariant::binary ? "point-biserial" : "pearson")
     << ")\n";
  return ss.str();
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open: " + path);
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<PredictionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      PredictionRecord rec;
      rec.id = j.at("id").get<std::string>();
      if (j.contains("task_point")) {
        rec.task_point.x = j.at("task_point").at(0).get<double>();
        rec.task_point.y = j.at("task_point").at(1).get<double>();
      }
      for (const auto& jp : j.value("phrases", json::array())) {
        PhrasePrediction pp;
        pp.span_begin = jp.at("span").at(0).get<int>();
        pp.span_end = jp.at("span").at(1).get<int>();
        if (jp.contains("mask_ref")) {
          const auto ref = jp.at("mask_ref").get<std::string>();
          const Tensor t = read_gtf((base / ref).string());
          if (t.rank() != 2)
            throw FormatError("mask_ref '" + ref + "' is not a rank-2 tensor");
          SegMap m(ImageDims{static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1))});
          m.values = t.values();
          pp.mask = std::move(m);
        }
        for (const auto& jb : jp.value("boxes", json::array())) {
          RankedBox rb;
          rb.box.x_min = jb.at("x_min").get<int>();
          rb.box.y_min = jb.at("y_min").get<int>();
          rb.box.x_max = jb.at("x_max").get<int>();
          rb.box.y_max = jb.at("y_max").get<int>();
          rb.confidence = jb.value("conf", 0.0);
          pp.boxes.push_back(rb);
        }
        rec.phrases.push_back(std::move(pp));
      }
      records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void save_predictions(const std::vector<PredictionRecord>& records,
                      const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path);
  const auto base = std::filesystem::path(path).parent_path();
  const auto mask_dir_name = std::filesystem::path(path).stem().string() + "_masks";
  bool mask_dir_made = false;
  for (const auto& rec : records) {
    json j;
    j["id"] = rec.id;
    j["task_point"] = {rec.task_point.x, rec.task_point.y};
    json jp = json::array();
    for (std::size_t k = 0; k < rec.phrases.size(); ++k) {
      const auto& pp = rec.phrases[k];
      json e = {{"span", {pp.span_begin, pp.span_end}}};
      if (pp.mask) {
        if (!mask_dir_made) {
          std::filesystem::create_directories(base / mask_dir_name);
          mask_dir_made = true;
        }
        const std::string rel =
            mask_dir_name + "/" + rec.id + "_p" + std::to_string(k) + ".gtf";
        Tensor t({static_cast<std::size_t>(pp.mask->dims.height),
                  static_cast<std::size_t>(pp.mask->dims.width)});
        t.values() = pp.mask->values;
        write_gtf((base / rel).string(), t, GtfDtype::f32);
        e["mask_ref"] = rel;
      }
      if (!pp.boxes.empty()) {
        json jb = json::array();
        for (const auto& rb : pp.boxes)
          jb.push_back({{"x_min", rb.box.x_min},
                        {"y_min", rb.box.y_min},
                        {"x_max", rb.box.x_max},
                        {"y_max", rb.box.y_max},
                        {"conf", rb.confidence}});
        e["boxes"] = jb;
      }
      jp.push_back(std::move(e));
    }
    j["phrases"] = jp;
    out << j.dump() << "\n";
  }
  if (!out) throw FormatError("write failed: " + path);
}

}  // namespace groundcheck
