#include "groundcheck/refgame.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "groundcheck/rng.hpp"

namespace groundcheck {

namespace {

using nlohmann::json;

// Candidates eligible as distractors, sorted by (score desc, id asc).
std::vector<std::string> ranked_candidates(
    const std::string& target_id, const SimilarityRow& similarity,
    const std::vector<std::string>& pool,
    const std::map<std::string, std::string>* caption_group) {
  std::string target_group;
  if (caption_group != nullptr) {
    auto it = caption_group->find(target_id);
    if (it != caption_group->end()) target_group = it->second;
  }
  std::vector<std::string> eligible;
  for (const auto& id : pool) {
    if (id == target_id) continue;
    if (caption_group != nullptr && !target_group.empty()) {
      auto it = caption_group->find(id);
      if (it != caption_group->end() && it->second == target_group) continue;
    }
    eligible.push_back(id);
  }
  std::sort(eligible.begin(), eligible.end(),
            [&similarity](const std::string& a, const std::string& b) {
              const auto sa = similarity.count(a) ? similarity.at(a) : 0.0;
              const auto sb = similarity.count(b) ? similarity.at(b) : 0.0;
              if (sa != sb) return sa > sb;
              return a < b;
            });
  return eligible;
}

ReferenceGame assemble(const std::string& caption_id,
                       const std::string& target_id,
                       std::vector<std::string> distractors, int cell_height,
                       int cell_width, rng::Engine& eng) {
  ReferenceGame game;
  game.caption_id = caption_id;
  const int n = static_cast<int>(distractors.size()) + 1;
  const auto pos = static_cast<int>(rng::bounded(eng, static_cast<std::uint64_t>(n)));
  game.candidates = std::move(distractors);
  game.candidates.insert(game.candidates.begin() + pos, target_id);
  game.target_index = pos;
  game.layout = Layout{n, cell_height, cell_width};
  game.validate();
  return game;
}

}  // namespace

void ReferenceGame::validate() const {
  if (candidates.empty()) throw ValidationError("game has no candidates");
  if (target_index < 0 || target_index >= static_cast<int>(candidates.size()))
    throw ValidationError("game target_index out of range");
  std::set<std::string> uniq(candidates.begin(), candidates.end());
  if (uniq.size() != candidates.size())
    throw ValidationError("game candidates not distinct");
  if (layout.n_cells != static_cast<int>(candidates.size()))
    throw ValidationError("layout cell count differs from candidates");
  if (layout.cell_height <= 0 || layout.cell_width <= 0)
    throw ValidationError("layout cells must be positive");
}

ReferenceGame build_game(const std::string& caption_id,
                         const std::string& target_id,
                         const SimilarityRow& similarity,
                         const std::vector<std::string>& pool,
                         int n_distractors, int cell_height, int cell_width,
                         std::uint64_t seed,
                         const std::map<std::string, std::string>* caption_group) {
  if (n_distractors < 0) throw ValidationError("n_distractors must be >= 0");
  if (std::find(pool.begin(), pool.end(), target_id) == pool.end())
    throw ValidationError("target '" + target_id + "' not in pool");
  auto eligible = ranked_candidates(target_id, similarity, pool, caption_group);
  if (static_cast<int>(eligible.size()) < n_distractors)
    throw ValidationError("pool too small: need " + std::to_string(n_distractors) +
                          " distractors, have " + std::to_string(eligible.size()));
  eligible.resize(static_cast<std::size_t>(n_distractors));
  auto eng = rng::derived_engine(seed, rng::fnv1a(caption_id));
  return assemble(caption_id, target_id, std::move(eligible), cell_height,
                  cell_width, eng);
}

ReferenceGame augment_game(const std::string& caption_id,
                           const std::string& target_id,
                           const SimilarityRow& similarity,
                           const std::vector<std::string>& pool, int top_m,
                           int n_distractors, int cell_height, int cell_width,
                           std::uint64_t seed,
                           const std::map<std::string, std::string>* caption_group) {
  if (top_m < n_distractors)
    throw ValidationError("top_m must be >= n_distractors");
  auto eligible = ranked_candidates(target_id, similarity, pool, caption_group);
  if (static_cast<int>(eligible.size()) < n_distractors)
    throw ValidationError("pool too small: need " + std::to_string(n_distractors) +
                          " distractors, have " + std::to_string(eligible.size()));
  if (top_m > static_cast<int>(eligible.size())) {
    std::cerr << "[groundcheck] augment_game '" << caption_id << "': top_m "
              << top_m << " clipped to pool size " << eligible.size() << "\n";
    top_m = static_cast<int>(eligible.size());
  }
  eligible.resize(static_cast<std::size_t>(top_m));
  auto eng = rng::derived_engine(seed, rng::fnv1a(caption_id));
  const auto picks = rng::sample_without_replacement(
      eligible.size(), static_cast<std::size_t>(n_distractors), eng);
  std::vector<std::string> distractors;
  distractors.reserve(picks.size());
  for (auto i : picks) distractors.push_back(eligible[i]);
  return assemble(caption_id, target_id, std::move(distractors), cell_height,
                  cell_width, eng);
}

int point_to_choice(Point p, const Layout& layout) {
  const auto dims = layout.concat_dims();
  if (p.x < 0 || p.x > dims.width - 1 || p.y < 0 || p.y > dims.height - 1)
    throw GeometryError("point outside concatenated image");
  return static_cast<int>(p.y) / layout.cell_height;
}

Region game_gold_region(const ReferenceGame& game) {
  Region r;
  r.dims = game.layout.concat_dims();
  r.boxes.push_back(game.layout.cell_box(game.target_index));
  return r;
}

std::map<std::string, SimilarityRow> load_similarity_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open: " + path);
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, SimilarityRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line == "caption_id,image_id,score") continue;
    std::istringstream ss(line);
    std::string caption, image, score;
    if (!std::getline(ss, caption, ',') || !std::getline(ss, image, ',') ||
        !std::getline(ss, score))
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected caption_id,image_id,score");
    try {
      rows[caption][image] = std::stod(score);
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": bad score '" + score + "'");
    }
  }
  return rows;
}

std::string game_to_json(const ReferenceGame& game) {
  json j;
  j["caption_id"] = game.caption_id;
  j["candidates"] = game.candidates;
  j["target_index"] = game.target_index;
  j["cell_h"] = game.layout.cell_height;
  j["cell_w"] = game.layout.cell_width;
  return j.dump();
}

ReferenceGame game_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("game json: ") + e.what());
  }
  ReferenceGame game;
  game.caption_id = j.at("caption_id").get<std::string>();
  game.candidates = j.at("candidates").get<std::vector<std::string>>();
  game.target_index = j.at("target_index").get<int>();
  game.layout = Layout{static_cast<int>(game.candidates.size()),
                       j.at("cell_h").get<int>(), j.at("cell_w").get<int>()};
  game.validate();
  return game;
}

void save_games(const std::vector<ReferenceGame>& games, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path);
  for (const auto& g : games) out << game_to_json(g) << "\n";
}

std::vector<ReferenceGame> load_games(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open: " + path);
  std::vector<ReferenceGame> games;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      games.push_back(game_from_json(line));
    } catch (const FormatError& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return games;
}

}  // namespace groundcheck
