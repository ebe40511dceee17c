#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "groundcheck/geometry.hpp"

namespace groundcheck {

// Candidates stacked in a single vertical column: cell k occupies rows
// [k*cell_height, (k+1)*cell_height).
struct Layout {
  int n_cells = 1;
  int cell_height = 0;
  int cell_width = 0;

  bool operator==(const Layout&) const = default;
  ImageDims concat_dims() const {
    return ImageDims{n_cells * cell_height, cell_width};
  }
  BoundingBox cell_box(int index) const {
    return BoundingBox{0, index * cell_height, cell_width,
                       (index + 1) * cell_height};
  }
};

struct ReferenceGame {
  std::string caption_id;
  std::vector<std::string> candidates;  // image ids, in display order
  int target_index = 0;
  Layout layout;

  bool operator==(const ReferenceGame&) const = default;
  void validate() const;
};

using SimilarityRow = std::map<std::string, double>;  // image id -> score

// Distractors are the n highest-scoring pool members, excluding the target
// and anything sharing its caption group; ties break on ascending image
// id. The target lands at a seeded random position.
ReferenceGame build_game(const std::string& caption_id,
                         const std::string& target_id,
                         const SimilarityRow& similarity,
                         const std::vector<std::string>& pool,
                         int n_distractors, int cell_height, int cell_width,
                         std::uint64_t seed,
                         const std::map<std::string, std::string>* caption_group = nullptr);

// Training augmentation: distractors sampled uniformly without replacement
// from the top_m highest-scoring candidates.
ReferenceGame augment_game(const std::string& caption_id,
                           const std::string& target_id,
                           const SimilarityRow& similarity,
                           const std::vector<std::string>& pool, int top_m,
                           int n_distractors, int cell_height, int cell_width,
                           std::uint64_t seed,
                           const std::map<std::string, std::string>* caption_group = nullptr);

// floor(y / cell_height) for vertical stacks.
int point_to_choice(Point p, const Layout& layout);

// The target cell's full box in concatenated coordinates.
Region game_gold_region(const ReferenceGame& game);

// Similarity CSV with header "caption_id,image_id,score".
std::map<std::string, SimilarityRow> load_similarity_csv(const std::string& path);

std::string game_to_json(const ReferenceGame& game);
ReferenceGame game_from_json(const std::string& json_text);
void save_games(const std::vector<ReferenceGame>& games, const std::string& path);
std::vector<ReferenceGame> load_games(const std::string& path);

}  // namespace groundcheck
