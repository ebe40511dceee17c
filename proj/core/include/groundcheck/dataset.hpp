#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "groundcheck/geometry.hpp"

namespace groundcheck {

// Inclusive token index range [begin, end] into the example's tokens.
struct Phrase {
  int span_begin = 0;
  int span_end = 0;
  std::string surface;
  std::optional<Region> gold_region;

  bool operator==(const Phrase&) const = default;
};

struct PointTarget {
  Point point;
  bool operator==(const PointTarget&) const = default;
};

struct ChoiceTarget {
  int index = 0;
  int n_candidates = 0;
  bool operator==(const ChoiceTarget&) const = default;
};

using TaskTarget = std::variant<PointTarget, ChoiceTarget>;

struct Example {
  std::string id;
  std::string image_ref;
  ImageDims image_dims;
  std::string text;
  std::vector<std::string> tokens;  // frozen tokenization of text
  std::string text_id;
  TaskTarget task;
  // Token span used as the task query when training a head; defaults to
  // the whole sequence when absent.
  std::optional<std::pair<int, int>> task_query_span;
  std::vector<Phrase> phrases;

  bool operator==(const Example&) const = default;
  void validate() const;  // throws ValidationError naming the field
  bool is_point_task() const { return std::holds_alternative<PointTarget>(task); }
};

struct ExampleSet {
  std::string split;  // train/dev/test/validation
  std::string provenance;
  std::vector<Example> examples;

  bool operator==(const ExampleSet&) const = default;
  void validate() const;  // per-example invariants plus unique ids
};

// Whitespace splitting with punctuation characters as their own tokens.
// This tokenization is frozen: phrase spans index into it.
std::vector<std::string> tokenize(const std::string& text);

inline constexpr const char* kExampleSchemaVersion = "1";

// JSONL: a leading meta record {"schema":...,"split":...,"provenance":...}
// followed by one example per line.
ExampleSet load_examples(const std::string& path,
                         const std::string& schema_version = kExampleSchemaVersion);
void save_examples(const ExampleSet& set, const std::string& path,
                   const std::string& schema_version = kExampleSchemaVersion);

// Restrict an example to image rows [top, bottom): shifts y coordinates by
// -top, clips boxes, removes fully cropped gold regions, and drops the
// example when its target point leaves the window.
std::optional<Example> crop_and_remap(const Example& ex, int top, int bottom);

struct SynthesizedText {
  std::string text;
  std::pair<int, int> whole_span;               // inclusive token indices
  std::vector<std::pair<int, int>> part_spans;  // one per part
};

// Renders "{whole}"/"{parts}" placeholders; parts joined with ", " and a
// final ", and ". Placeholders must sit on whitespace or punctuation
// boundaries so spans survive re-tokenization.
SynthesizedText kilogram_synthesize(const std::string& whole,
                                    const std::vector<std::string>& parts,
                                    const std::string& tmpl);

using Rgb = std::array<std::uint8_t, 3>;

struct PixelImage {
  int height = 0;
  int width = 0;
  std::vector<Rgb> pixels;  // row-major

  Rgb at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
};

// Plain (P3) or binary (P6) portable pixmap.
PixelImage read_ppm(const std::string& path);

// Tight axis-aligned box over all pixels of each part's color.
std::map<std::string, Region> kilogram_part_boxes(
    const PixelImage& color_mask, const std::map<std::string, Rgb>& part_to_color);

// Keeps floor(fraction/100 * N) of the N phrase gold regions, chosen by a
// single seeded permutation so samples nest across fractions. Task
// annotations are always kept.
ExampleSet sample_fraction(const ExampleSet& set, double fraction_percent,
                           std::uint64_t seed);

}  // namespace groundcheck
