#include "groundcheck/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "groundcheck/rng.hpp"

namespace groundcheck {

namespace {

using nlohmann::json;

bool is_punct(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

json region_to_jobj(const Region& r) {
  json jb = json::array();
  for (const auto& b : r.boxes)
    jb.push_back({{"x_min", b.x_min},
                  {"y_min", b.y_min},
                  {"x_max", b.x_max},
                  {"y_max", b.y_max}});
  return json{{"boxes", jb}, {"h", r.dims.height}, {"w", r.dims.width}};
}

Region region_from_jobj(const json& j) {
  Region r;
  r.dims.height = j.at("h").get<int>();
  r.dims.width = j.at("w").get<int>();
  for (const auto& jb : j.at("boxes")) {
    BoundingBox b;
    b.x_min = jb.at("x_min").get<int>();
    b.y_min = jb.at("y_min").get<int>();
    b.x_max = jb.at("x_max").get<int>();
    b.y_max = jb.at("y_max").get<int>();
    r.boxes.push_back(b);
  }
  return r;
}

json example_to_jobj(const Example& ex) {
  json j;
  j["id"] = ex.id;
  j["image_ref"] = ex.image_ref;
  j["h"] = ex.image_dims.height;
  j["w"] = ex.image_dims.width;
  j["text"] = ex.text;
  j["text_id"] = ex.text_id;
  if (const auto* p = std::get_if<PointTarget>(&ex.task)) {
    j["task"] = {{"type", "point"}, {"x", p->point.x}, {"y", p->point.y}};
  } else {
    const auto& c = std::get<ChoiceTarget>(ex.task);
    j["task"] = {{"type", "choice"}, {"index", c.index}, {"n", c.n_candidates}};
  }
  if (ex.task_query_span)
    j["task_query"] = {ex.task_query_span->first, ex.task_query_span->second};
  json jp = json::array();
  for (const auto& ph : ex.phrases) {
    json e = {{"span", {ph.span_begin, ph.span_end}}, {"surface", ph.surface}};
    if (ph.gold_region) e["region"] = region_to_jobj(*ph.gold_region);
    jp.push_back(e);
  }
  j["phrases"] = jp;
  return j;
}

Example example_from_jobj(const json& j) {
  Example ex;
  ex.id = j.at("id").get<std::string>();
  ex.image_ref = j.value("image_ref", std::string{});
  ex.image_dims.height = j.at("h").get<int>();
  ex.image_dims.width = j.at("w").get<int>();
  ex.text = j.at("text").get<std::string>();
  ex.tokens = tokenize(ex.text);
  ex.text_id = j.at("text_id").get<std::string>();
  const auto& jt = j.at("task");
  const std::string type = jt.at("type").get<std::string>();
  if (type == "point") {
    ex.task = PointTarget{Point{jt.at("x").get<double>(), jt.at("y").get<double>()}};
  } else if (type == "choice") {
    ex.task = ChoiceTarget{jt.at("index").get<int>(), jt.at("n").get<int>()};
  } else {
    throw ValidationError("task.type must be 'point' or 'choice', got '" + type + "'");
  }
  if (j.contains("task_query")) {
    const auto& q = j.at("task_query");
    ex.task_query_span = std::make_pair(q.at(0).get<int>(), q.at(1).get<int>());
  }
  for (const auto& jp : j.at("phrases")) {
    Phrase ph;
    ph.span_begin = jp.at("span").at(0).get<int>();
    ph.span_end = jp.at("span").at(1).get<int>();
    ph.surface = jp.value("surface", std::string{});
    if (jp.contains("region")) ph.gold_region = region_from_jobj(jp.at("region"));
    ex.phrases.push_back(std::move(ph));
  }
  return ex;
}

}  // namespace

void Example::validate() const {
  if (id.empty()) throw ValidationError("example id empty");
  if (image_dims.height <= 0 || image_dims.width <= 0)
    throw ValidationError("example '" + id + "': image_dims must be positive");
  if (const auto* p = std::get_if<PointTarget>(&task)) {
    if (p->point.x < 0 || p->point.x > image_dims.width - 1 || p->point.y < 0 ||
        p->point.y > image_dims.height - 1)
      throw ValidationError("example '" + id + "': task point outside image");
  } else {
    const auto& c = std::get<ChoiceTarget>(task);
    if (c.n_candidates < 1 || c.index < 0 || c.index >= c.n_candidates)
      throw ValidationError("example '" + id + "': choice index out of range");
  }
  const int t = static_cast<int>(tokens.size());
  if (task_query_span) {
    if (task_query_span->first < 0 || task_query_span->first > task_query_span->second ||
        task_query_span->second >= t)
      throw ValidationError("example '" + id + "': task_query span out of range");
  }
  for (const auto& ph : phrases) {
    if (ph.span_begin < 0 || ph.span_begin > ph.span_end || ph.span_end >= t)
      throw ValidationError("example '" + id + "': phrase span out of range");
    if (ph.gold_region) {
      if (ph.gold_region->dims != image_dims)
        throw ValidationError("example '" + id + "': gold region dims differ from image");
      try {
        ph.gold_region->validate();
      } catch (const GeometryError& e) {
        throw ValidationError("example '" + id + "': gold_region: " + e.what());
      }
    }
  }
}

void ExampleSet::validate() const {
  std::set<std::string> ids;
  for (const auto& ex : examples) {
    ex.validate();
    if (!ids.insert(ex.id).second)
      throw ValidationError("duplicate example id '" + ex.id + "'");
  }
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else if (is_punct(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
      tokens.push_back(std::string(1, c));
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

ExampleSet load_examples(const std::string& path, const std::string& schema_version) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open: " + path);
  ExampleSet set;
  std::string line;
  std::size_t line_no = 0;
  bool saw_meta = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!saw_meta) {
      saw_meta = true;
      if (j.contains("schema")) {
        const std::string got = j.at("schema").get<std::string>();
        const std::string want = std::string("groundcheck-examples-v") + schema_version;
        if (got != want)
          throw FormatError(path + ": schema '" + got + "', expected '" + want + "'");
        set.split = j.value("split", std::string{});
        set.provenance = j.value("provenance", std::string{});
        continue;
      }
      // No meta line; fall through and treat it as the first example.
    }
    try {
      set.examples.push_back(example_from_jobj(j));
    } catch (const json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  try {
    set.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return set;
}

void save_examples(const ExampleSet& set, const std::string& path,
                   const std::string& schema_version) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path);
  json meta = {{"schema", std::string("groundcheck-examples-v") + schema_version},
               {"split", set.split},
               {"provenance", set.provenance}};
  out << meta.dump() << "\n";
  for (const auto& ex : set.examples) out << example_to_jobj(ex).dump() << "\n";
  if (!out) throw FormatError("write failed: " + path);
}

std::optional<Example> crop_and_remap(const Example& ex, int top, int bottom) {
  if (top < 0 || top >= bottom || bottom > ex.image_dims.height)
    throw ValidationError("crop window [" + std::to_string(top) + "," +
                          std::to_string(bottom) + ") invalid for height " +
                          std::to_string(ex.image_dims.height));
  const auto* pt = std::get_if<PointTarget>(&ex.task);
  if (pt == nullptr)
    throw ValidationError("crop_and_remap applies to point-task examples only");
  if (pt->point.y < top || pt->point.y > bottom - 1) return std::nullopt;

  Example out = ex;
  out.image_dims.height = bottom - top;
  out.task = PointTarget{Point{pt->point.x, pt->point.y - top}};
  for (auto& ph : out.phrases) {
    if (!ph.gold_region) continue;
    Region r;
    r.dims = out.image_dims;
    for (auto b : ph.gold_region->boxes) {
      b.y_min = std::max(b.y_min, top);
      b.y_max = std::min(b.y_max, bottom);
      if (b.y_min >= b.y_max) continue;  // fully cropped away
      b.y_min -= top;
      b.y_max -= top;
      r.boxes.push_back(b);
    }
    if (r.boxes.empty())
      ph.gold_region.reset();
    else
      ph.gold_region = std::move(r);
  }
  out.validate();
  return out;
}

SynthesizedText kilogram_synthesize(const std::string& whole,
                                    const std::vector<std::string>& parts,
                                    const std::string& tmpl) {
  const std::size_t wpos = tmpl.find("{whole}");
  if (wpos == std::string::npos)
    throw ValidationError("template missing {whole} placeholder");
  const std::size_t ppos = tmpl.find("{parts}");
  if (!parts.empty() && ppos == std::string::npos)
    throw ValidationError("template missing {parts} placeholder");

  // Build the rendered string chunk by chunk, tracking token spans as
  // chunks are appended. Tokenization is boundary-stable, so spans over
  // the concatenation equal spans over a re-tokenization of the result.
  std::vector<std::string> tokens;
  std::string text;
  SynthesizedText result;

  if (parts.empty()) {
    // With no parts the connective text is dropped: the description is
    // the whole-shape phrase alone.
    result.text = whole;
    const auto n = static_cast<int>(tokenize(whole).size());
    if (n == 0) throw ValidationError("whole phrase has no tokens");
    result.whole_span = {0, n - 1};
    return result;
  }

  auto append = [&](const std::string& chunk) {
    text += chunk;
    for (auto& t : tokenize(chunk)) tokens.push_back(std::move(t));
  };
  auto append_phrase = [&](const std::string& chunk) -> std::pair<int, int> {
    const int begin = static_cast<int>(tokens.size());
    append(chunk);
    const int end = static_cast<int>(tokens.size()) - 1;
    if (end < begin) throw ValidationError("phrase '" + chunk + "' has no tokens");
    return {begin, end};
  };

  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t next = tmpl.find('{', pos);
    if (next == std::string::npos) {
      append(tmpl.substr(pos));
      break;
    }
    append(tmpl.substr(pos, next - pos));
    if (tmpl.compare(next, 7, "{whole}") == 0) {
      result.whole_span = append_phrase(whole);
      pos = next + 7;
    } else if (tmpl.compare(next, 7, "{parts}") == 0) {
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) append(i + 1 == parts.size() ? ", and " : ", ");
        result.part_spans.push_back(append_phrase(parts[i]));
      }
      pos = next + 7;
    } else {
      throw ValidationError("unknown placeholder in template at offset " +
                            std::to_string(next));
    }
  }
  result.text = text;
  return result;
}

PixelImage read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P3" && magic != "P6") throw FormatError(path + ": not a P3/P6 pixmap");
  auto next_int = [&in, &path]() {
    // Skips whitespace and '#' comments.
    for (;;) {
      const int c = in.peek();
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
      } else if (c != EOF && std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    long v = -1;
    in >> v;
    if (!in || v < 0) throw FormatError(path + ": bad pixmap header");
    return static_cast<int>(v);
  };
  PixelImage img;
  img.width = next_int();
  img.height = next_int();
  const int maxval = next_int();
  if (maxval <= 0 || maxval > 255) throw FormatError(path + ": unsupported maxval");
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  if (magic == "P3") {
    for (auto& px : img.pixels)
      for (auto& ch : px) ch = static_cast<std::uint8_t>(next_int());
    if (!in) throw FormatError(path + ": truncated P3 payload");
  } else {
    in.get();  // single whitespace after maxval
    std::vector<char> buf(img.pixels.size() * 3);
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
      throw FormatError(path + ": truncated P6 payload");
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      for (int c = 0; c < 3; ++c)
        img.pixels[i][c] = static_cast<std::uint8_t>(buf[3 * i + c]);
  }
  return img;
}

std::map<std::string, Region> kilogram_part_boxes(
    const PixelImage& color_mask, const std::map<std::string, Rgb>& part_to_color) {
  std::map<std::string, Region> out;
  for (const auto& [part, color] : part_to_color) {
    int x0 = color_mask.width, y0 = color_mask.height, x1 = -1, y1 = -1;
    for (int y = 0; y < color_mask.height; ++y) {
      for (int x = 0; x < color_mask.width; ++x) {
        if (color_mask.at(x, y) != color) continue;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
    if (x1 < 0)
      throw ValidationError("part '" + part + "': color not present in mask");
    Region r;
    r.dims = ImageDims{color_mask.height, color_mask.width};
    r.boxes.push_back(BoundingBox{x0, y0, x1 + 1, y1 + 1});
    out.emplace(part, std::move(r));
  }
  return out;
}

ExampleSet sample_fraction(const ExampleSet& set, double fraction_percent,
                           std::uint64_t seed) {
  if (fraction_percent < 0.0 || fraction_percent > 100.0)
    throw ValidationError("fraction must be in [0, 100]");
  // Slots are (example, phrase) pairs that carry a gold region, in set
  // order. One permutation serves every fraction, so samples nest.
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  for (std::size_t e = 0; e < set.examples.size(); ++e)
    for (std::size_t p = 0; p < set.examples[e].phrases.size(); ++p)
      if (set.examples[e].phrases[p].gold_region) slots.emplace_back(e, p);
  auto eng = rng::make_engine(seed);
  const auto order = rng::permutation(slots.size(), eng);
  const auto keep_n = static_cast<std::size_t>(
      fraction_percent / 100.0 * static_cast<double>(slots.size()));
  std::vector<std::uint8_t> keep(slots.size(), 0);
  for (std::size_t i = 0; i < keep_n; ++i) keep[order[i]] = 1;

  ExampleSet out = set;
  for (std::size_t i = 0; i < slots.size(); ++i)
    if (!keep[i])
      out.examples[slots[i].first].phrases[slots[i].second].gold_region.reset();
  return out;
}

}  // namespace groundcheck
