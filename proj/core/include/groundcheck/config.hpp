#pragma once

#include <string>
#include <vector>

namespace groundcheck {

// Protocol constants wired through the toolkit. The golden config tests
// pin these; change them only with the goldens.
struct FlavorDefaults {
  int n_candidates = 0;
  int n_distractors = 0;
  int cell_height = 0;
  int cell_width = 0;
  int top_m = 0;  // training-augmentation pool
};

FlavorDefaults kilogram_rg_defaults();  // 10 candidates, 200x200 cells
FlavorDefaults flickr_rg_defaults();    // 5 distractors, 384x384 cells, top-20

std::vector<double> default_sweep_fractions();  // 0,5,10,20,50,70,100

// JSON dump of every protocol default (slack radius, loss weights, game
// flavors, sweep fractions, optimizer defaults); compared against a golden
// file in the tests.
std::string protocol_defaults_json();

}  // namespace groundcheck
