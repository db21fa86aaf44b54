#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cyclecap/cap.hpp"
#include "cyclecap/dataset.hpp"
#include "cyclecap/preprocessing.hpp"
#include "cyclecap/training.hpp"

namespace cyclecap {

// One config file drives every pipeline stage. Plain sectioned key=value
// text ('#'/';' comments); sections [dataset], [preprocess], [features],
// [model], [train], [eval]. Every knob has the default below, unknown
// sections, unknown keys and duplicate keys are rejected.
struct RunConfig {
  GenerationConfig dataset;
  PreprocessOptions preprocess;
  std::vector<FeatureKind> kinds = all_feature_kinds();  // [features]
  int model_kernel = 23;                                 // [model]
  std::vector<int> model_filters = {16, 24, 32, 48, 64, 96};
  SplitSpec split;    // [train] *_frac, split_seed
  TrainConfig train;  // [train]
  int eval_batch = 32;  // [eval]

  void validate() const;  // throws ConfigError
};

// Parses and validates. Error messages carry the offending line number.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);  // IoError if unreadable

// Fully resolved, reparseable echo of cfg; written next to every output.
std::string render_run_config(const RunConfig& cfg);

// Network shape from the [model]/[features] sections; frame length and class
// count always come from the dataset being trained on.
CapConfig make_cap_config(const RunConfig& cfg, int frame_length, int classes);

}  // namespace cyclecap
