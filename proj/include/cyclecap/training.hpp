#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cyclecap/cap.hpp"
#include "cyclecap/dataset.hpp"
#include "cyclecap/features.hpp"

namespace cyclecap {

// ---------------------------------------------------------------------------
// Stratified dataset split.
struct SplitSpec {
  double train_frac = 0.70;
  double val_frac = 0.05;
  double test_frac = 0.25;
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

struct DatasetSplit {
  std::vector<std::uint32_t> train, val, test;
};

// Disjoint, exhaustive, stratified per scheme, deterministic given the seed.
// Per stratum: floor(n*train_frac) train, floor(n*val_frac) val, rest test.
DatasetSplit split_dataset(const DatasetManifest& manifest, const SplitSpec& spec);

// ---------------------------------------------------------------------------
// Random access to a dataset directory: frames, labels, SNRs.
class FrameStore {
 public:
  FrameStore(const DatasetManifest& manifest, const std::filesystem::path& dir);

  const DatasetManifest& manifest() const { return man_; }
  std::size_t size() const { return man_.records.size(); }
  int classes() const { return static_cast<int>(schemes_.size()); }
  const std::vector<ModulationScheme>& schemes() const { return schemes_; }
  std::vector<std::string> scheme_names() const;

  int label(std::uint32_t index) const { return labels_.at(index); }
  double snr_db(std::uint32_t index) const { return man_.records.at(index).snr_db; }
  IQFrame frame(std::uint32_t index) const;

 private:
  DatasetManifest man_;
  std::filesystem::path dir_;
  std::vector<ModulationScheme> schemes_;
  std::vector<int> labels_;
  mutable std::unordered_map<std::string, std::unique_ptr<FrameFileReader>> readers_;
};

// Raw (unscaled) feature tensors held in memory for the training loop.
class FeatureCache {
 public:
  FeatureCache(const FrameStore& store, const std::vector<std::uint32_t>& indices,
               std::ostream* progress = nullptr);
  const FeatureSet& get(std::uint32_t index) const;

 private:
  std::unordered_map<std::uint32_t, FeatureSet> cache_;
};

// Per-kind multipliers that bring every feature tensor to unit RMS over the
// sampled frames. Stored in checkpoints and applied at inference.
std::array<double, kNumFeatures> calibrate_feature_scales(
    const FeatureCache& cache, const std::vector<std::uint32_t>& sample);

// ---------------------------------------------------------------------------
struct TrainConfig {
  int epochs = 60;
  int batch_size = 32;
  double lr = 1e-3;
  double lr_decay = 0.1;        // plateau decay factor
  int lr_patience = 4;          // epochs without improvement before decay
  int patience = 8;             // epochs without improvement before stopping
  int epoch_subset = 0;         // frames drawn per epoch from train (0 = all)
  int standardize_frames = 64;  // frames used for feature-scale calibration
  std::uint64_t seed = 1;
  bool debug_nan = false;

  void validate() const;  // throws ConfigError
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;  // NaN when the validation split is empty
  double val_acc = 0.0;
  double seconds = 0.0;
  bool is_best = false;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::array<double, kNumFeatures> feature_scales{};
  int best_epoch = 0;
  double best_metric = 0.0;  // validation accuracy (train accuracy if no val)
};

// CSV with one row per epoch. The seconds column is wall time and is the one
// field excluded from reproducibility comparisons.
std::string training_log_csv(const std::vector<EpochLog>& log);

// Initializes the network from cfg.seed and trains it on the split. The net
// is left holding the best checkpoint's parameters. Throws NumericError on a
// non-finite loss.
TrainResult train(CapNetwork<float>& net, const FrameStore& store,
                  const DatasetSplit& split, const TrainConfig& cfg,
                  std::ostream* progress = nullptr);

// ---------------------------------------------------------------------------
struct SnrBinStat {
  int snr_lo = 0;  // bin is [snr_lo, snr_lo + 1)
  std::int64_t count = 0;
  std::int64_t correct = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  double p_cc = 0.0;
  std::int64_t total = 0;
  std::int64_t correct = 0;
  std::vector<std::string> scheme_names;
  std::vector<std::vector<std::int64_t>> counts;  // [true][predicted]
  std::vector<std::vector<double>> confusion;     // row-normalized counts
  std::vector<double> per_scheme;                 // per-true-class accuracy
  std::vector<SnrBinStat> snr_curve;              // 1-dB bins, ascending

  nlohmann::ordered_json to_json() const;
  std::string confusion_csv() const;
  std::string snr_csv() const;
};

// Aggregates predictions into the report (unit-testable without a network).
EvalReport make_report(const std::vector<int>& labels, const std::vector<int>& predictions,
                       const std::vector<double>& snrs_db,
                       const std::vector<std::string>& scheme_names);

// Runs the network over the given frames (features streamed, not cached).
EvalReport evaluate(CapNetwork<float>& net, const FrameStore& store,
                    const std::vector<std::uint32_t>& indices,
                    const std::array<double, kNumFeatures>& scales,
                    int batch_size = 32, std::ostream* progress = nullptr);

struct CrossReport {
  EvalReport report;                    // on the foreign dataset
  double within_p_cc = 0.0;             // from the home-dataset report
  double delta = 0.0;                   // within_p_cc - report.p_cc
  std::vector<double> per_scheme_delta; // within - cross, per scheme
  bool cfo_overlap = false;             // CFO ranges of the two sets intersect

  nlohmann::ordered_json to_json() const;
};

// trained_on, when given, is the manifest of the training dataset and is
// only used to flag overlapping CFO ranges (a weak generalization test).
CrossReport cross_evaluate(CapNetwork<float>& net, const FrameStore& store_b,
                           const std::vector<std::uint32_t>& indices_b,
                           const std::array<double, kNumFeatures>& scales,
                           const EvalReport& within_report,
                           const DatasetManifest* trained_on = nullptr,
                           int batch_size = 32, std::ostream* progress = nullptr);

// ---------------------------------------------------------------------------
// Checkpoint file: magic, config echo, feature scales, serialized network.
void save_checkpoint(const std::filesystem::path& path, const CapNetwork<float>& net,
                     const std::array<double, kNumFeatures>& scales,
                     const std::string& config_echo);

struct LoadedCheckpoint {
  CapNetwork<float> net;
  std::array<double, kNumFeatures> scales{};
  std::string config_echo;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cyclecap
