#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cyclecap/frame.hpp"
#include "cyclecap/rng.hpp"

namespace cyclecap {

// Binary frame container. Little-endian; 16-byte header: magic "CYCF",
// version u32 (low 16 bits = format version, bit 16 = preprocessed flag),
// frame_length u32, frame_count u32. Then fixed-size records, each a 32-byte
// metadata block followed by frame_length interleaved (I,Q) float32 pairs.
constexpr std::uint32_t kFrameFormatVersion = 1;
constexpr std::uint32_t kPreprocessedFlag = 1u << 16;
constexpr std::size_t kFrameMetaBytes = 32;
constexpr std::size_t kFrameHeaderBytes = 16;

// 32-byte metadata record: scheme u8 @0, T0 u16 @1, beta f32 @3, f0 f64 @7,
// snr_db f32 @15, seed u64 @19, zero padding @27.
struct FrameMeta {
  ModulationScheme scheme = ModulationScheme::BPSK;
  std::uint16_t t0 = 8;
  float beta = 0.0f;
  double f0 = 0.0;
  float snr_db = 0.0f;
  std::uint64_t seed = 0;

  FrameSpec to_spec(int frame_length) const;
  static FrameMeta from_spec(const FrameSpec& spec);
};

std::array<std::uint8_t, kFrameMetaBytes> encode_frame_meta(const FrameMeta& m);
FrameMeta decode_frame_meta(const std::uint8_t* b);

class FrameFileWriter {
 public:
  FrameFileWriter(const std::filesystem::path& path, int frame_length, bool preprocessed);
  ~FrameFileWriter();

  // iq: interleaved I,Q float32, 2*frame_length values. Returns the file
  // offset of the appended record.
  std::uint64_t append(const FrameMeta& meta, const float* iq);
  std::uint64_t append(const IQFrame& frame);
  void close();  // patches frame_count into the header

  int frame_length() const { return static_cast<int>(length_); }
  std::uint32_t frame_count() const { return count_; }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  std::uint32_t length_ = 0;
  std::uint32_t count_ = 0;
  bool open_ = false;
};

class FrameFileReader {
 public:
  explicit FrameFileReader(const std::filesystem::path& path);

  int frame_length() const { return static_cast<int>(length_); }
  std::uint32_t frame_count() const { return count_; }
  bool preprocessed() const { return (version_ & kPreprocessedFlag) != 0; }

  FrameMeta meta(std::uint32_t index);
  void read_iq(std::uint32_t index, std::vector<float>& interleaved);
  IQFrame read_frame(std::uint32_t index);

 private:
  void seek_record(std::uint32_t index);

  std::ifstream in_;
  std::filesystem::path path_;
  std::uint32_t version_ = 0;
  std::uint32_t length_ = 0;
  std::uint32_t count_ = 0;
  std::uint64_t record_bytes_ = 0;
};

struct GenerationConfig {
  std::string name = "dataset";
  std::vector<ModulationScheme> schemes;  // empty = all eight
  int frames_per_class = 100;
  double cfo_low = -0.001;
  double cfo_high = 0.001;
  int t0_min = 1;
  int t0_max = 23;
  double beta_min = 0.1;
  double beta_max = 1.0;
  double snr_min_db = 0.0;
  double snr_max_db = 12.0;
  double snr_center_db = 9.0;
  int frame_length = 32768;
  std::uint64_t master_seed = 1;

  std::vector<ModulationScheme> scheme_list() const;
  void validate() const;  // throws ConfigError
};

nlohmann::ordered_json config_to_json(const GenerationConfig& cfg);
GenerationConfig config_from_json(const nlohmann::json& j);

// Bounded draw on [lo, hi] with prescribed mean: triangular with the mode
// pinned by the mean when attainable (mean in the middle third), otherwise a
// power-law with exponent chosen so the mean still matches.
double sample_snr_db(double lo, double hi, double mean, Rng& rng);

// Per-frame parameters come from stream 0 of the frame seed; synthesis
// consumes stream 1 (see synthesize_frame(spec)).
FrameSpec sample_frame_spec(const GenerationConfig& cfg, ModulationScheme scheme,
                            std::uint64_t frame_seed);

struct BoiRecord {
  double center_freq = 0.0;
  double bandwidth = 0.0;
  double noise_floor = 0.0;
  bool fallback = false;
};

struct ManifestRecord {
  std::uint64_t index = 0;
  ModulationScheme scheme = ModulationScheme::BPSK;
  int t0 = 0;
  double beta = 0.0;  // reported as null for MSK
  double f0 = 0.0;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  std::string file;
  std::uint64_t offset = 0;
  std::optional<double> scale;   // preprocessing extras
  std::optional<BoiRecord> boi;
};

struct DatasetManifest {
  int frame_length = 0;
  bool preprocessed = false;
  nlohmann::ordered_json config;  // generation config echo
  std::vector<ManifestRecord> records;

  std::vector<ModulationScheme> scheme_list() const;  // label order
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

// Writes one frame file per scheme plus manifest.json into out_dir.
DatasetManifest generate_dataset(const GenerationConfig& cfg,
                                 const std::filesystem::path& out_dir);

}  // namespace cyclecap
