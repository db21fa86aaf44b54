#include "cyclecap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "cyclecap/errors.hpp"
#include "cyclecap/synthesis.hpp"

namespace cyclecap {

FrameSpec FrameMeta::to_spec(int frame_length) const {
  FrameSpec spec;
  spec.scheme = scheme;
  spec.t0 = t0;
  spec.beta = beta;
  spec.f0 = f0;
  spec.snr_db = snr_db;
  spec.length = frame_length;
  spec.seed = seed;
  return spec;
}

FrameMeta FrameMeta::from_spec(const FrameSpec& spec) {
  if (spec.t0 < 0 || spec.t0 > 0xFFFF) throw ConfigError("T0 does not fit metadata field");
  FrameMeta m;
  m.scheme = spec.scheme;
  m.t0 = static_cast<std::uint16_t>(spec.t0);
  m.beta = static_cast<float>(spec.beta);
  m.f0 = spec.f0;
  m.snr_db = static_cast<float>(spec.snr_db);
  m.seed = spec.seed;
  return m;
}

std::array<std::uint8_t, kFrameMetaBytes> encode_frame_meta(const FrameMeta& m) {
  std::array<std::uint8_t, kFrameMetaBytes> b{};
  b[0] = static_cast<std::uint8_t>(m.scheme);
  std::memcpy(&b[1], &m.t0, 2);
  std::memcpy(&b[3], &m.beta, 4);
  std::memcpy(&b[7], &m.f0, 8);
  std::memcpy(&b[15], &m.snr_db, 4);
  std::memcpy(&b[19], &m.seed, 8);
  return b;
}

FrameMeta decode_frame_meta(const std::uint8_t* b) {
  FrameMeta m;
  m.scheme = static_cast<ModulationScheme>(b[0]);
  std::memcpy(&m.t0, &b[1], 2);
  std::memcpy(&m.beta, &b[3], 4);
  std::memcpy(&m.f0, &b[7], 8);
  std::memcpy(&m.snr_db, &b[15], 4);
  std::memcpy(&m.seed, &b[19], 8);
  return m;
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

FrameFileWriter::FrameFileWriter(const std::filesystem::path& path, int frame_length,
                                 bool preprocessed)
    : path_(path), length_(static_cast<std::uint32_t>(frame_length)) {
  if (frame_length <= 0) throw ConfigError("frame_length must be positive");
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open for writing: " + path.string());
  out_.write("CYCF", 4);
  write_u32(out_, kFrameFormatVersion | (preprocessed ? kPreprocessedFlag : 0));
  write_u32(out_, length_);
  write_u32(out_, 0);  // frame_count, patched by close()
  if (!out_) throw IoError("write failed: " + path.string());
  open_ = true;
}

FrameFileWriter::~FrameFileWriter() {
  try {
    if (open_) close();
  } catch (...) {
  }
}

std::uint64_t FrameFileWriter::append(const FrameMeta& meta, const float* iq) {
  if (!open_) throw IoError("writer closed: " + path_.string());
  const std::uint64_t offset =
      kFrameHeaderBytes + static_cast<std::uint64_t>(count_) * (kFrameMetaBytes + 8ull * length_);
  const auto b = encode_frame_meta(meta);
  out_.write(reinterpret_cast<const char*>(b.data()), b.size());
  out_.write(reinterpret_cast<const char*>(iq), 8ull * length_);
  if (!out_) throw IoError("write failed: " + path_.string());
  ++count_;
  return offset;
}

std::uint64_t FrameFileWriter::append(const IQFrame& frame) {
  if (frame.size() != length_) throw ConfigError("frame length does not match file");
  std::vector<float> iq(2 * frame.size());
  for (std::size_t t = 0; t < frame.size(); ++t) {
    iq[2 * t] = static_cast<float>(frame.s[t].real());
    iq[2 * t + 1] = static_cast<float>(frame.s[t].imag());
  }
  return append(FrameMeta::from_spec(frame.spec), iq.data());
}

void FrameFileWriter::close() {
  if (!open_) return;
  open_ = false;
  out_.seekp(12);
  write_u32(out_, count_);
  out_.close();
  if (out_.fail()) throw IoError("close failed: " + path_.string());
}

FrameFileReader::FrameFileReader(const std::filesystem::path& path) : path_(path) {
  in_.open(path, std::ios::binary);
  if (!in_) throw IoError("cannot open: " + path.string());
  char magic[4] = {};
  in_.read(magic, 4);
  if (!in_ || std::memcmp(magic, "CYCF", 4) != 0)
    throw IoError("bad magic, not a frame file: " + path.string());
  version_ = read_u32(in_);
  length_ = read_u32(in_);
  count_ = read_u32(in_);
  if ((version_ & 0xFFFF) != kFrameFormatVersion)
    throw IoError("unsupported frame file version: " + path.string());
  if (length_ == 0) throw IoError("zero frame_length: " + path.string());
  record_bytes_ = kFrameMetaBytes + 8ull * length_;
  in_.seekg(0, std::ios::end);
  const auto size = static_cast<std::uint64_t>(in_.tellg());
  if (size != kFrameHeaderBytes + record_bytes_ * count_)
    throw IoError("truncated frame file: " + path.string());
}

void FrameFileReader::seek_record(std::uint32_t index) {
  if (index >= count_) throw IoError("frame index out of range: " + path_.string());
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(kFrameHeaderBytes + record_bytes_ * index));
}

FrameMeta FrameFileReader::meta(std::uint32_t index) {
  seek_record(index);
  std::uint8_t b[kFrameMetaBytes];
  in_.read(reinterpret_cast<char*>(b), kFrameMetaBytes);
  if (!in_) throw IoError("read failed: " + path_.string());
  return decode_frame_meta(b);
}

void FrameFileReader::read_iq(std::uint32_t index, std::vector<float>& interleaved) {
  seek_record(index);
  in_.seekg(kFrameMetaBytes, std::ios::cur);
  interleaved.resize(2ull * length_);
  in_.read(reinterpret_cast<char*>(interleaved.data()), 8ull * length_);
  if (!in_) throw IoError("read failed: " + path_.string());
}

IQFrame FrameFileReader::read_frame(std::uint32_t index) {
  const FrameMeta m = meta(index);
  std::vector<float> iq;
  read_iq(index, iq);
  IQFrame fr;
  fr.spec = m.to_spec(static_cast<int>(length_));
  fr.s.resize(length_);
  for (std::uint32_t t = 0; t < length_; ++t) fr.s[t] = {iq[2 * t], iq[2 * t + 1]};
  return fr;
}

std::vector<ModulationScheme> GenerationConfig::scheme_list() const {
  if (!schemes.empty()) return schemes;
  std::vector<ModulationScheme> all(kNumSchemes);
  for (int i = 0; i < kNumSchemes; ++i) all[i] = static_cast<ModulationScheme>(i);
  return all;
}

void GenerationConfig::validate() const {
  if (frames_per_class <= 0) throw ConfigError("frames_per_class must be positive");
  if (!(cfo_low < cfo_high)) throw ConfigError("cfo range empty");
  if (std::max(std::abs(cfo_low), std::abs(cfo_high)) >= 0.5)
    throw ConfigError("cfo outside (-0.5, 0.5)");
  if (t0_min < 1 || t0_max < t0_min) throw ConfigError("T0 range invalid");
  if (t0_max > 0xFFFF) throw ConfigError("t0_max too large for metadata field");
  if (!(beta_min >= 0.1 && beta_max <= 1.0 && beta_min <= beta_max))
    throw ConfigError("beta range outside [0.1, 1]");
  if (!(snr_min_db <= snr_max_db)) throw ConfigError("snr range empty");
  if (!(snr_center_db >= snr_min_db && snr_center_db <= snr_max_db))
    throw ConfigError("snr_center_db outside snr range");
  if (snr_min_db < snr_max_db &&
      (snr_center_db <= snr_min_db || snr_center_db >= snr_max_db))
    throw ConfigError("snr_center_db must lie strictly inside a nonempty snr range");
  if (frame_length < 2 || (frame_length & (frame_length - 1)) != 0)
    throw ConfigError("frame_length must be a power of two");
  std::set<ModulationScheme> seen;
  for (auto s : scheme_list()) {
    if (static_cast<int>(s) < 0 || static_cast<int>(s) >= kNumSchemes)
      throw ConfigError("unknown scheme in config");
    if (!seen.insert(s).second) throw ConfigError("duplicate scheme in config");
  }
}

nlohmann::ordered_json config_to_json(const GenerationConfig& cfg) {
  nlohmann::ordered_json j;
  j["name"] = cfg.name;
  nlohmann::ordered_json schemes = nlohmann::ordered_json::array();
  for (auto s : cfg.scheme_list()) schemes.push_back(scheme_name(s));
  j["schemes"] = schemes;
  j["frames_per_class"] = cfg.frames_per_class;
  j["cfo_low"] = cfg.cfo_low;
  j["cfo_high"] = cfg.cfo_high;
  j["t0_min"] = cfg.t0_min;
  j["t0_max"] = cfg.t0_max;
  j["beta_min"] = cfg.beta_min;
  j["beta_max"] = cfg.beta_max;
  j["snr_min_db"] = cfg.snr_min_db;
  j["snr_max_db"] = cfg.snr_max_db;
  j["snr_center_db"] = cfg.snr_center_db;
  j["frame_length"] = cfg.frame_length;
  j["master_seed"] = cfg.master_seed;
  return j;
}

GenerationConfig config_from_json(const nlohmann::json& j) {
  GenerationConfig cfg;
  cfg.name = j.at("name").get<std::string>();
  cfg.schemes.clear();
  for (const auto& s : j.at("schemes")) {
    auto m = scheme_from_name(s.get<std::string>());
    if (!m) throw ConfigError("unknown scheme name in manifest: " + s.get<std::string>());
    cfg.schemes.push_back(*m);
  }
  cfg.frames_per_class = j.at("frames_per_class").get<int>();
  cfg.cfo_low = j.at("cfo_low").get<double>();
  cfg.cfo_high = j.at("cfo_high").get<double>();
  cfg.t0_min = j.at("t0_min").get<int>();
  cfg.t0_max = j.at("t0_max").get<int>();
  cfg.beta_min = j.at("beta_min").get<double>();
  cfg.beta_max = j.at("beta_max").get<double>();
  cfg.snr_min_db = j.at("snr_min_db").get<double>();
  cfg.snr_max_db = j.at("snr_max_db").get<double>();
  cfg.snr_center_db = j.at("snr_center_db").get<double>();
  cfg.frame_length = j.at("frame_length").get<int>();
  cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
  return cfg;
}

double sample_snr_db(double lo, double hi, double mean, Rng& rng) {
  if (!(hi > lo)) return lo;
  const double m = (mean - lo) / (hi - lo);
  const double u = rng.uniform();
  double x;
  if (m >= 1.0 / 3.0 && m <= 2.0 / 3.0) {
    // triangular on [0,1], mode c = 3m - 1 gives mean m
    const double c = 3.0 * m - 1.0;
    x = (u < c) ? std::sqrt(u * c) : 1.0 - std::sqrt((1.0 - u) * (1.0 - c));
  } else if (m > 0.5) {
    // mean above the triangular-attainable band: x = u^(1/p), E[x] = p/(p+1)
    const double p = m / (1.0 - m);
    x = std::pow(u, 1.0 / p);
  } else {
    const double p = (1.0 - m) / m;
    x = 1.0 - std::pow(u, 1.0 / p);
  }
  return lo + (hi - lo) * x;
}

FrameSpec sample_frame_spec(const GenerationConfig& cfg, ModulationScheme scheme,
                            std::uint64_t frame_seed) {
  Rng rng(derive_seed(frame_seed, 0));
  FrameSpec spec;
  spec.scheme = scheme;
  spec.t0 = static_cast<int>(rng.uniform_int(cfg.t0_min, cfg.t0_max));
  // beta and snr_db are rounded to float32 (their storage precision) so a
  // frame regenerates bit-identically from its metadata record alone
  const double beta = static_cast<float>(rng.uniform(cfg.beta_min, cfg.beta_max));
  spec.beta = is_cpm(scheme) ? 0.0 : beta;
  spec.f0 = rng.uniform(cfg.cfo_low, cfg.cfo_high);
  spec.snr_db = static_cast<float>(
      sample_snr_db(cfg.snr_min_db, cfg.snr_max_db, cfg.snr_center_db, rng));
  spec.length = cfg.frame_length;
  spec.seed = frame_seed;
  return spec;
}

namespace {

nlohmann::ordered_json record_to_json(const ManifestRecord& r) {
  nlohmann::ordered_json j;
  j["index"] = r.index;
  j["scheme"] = scheme_name(r.scheme);
  j["t0"] = r.t0;
  if (r.scheme == ModulationScheme::MSK)
    j["beta"] = nullptr;
  else
    j["beta"] = r.beta;
  j["f0"] = r.f0;
  j["snr_db"] = r.snr_db;
  j["seed"] = r.seed;
  j["file"] = r.file;
  j["offset"] = r.offset;
  if (r.scale) j["scale"] = *r.scale;
  if (r.boi) {
    nlohmann::ordered_json b;
    b["center_freq"] = r.boi->center_freq;
    b["bandwidth"] = r.boi->bandwidth;
    b["noise_floor"] = r.boi->noise_floor;
    b["fallback"] = r.boi->fallback;
    j["boi"] = b;
  }
  return j;
}

ManifestRecord record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.index = j.at("index").get<std::uint64_t>();
  auto m = scheme_from_name(j.at("scheme").get<std::string>());
  if (!m) throw IoError("unknown scheme in manifest record");
  r.scheme = *m;
  r.t0 = j.at("t0").get<int>();
  r.beta = j.at("beta").is_null() ? 0.0 : j.at("beta").get<double>();
  r.f0 = j.at("f0").get<double>();
  r.snr_db = j.at("snr_db").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.file = j.at("file").get<std::string>();
  r.offset = j.at("offset").get<std::uint64_t>();
  if (j.contains("scale")) r.scale = j.at("scale").get<double>();
  if (j.contains("boi")) {
    BoiRecord b;
    const auto& jb = j.at("boi");
    b.center_freq = jb.at("center_freq").get<double>();
    b.bandwidth = jb.at("bandwidth").get<double>();
    b.noise_floor = jb.at("noise_floor").get<double>();
    b.fallback = jb.at("fallback").get<bool>();
    r.boi = b;
  }
  return r;
}

}  // namespace

std::vector<ModulationScheme> DatasetManifest::scheme_list() const {
  std::vector<ModulationScheme> out;
  for (const auto& r : records)
    if (std::find(out.begin(), out.end(), r.scheme) == out.end()) out.push_back(r.scheme);
  return out;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["format"] = "cyclecap-dataset";
  j["version"] = 1;
  j["frame_length"] = frame_length;
  j["preprocessed"] = preprocessed;
  j["config"] = config;
  nlohmann::ordered_json frames = nlohmann::ordered_json::array();
  for (const auto& r : records) frames.push_back(record_to_json(r));
  j["frames"] = frames;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("manifest write failed: " + path.string());
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest parse error: " + std::string(e.what()));
  }
  if (j.value("format", "") != "cyclecap-dataset") throw IoError("not a dataset manifest");
  DatasetManifest man;
  man.frame_length = j.at("frame_length").get<int>();
  man.preprocessed = j.value("preprocessed", false);
  man.config = j.at("config");
  for (const auto& rj : j.at("frames")) man.records.push_back(record_from_json(rj));
  return man;
}

DatasetManifest generate_dataset(const GenerationConfig& cfg,
                                 const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output dir: " + out_dir.string());

  DatasetManifest man;
  man.frame_length = cfg.frame_length;
  man.config = config_to_json(cfg);

  std::uint64_t idx = 0;
  for (auto scheme : cfg.scheme_list()) {
    const std::string fname = std::string("frames_") + scheme_name(scheme) + ".cycf";
    FrameFileWriter writer(out_dir / fname, cfg.frame_length, false);
    for (int k = 0; k < cfg.frames_per_class; ++k, ++idx) {
      const std::uint64_t frame_seed = derive_seed(cfg.master_seed, idx);
      const FrameSpec spec = sample_frame_spec(cfg, scheme, frame_seed);
      const IQFrame frame = synthesize_frame(spec);
      ManifestRecord rec;
      rec.index = idx;
      rec.scheme = scheme;
      rec.t0 = spec.t0;
      rec.beta = spec.beta;
      rec.f0 = spec.f0;
      rec.snr_db = spec.snr_db;
      rec.seed = spec.seed;
      rec.file = fname;
      rec.offset = writer.append(frame);
      man.records.push_back(std::move(rec));
    }
    writer.close();
  }
  man.save(out_dir / "manifest.json");
  return man;
}

}  // namespace cyclecap
