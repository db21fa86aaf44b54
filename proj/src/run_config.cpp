#include "cyclecap/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string_view>

#include "cyclecap/errors.hpp"

namespace cyclecap {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

long long to_int(std::string_view v, int line) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    fail(line, "expected an integer, got '" + std::string(v) + "'");
  return out;
}

std::uint64_t to_u64(std::string_view v, int line) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    fail(line, "expected an unsigned integer, got '" + std::string(v) + "'");
  return out;
}

double to_double(std::string_view v, int line) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    fail(line, "expected a number, got '" + std::string(v) + "'");
  return out;
}

bool to_bool(std::string_view v, int line) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail(line, "expected true or false, got '" + std::string(v) + "'");
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(trim(v.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace

void RunConfig::validate() const {
  try {
    dataset.validate();
    split.validate();
    train.validate();
    CapConfig probe;
    probe.kernel = model_kernel;
    probe.filters = model_filters;
    probe.kinds = kinds;
    probe.frame_length = dataset.frame_length;
    probe.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (preprocess.segment_length < 8)
    throw ConfigError("preprocess.segment_length must be at least 8");
  if (preprocess.overlap < 0.0 || preprocess.overlap >= 1.0)
    throw ConfigError("preprocess.overlap must be in [0, 1)");
  if (preprocess.threshold_factor <= 0.0)
    throw ConfigError("preprocess.threshold_factor must be positive");
  if (preprocess.gap_bins < 0) throw ConfigError("preprocess.gap_bins must be nonnegative");
  if (preprocess.guard_factor < 1.0)
    throw ConfigError("preprocess.guard_factor must be at least 1");
  if (eval_batch < 1) throw ConfigError("eval.batch_size must be at least 1");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::string section;
  std::set<std::string> seen;  // "section.key", for duplicate detection

  static const std::set<std::string> kSections = {"dataset", "preprocess", "features",
                                                  "model",   "train",      "eval"};

  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view s = raw;
    if (const auto hash = s.find_first_of("#;"); hash != std::string_view::npos)
      s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;

    if (s.front() == '[') {
      if (s.back() != ']') fail(line, "malformed section header");
      section = std::string(trim(s.substr(1, s.size() - 2)));
      if (!kSections.count(section)) fail(line, "unknown section [" + section + "]");
      continue;
    }

    const auto eq = s.find('=');
    if (eq == std::string_view::npos) fail(line, "expected key = value");
    const std::string key(trim(s.substr(0, eq)));
    const std::string_view val = trim(s.substr(eq + 1));
    if (key.empty()) fail(line, "empty key");
    if (val.empty()) fail(line, "empty value for '" + key + "'");
    if (section.empty()) fail(line, "key '" + key + "' appears before any section");
    if (!seen.insert(section + "." + key).second)
      fail(line, "duplicate key '" + key + "' in [" + section + "]");

    if (section == "dataset") {
      auto& d = cfg.dataset;
      if (key == "name") d.name = std::string(val);
      else if (key == "schemes") {
        d.schemes.clear();
        for (auto tok : split_list(val)) {
          const auto s2 = scheme_from_name(tok);
          if (!s2) fail(line, "unknown scheme '" + std::string(tok) + "'");
          d.schemes.push_back(*s2);
        }
      } else if (key == "frames_per_class") d.frames_per_class = static_cast<int>(to_int(val, line));
      else if (key == "frame_length") d.frame_length = static_cast<int>(to_int(val, line));
      else if (key == "t0_min") d.t0_min = static_cast<int>(to_int(val, line));
      else if (key == "t0_max") d.t0_max = static_cast<int>(to_int(val, line));
      else if (key == "beta_min") d.beta_min = to_double(val, line);
      else if (key == "beta_max") d.beta_max = to_double(val, line);
      else if (key == "snr_min_db") d.snr_min_db = to_double(val, line);
      else if (key == "snr_max_db") d.snr_max_db = to_double(val, line);
      else if (key == "snr_center_db") d.snr_center_db = to_double(val, line);
      else if (key == "cfo_low") d.cfo_low = to_double(val, line);
      else if (key == "cfo_high") d.cfo_high = to_double(val, line);
      else if (key == "master_seed") d.master_seed = to_u64(val, line);
      else fail(line, "unknown key '" + key + "' in [dataset]");
    } else if (section == "preprocess") {
      auto& p = cfg.preprocess;
      if (key == "segment_length") p.segment_length = static_cast<int>(to_int(val, line));
      else if (key == "overlap") p.overlap = to_double(val, line);
      else if (key == "threshold_factor") p.threshold_factor = to_double(val, line);
      else if (key == "gap_bins") p.gap_bins = static_cast<int>(to_int(val, line));
      else if (key == "guard_factor") p.guard_factor = to_double(val, line);
      else fail(line, "unknown key '" + key + "' in [preprocess]");
    } else if (section == "features") {
      if (key == "kinds") {
        cfg.kinds.clear();
        for (auto tok : split_list(val)) {
          const auto k = feature_from_name(tok);
          if (!k) fail(line, "unknown feature kind '" + std::string(tok) + "'");
          cfg.kinds.push_back(*k);
        }
      } else fail(line, "unknown key '" + key + "' in [features]");
    } else if (section == "model") {
      if (key == "kernel") cfg.model_kernel = static_cast<int>(to_int(val, line));
      else if (key == "filters") {
        cfg.model_filters.clear();
        for (auto tok : split_list(val))
          cfg.model_filters.push_back(static_cast<int>(to_int(tok, line)));
      } else fail(line, "unknown key '" + key + "' in [model]");
    } else if (section == "train") {
      auto& t = cfg.train;
      if (key == "epochs") t.epochs = static_cast<int>(to_int(val, line));
      else if (key == "batch_size") t.batch_size = static_cast<int>(to_int(val, line));
      else if (key == "lr") t.lr = to_double(val, line);
      else if (key == "lr_decay") t.lr_decay = to_double(val, line);
      else if (key == "lr_patience") t.lr_patience = static_cast<int>(to_int(val, line));
      else if (key == "patience") t.patience = static_cast<int>(to_int(val, line));
      else if (key == "epoch_subset") t.epoch_subset = static_cast<int>(to_int(val, line));
      else if (key == "standardize_frames")
        t.standardize_frames = static_cast<int>(to_int(val, line));
      else if (key == "seed") t.seed = to_u64(val, line);
      else if (key == "debug_nan") t.debug_nan = to_bool(val, line);
      else if (key == "train_frac") cfg.split.train_frac = to_double(val, line);
      else if (key == "val_frac") cfg.split.val_frac = to_double(val, line);
      else if (key == "test_frac") cfg.split.test_frac = to_double(val, line);
      else if (key == "split_seed") cfg.split.seed = to_u64(val, line);
      else fail(line, "unknown key '" + key + "' in [train]");
    } else {  // eval
      if (key == "batch_size") cfg.eval_batch = static_cast<int>(to_int(val, line));
      else fail(line, "unknown key '" + key + "' in [eval]");
    }
  }

  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string render_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  const auto& d = cfg.dataset;
  out << "[dataset]\n";
  out << "name = " << d.name << "\n";
  out << "schemes = ";
  const auto schemes = d.scheme_list();
  for (std::size_t i = 0; i < schemes.size(); ++i)
    out << (i ? ", " : "") << scheme_name(schemes[i]);
  out << "\n";
  out << "frames_per_class = " << d.frames_per_class << "\n";
  out << "frame_length = " << d.frame_length << "\n";
  out << "t0_min = " << d.t0_min << "\n";
  out << "t0_max = " << d.t0_max << "\n";
  out << "beta_min = " << fmt(d.beta_min) << "\n";
  out << "beta_max = " << fmt(d.beta_max) << "\n";
  out << "snr_min_db = " << fmt(d.snr_min_db) << "\n";
  out << "snr_max_db = " << fmt(d.snr_max_db) << "\n";
  out << "snr_center_db = " << fmt(d.snr_center_db) << "\n";
  out << "cfo_low = " << fmt(d.cfo_low) << "\n";
  out << "cfo_high = " << fmt(d.cfo_high) << "\n";
  out << "master_seed = " << d.master_seed << "\n";

  const auto& p = cfg.preprocess;
  out << "\n[preprocess]\n";
  out << "segment_length = " << p.segment_length << "\n";
  out << "overlap = " << fmt(p.overlap) << "\n";
  out << "threshold_factor = " << fmt(p.threshold_factor) << "\n";
  out << "gap_bins = " << p.gap_bins << "\n";
  out << "guard_factor = " << fmt(p.guard_factor) << "\n";

  out << "\n[features]\n";
  out << "kinds = ";
  for (std::size_t i = 0; i < cfg.kinds.size(); ++i)
    out << (i ? ", " : "") << feature_name(cfg.kinds[i]);
  out << "\n";

  out << "\n[model]\n";
  out << "kernel = " << cfg.model_kernel << "\n";
  out << "filters = ";
  for (std::size_t i = 0; i < cfg.model_filters.size(); ++i)
    out << (i ? ", " : "") << cfg.model_filters[i];
  out << "\n";

  const auto& t = cfg.train;
  out << "\n[train]\n";
  out << "epochs = " << t.epochs << "\n";
  out << "batch_size = " << t.batch_size << "\n";
  out << "lr = " << fmt(t.lr) << "\n";
  out << "lr_decay = " << fmt(t.lr_decay) << "\n";
  out << "lr_patience = " << t.lr_patience << "\n";
  out << "patience = " << t.patience << "\n";
  out << "epoch_subset = " << t.epoch_subset << "\n";
  out << "standardize_frames = " << t.standardize_frames << "\n";
  out << "seed = " << t.seed << "\n";
  out << "debug_nan = " << (t.debug_nan ? "true" : "false") << "\n";
  out << "train_frac = " << fmt(cfg.split.train_frac) << "\n";
  out << "val_frac = " << fmt(cfg.split.val_frac) << "\n";
  out << "test_frac = " << fmt(cfg.split.test_frac) << "\n";
  out << "split_seed = " << cfg.split.seed << "\n";

  out << "\n[eval]\n";
  out << "batch_size = " << cfg.eval_batch << "\n";
  return out.str();
}

CapConfig make_cap_config(const RunConfig& cfg, int frame_length, int classes) {
  CapConfig out;
  out.frame_length = frame_length;
  out.classes = classes;
  out.kernel = cfg.model_kernel;
  out.filters = cfg.model_filters;
  out.kinds = cfg.kinds;
  try {
    out.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return out;
}

}  // namespace cyclecap
