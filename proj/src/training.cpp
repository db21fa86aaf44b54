#include "cyclecap/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "cyclecap/errors.hpp"
#include "cyclecap/nn.hpp"
#include "cyclecap/rng.hpp"

namespace cyclecap {

namespace {

void shuffle_indices(std::vector<std::uint32_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

int argmax_row(const nn::Tensor<float>& logits, int row) {
  int best = 0;
  for (int c = 1; c < logits.channels; ++c)
    if (logits.at(row, 0, c) > logits.at(row, 0, best)) best = c;
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------
void SplitSpec::validate() const {
  if (train_frac < 0 || val_frac < 0 || test_frac < 0)
    throw ConfigError("split fractions must be nonnegative");
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  if (train_frac <= 0) throw ConfigError("train fraction must be positive");
}

DatasetSplit split_dataset(const DatasetManifest& manifest, const SplitSpec& spec) {
  spec.validate();
  if (manifest.records.empty()) throw ConfigError("cannot split an empty dataset");

  const auto schemes = manifest.scheme_list();
  DatasetSplit out;
  for (std::size_t s = 0; s < schemes.size(); ++s) {
    std::vector<std::uint32_t> group;
    for (std::uint32_t i = 0; i < manifest.records.size(); ++i)
      if (manifest.records[i].scheme == schemes[s]) group.push_back(i);
    if (group.size() < 4)
      throw ConfigError("scheme " + std::string(scheme_name(schemes[s])) +
                        " has fewer than 4 frames; cannot split");
    Rng rng(derive_seed(spec.seed, s));
    shuffle_indices(group, rng);
    const auto n = group.size();
    const auto n_train = static_cast<std::size_t>(std::floor(spec.train_frac * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::floor(spec.val_frac * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_train)
        out.train.push_back(group[i]);
      else if (i < n_train + n_val)
        out.val.push_back(group[i]);
      else
        out.test.push_back(group[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
FrameStore::FrameStore(const DatasetManifest& manifest, const std::filesystem::path& dir)
    : man_(manifest), dir_(dir), schemes_(manifest.scheme_list()) {
  labels_.reserve(man_.records.size());
  for (const auto& r : man_.records) {
    const auto it = std::find(schemes_.begin(), schemes_.end(), r.scheme);
    labels_.push_back(static_cast<int>(it - schemes_.begin()));
  }
}

std::vector<std::string> FrameStore::scheme_names() const {
  std::vector<std::string> names;
  names.reserve(schemes_.size());
  for (auto s : schemes_) names.emplace_back(scheme_name(s));
  return names;
}

IQFrame FrameStore::frame(std::uint32_t index) const {
  const ManifestRecord& rec = man_.records.at(index);
  auto it = readers_.find(rec.file);
  if (it == readers_.end())
    it = readers_.emplace(rec.file, std::make_unique<FrameFileReader>(dir_ / rec.file)).first;
  FrameFileReader& reader = *it->second;
  const std::uint64_t record_bytes = kFrameMetaBytes + 8ull * reader.frame_length();
  const auto k = static_cast<std::uint32_t>((rec.offset - kFrameHeaderBytes) / record_bytes);
  return reader.read_frame(k);
}

// ---------------------------------------------------------------------------
FeatureCache::FeatureCache(const FrameStore& store,
                           const std::vector<std::uint32_t>& indices,
                           std::ostream* progress) {
  cache_.reserve(indices.size());
  for (std::uint32_t idx : indices) {
    if (cache_.count(idx)) continue;
    cache_.emplace(idx, extract_features(store.frame(idx)));
  }
  if (progress)
    *progress << "features: cached " << cache_.size() << " frames\n";
}

const FeatureSet& FeatureCache::get(std::uint32_t index) const {
  const auto it = cache_.find(index);
  if (it == cache_.end())
    throw std::invalid_argument("feature cache miss for frame " + std::to_string(index));
  return it->second;
}

std::array<double, kNumFeatures> calibrate_feature_scales(
    const FeatureCache& cache, const std::vector<std::uint32_t>& sample) {
  if (sample.empty()) throw std::invalid_argument("empty calibration sample");
  std::array<double, kNumFeatures> scales{};
  for (int k = 0; k < kNumFeatures; ++k) {
    double ss = 0.0;
    std::size_t count = 0;
    for (std::uint32_t idx : sample) {
      const FeatureTensor& f = cache.get(idx)[k];
      for (float v : f.data) ss += static_cast<double>(v) * v;
      count += f.data.size();
    }
    const double rms = std::sqrt(ss / static_cast<double>(count));
    scales[k] = rms > 1e-300 ? 1.0 / rms : 1.0;
  }
  return scales;
}

// ---------------------------------------------------------------------------
void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch size must be >= 2 (batchnorm)");
  if (lr < 0 || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (lr_decay <= 0 || lr_decay > 1) throw ConfigError("lr decay must be in (0, 1]");
  if (lr_patience < 1) throw ConfigError("lr patience must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (epoch_subset < 0) throw ConfigError("epoch subset must be >= 0");
  if (standardize_frames < 1) throw ConfigError("standardize frames must be >= 1");
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,lr,train_loss,train_acc,val_loss,val_acc,seconds,is_best\n";
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.8g,%.8g,%.8g,%.8g,%.8g,%.3f,%d\n", e.epoch,
                  e.lr, e.train_loss, e.train_acc, e.val_loss, e.val_acc, e.seconds,
                  e.is_best ? 1 : 0);
    out += buf;
  }
  return out;
}

namespace {

// Per-branch batch tensors for a list of frame indices, feature scales
// applied during the copy.
void assemble_batch(const CapNetwork<float>& net, const FeatureCache& cache,
                    const std::array<double, kNumFeatures>& scales,
                    const std::uint32_t* indices, int batch,
                    std::vector<nn::Tensor<float>>& xs) {
  const auto& kinds = net.config().kinds;
  if (xs.size() != kinds.size() || (xs.size() && xs[0].batch != batch)) {
    xs.clear();
    for (FeatureKind k : kinds)
      xs.emplace_back(batch, net.frame_length(), feature_channels(k));
  }
  for (std::size_t bi = 0; bi < kinds.size(); ++bi) {
    const int ki = static_cast<int>(kinds[bi]);
    const auto scale = static_cast<float>(scales[ki]);
    nn::Tensor<float>& x = xs[bi];
    const std::size_t per = static_cast<std::size_t>(x.length) * x.channels;
    for (int b = 0; b < batch; ++b) {
      const FeatureTensor& f = cache.get(indices[b])[ki];
      if (f.length != x.length || f.channels != x.channels)
        throw std::invalid_argument("feature tensor does not match the network input");
      float* dst = &x.data[per * b];
      for (std::size_t j = 0; j < per; ++j) dst[j] = f.data[j] * scale;
    }
  }
}

struct PassMetrics {
  double loss = 0.0;
  double acc = 0.0;
};

// Forward-only pass over a list of indices (validation).
PassMetrics eval_pass(CapNetwork<float>& net, const FeatureCache& cache,
                      const std::array<double, kNumFeatures>& scales,
                      const std::vector<std::uint32_t>& indices,
                      const std::vector<int>& labels_all, int batch_size,
                      std::vector<nn::Tensor<float>>& xs) {
  PassMetrics m;
  std::int64_t correct = 0, total = 0;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const int b = static_cast<int>(std::min<std::size_t>(batch_size, indices.size() - start));
    assemble_batch(net, cache, scales, indices.data() + start, b, xs);
    std::vector<int> labels(b);
    for (int i = 0; i < b; ++i) labels[i] = labels_all[indices[start + i]];
    auto logits = net.forward(xs, false);
    auto out = nn::softmax_xent(logits, labels);
    loss_sum += static_cast<double>(out.loss) * b;
    for (int i = 0; i < b; ++i)
      if (argmax_row(logits, i) == labels[i]) ++correct;
    total += b;
  }
  m.loss = loss_sum / static_cast<double>(total);
  m.acc = static_cast<double>(correct) / static_cast<double>(total);
  return m;
}

}  // namespace

TrainResult train(CapNetwork<float>& net, const FrameStore& store,
                  const DatasetSplit& split, const TrainConfig& cfg,
                  std::ostream* progress) {
  cfg.validate();
  if (split.train.size() < 2)
    throw std::invalid_argument("training split needs at least 2 frames");
  if (net.classes() != store.classes())
    throw std::invalid_argument("network class count does not match the dataset");

  nn::set_debug_nan_checks(cfg.debug_nan);

  std::vector<std::uint32_t> cached = split.train;
  cached.insert(cached.end(), split.val.begin(), split.val.end());
  FeatureCache cache(store, cached, progress);

  std::vector<std::uint32_t> calib(
      split.train.begin(),
      split.train.begin() + std::min<std::size_t>(cfg.standardize_frames, split.train.size()));
  TrainResult res;
  res.feature_scales = calibrate_feature_scales(cache, calib);

  std::vector<int> labels_all(store.size());
  for (std::uint32_t i = 0; i < store.size(); ++i) labels_all[i] = store.label(i);

  Rng init_rng(derive_seed(cfg.seed, 0xCA9));
  net.init(init_rng);

  auto params = net.params();
  std::vector<nn::AdamState<float>> states(params.size());

  const bool has_val = !split.val.empty();
  double lr = cfg.lr;
  std::string best_blob;
  double best_acc = -1.0, best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<nn::Tensor<float>> xs, val_xs;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<std::uint32_t> order = split.train;
    Rng shuffle_rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    shuffle_indices(order, shuffle_rng);
    if (cfg.epoch_subset > 0 && order.size() > static_cast<std::size_t>(cfg.epoch_subset))
      order.resize(cfg.epoch_subset);

    double loss_sum = 0.0;
    std::int64_t correct = 0, seen = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += cfg.batch_size) {
      const int b = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - start));
      if (b < 2) break;  // batchnorm needs at least two samples
      assemble_batch(net, cache, res.feature_scales, order.data() + start, b, xs);
      std::vector<int> labels(b);
      for (int i = 0; i < b; ++i) labels[i] = labels_all[order[start + i]];

      net.zero_grad();
      auto logits = net.forward(xs, true);
      auto out = nn::softmax_xent(logits, labels);
      if (!std::isfinite(static_cast<double>(out.loss)))
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch));
      net.backward(out.grad);

      nn::AdamConfig acfg;
      acfg.lr = lr;
      for (std::size_t p = 0; p < params.size(); ++p)
        nn::adam_step(std::span<float>(*params[p].value),
                      std::span<const float>(*params[p].grad), states[p], acfg);

      loss_sum += static_cast<double>(out.loss) * b;
      for (int i = 0; i < b; ++i)
        if (argmax_row(logits, i) == labels[i]) ++correct;
      seen += b;
    }
    if (seen == 0) throw std::invalid_argument("no full training batch; reduce batch size");

    EpochLog el;
    el.epoch = epoch;
    el.lr = lr;
    el.train_loss = loss_sum / static_cast<double>(seen);
    el.train_acc = static_cast<double>(correct) / static_cast<double>(seen);

    if (has_val) {
      const auto vm = eval_pass(net, cache, res.feature_scales, split.val, labels_all,
                                cfg.batch_size, val_xs);
      el.val_loss = vm.loss;
      el.val_acc = vm.acc;
    } else {
      el.val_loss = std::numeric_limits<double>::quiet_NaN();
      el.val_acc = std::numeric_limits<double>::quiet_NaN();
    }

    const double metric_acc = has_val ? el.val_acc : el.train_acc;
    const double metric_loss = has_val ? el.val_loss : el.train_loss;
    if (metric_acc > best_acc || (metric_acc == best_acc && metric_loss < best_loss)) {
      best_acc = metric_acc;
      best_loss = metric_loss;
      since_best = 0;
      el.is_best = true;
      res.best_epoch = epoch;
      res.best_metric = metric_acc;
      std::ostringstream blob;
      net.save(blob);
      best_blob = blob.str();
    } else {
      ++since_best;
    }

    el.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(el);

    if (progress) {
      char line[256];
      std::snprintf(line, sizeof line,
                    "epoch %3d  lr %.2g  train %.4f/%5.1f%%  val %.4f/%5.1f%%%s (%.1f s)\n",
                    epoch, lr, el.train_loss, 100.0 * el.train_acc, el.val_loss,
                    100.0 * el.val_acc, el.is_best ? "  *" : "", el.seconds);
      *progress << line;
    }

    if (since_best >= cfg.patience) break;
    if (since_best > 0 && since_best % cfg.lr_patience == 0) lr *= cfg.lr_decay;
  }

  std::istringstream blob(best_blob);
  net = CapNetwork<float>::load(blob);
  return res;
}

// ---------------------------------------------------------------------------
EvalReport make_report(const std::vector<int>& labels, const std::vector<int>& predictions,
                       const std::vector<double>& snrs_db,
                       const std::vector<std::string>& scheme_names) {
  if (labels.empty()) throw std::invalid_argument("empty evaluation split");
  if (labels.size() != predictions.size() || labels.size() != snrs_db.size())
    throw std::invalid_argument("labels, predictions and SNRs must align");
  const int n = static_cast<int>(scheme_names.size());

  EvalReport r;
  r.scheme_names = scheme_names;
  r.counts.assign(n, std::vector<std::int64_t>(n, 0));
  std::map<int, SnrBinStat> bins;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i], p = predictions[i];
    if (t < 0 || t >= n || p < 0 || p >= n)
      throw std::invalid_argument("label or prediction out of range");
    r.counts[t][p] += 1;
    const int lo = static_cast<int>(std::floor(snrs_db[i]));
    auto& bin = bins[lo];
    bin.snr_lo = lo;
    bin.count += 1;
    if (t == p) bin.correct += 1;
  }
  r.total = static_cast<std::int64_t>(labels.size());
  r.confusion.assign(n, std::vector<double>(n, 0.0));
  r.per_scheme.assign(n, 0.0);
  for (int t = 0; t < n; ++t) {
    std::int64_t row = 0;
    for (int p = 0; p < n; ++p) row += r.counts[t][p];
    r.correct += r.counts[t][t];
    if (row > 0) {
      r.per_scheme[t] = static_cast<double>(r.counts[t][t]) / static_cast<double>(row);
      for (int p = 0; p < n; ++p)
        r.confusion[t][p] = static_cast<double>(r.counts[t][p]) / static_cast<double>(row);
    }
  }
  r.p_cc = static_cast<double>(r.correct) / static_cast<double>(r.total);
  for (auto& [lo, bin] : bins) {
    bin.accuracy = static_cast<double>(bin.correct) / static_cast<double>(bin.count);
    r.snr_curve.push_back(bin);
  }
  return r;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["p_cc"] = p_cc;
  j["total"] = total;
  j["correct"] = correct;
  j["schemes"] = scheme_names;
  j["per_scheme_accuracy"] = per_scheme;
  j["confusion_counts"] = counts;
  j["confusion"] = confusion;
  auto curve = nlohmann::ordered_json::array();
  for (const auto& b : snr_curve) {
    nlohmann::ordered_json e;
    e["snr_lo_db"] = b.snr_lo;
    e["count"] = b.count;
    e["correct"] = b.correct;
    e["accuracy"] = b.accuracy;
    curve.push_back(e);
  }
  j["snr_curve"] = curve;
  return j;
}

std::string EvalReport::confusion_csv() const {
  std::string out = "true\\pred";
  for (const auto& nm : scheme_names) out += "," + nm;
  out += "\n";
  char buf[32];
  for (std::size_t t = 0; t < scheme_names.size(); ++t) {
    out += scheme_names[t];
    for (std::size_t p = 0; p < scheme_names.size(); ++p) {
      std::snprintf(buf, sizeof buf, ",%.6f", confusion[t][p]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string EvalReport::snr_csv() const {
  std::string out = "snr_lo_db,count,correct,accuracy\n";
  char buf[80];
  for (const auto& b : snr_curve) {
    std::snprintf(buf, sizeof buf, "%d,%lld,%lld,%.6f\n", b.snr_lo,
                  static_cast<long long>(b.count), static_cast<long long>(b.correct),
                  b.accuracy);
    out += buf;
  }
  return out;
}

EvalReport evaluate(CapNetwork<float>& net, const FrameStore& store,
                    const std::vector<std::uint32_t>& indices,
                    const std::array<double, kNumFeatures>& scales, int batch_size,
                    std::ostream* progress) {
  if (indices.empty()) throw std::invalid_argument("empty evaluation split");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (net.classes() != store.classes())
    throw std::invalid_argument("network class count does not match the dataset");

  std::vector<int> labels, preds;
  std::vector<double> snrs;
  labels.reserve(indices.size());
  std::vector<nn::Tensor<float>> xs;
  const auto& kinds = net.config().kinds;

  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const int b = static_cast<int>(std::min<std::size_t>(batch_size, indices.size() - start));
    if (xs.empty() || xs[0].batch != b) {
      xs.clear();
      for (FeatureKind k : kinds)
        xs.emplace_back(b, net.frame_length(), feature_channels(k));
    }
    for (int i = 0; i < b; ++i) {
      const std::uint32_t idx = indices[start + i];
      const FeatureSet fs = extract_features(store.frame(idx), &scales);
      for (std::size_t bi = 0; bi < kinds.size(); ++bi) {
        const FeatureTensor& f = fs[static_cast<int>(kinds[bi])];
        nn::Tensor<float>& x = xs[bi];
        if (f.length != x.length || f.channels != x.channels)
          throw std::invalid_argument("feature tensor does not match the network input");
        const std::size_t per = static_cast<std::size_t>(x.length) * x.channels;
        std::copy(f.data.begin(), f.data.end(), x.data.begin() + per * i);
      }
      labels.push_back(store.label(idx));
      snrs.push_back(store.snr_db(idx));
    }
    auto logits = net.forward(xs, false);
    for (int i = 0; i < b; ++i) preds.push_back(argmax_row(logits, i));
    if (progress && ((start / batch_size) % 8 == 0))
      *progress << "eval " << std::min(start + b, indices.size()) << "/" << indices.size()
                << "\r" << std::flush;
  }
  if (progress) *progress << "eval " << indices.size() << "/" << indices.size() << "\n";
  return make_report(labels, preds, snrs, store.scheme_names());
}

CrossReport cross_evaluate(CapNetwork<float>& net, const FrameStore& store_b,
                           const std::vector<std::uint32_t>& indices_b,
                           const std::array<double, kNumFeatures>& scales,
                           const EvalReport& within_report,
                           const DatasetManifest* trained_on, int batch_size,
                           std::ostream* progress) {
  CrossReport cr;
  cr.report = evaluate(net, store_b, indices_b, scales, batch_size, progress);
  if (cr.report.scheme_names != within_report.scheme_names)
    throw std::invalid_argument("cross-evaluation datasets list different schemes");
  cr.within_p_cc = within_report.p_cc;
  cr.delta = within_report.p_cc - cr.report.p_cc;
  cr.per_scheme_delta.resize(cr.report.per_scheme.size());
  for (std::size_t i = 0; i < cr.per_scheme_delta.size(); ++i)
    cr.per_scheme_delta[i] = within_report.per_scheme[i] - cr.report.per_scheme[i];
  if (trained_on != nullptr) {
    const auto& ja = trained_on->config;
    const auto& jb = store_b.manifest().config;
    if (ja.contains("cfo_low") && jb.contains("cfo_low")) {
      const double alo = ja.at("cfo_low").get<double>(), ahi = ja.at("cfo_high").get<double>();
      const double blo = jb.at("cfo_low").get<double>(), bhi = jb.at("cfo_high").get<double>();
      cr.cfo_overlap = std::max(alo, blo) < std::min(ahi, bhi);
    }
  }
  return cr;
}

nlohmann::ordered_json CrossReport::to_json() const {
  nlohmann::ordered_json j;
  j["cross"] = report.to_json();
  j["within_p_cc"] = within_p_cc;
  j["delta"] = delta;
  j["per_scheme_delta"] = per_scheme_delta;
  j["cfo_overlap_warning"] = cfo_overlap;
  return j;
}

// ---------------------------------------------------------------------------
namespace {
constexpr char kCkptMagic[8] = {'C', 'Y', 'C', 'K', 'P', 'T', '1', '\n'};
}

void save_checkpoint(const std::filesystem::path& path, const CapNetwork<float>& net,
                     const std::array<double, kNumFeatures>& scales,
                     const std::string& config_echo) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(kCkptMagic, sizeof kCkptMagic);
  const std::uint64_t n = config_echo.size();
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(config_echo.data(), static_cast<std::streamsize>(n));
  os.write(reinterpret_cast<const char*>(scales.data()), sizeof(double) * kNumFeatures);
  net.save(os);
  if (!os) throw IoError("checkpoint write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[sizeof kCkptMagic];
  is.read(magic, sizeof magic);
  if (!is || !std::equal(magic, magic + sizeof magic, kCkptMagic))
    throw IoError("not a checkpoint file: " + path.string());
  std::uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!is || n > (1ull << 32)) throw IoError("checkpoint corrupt: " + path.string());
  LoadedCheckpoint out;
  out.config_echo.resize(n);
  is.read(out.config_echo.data(), static_cast<std::streamsize>(n));
  is.read(reinterpret_cast<char*>(out.scales.data()), sizeof(double) * kNumFeatures);
  if (!is) throw IoError("checkpoint truncated: " + path.string());
  out.net = CapNetwork<float>::load(is);
  return out;
}

}  // namespace cyclecap
