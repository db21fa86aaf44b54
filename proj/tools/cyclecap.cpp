// cyclecap: dataset synthesis, blind preprocessing, nonlinear-feature
// inspection, capsule-network training/evaluation and CSP line diagnostics
// behind one binary. Exit codes: 0 ok, 2 config, 3 io, 4 numeric, 5 selftest.
#include <CLI11.hpp>

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cyclecap/cap.hpp"
#include "cyclecap/cf_oracle.hpp"
#include "cyclecap/dataset.hpp"
#include "cyclecap/errors.hpp"
#include "cyclecap/fft.hpp"
#include "cyclecap/frame.hpp"
#include "cyclecap/preprocessing.hpp"
#include "cyclecap/run_config.hpp"
#include "cyclecap/synthesis.hpp"
#include "cyclecap/training.hpp"

namespace fs = std::filesystem;
using namespace cyclecap;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

RunConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    RunConfig rc;
    rc.validate();
    return rc;
  }
  return load_run_config(path);
}

DatasetManifest load_manifest(const fs::path& data_dir) {
  return DatasetManifest::load(data_dir / "manifest.json");
}

std::vector<std::uint32_t> pick_split(const DatasetManifest& man, const SplitSpec& spec,
                                      const std::string& which) {
  if (which == "all") {
    std::vector<std::uint32_t> all(man.records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
    return all;
  }
  const auto split = split_dataset(man, spec);
  if (which == "train") return split.train;
  if (which == "val") return split.val;
  return split.test;
}

void write_eval_outputs(const fs::path& dir, const EvalReport& report) {
  fs::create_directories(dir);
  write_text(dir / "eval_report.json", report.to_json().dump(2) + "\n");
  write_text(dir / "confusion.csv", report.confusion_csv());
  write_text(dir / "snr_curve.csv", report.snr_csv());
}

// ---------------------------------------------------------------------------
// Pipeline stages shared by the standalone subcommands and `repro`.

void do_gen(const RunConfig& rc, const fs::path& out) {
  generate_dataset(rc.dataset, out);
  write_text(out / "config_echo.ini", render_run_config(rc));
  const auto schemes = rc.dataset.scheme_list();
  std::cout << "generated " << schemes.size() * rc.dataset.frames_per_class << " frames ("
            << schemes.size() << " schemes x " << rc.dataset.frames_per_class << ") in "
            << out.string() << "\n";
}

void do_preprocess(const RunConfig& rc, const fs::path& in, const fs::path& out) {
  const auto man = preprocess_dataset(in, out, rc.preprocess);
  write_text(out / "config_echo.ini", render_run_config(rc));
  std::cout << "preprocessed " << man.records.size() << " frames into " << out.string() << "\n";
}

EvalReport do_train(const RunConfig& rc, const fs::path& data, const fs::path& out,
                    bool quiet = false) {
  const auto man = load_manifest(data);
  FrameStore store(man, data);
  const auto split = split_dataset(man, rc.split);
  CapNetwork<float> net(make_cap_config(rc, man.frame_length, store.classes()));

  std::ostream* progress = quiet ? nullptr : &std::cout;
  const auto res = train(net, store, split, rc.train, progress);

  fs::create_directories(out);
  const auto echo = render_run_config(rc);
  write_text(out / "config_echo.ini", echo);
  write_text(out / "training_log.csv", training_log_csv(res.log));
  save_checkpoint(out / "model.ckpt", net, res.feature_scales, echo);

  const auto report = evaluate(net, store, split.test, res.feature_scales, rc.eval_batch,
                               progress);
  write_eval_outputs(out, report);
  std::cout << "best epoch " << res.best_epoch << " (metric " << res.best_metric
            << "), test P_CC " << report.p_cc << "; artifacts in " << out.string() << "\n";
  return report;
}

EvalReport do_eval(const fs::path& ckpt, const fs::path& data, const fs::path& out,
                   const std::string& which) {
  auto lc = load_checkpoint(ckpt);
  const auto rc = parse_run_config(lc.config_echo);
  const auto man = load_manifest(data);
  FrameStore store(man, data);
  const auto indices = pick_split(man, rc.split, which);
  const auto report = evaluate(lc.net, store, indices, lc.scales, rc.eval_batch, &std::cout);
  write_eval_outputs(out, report);
  write_text(out / "config_echo.ini", lc.config_echo);
  std::cout << "P_CC " << report.p_cc << " on " << report.total << " frames (" << which
            << " split of " << data.string() << ")\n";
  return report;
}

EvalReport within_from_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open within-dataset report: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    EvalReport within;
    within.p_cc = j.at("p_cc").get<double>();
    within.scheme_names = j.at("schemes").get<std::vector<std::string>>();
    within.per_scheme = j.at("per_scheme_accuracy").get<std::vector<double>>();
    return within;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed report " + path.string() + ": " + e.what());
  }
}

CrossReport do_xeval(const fs::path& ckpt, const fs::path& data, const fs::path& out,
                     const fs::path& within_path, const std::string& trained_data,
                     const std::string& which) {
  auto lc = load_checkpoint(ckpt);
  const auto rc = parse_run_config(lc.config_echo);
  const auto man = load_manifest(data);
  FrameStore store(man, data);
  const auto indices = pick_split(man, rc.split, which);
  const auto within = within_from_json(within_path);

  DatasetManifest trained_man;
  const DatasetManifest* trained_ptr = nullptr;
  if (!trained_data.empty()) {
    trained_man = load_manifest(trained_data);
    trained_ptr = &trained_man;
  }

  const auto cross = cross_evaluate(lc.net, store, indices, lc.scales, within, trained_ptr,
                                    rc.eval_batch, &std::cout);
  fs::create_directories(out);
  write_text(out / "cross_report.json", cross.to_json().dump(2) + "\n");
  write_text(out / "confusion.csv", cross.report.confusion_csv());
  write_text(out / "snr_curve.csv", cross.report.snr_csv());
  write_text(out / "config_echo.ini", lc.config_echo);

  std::cout << "within P_CC " << cross.within_p_cc << ", cross P_CC " << cross.report.p_cc
            << ", drop " << cross.delta << "\n";
  if (cross.cfo_overlap)
    std::cout << "warning: CFO ranges of the two datasets overlap; this is a weak"
                 " generalization test\n";
  return cross;
}

// ---------------------------------------------------------------------------

int cmd_features(const std::string& data, int index, const std::string& kind_name,
                 const std::string& out_path) {
  const auto man = load_manifest(data);
  FrameStore store(man, data);
  if (index < 0 || index >= static_cast<int>(man.records.size()))
    throw ConfigError("frame index out of range");
  const auto feats = extract_features(store.frame(static_cast<std::uint32_t>(index)));

  std::vector<FeatureKind> kinds;
  if (kind_name == "all") {
    kinds = all_feature_kinds();
  } else {
    const auto k = feature_from_name(kind_name);
    if (!k) throw ConfigError("unknown feature kind '" + kind_name + "'");
    kinds = {*k};
  }

  std::ostringstream csv;
  csv << "kind,index,c0,c1\n";
  for (const auto k : kinds) {
    const auto& f = feats[static_cast<int>(k)];
    for (int t = 0; t < f.length; ++t) {
      csv << feature_name(k) << "," << t << "," << f.at(t, 0) << ",";
      if (f.channels > 1) csv << f.at(t, 1);
      csv << "\n";
    }
  }
  if (out_path == "-") std::cout << csv.str();
  else write_text(out_path, csv.str());
  return 0;
}

double circular_distance(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 1.0 - d);
}

// Detector windows scaled down from their 32768-bin defaults so short frames
// stay diagnosable.
LineDetectOptions scaled_line_options(int n) {
  LineDetectOptions opts;
  opts.smooth_bins = std::min(33, std::max(2, n / 64) | 1);
  opts.baseline_half_window = std::max(8, std::min(256, n / 8));
  opts.guard_bins = std::max(opts.smooth_bins / 2, std::min(48, n / 32));
  opts.min_separation_bins = opts.smooth_bins;
  return opts;
}

int cmd_lines(const std::string& data, int index, const std::string& orders_csv,
              double min_prominence, int k_max, double f0_override, bool has_f0) {
  const auto man = load_manifest(data);
  FrameStore store(man, data);
  if (index < 0 || index >= static_cast<int>(man.records.size()))
    throw ConfigError("frame index out of range");
  const auto& rec = man.records[index];

  std::vector<int> orders;
  for (std::istringstream in(orders_csv); !in.eof();) {
    std::string tok;
    std::getline(in, tok, ',');
    const int n = std::atoi(tok.c_str());
    if (n != 2 && n != 4 && n != 6 && n != 8)
      throw ConfigError("orders must be drawn from 2,4,6,8");
    orders.push_back(n);
  }

  double f0 = rec.f0;
  if (man.preprocessed && rec.boi) f0 -= rec.boi->center_freq;  // residual after centering
  if (has_f0) f0 = f0_override;

  const auto feats = extract_features(store.frame(static_cast<std::uint32_t>(index)));
  const int length = man.frame_length;

  std::cout << "frame " << index << "  scheme " << scheme_name(rec.scheme) << "  t0 "
            << rec.t0 << "  f0 " << rec.f0 << "  f0_used " << f0 << "\n";
  const auto min_order = expected_min_order(rec.scheme);
  if (min_order)
    std::cout << "lowest order with nonconjugate lines for this scheme: " << *min_order
              << "\n";
  else
    std::cout << "no nonconjugate lines expected for this scheme at any order\n";

  for (const int n : orders) {
    const auto kind = static_cast<FeatureKind>(4 + n / 2 - 1);  // FREQ2..FREQ8
    const auto preds = cycle_frequency_set(n, 0, f0, rec.t0, k_max);
    std::cout << "\norder " << n << " (" << feature_name(kind) << ")\n  predicted alphas:";
    for (const double a : preds) std::cout << " " << std::setprecision(6) << a;
    std::cout << "\n  detected lines (prominence >= " << min_prominence << " dB):\n";
    const auto lines = detect_spectral_lines(feats[static_cast<int>(kind)], min_prominence,
                                             scaled_line_options(length));
    if (lines.empty()) {
      std::cout << "    (none)\n";
      continue;
    }
    std::cout << "    " << std::setw(12) << "alpha" << std::setw(12) << "prom_db"
              << std::setw(14) << "nearest_pred" << std::setw(12) << "dist_bins" << "\n";
    for (const auto& ln : lines) {
      double best = 0.0, best_d = 2.0;
      for (const double a : preds) {
        const double d = circular_distance(ln.frequency, a);
        if (d < best_d) {
          best_d = d;
          best = a;
        }
      }
      std::cout << "    " << std::setw(12) << ln.frequency << std::setw(12)
                << std::setprecision(4) << ln.prominence_db << std::setw(14)
                << std::setprecision(6) << best << std::setw(12) << std::setprecision(3)
                << best_d * length << "\n";
    }
  }
  return 0;
}

int cmd_inspect(const std::string& config_path, int frame_length, int classes) {
  auto rc = config_or_default(config_path);
  if (frame_length == 0) frame_length = rc.dataset.frame_length;
  CapNetwork<float> net(make_cap_config(rc, frame_length, classes));
  std::cout << net.describe();
  return 0;
}

// ---------------------------------------------------------------------------
// Built-in oracle suite: fast independent checks of the numeric core.

int cmd_selftest() {
  struct Check {
    const char* name;
    bool ok = false;
    std::string detail;
  };
  std::vector<Check> checks;

  const auto run = [&checks](const char* name, auto&& fn) {
    Check c{name};
    try {
      fn(c);
      if (c.detail.empty()) c.ok = true;
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = e.what();
    }
    checks.push_back(std::move(c));
  };

  run("power features match the complex-power oracle", [](Check& c) {
    const int n = 4096;
    Rng rng(11);
    std::vector<double> xi(n), xq(n);
    for (int t = 0; t < n; ++t) {
      const auto z = rng.cgaussian();
      xi[t] = z.real();
      xq[t] = z.imag();
    }
    std::vector<double> i2, q2, i4, q4, i6, q6, i8, q8;
    square_layer(xi, xq, i2, q2);
    square_layer(i2, q2, i4, q4);
    pow3_layer(i2, q2, i6, q6);
    square_layer(i4, q4, i8, q8);
    double worst = 0.0;
    for (int t = 0; t < n; ++t) {
      const std::complex<double> z(xi[t], xq[t]);
      for (const auto& [p, vi, vq] :
           {std::tuple{2, i2[t], q2[t]}, std::tuple{4, i4[t], q4[t]},
            std::tuple{6, i6[t], q6[t]}, std::tuple{8, i8[t], q8[t]}}) {
        const auto ref = std::pow(z, p);
        const double err = std::abs(std::complex<double>(vi, vq) - ref) /
                           std::max(std::abs(ref), 1e-30);
        worst = std::max(worst, err);
      }
    }
    if (worst > 1e-10) c.detail = "relative error " + std::to_string(worst);
  });

  run("fft magnitude layer matches the naive DFT", [](Check& c) {
    const int n = 256;
    Rng rng(12);
    std::vector<double> xi(n), xq(n);
    for (int t = 0; t < n; ++t) {
      const auto z = rng.cgaussian();
      xi[t] = z.real();
      xq[t] = z.imag();
    }
    const auto mag = fft_mag_layer(xi, xq);
    double worst = 0.0;
    for (int b = 0; b < n; ++b) {
      std::complex<double> acc(0.0, 0.0);
      const int k = b - n / 2;  // bin n/2 holds zero frequency
      for (int t = 0; t < n; ++t)
        acc += std::complex<double>(xi[t], xq[t]) *
               std::polar(1.0, -2.0 * M_PI * k * t / n);
      worst = std::max(worst, std::abs(mag[b] - std::abs(acc)));
    }
    if (worst > 1e-6) c.detail = "absolute error " + std::to_string(worst);
  });

  run("pure tone lands on the shifted bin", [](Check& c) {
    const int n = 1024, k = 100;
    std::vector<double> xi(n), xq(n);
    for (int t = 0; t < n; ++t) {
      xi[t] = std::cos(2.0 * M_PI * k * t / n);
      xq[t] = std::sin(2.0 * M_PI * k * t / n);
    }
    const auto mag = fft_mag_layer(xi, xq);
    int argmax = 0;
    for (int b = 1; b < n; ++b)
      if (mag[b] > mag[argmax]) argmax = b;
    if (argmax != n / 2 + k)
      c.detail = "peak at bin " + std::to_string(argmax) + ", expected " +
                 std::to_string(n / 2 + k);
  });

  run("gradient check on a two-branch micro network", [](Check& c) {
    CapConfig cfg;
    cfg.frame_length = 32;
    cfg.classes = 3;
    cfg.kernel = 5;
    cfg.filters = {6, 8};
    cfg.kinds = {FeatureKind::TIME2, FeatureKind::FREQ4};
    CapNetwork<double> net(cfg);
    Rng rng(13);
    net.init(rng);

    std::vector<nn::Tensor<double>> xs;
    for (const auto kind : cfg.kinds) {
      nn::Tensor<double> x(2, cfg.frame_length, feature_channels(kind));
      for (auto& v : x.data) v = rng.gaussian();
      xs.push_back(std::move(x));
    }
    const std::vector<int> labels = {0, 2};
    const auto loss_fn = [&]() {
      net.zero_grad();
      auto logits = net.forward(xs, true);
      const auto sx = nn::softmax_xent(logits, labels);
      net.backward(sx.grad);
      return sx.loss;
    };
    nn::GradCheckOptions opts;
    opts.max_checked = 150;
    opts.probe_seed = 5;
    const auto res = nn::grad_check(loss_fn, net.params(), opts);
    if (!res.passed)
      c.detail = "max rel err " + std::to_string(res.max_rel_err) + " at " + res.worst_name;
  });

  run("adam first step matches the closed form", [](Check& c) {
    std::vector<double> theta = {1.5, -2.0, 0.5};
    const std::vector<double> grad = {0.3, -1.2, 2.5};
    const auto before = theta;
    nn::AdamState<double> st;
    nn::AdamConfig acfg;
    nn::adam_step<double>(theta, grad, st, acfg);
    for (int i = 0; i < 3; ++i) {
      const double want = before[i] - acfg.lr * grad[i] / (std::abs(grad[i]) + acfg.eps);
      if (std::abs(theta[i] - want) > 1e-12) {
        c.detail = "component " + std::to_string(i) + " off by " +
                   std::to_string(theta[i] - want);
        return;
      }
    }
  });

  run("reference topology parameter count", [](Check& c) {
    const auto net = build_cap();
    if (net.parameter_count() != 2208200)
      c.detail = "got " + std::to_string(net.parameter_count());
  });

  run("preprocessing yields unit total power", [](Check& c) {
    FrameSpec spec;
    spec.scheme = ModulationScheme::QPSK;
    spec.t0 = 8;
    spec.f0 = 0.01;
    spec.snr_db = 10.0;
    spec.length = 1024;
    spec.seed = 14;
    const auto frame = synthesize_frame(spec);
    const auto pre = preprocess_frame(frame, PreprocessOptions{});
    const double power = pre.frame.mean_power();
    if (std::abs(power - 1.0) > 1e-6)
      c.detail = "mean power " + std::to_string(power);
  });

  bool all_ok = true;
  for (const auto& c : checks) {
    all_ok = all_ok && c.ok;
    std::cout << (c.ok ? "ok   - " : "FAIL - ") << c.name;
    if (!c.ok && !c.detail.empty()) std::cout << " (" << c.detail << ")";
    std::cout << "\n";
  }
  std::cout << (all_ok ? "selftest passed" : "selftest FAILED") << " (" << checks.size()
            << " checks)\n";
  return all_ok ? 0 : 5;
}

// ---------------------------------------------------------------------------
// Desk-scale end-to-end reproduction: two CFO configs, both train/eval
// directions, 2x2 accuracy matrix.

RunConfig repro_defaults() {
  RunConfig rc;
  rc.dataset.name = "repro";
  rc.dataset.frames_per_class = 40;
  rc.dataset.frame_length = 2048;
  rc.dataset.t0_min = 4;
  rc.dataset.t0_max = 10;
  rc.dataset.beta_min = 0.2;
  rc.dataset.beta_max = 0.8;
  rc.dataset.snr_min_db = 16.0;
  rc.dataset.snr_max_db = 18.0;
  rc.dataset.snr_center_db = 17.0;
  rc.train.epochs = 15;
  rc.train.batch_size = 8;
  rc.train.lr = 2e-3;
  rc.train.lr_patience = 5;
  rc.train.patience = 15;
  rc.train.standardize_frames = 32;
  rc.validate();
  return rc;
}

int cmd_repro(const std::string& config_path, const fs::path& out, double cfo_b_low,
              double cfo_b_high, double snr_b_shift) {
  RunConfig rc_a = config_path.empty() ? repro_defaults() : load_run_config(config_path);
  rc_a.dataset.name += "_a";

  // Dataset B emulates collection-condition drift relative to A: a disjoint
  // CFO range plus an upward-shifted SNR distribution.
  RunConfig rc_b = rc_a;
  rc_b.dataset.name.back() = 'b';
  rc_b.dataset.cfo_low = cfo_b_low;
  rc_b.dataset.cfo_high = cfo_b_high;
  rc_b.dataset.snr_min_db += snr_b_shift;
  rc_b.dataset.snr_max_db += snr_b_shift;
  rc_b.dataset.snr_center_db += snr_b_shift;
  rc_b.dataset.master_seed = rc_a.dataset.master_seed + 1;
  rc_b.validate();

  fs::create_directories(out);
  std::cout << "== dataset A (cfo " << rc_a.dataset.cfo_low << " .. " << rc_a.dataset.cfo_high
            << ", snr " << rc_a.dataset.snr_min_db << " .. " << rc_a.dataset.snr_max_db
            << " dB) ==\n";
  do_gen(rc_a, out / "raw_a");
  do_preprocess(rc_a, out / "raw_a", out / "data_a");
  std::cout << "== dataset B (cfo " << rc_b.dataset.cfo_low << " .. " << rc_b.dataset.cfo_high
            << ", snr " << rc_b.dataset.snr_min_db << " .. " << rc_b.dataset.snr_max_db
            << " dB) ==\n";
  do_gen(rc_b, out / "raw_b");
  do_preprocess(rc_b, out / "raw_b", out / "data_b");

  std::cout << "== training on A ==\n";
  const auto rep_aa = do_train(rc_a, out / "data_a", out / "run_a");
  std::cout << "== training on B ==\n";
  const auto rep_bb = do_train(rc_b, out / "data_b", out / "run_b");

  std::cout << "== cross evaluation ==\n";
  const auto cross_ab =
      do_xeval(out / "run_a" / "model.ckpt", out / "data_b", out / "run_a" / "cross_on_b",
               out / "run_a" / "eval_report.json", (out / "data_a").string(), "all");
  const auto cross_ba =
      do_xeval(out / "run_b" / "model.ckpt", out / "data_a", out / "run_b" / "cross_on_a",
               out / "run_b" / "eval_report.json", (out / "data_b").string(), "all");

  nlohmann::ordered_json m;
  m["schemes"] = rep_aa.scheme_names;
  m["p_cc"]["train_a"]["eval_a"] = rep_aa.p_cc;
  m["p_cc"]["train_a"]["eval_b"] = cross_ab.report.p_cc;
  m["p_cc"]["train_b"]["eval_a"] = cross_ba.report.p_cc;
  m["p_cc"]["train_b"]["eval_b"] = rep_bb.p_cc;
  write_text(out / "matrix.json", m.dump(2) + "\n");

  std::ostringstream table;
  table << std::fixed << std::setprecision(4);
  table << "P_CC           eval on A   eval on B\n";
  table << "trained on A      " << rep_aa.p_cc << "      " << cross_ab.report.p_cc << "\n";
  table << "trained on B      " << cross_ba.report.p_cc << "      " << rep_bb.p_cc << "\n";
  write_text(out / "matrix.txt", table.str());
  std::cout << "\n" << table.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  CLI::App app{"cyclostationary-feature capsule classifier toolkit"};
  app.require_subcommand(1);

  int threads = 1;
  app.add_option("--threads", threads, "BLAS worker threads (1 = bit-reproducible)")
      ->check(CLI::Range(1, 256));

  std::string config_path, data_dir, in_dir, out_dir, ckpt_path;
  std::string kind = "all", split_name = "test", orders = "2,4,6,8";
  std::string out_path = "-", within_path, trained_data;
  int index = 0, frame_length = 0, classes = 8, k_max = kMaxHarmonic;
  double min_prominence = 6.0, f0_override = 0.0;
  double cfo_b_low = 0.01, cfo_b_high = 0.02, snr_b_shift = 5.0;

  auto* gen = app.add_subcommand("gen", "synthesize a dataset");
  gen->add_option("--config", config_path, "run config file");
  gen->add_option("--out", out_dir, "output dataset directory")->required();

  auto* pre = app.add_subcommand("preprocess", "BOI-center and normalize a dataset");
  pre->add_option("--config", config_path, "run config file");
  pre->add_option("--in", in_dir, "generated dataset directory")->required();
  pre->add_option("--out", out_dir, "output dataset directory")->required();

  auto* feat = app.add_subcommand("features", "dump nonlinear features of one frame as CSV");
  feat->add_option("--data", data_dir, "dataset directory")->required();
  feat->add_option("--index", index, "frame index")->required();
  feat->add_option("--kind", kind, "feature kind or 'all'");
  feat->add_option("--out", out_path, "output file, '-' for stdout");

  auto* lines = app.add_subcommand("lines", "detected spectral lines vs predicted alphas");
  lines->add_option("--data", data_dir, "dataset directory")->required();
  lines->add_option("--index", index, "frame index")->required();
  lines->add_option("--orders", orders, "comma list from 2,4,6,8");
  lines->add_option("--min-prominence", min_prominence, "detection threshold, dB");
  lines->add_option("--k-max", k_max, "largest symbol-rate harmonic")
      ->check(CLI::Range(0, kMaxHarmonic));
  auto* f0_opt = lines->add_option("--f0", f0_override, "override the residual carrier");

  auto* tr = app.add_subcommand("train", "train a capsule network");
  tr->add_option("--config", config_path, "run config file");
  tr->add_option("--data", data_dir, "preprocessed dataset directory")->required();
  tr->add_option("--out", out_dir, "run output directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  ev->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  ev->add_option("--data", data_dir, "preprocessed dataset directory")->required();
  ev->add_option("--out", out_dir, "report output directory")->required();
  ev->add_option("--split", split_name, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));

  auto* xe = app.add_subcommand("xeval", "cross-dataset evaluation with deltas");
  xe->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  xe->add_option("--data", data_dir, "foreign preprocessed dataset directory")->required();
  xe->add_option("--out", out_dir, "report output directory")->required();
  xe->add_option("--within", within_path,
                 "within-dataset eval_report.json (default: next to the checkpoint)");
  xe->add_option("--trained-data", trained_data,
                 "training dataset directory, enables the CFO-overlap warning");
  xe->add_option("--split", split_name, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));

  auto* ins = app.add_subcommand("inspect", "print the network topology table");
  ins->add_option("--config", config_path, "run config file");
  ins->add_option("--frame-length", frame_length, "input frame length (default: config)");
  ins->add_option("--classes", classes, "class count");

  auto* st = app.add_subcommand("selftest", "run the built-in oracle suite");

  auto* rep = app.add_subcommand("repro", "full two-config pipeline with a 2x2 matrix");
  rep->add_option("--config", config_path, "run config file for dataset A");
  rep->add_option("--out", out_dir, "pipeline output directory")->required();
  rep->add_option("--cfo-b-low", cfo_b_low, "dataset B CFO lower bound");
  rep->add_option("--cfo-b-high", cfo_b_high, "dataset B CFO upper bound");
  rep->add_option("--snr-b-shift", snr_b_shift, "dataset B SNR shift vs A, dB");

  // lets the global --threads appear after the subcommand name
  for (auto* sc : {gen, pre, feat, lines, tr, ev, xe, ins, st, rep}) sc->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    nn::set_blas_threads(threads);
    if (gen->parsed()) {
      do_gen(config_or_default(config_path), out_dir);
      return 0;
    }
    if (pre->parsed()) {
      do_preprocess(config_or_default(config_path), in_dir, out_dir);
      return 0;
    }
    if (feat->parsed()) return cmd_features(data_dir, index, kind, out_path);
    if (lines->parsed())
      return cmd_lines(data_dir, index, orders, min_prominence, k_max, f0_override,
                       f0_opt->count() > 0);
    if (tr->parsed()) {
      do_train(config_or_default(config_path), data_dir, out_dir);
      return 0;
    }
    if (ev->parsed()) {
      do_eval(ckpt_path, data_dir, out_dir, split_name);
      return 0;
    }
    if (xe->parsed()) {
      const fs::path within = within_path.empty()
                                  ? fs::path(ckpt_path).parent_path() / "eval_report.json"
                                  : fs::path(within_path);
      do_xeval(ckpt_path, data_dir, out_dir, within, trained_data, split_name);
      return 0;
    }
    if (ins->parsed()) return cmd_inspect(config_path, frame_length, classes);
    if (st->parsed()) return cmd_selftest();
    if (rep->parsed()) return cmd_repro(config_path, out_dir, cfo_b_low, cfo_b_high, snr_b_shift);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
