// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "contrastforge/dataset.hpp"
#include "contrastforge/errors.hpp"
#include "contrastforge/ini.hpp"
#include "contrastforge/metrics.hpp"
#include "contrastforge/trainers.hpp"
#include "contrastforge/volume_io.hpp"

namespace contrastforge::cli {
namespace fs = std::filesystem;
namespace {

std::string read_text(const fs::path& p) {
  const auto bytes = read_file_bytes(p);
  return std::string(bytes.begin(), bytes.end());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": " + ec.message());
}

fs::path resolve_manifest(const fs::path& p) {
  if (fs::is_directory(p)) return p / kManifestName;
  if (!fs::exists(p)) throw IoError(p.string() + ": no such dataset");
  return p;
}

bool is_dataset(const fs::path& p) {
  if (fs::is_directory(p)) return fs::exists(p / kManifestName);
  return p.filename() == kManifestName;
}

std::string subject_file(std::size_t index) { return fmt::format("subject_{:03}.cfv", index); }

std::optional<std::size_t> subject_index(const std::string& name) {
  unsigned idx = 0;
  char tail[8] = {};
  if (std::sscanf(name.c_str(), "subject_%3u%7s", &idx, tail) == 2 && std::string(tail) == ".cfv") return idx;
  return std::nullopt;
}

std::vector<fs::path> list_volumes(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".cfv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::size_t resolve_threads(std::size_t flag, bool flag_given) {
  if (flag_given) {
    if (flag == 0) throw UsageError("--threads must be >= 1");
    return flag;
  }
  if (const char* env = std::getenv("CONTRASTFORGE_THREADS"); env != nullptr && *env != '\0') {
    std::size_t n = 0;
    try {
      n = static_cast<std::size_t>(ini::parse_u64(env, "CONTRASTFORGE_THREADS"));
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    if (n == 0) throw UsageError("CONTRASTFORGE_THREADS must be >= 1");
    return n;
  }
  return 1;
}

std::string task_label(Contrast source, Contrast target) {
  auto tag = [](Contrast c) { return c == Contrast::kT1w ? "T1" : c == Contrast::kT2w ? "T2" : "?"; };
  return std::string(tag(source)) + "->" + tag(target);
}

Contrast other(Contrast c) { return c == Contrast::kT1w ? Contrast::kT2w : Contrast::kT1w; }

// --- phantom -----------------------------------------------------------------

struct PhantomArgs {
  DatasetSpec spec;
  std::string noise_contrast = "t1w";
  std::string out;
};

void cmd_phantom(PhantomArgs& a, std::ostream& out) {
  if (a.noise_contrast == "t1w") {
    a.spec.noise_target = NoiseTarget::kT1w;
  } else if (a.noise_contrast == "t2w") {
    a.spec.noise_target = NoiseTarget::kT2w;
  } else if (a.noise_contrast == "both") {
    a.spec.noise_target = NoiseTarget::kBoth;
  } else {
    throw ConfigError("--noise-contrast must be t1w, t2w or both");
  }
  const Dataset ds = generate_dataset(a.spec, a.out);
  const auto& s = ds.manifest.spec;
  out << fmt::format("wrote {} subjects ({} train, {} test), {}x{}x{} voxels, seed {}, {}, noise {} on {}\n",
                     s.subjects, ds.manifest.role(true).size(), ds.manifest.role(false).size(), s.slices, s.size,
                     s.size, s.seed, s.misalign ? "T2w misaligned" : "registered", s.noise, a.noise_contrast);
  out << fmt::format("pooled stats: t1w mean {:.6f} std {:.6f}; t2w mean {:.6f} std {:.6f}\n",
                     ds.manifest.t1w_stats.mean, ds.manifest.t1w_stats.stddev, ds.manifest.t2w_stats.mean,
                     ds.manifest.t2w_stats.stddev);
  out << "manifest: " << (fs::path(a.out) / kManifestName).string() << '\n';
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::string resume;
};

void cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = TrainConfig::parse(read_text(a.config), a.config, a.overrides);
  if (cfg.manifest.empty()) throw ConfigError("config has no [run] manifest");
  const Dataset ds = load_dataset(resolve_manifest(cfg.manifest));
  const fs::path dir = a.out;
  make_dir(dir);
  write_file_text(dir / "config.ini", cfg.to_text());

  std::optional<Checkpoint> resume;
  RunLog previous;
  if (!a.resume.empty()) {
    resume = read_checkpoint(a.resume);
    const fs::path prior = fs::path(a.resume).parent_path() / "runlog.csv";
    if (fs::exists(prior)) {
      previous = RunLog::parse_csv(read_text(prior));
      std::erase_if(previous.records, [&](const LogRecord& r) { return r.step > resume->step; });
    }
  }
  auto log_text = [&](const RunLog& current) { return previous.to_csv() + current.to_csv(false); };

  TrainHooks hooks;
  std::size_t seen = 0;
  const RunLog* latest = nullptr;
  hooks.on_epoch = [&](int epoch, const RunLog& log) {
    latest = &log;
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = seen; i < log.records.size(); ++i) {
      if (log.records[i].loss == "G_total") {
        total += log.records[i].value;
        ++n;
      }
    }
    seen = log.records.size();
    err << fmt::format("epoch {}/{}  lr {:.3g}  mean G_total {:.5f}\n", epoch, cfg.epochs,
                       log.records.empty() ? 0.0 : log.records.back().lr, n ? total / static_cast<double>(n) : 0.0);
  };
  hooks.on_checkpoint = [&](const Checkpoint& ckpt) {
    write_checkpoint(dir / fmt::format("ckpt_epoch_{:03}.cfck", ckpt.epoch), ckpt);
    if (latest != nullptr) write_file_text(dir / "runlog.csv", log_text(*latest));
  };
  TrainResult result = train(cfg, ds, resume ? &*resume : nullptr, hooks);
  write_checkpoint(dir / "final.cfck", result.checkpoint);
  write_file_text(dir / "runlog.csv", log_text(result.log));
  out << fmt::format("trained {} for {} epochs ({} steps); final checkpoint {}\n", mode_name(cfg.mode), cfg.epochs,
                     result.checkpoint.step, (dir / "final.cfck").string());
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string ckpt;
  std::string source;
  std::string out;
  std::string pgm_dir;
  std::string subset = "test";
  bool reverse = false;
  std::size_t threads = 1;
  bool threads_given = false;
};

void export_pgm(const fs::path& dir, const std::string& stem, const Volume& v) {
  make_dir(dir);
  for (std::size_t z = 0; z < v.depth; ++z) {
    write_pgm16(dir / fmt::format("{}_slice_{:03}.pgm", stem, z), v.slice(z), v.height, v.width);
  }
}

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  const Checkpoint ckpt = read_checkpoint(a.ckpt);
  SynthOptions opt;
  opt.reverse = a.reverse;
  opt.threads = resolve_threads(a.threads, a.threads_given);
  const Contrast in_c = a.reverse ? ckpt.config.target : ckpt.config.source;

  if (!is_dataset(a.source)) {
    const Volume v = synthesize(ckpt, read_volume(a.source), opt);
    write_volume(a.out, v);
    if (!a.pgm_dir.empty()) export_pgm(a.pgm_dir, fs::path(a.out).stem().string(), v);
    out << "wrote " << a.out << '\n';
    return;
  }
  if (a.subset != "test" && a.subset != "train" && a.subset != "all") {
    throw UsageError("--subset must be test, train or all");
  }
  const Dataset ds = load_dataset(resolve_manifest(a.source));
  const fs::path dir = a.out;
  make_dir(dir);
  ini::Writer w;
  w.section("synth")
      .set("checkpoint_config_hash", fmt::format("{:016x}", ckpt.config_hash))
      .set("mode", mode_name(ckpt.config.mode))
      .set("source_contrast", contrast_name(in_c))
      .set("reverse", a.reverse)
      .set("subset", a.subset)
      .set("dataset", a.source);
  write_file_text(dir / "synth.ini", w.str());
  std::size_t n = 0;
  for (const auto& s : ds.subjects) {
    if (a.subset != "all" && s.record.train != (a.subset == "train")) continue;
    const Volume v = synthesize(ckpt, s.get(in_c), opt);
    write_volume(dir / subject_file(s.record.index), v);
    if (!a.pgm_dir.empty()) export_pgm(a.pgm_dir, fmt::format("subject_{:03}", s.record.index), v);
    ++n;
  }
  out << fmt::format("wrote {} {} volumes to {}\n", n, contrast_name(other(in_c)), dir.string());
}

// --- baseline ----------------------------------------------------------------

struct BaselineArgs {
  std::string manifest;
  std::string source = "t1w";
  std::string kind = "cubic";
  std::string out;
};

void cmd_baseline(const BaselineArgs& a, std::ostream& out) {
  const Contrast src = parse_contrast(a.source), tgt = other(src);
  if (a.kind != "copy" && a.kind != "cubic") throw UsageError("--kind must be copy or cubic");
  const Dataset ds = load_dataset(resolve_manifest(a.manifest));
  CubicMap map;
  map.coeffs = {0.0, 1.0, 0.0, 0.0};
  if (a.kind == "cubic") {
    std::vector<double> xs, ys;
    for (const auto* s : ds.role(true)) {
      const auto &x = s->get(src).voxels, &y = s->get(tgt).voxels;
      xs.insert(xs.end(), x.begin(), x.end());
      ys.insert(ys.end(), y.begin(), y.end());
    }
    map = baseline_regress(xs, ys);
  }
  const fs::path dir = a.out;
  make_dir(dir);
  ini::Writer w;
  w.section("baseline").set("kind", a.kind).set("source", contrast_name(src)).set("target", contrast_name(tgt));
  for (std::size_t i = 0; i < 4; ++i) w.set(fmt::format("c{}", i), map.coeffs[i]);
  write_file_text(dir / "baseline.ini", w.str());
  std::size_t n = 0;
  for (const auto* s : ds.role(false)) {
    Volume v = s->get(src);
    for (double& x : v.voxels) x = map(x);
    v.contrast = tgt;
    v.misaligned = false;
    v.rigid = {};
    write_volume(dir / subject_file(s->record.index), v);
    ++n;
  }
  out << fmt::format("wrote {} {} baseline volumes to {}\n", n, a.kind, dir.string());
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string ref;
  std::string out;
  std::string task;
  std::string method = "model";
};

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (!fs::exists(a.ref)) throw IoError(a.ref + ": reference not found");
  const auto files = list_volumes(a.pred);
  if (files.empty()) throw DataError(a.pred + ": no .cfv volumes to evaluate");
  std::vector<Volume> pred, ref;
  std::optional<Dataset> ds;
  if (is_dataset(a.ref)) ds = load_dataset(resolve_manifest(a.ref));
  for (const auto& f : files) {
    pred.push_back(read_volume(f));
    if (ds) {
      const auto idx = subject_index(f.filename().string());
      if (!idx || *idx >= ds->subjects.size()) {
        throw DataError(f.string() + ": no matching subject in " + a.ref);
      }
      if (pred.back().contrast == Contrast::kUnknown) throw DataError(f.string() + ": volume has no contrast tag");
      ref.push_back(ds->subjects[*idx].get(pred.back().contrast));
    } else {
      ref.push_back(read_volume(fs::path(a.ref) / f.filename()));
    }
  }
  const Contrast tgt = pred.front().contrast;
  const std::string task = a.task.empty() ? task_label(other(tgt), tgt) : a.task;
  const MetricReport report = evaluate(pred, ref, task, a.method);
  const std::vector<MetricReport> one{report};
  write_file_text(a.out, report_csv(one));
  const auto p = report.psnr_stats(), s = report.ssim_stats();
  out << fmt::format("{} {}: PSNR {:.2f} ± {:.2f} dB, SSIM {:.3f} ± {:.3f} over {} slices", task, a.method, p.mean,
                     p.stddev, s.mean, s.stddev, report.psnr.size());
  if (report.excluded() > 0) out << fmt::format(" ({} infinite PSNR excluded)", report.excluded());
  out << '\n';
}

// --- report ------------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
  std::string csv;
};

void cmd_report(const ReportArgs& a, std::ostream& out) {
  std::vector<ReportRow> rows;
  for (const auto& in : a.inputs) {
    auto part = parse_report_csv(read_text(in), in);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (rows.empty()) throw DataError("report: inputs contain no rows");
  const std::string table = report_table(rows);
  if (!a.csv.empty()) write_file_text(a.csv, report_csv(rows));
  write_file_text(a.out, table);
  out << table;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"contrastforge: multi-contrast MR synthesis with conditional GANs on phantom data"};
  app.name("contrastforge");
  app.require_subcommand(1);

  PhantomArgs ph;
  auto* phantom = app.add_subcommand("phantom", "generate a paired T1w/T2w phantom dataset");
  phantom->add_option("--subjects", ph.spec.subjects, "number of subjects")->capture_default_str();
  phantom->add_option("--size", ph.spec.size, "in-plane size in voxels")->capture_default_str();
  phantom->add_option("--slices", ph.spec.slices, "axial slices per volume")->capture_default_str();
  phantom->add_option("--tissues", ph.spec.n_tissues, "tissue classes (2-6)")->capture_default_str();
  phantom->add_option("--seed", ph.spec.seed, "dataset seed")->capture_default_str();
  phantom->add_option("--train-fraction", ph.spec.train_fraction, "fraction of subjects used for training")
      ->capture_default_str();
  phantom->add_flag("--misalign", ph.spec.misalign, "rigidly misalign every T2w volume");
  phantom->add_option("--max-rotation", ph.spec.max_rotation_deg, "misalignment bound in degrees")
      ->capture_default_str();
  phantom->add_option("--max-shift", ph.spec.max_shift_vox, "misalignment bound in voxels")->capture_default_str();
  phantom->add_option("--noise", ph.spec.noise, "noise std relative to the in-mask mean signal")
      ->capture_default_str();
  phantom->add_option("--noise-contrast", ph.noise_contrast, "t1w, t2w or both")->capture_default_str();
  phantom->add_option("--out", ph.out, "output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a pgan or cgan model");
  train_cmd->add_option("--config", tr.config, "config file")->required();
  train_cmd->add_option("--override", tr.overrides, "key=value or section.key=value (repeatable)");
  train_cmd->add_option("--out", tr.out, "run directory")->required();
  train_cmd->add_option("--resume", tr.resume, "checkpoint to continue from");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "synthesize target-contrast volumes");
  synth->add_option("--ckpt", sy.ckpt, "checkpoint file")->required();
  synth->add_option("--source", sy.source, "source .cfv volume, or a dataset directory/manifest")->required();
  synth->add_option("--out", sy.out, "output .cfv (single volume) or directory (dataset)")->required();
  synth->add_option("--subset", sy.subset, "dataset subjects to synthesize: test, train or all")
      ->capture_default_str();
  synth->add_flag("--reverse", sy.reverse, "cgan only: map target contrast back to source");
  synth->add_option("--pgm-dir", sy.pgm_dir, "also export every slice as 16-bit PGM");
  auto* threads = synth->add_option("--threads", sy.threads, "worker threads (default 1, or CONTRASTFORGE_THREADS)");

  BaselineArgs bl;
  auto* baseline = app.add_subcommand("baseline", "write copy-source or cubic-regression predictions");
  baseline->add_option("--manifest", bl.manifest, "dataset directory or manifest")->required();
  baseline->add_option("--source", bl.source, "source contrast (t1w or t2w)")->capture_default_str();
  baseline->add_option("--kind", bl.kind, "copy or cubic")->capture_default_str();
  baseline->add_option("--out", bl.out, "output directory")->required();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "slice-wise PSNR/SSIM of predictions against references");
  eval->add_option("--pred", ev.pred, "directory of predicted .cfv volumes")->required();
  eval->add_option("--ref", ev.ref, "reference directory, or a dataset directory/manifest")->required();
  eval->add_option("--out", ev.out, "metric CSV")->required();
  eval->add_option("--task", ev.task, "task label (default from contrast tags, e.g. T1->T2)");
  eval->add_option("--method", ev.method, "method label")->capture_default_str();

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "merge metric CSVs into a comparison table");
  report->add_option("--inputs", rp.inputs, "metric CSV files")->required()->expected(1, -1);
  report->add_option("--out", rp.out, "table text file")->required();
  report->add_option("--csv", rp.csv, "also write the merged CSV");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (phantom->parsed()) cmd_phantom(ph, out);
    if (train_cmd->parsed()) cmd_train(tr, out, err);
    if (synth->parsed()) {
      sy.threads_given = threads->count() > 0;
      cmd_synth(sy, out);
    }
    if (baseline->parsed()) cmd_baseline(bl, out);
    if (eval->parsed()) cmd_eval(ev, out);
    if (report->parsed()) cmd_report(rp, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const FitError& e) {
    err << "fit error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}

}  // namespace contrastforge::cli
