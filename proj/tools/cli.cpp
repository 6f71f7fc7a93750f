// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "ld3m/config.hpp"
#include "ld3m/errors.hpp"
#include "ld3m/ops.hpp"

namespace ld3m {

namespace fs = std::filesystem;

namespace {

constexpr const char* kExitCodes =
    "Exit codes: 0 ok, 1 other error, 2 usage or invalid config, 3 gate failure,\n"
    "            4 numeric abort (diagnostics dump path printed), 5 corrupt input file.\n"
    "Environment: LD3M_SEED overrides global_seed.";

struct UsageError : Error {
  using Error::Error;
};

// One process owns an output directory at a time.
class DirLock {
 public:
  explicit DirLock(const std::string& dir) : path_((fs::path(dir) / ".ld3m.lock").string()) {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw Error("output directory " + dir + " is locked (" + path_ + "): " + std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
  int fd_ = -1;
};

RunConfig read_config(const std::string& path) {
  if (path.empty()) throw UsageError("--config is required");
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw UsageError("config " + path + " is not valid JSON: " + e.what());
  }
  RunConfig cfg;
  try {
    cfg = config_from_json(j);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (const char* s = std::getenv("LD3M_SEED"); s && *s) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (*end != '\0') throw UsageError(std::string("LD3M_SEED is not an unsigned integer: ") + s);
    cfg.global_seed = v;
  }
  return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir) / name).string();
}

void echo_config(const RunConfig& cfg) { write_file_atomic(out_path(cfg, "config.json"), config_to_json(cfg).dump(2) + "\n"); }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> parse_grid(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) {
    if (item == "...") {
      // "10,20,...,90": extend the arithmetic progression to the next value.
      out.push_back(static_cast<std::size_t>(-1));
      continue;
    }
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v == 0) throw UsageError("bad T value '" + item + "' in --t-grid");
    out.push_back(v);
  }
  std::vector<std::size_t> grid;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] != static_cast<std::size_t>(-1)) {
      grid.push_back(out[i]);
      continue;
    }
    if (grid.size() < 2 || i + 1 >= out.size() || out[i + 1] == static_cast<std::size_t>(-1)) {
      throw UsageError("'...' in --t-grid needs two values before it and one after");
    }
    const std::size_t step = grid[grid.size() - 1] - grid[grid.size() - 2];
    if (grid[grid.size() - 1] <= grid[grid.size() - 2]) throw UsageError("'...' needs an increasing progression");
    for (std::size_t v = grid.back() + step; v < out[i + 1]; v += step) grid.push_back(v);
  }
  if (grid.empty()) throw UsageError("empty --t-grid");
  return grid;
}

struct Loaded {
  ToyCorpus corpus;
  ModelBundle bundle;
};

Loaded load_inputs(const RunConfig& cfg) {
  const std::string bundle_path = out_path(cfg, "bundle.ld3b");
  if (!fs::exists(bundle_path)) throw UsageError("no bundle at " + bundle_path + " (run `ld3m pretrain` first)");
  Loaded l{load_corpus(cfg.corpus, cfg.corpus_seed()), load_bundle(bundle_path)};
  if (l.bundle.num_classes != l.corpus.num_classes || l.bundle.side != l.corpus.side) {
    throw CorruptFileError("bundle dimensions do not match the configured corpus");
  }
  return l;
}

NoiseSchedule schedule_for(const RunConfig& cfg, std::size_t T) { return cfg.schedule.family.make(T); }

// ---------------------------------------------------------------------------

int cmd_pretrain(RunConfig cfg, bool force_experts, std::ostream& out) {
  DirLock lock(cfg.output_dir);
  echo_config(cfg);
  const ToyCorpus corpus = load_corpus(cfg.corpus, cfg.corpus_seed());
  out << "corpus: " << corpus.train.size() << " train / " << corpus.test.size() << " test images, "
      << corpus.num_classes << " classes, side " << corpus.side << "\n";
  const ModelBundle bundle = pretrain_bundle(corpus, cfg.schedule.family, cfg.model.bundle, cfg.bundle_seed());
  save_bundle(out_path(cfg, "bundle.ld3b"), bundle);

  json metrics;
  metrics["recon_mse"] = bundle.recon_mse;
  metrics["recon_gate"] = cfg.model.recon_gate;
  metrics["gate_passed"] = bundle.recon_mse <= cfg.model.recon_gate;
  json dn = json::array();
  const NoiseSchedule sch = cfg.schedule.make();
  for (std::size_t t : {std::size_t{1}, (sch.T + 1) / 2, sch.T}) {
    const double m = denoising_mse(bundle.denoiser, bundle.embedder, bundle.ae, corpus.test, sch, t, cfg.bundle_seed());
    dn.push_back({{"t", t}, {"gamma", sch.gamma_at(t)}, {"mse", m}, {"zero_predictor", bundle.d_latent()}});
  }
  metrics["denoising_mse"] = dn;

  if (force_experts || cfg.distill.algorithm == Algorithm::mtt) {
    const ExpertBuffer experts = train_experts(corpus, cfg.experts, cfg.expert_seed());
    save_experts(out_path(cfg, "experts.ld3e"), experts);
    WitnessNet net = WitnessNet::build(experts.arch, corpus.side, corpus.num_classes, 0);
    json accs = json::array();
    for (const auto& traj : experts.trajectories) {
      for (std::size_t i = 0; i < net.params().size(); ++i) net.params()[i] = Var(traj.back()[i]);
      accs.push_back(accuracy(net, corpus.test.images, corpus.test.labels));
    }
    metrics["expert_test_accuracy"] = accs;
  }
  write_file_atomic(out_path(cfg, "pretrain_metrics.json"), metrics.dump(2) + "\n");
  out << "recon_mse " << format_double(bundle.recon_mse) << " (gate " << format_double(cfg.model.recon_gate) << ")\n";
  if (bundle.recon_mse > cfg.model.recon_gate) {
    throw GateError("reconstruction MSE " + format_double(bundle.recon_mse) + " exceeds the gate " +
                    format_double(cfg.model.recon_gate));
  }
  return kExitOk;
}

int cmd_distill(RunConfig cfg, std::ostream& out) {
  DirLock lock(cfg.output_dir);
  echo_config(cfg);
  const Loaded in = load_inputs(cfg);
  const DistillConfig dc = cfg.effective_distill();
  const NoiseSchedule schedule = cfg.schedule.make();
  std::unique_ptr<ExpertBuffer> experts;
  if (dc.algorithm == Algorithm::mtt) {
    const std::string p = out_path(cfg, "experts.ld3e");
    if (!fs::exists(p)) throw GateError("MTT needs an expert buffer at " + p + " (run `ld3m pretrain`)");
    experts = std::make_unique<ExpertBuffer>(load_experts(p));
  }
  DistilledSet init = init_distilled(in.corpus, in.bundle, dc.ipc, cfg.init_seed(), dc.init);

  std::vector<StepResult> history;
  DistillResult res;
  try {
    res = run_distillation(dc, in.corpus, in.bundle, schedule, init.clone(), experts.get(),
                           [&](std::size_t it, const StepResult& r) {
                             history.push_back(r);
                             if ((it + 1) % 100 == 0) out << "iter " << it + 1 << " loss " << format_double(r.loss) << "\n";
                           });
  } catch (const NumericAbort& e) {
    json dump;
    dump["error"] = e.what();
    dump["iterations_completed"] = history.size();
    json losses = json::array();
    for (const auto& r : history) losses.push_back({r.loss, r.grad_norm_Z, r.grad_norm_c});
    dump["history"] = losses;
    dump["config"] = config_to_json(cfg);
    const std::string path = out_path(cfg, "numeric_abort.json");
    write_file_atomic(path, dump.dump(2) + "\n");
    throw NumericAbort(e.what(), path);
  }

  json meta;
  meta["seed"] = cfg.global_seed;
  meta["mode"] = to_string(dc.mode);
  meta["T"] = dc.T;
  meta["algorithm"] = to_string(dc.algorithm);
  meta["iterations"] = dc.iterations;
  meta["lr"] = dc.effective_lr();
  meta["init"] = to_string(dc.init);
  meta["denoiser_calls"] = res.denoiser_calls;
  save_distilled_set(out_path(cfg, "distilled.ld3m"), res.set, meta);

  std::string loss_csv = "iter,loss,grad_norm_Z,grad_norm_c\n";
  std::string timing_csv = "iter,wall_ms\n";
  for (std::size_t i = 0; i < res.steps.size(); ++i) {
    const auto& r = res.steps[i];
    loss_csv += std::to_string(i) + "," + format_double(r.loss) + "," + format_double(r.grad_norm_Z) + "," +
                format_double(r.grad_norm_c) + "\n";
    timing_csv += std::to_string(i) + "," + format_double(res.wall_ms[i]) + "\n";
  }
  write_file_atomic(out_path(cfg, "loss.csv"), loss_csv);
  write_file_atomic(out_path(cfg, "timing.csv"), timing_csv);
  double total_ms = 0.0;
  for (double w : res.wall_ms) total_ms += w;
  json metrics = meta;
  metrics["total_wall_ms"] = total_ms;
  metrics["final_loss"] = res.steps.empty() ? json(nullptr) : json(res.steps.back().loss);
  write_file_atomic(out_path(cfg, "distill_metrics.json"), metrics.dump(2) + "\n");
  out << "wrote " << out_path(cfg, "distilled.ld3m") << " (" << res.set.size() << " samples, mode "
      << to_string(dc.mode) << ", denoiser calls " << res.denoiser_calls << ")\n";
  return kExitOk;
}

int cmd_probe(RunConfig cfg, const std::string& grid, const std::string& modes, bool paths, std::ostream& out) {
  if (!grid.empty()) cfg.probe.t_grid = parse_grid(grid);
  if (!modes.empty()) cfg.probe.modes = split_list(modes);
  std::vector<ChainMode> cm;
  for (const auto& m : cfg.probe.modes) {
    try {
      cm.push_back(parse_chain_mode(m));
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }
  DirLock lock(cfg.output_dir);
  echo_config(cfg);
  const Loaded in = load_inputs(cfg);
  ProbeSpec spec;
  spec.family = cfg.schedule.family;
  const GradProbeReport rep = probe_grad_norms(in.bundle, cfg.probe.t_grid, cm, cfg.probe_seed(), spec);

  std::string csv = "T,mode,grad_norm_Z,grad_norm_c,wall_ms\n";
  json rows = json::array();
  for (const auto& r : rep.rows) {
    csv += std::to_string(r.T) + "," + to_string(r.mode) + "," + format_double(r.grad_norm_Z) + "," +
           format_double(r.grad_norm_c) + "," + format_double(r.wall_ms) + "\n";
    rows.push_back({{"T", r.T},
                    {"mode", to_string(r.mode)},
                    {"grad_norm_Z", r.grad_norm_Z},
                    {"grad_norm_c", r.grad_norm_c},
                    {"wall_ms", r.wall_ms}});
  }
  json report{{"rows", rows}, {"seed", rep.seed}, {"config", config_to_json(cfg)}};
  if (paths) {
    std::string pcsv = "T,t,skip_norm,chain_norm,full_norm\n";
    json pj = json::array();
    for (std::size_t T : cfg.probe.t_grid) {
      const PathReport pr = decompose_paths(in.bundle, schedule_for(cfg, T), cfg.probe_seed());
      for (const auto& row : pr.rows) {
        pcsv += std::to_string(T) + "," + std::to_string(row.t) + "," + format_double(row.skip_norm) + "," +
                format_double(row.chain_norm) + "," + format_double(pr.full_norm) + "\n";
        pj.push_back({{"T", T}, {"t", row.t}, {"skip_norm", row.skip_norm}, {"chain_norm", row.chain_norm},
                      {"full_norm", pr.full_norm}});
      }
    }
    report["paths"] = pj;
    write_file_atomic(out_path(cfg, "paths.csv"), pcsv);
  }
  write_file_atomic(out_path(cfg, "probe.csv"), csv);
  write_file_atomic(out_path(cfg, "probe.json"), report.dump(2) + "\n");
  out << "wrote " << out_path(cfg, "probe.csv") << " (" << rep.rows.size() << " rows)\n";
  return kExitOk;
}

struct SetInput {
  std::string label;
  DistilledSet set;
  DistillMode mode;
  std::size_t T;
};

SetInput read_set(const std::string& path, const std::string& label, const ModelBundle& bundle) {
  json meta;
  DistilledSet ds = load_distilled_set(path, &meta);
  if (ds.Z.shape()[1] != bundle.d_latent() || ds.c.shape()[1] != bundle.d_embed() ||
      ds.num_classes != bundle.num_classes) {
    throw CorruptFileError(path + ": set dimensions do not match the bundle");
  }
  try {
    return SetInput{label, std::move(ds), parse_distill_mode(meta.at("mode").get<std::string>()),
                    meta.at("T").get<std::size_t>()};
  } catch (const std::exception& e) {
    throw CorruptFileError(path + ": metadata lacks a valid mode/T (" + e.what() + ")");
  }
}

void add_eval_rows(const std::string& label, const EvalResult& r, std::string& cells, std::string& summary,
                   json& j) {
  json rows = json::array();
  for (const auto& a : r.rows) {
    for (std::size_t s = 0; s < a.accuracies.size(); ++s) {
      cells += label + "," + a.arch + "," + std::to_string(s) + "," + format_double(a.accuracies[s]) + "\n";
    }
    summary += label + "," + a.arch + "," + format_double(a.mean) + "," + format_double(a.std) + "\n";
    rows.push_back({{"arch", a.arch}, {"accuracies", a.accuracies}, {"mean", a.mean}, {"std", a.std}});
  }
  summary += label + ",all," + format_double(r.mean()) + "," + format_double(r.std()) + "\n";
  j.push_back({{"condition", label}, {"rows", rows}, {"mean", r.mean()}, {"std", r.std()}});
}

int cmd_eval(RunConfig cfg, std::vector<std::string> sets, std::vector<std::string> labels, bool baselines,
             std::ostream& out) {
  DirLock lock(cfg.output_dir);
  const Loaded in = load_inputs(cfg);
  if (sets.empty()) sets.push_back(out_path(cfg, "distilled.ld3m"));
  if (!labels.empty() && labels.size() != sets.size()) throw UsageError("--label must be given once per --set");
  // Parse every input before producing any output.
  std::vector<SetInput> inputs;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (!fs::exists(sets[i])) throw UsageError("set file not found: " + sets[i]);
    inputs.push_back(read_set(sets[i], labels.empty() ? fs::path(sets[i]).stem().string() : labels[i], in.bundle));
  }
  echo_config(cfg);
  const EvalSpec spec = cfg.effective_eval();
  std::string cells = "condition,arch,seed,accuracy\n";
  std::string summary = "condition,arch,mean,std\n";
  json j = json::array();
  std::vector<ConditionResult> conds;
  for (const auto& s : inputs) {
    const EvalResult r = evaluate_distilled(s.set, in.bundle, schedule_for(cfg, s.T), s.mode, in.corpus, spec);
    add_eval_rows(s.label, r, cells, summary, j);
    conds.push_back({s.label, r});
    out << s.label << ": " << format_double(r.mean()) << " +- " << format_double(r.std()) << "\n";
  }
  if (baselines) {
    const SetInput& first = inputs.front();
    const EvalResult rr = evaluate_random_real(in.corpus, first.set.ipc, cfg.init_seed(), spec);
    add_eval_rows("random_real", rr, cells, summary, j);
    const DistilledSet init =
        init_distilled(in.corpus, in.bundle, first.set.ipc, cfg.init_seed(), cfg.distill.init);
    const EvalResult ri = evaluate_distilled(init, in.bundle, schedule_for(cfg, first.T), first.mode, in.corpus, spec);
    add_eval_rows("init_only", ri, cells, summary, j);
    conds.push_back({"random_real", rr});
    conds.push_back({"init_only", ri});
  }
  const Comparison cmp = compare_conditions(conds);
  std::string ccsv = "condition,mean,std,delta_vs_first,duplicate_of\n";
  for (std::size_t i = 0; i < cmp.rows.size(); ++i) {
    const auto& r = cmp.rows[i];
    ccsv += r.label + "," + format_double(r.mean) + "," + format_double(r.std) + "," +
            format_double(cmp.delta[i][0]) + "," + (r.duplicate_of ? cmp.rows[*r.duplicate_of].label : "") + "\n";
  }
  write_file_atomic(out_path(cfg, "eval.csv"), cells);
  write_file_atomic(out_path(cfg, "eval_summary.csv"), summary);
  write_file_atomic(out_path(cfg, "compare.csv"), ccsv);
  write_file_atomic(out_path(cfg, "eval.json"), json{{"conditions", j}}.dump(2) + "\n");
  return kExitOk;
}

int cmd_decode(RunConfig cfg, const std::string& set_path, std::string dir, std::ostream& out) {
  DirLock lock(cfg.output_dir);
  const Loaded in = load_inputs(cfg);
  const std::string path = set_path.empty() ? out_path(cfg, "distilled.ld3m") : set_path;
  if (!fs::exists(path)) throw UsageError("set file not found: " + path);
  const SetInput s = read_set(path, "set", in.bundle);
  if (dir.empty()) dir = out_path(cfg, "decoded");
  const Array images = synthesize_images(s.set, in.bundle, schedule_for(cfg, s.T), s.mode, kDecodeSeed);
  json manifest;
  manifest["source"] = path;
  manifest["mode"] = to_string(s.mode);
  manifest["T"] = s.T;
  manifest["side"] = in.bundle.side;
  json list = json::array();
  const std::size_t D = in.bundle.image_dim();
  for (std::size_t i = 0; i < s.set.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "img_%04zu_c%d.pgm", i, s.set.labels[i]);
    write_file_atomic((fs::path(dir) / name).string(),
                      encode_pgm(std::span<const double>(images.data().data() + i * D, D), in.bundle.side));
    list.push_back({{"file", name}, {"label", s.set.labels[i]}});
  }
  manifest["images"] = list;
  write_file_atomic((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  out << "wrote " << s.set.size() << " images to " << dir << "\n";
  return kExitOk;
}

std::vector<double> read_grad_norms(const std::string& loss_csv) {
  std::stringstream ss(read_file(loss_csv));
  std::string line;
  std::getline(ss, line);
  if (line != "iter,loss,grad_norm_Z,grad_norm_c") throw CorruptFileError(loss_csv + ": unexpected header");
  std::vector<double> norms;
  while (std::getline(ss, line)) {
    const auto f = split_list(line);
    if (f.size() != 4) throw CorruptFileError(loss_csv + ": malformed row");
    norms.push_back(std::stod(f[2]));
  }
  return norms;
}

int cmd_report(RunConfig cfg, std::size_t window, std::ostream& out) {
  DirLock lock(cfg.output_dir);
  json report;
  for (const char* name : {"pretrain_metrics.json", "distill_metrics.json", "eval.json"}) {
    const std::string p = out_path(cfg, name);
    if (fs::exists(p)) report[fs::path(name).stem().string()] = json::parse(read_file(p));
  }
  const std::string loss = out_path(cfg, "loss.csv");
  if (fs::exists(loss)) {
    const auto norms = read_grad_norms(loss);
    if (norms.size() >= std::max<std::size_t>(window, 2)) {
      const SnrReport snr = probe_snr(norms, window);
      std::string csv = "iter,grad_norm_Z,rolling_mean,rolling_std,snr\n";
      for (std::size_t i = 0; i < norms.size(); ++i) {
        csv += std::to_string(i) + "," + format_double(norms[i]) + ",";
        if (i + 1 >= window) {
          csv += format_double(snr.rolling_mean[i]) + "," + format_double(snr.rolling_std[i]) + "," +
                 (snr.snr[i] ? format_double(*snr.snr[i]) : "undefined");
        } else {
          csv += ",,undefined";
        }
        csv += "\n";
      }
      write_file_atomic(out_path(cfg, "snr.csv"), csv);
      const auto med = snr.median_snr();
      report["snr"] = {{"window", window}, {"median", med ? json(*med) : json(nullptr)}};
    }
  }
  const std::string probe = out_path(cfg, "probe.json");
  if (fs::exists(probe)) report["probe"] = json::parse(read_file(probe))["rows"];
  write_file_atomic(out_path(cfg, "report.json"), report.dump(2) + "\n");
  out << "wrote " << out_path(cfg, "report.json") << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent dataset distillation through a frozen diffusion chain", "ld3m"};
  app.footer(kExitCodes);
  app.require_subcommand(1);
  std::string config_path, out_dir;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Run configuration (JSON)");
    sub->add_option("-o,--out", out_dir, "Output directory (overrides output_dir)");
    sub->footer(kExitCodes);
  };

  bool experts = false;
  auto* pre = app.add_subcommand("pretrain", "Train the autoencoder, denoiser and (for MTT) expert trajectories");
  add_common(pre);
  pre->add_flag("--experts", experts, "Train the expert buffer even when the algorithm is not MTT");

  std::optional<std::size_t> iterations, T;
  std::string mode, algorithm;
  bool freeze_noise = false;
  auto* dis = app.add_subcommand("distill", "Learn a distilled set through the frozen chain");
  add_common(dis);
  dis->add_option("--iterations", iterations, "Outer iterations");
  dis->add_option("--mode", mode, "standard | ld3m | no_diffusion");
  dis->add_option("--algorithm", algorithm, "dc | dm | mtt");
  dis->add_option("--T", T, "Reverse steps");
  dis->add_flag("--freeze-noise", freeze_noise, "Reuse the same chain noise every iteration");

  std::string grid, modes;
  bool paths = false;
  auto* prb = app.add_subcommand("probe", "Gradient norm of the latent codes versus chain length");
  add_common(prb);
  prb->add_option("--t-grid", grid, "Comma-separated T values, e.g. 10,20,...,90");
  prb->add_option("--modes", modes, "Comma-separated chain modes");
  prb->add_flag("--paths", paths, "Also write the per-step skip/chain decomposition (paths.csv)");

  std::vector<std::string> sets, labels;
  bool no_baselines = false;
  auto* evl = app.add_subcommand("eval", "Train witness architectures on decoded sets and report test accuracy");
  add_common(evl);
  evl->add_option("--set", sets, "Distilled set file (repeatable)");
  evl->add_option("--label", labels, "Condition label per --set");
  evl->add_flag("--no-baselines", no_baselines, "Skip the random-real and init-only rows");

  std::string set_path, dir;
  auto* dec = app.add_subcommand("decode", "Write decoded synthetic images as PGM files");
  add_common(dec);
  dec->add_option("--set", set_path, "Distilled set file");
  dec->add_option("--dir", dir, "Image directory (default <out>/decoded)");

  std::size_t window = 25;
  auto* rep = app.add_subcommand("report", "Collect metrics and the gradient-norm SNR series");
  add_common(rep);
  rep->add_option("--window", window, "SNR rolling window");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    RunConfig cfg = read_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (sub == pre) return cmd_pretrain(cfg, experts, out);
    if (sub == dis) {
      try {
        if (iterations) cfg.distill.iterations = *iterations;
        if (!mode.empty()) cfg.distill.mode = parse_distill_mode(mode);
        if (!algorithm.empty()) cfg.distill.algorithm = parse_algorithm(algorithm);
        if (T) {
          cfg.schedule.T = *T;
          cfg.schedule.make();
        }
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
      if (freeze_noise) cfg.distill.freeze_noise = true;
      return cmd_distill(cfg, out);
    }
    if (sub == prb) return cmd_probe(cfg, grid, modes, paths, out);
    if (sub == evl) return cmd_eval(cfg, sets, labels, !no_baselines, out);
    if (sub == dec) return cmd_decode(cfg, set_path, dir, out);
    if (sub == rep) return cmd_report(cfg, window, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << sub->help();
    return kExitUsage;
  } catch (const GateError& e) {
    err << "gate failure: " << e.what() << "\n";
    return kExitGate;
  } catch (const NumericAbort& e) {
    err << "numeric abort: " << e.what() << "\ndiagnostics: " << e.dump_path << "\n";
    return kExitNumeric;
  } catch (const CorruptFileError& e) {
    err << "corrupt input: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace ld3m
