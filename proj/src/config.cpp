// SPDX-License-Identifier: Apache-2.0
#include "ld3m/config.hpp"

#include <set>

#include "ld3m/errors.hpp"

namespace ld3m {

namespace {

// Reads known keys of one JSON object and rejects anything else.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, path_ + "." + key);
  }

  void done() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + path_ + "." + k + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E, typename Parse>
void get_enum(Section& s, const std::string& key, E& out, Parse parse) {
  std::string v;
  if (s.has(key)) {
    s.get(key, v);
    out = parse(v);
  }
}

}  // namespace

DistillConfig RunConfig::effective_distill() const {
  DistillConfig d = distill;
  d.seed = distill_seed();
  d.T = schedule.T;
  d.recon_gate = model.recon_gate;
  return d;
}

EvalSpec RunConfig::effective_eval() const {
  EvalSpec e = eval;
  e.seed = eval_seed();
  return e;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "config");
  root.get("global_seed", c.global_seed);
  root.get("output_dir", c.output_dir);
  {
    Section s = root.sub("corpus");
    s.get("num_classes", c.corpus.spec.num_classes);
    s.get("per_class", c.corpus.spec.per_class);
    s.get("test_per_class", c.corpus.spec.test_per_class);
    s.get("side", c.corpus.spec.side);
    s.get("noise_level", c.corpus.spec.noise_level);
    s.get("idx_images", c.corpus.idx_images);
    s.get("idx_labels", c.corpus.idx_labels);
    s.done();
  }
  {
    Section s = root.sub("schedule");
    s.get("T", c.schedule.T);
    s.get("beta_start", c.schedule.family.beta_start);
    s.get("beta_end", c.schedule.family.beta_end);
    get_enum(s, "sigma_policy", c.schedule.family.policy, parse_sigma_policy);
    get_enum(s, "noise_convention", c.schedule.family.convention, parse_noise_convention);
    s.done();
  }
  {
    Section s = root.sub("model");
    auto& ae = c.model.bundle.autoencoder;
    auto& dn = c.model.bundle.denoiser;
    s.get("d_latent", ae.d_latent);
    s.get("ae_hidden", ae.hidden);
    s.get("ae_epochs", ae.epochs);
    s.get("ae_lr", ae.lr);
    s.get("ae_batch", ae.batch);
    s.get("latent_std", ae.latent_std);
    s.get("d_embed", dn.d_embed);
    s.get("denoiser_hidden", dn.hidden);
    s.get("denoiser_steps", dn.steps);
    s.get("denoiser_lr", dn.lr);
    s.get("denoiser_batch", dn.batch);
    s.get("denoiser_max_T", dn.max_T);
    s.get("recon_gate", c.model.recon_gate);
    s.done();
  }
  {
    Section s = root.sub("distill");
    auto& d = c.distill;
    get_enum(s, "algorithm", d.algorithm, parse_algorithm);
    if (s.has("lr")) s.get("lr", d.lr);
    s.get("momentum", d.momentum);
    s.get("iterations", d.iterations);
    get_enum(s, "mode", d.mode, parse_distill_mode);
    s.get("batch_real", d.batch_real);
    s.get("ipc", d.ipc);
    get_enum(s, "init", d.init, parse_init_source);
    s.get("witness_arch", d.witness_arch);
    s.get("freeze_noise", d.freeze_noise);
    s.get("checkpoint", d.checkpoint);
    s.get("augment", d.augment);
    Section m = s.sub("mtt");
    m.get("n_syn", d.mtt.n_syn);
    m.get("m_expert", d.mtt.m_expert);
    m.get("max_start_epoch", d.mtt.max_start_epoch);
    m.get("inner_lr", d.mtt.inner_lr);
    m.done();
    s.done();
  }
  {
    Section s = root.sub("experts");
    s.get("arch", c.experts.arch);
    s.get("num_experts", c.experts.num_experts);
    s.get("epochs", c.experts.epochs);
    s.get("lr", c.experts.lr);
    s.get("batch", c.experts.batch);
    s.done();
  }
  {
    Section s = root.sub("eval");
    s.get("archs", c.eval.archs);
    s.get("num_seeds", c.eval.num_seeds);
    s.get("steps", c.eval.steps);
    s.get("lr", c.eval.lr);
    s.get("momentum", c.eval.momentum);
    s.get("batch", c.eval.batch);
    s.get("parallel", c.eval.parallel);
    s.done();
  }
  {
    Section s = root.sub("probe");
    s.get("t_grid", c.probe.t_grid);
    s.get("modes", c.probe.modes);
    for (const auto& m : c.probe.modes) parse_chain_mode(m);
    s.done();
  }
  root.done();
  if (c.schedule.T < 1) throw ConfigError("schedule.T must be >= 1");
  c.schedule.family.make(c.schedule.T);  // validates the beta range
  if (c.distill.ipc == 0) throw ConfigError("distill.ipc must be positive");
  if (c.corpus.idx_images.empty() && c.corpus.spec.per_class < 10 * c.distill.ipc) {
    throw ConfigError("corpus.per_class must be at least 10 * distill.ipc");
  }
  return c;
}

json config_to_json(const RunConfig& c) {
  const auto& ae = c.model.bundle.autoencoder;
  const auto& dn = c.model.bundle.denoiser;
  const auto& d = c.distill;
  json j;
  j["global_seed"] = c.global_seed;
  j["output_dir"] = c.output_dir;
  j["corpus"] = {{"num_classes", c.corpus.spec.num_classes},
                 {"per_class", c.corpus.spec.per_class},
                 {"test_per_class", c.corpus.spec.test_per_class},
                 {"side", c.corpus.spec.side},
                 {"noise_level", c.corpus.spec.noise_level},
                 {"idx_images", c.corpus.idx_images},
                 {"idx_labels", c.corpus.idx_labels}};
  j["schedule"] = {{"T", c.schedule.T},
                   {"beta_start", c.schedule.family.beta_start},
                   {"beta_end", c.schedule.family.beta_end},
                   {"sigma_policy", to_string(c.schedule.family.policy)},
                   {"noise_convention", to_string(c.schedule.family.convention)}};
  j["model"] = {{"d_latent", ae.d_latent},       {"ae_hidden", ae.hidden},     {"ae_epochs", ae.epochs},
                {"ae_lr", ae.lr},                {"ae_batch", ae.batch},       {"latent_std", ae.latent_std},
                {"d_embed", dn.d_embed},
                {"denoiser_hidden", dn.hidden},  {"denoiser_steps", dn.steps}, {"denoiser_lr", dn.lr},
                {"denoiser_batch", dn.batch},    {"denoiser_max_T", dn.max_T}, {"recon_gate", c.model.recon_gate}};
  j["distill"] = {{"algorithm", to_string(d.algorithm)},
                  {"lr", d.effective_lr()},
                  {"momentum", d.momentum},
                  {"iterations", d.iterations},
                  {"mode", to_string(d.mode)},
                  {"batch_real", d.batch_real},
                  {"ipc", d.ipc},
                  {"init", to_string(d.init)},
                  {"witness_arch", d.witness_arch},
                  {"freeze_noise", d.freeze_noise},
                  {"checkpoint", d.checkpoint},
                  {"augment", d.augment},
                  {"mtt",
                   {{"n_syn", d.mtt.n_syn},
                    {"m_expert", d.mtt.m_expert},
                    {"max_start_epoch", d.mtt.max_start_epoch},
                    {"inner_lr", d.mtt.inner_lr}}}};
  j["experts"] = {{"arch", c.experts.arch},
                  {"num_experts", c.experts.num_experts},
                  {"epochs", c.experts.epochs},
                  {"lr", c.experts.lr},
                  {"batch", c.experts.batch}};
  j["eval"] = {{"archs", c.eval.archs},     {"num_seeds", c.eval.num_seeds}, {"steps", c.eval.steps},
               {"lr", c.eval.lr},           {"momentum", c.eval.momentum},   {"batch", c.eval.batch},
               {"parallel", c.eval.parallel}};
  j["probe"] = {{"t_grid", c.probe.t_grid}, {"modes", c.probe.modes}};
  return j;
}

ToyCorpus load_corpus(const CorpusConfig& cfg, std::uint64_t seed) {
  if (!cfg.idx_images.empty() || !cfg.idx_labels.empty()) {
    if (cfg.idx_images.empty() || cfg.idx_labels.empty()) {
      throw ConfigError("corpus: idx_images and idx_labels must be given together");
    }
    return load_idx_corpus(cfg.idx_images, cfg.idx_labels, cfg.spec);
  }
  return generate_toy_corpus(cfg.spec, seed);
}

}  // namespace ld3m
