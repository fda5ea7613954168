/* Copyright 2026 The GTL Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gtl/cli/config.hpp"
#include "gtl/data/episode.hpp"
#include "gtl/data/features.hpp"
#include "gtl/data/synth.hpp"
#include "gtl/eval/metrics.hpp"
#include "gtl/model/checkpoint.hpp"
#include "gtl/numerics/grad_check.hpp"
#include "gtl/training/trainer.hpp"

namespace gtl::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsageError = 2 };

namespace detail {

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create directory '" + dir + "': " + ec.message());
}

inline void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
}

inline std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Model dims taken from the config, with dx checked against the data.
inline TrainConfig train_config_for(const RunConfig& c, std::size_t feature_dim,
                                    const std::string& source) {
  if (c.train.dims.dx != feature_dim) {
    throw ValidationError("model.dx = " + std::to_string(c.train.dims.dx) + " but " + source +
                          " has feature dim " + std::to_string(feature_dim));
  }
  return c.train;
}

/// Checkpoint dims must agree with the configured architecture.
inline void check_compatible(const GtlParams& p, const ModelDims& want, const std::string& path) {
  auto check = [&](std::size_t have, std::size_t expect, const char* name) {
    if (have != expect) {
      throw ValidationError("checkpoint '" + path + "': dims." + name + " = " +
                            std::to_string(have) + " but config model." + name + " = " +
                            std::to_string(expect));
    }
  };
  check(p.dims.dx, want.dx, "dx");
  check(p.dims.nc, want.nc, "nc");
  check(p.dims.nm, want.nm, "nm");
  check(p.dims.hidden, want.hidden, "hidden");
  check(p.dims.domains, want.domains, "domains");
  check(p.dims.classifier_hidden, want.classifier_hidden, "classifier_hidden");
}

/// Stream id of one episode; identical across modes so every mode sees the
/// same support/query split.
inline std::uint64_t episode_stream(std::size_t protocol_index, std::size_t shots,
                                    std::size_t episode) {
  return (std::uint64_t(protocol_index) << 48) ^ (std::uint64_t(shots) << 32) ^ episode;
}

struct EpisodeRun {
  EvalResult result;
  GtlParams adapted;
  PhaseReport report;
  std::vector<FeatureRecord> query;
};

inline EpisodeRun run_episode(const GtlParams& phase1, std::span<const FeatureRecord> novel,
                              const TrainConfig& cfg, Protocol protocol, std::size_t shots,
                              std::uint64_t seed, std::uint64_t stream) {
  Rng rng = Rng::derive(seed, stream);
  const Episode ep = sample_episode(novel, protocol, shots, rng);
  const auto support = gather(novel, ep.support);
  EpisodeRun run;
  run.query = gather(novel, ep.query);
  TrainedModel adapted = adapt_phase2(phase1, support, cfg, rng);
  const auto preds = predict(adapted.params, run.query);
  std::vector<std::uint32_t> labels;
  std::vector<std::uint8_t> modalities;
  for (const auto& r : run.query) {
    labels.push_back(r.label);
    modalities.push_back(r.modality);
  }
  run.result = top1_accuracy(preds, labels, modalities);
  run.adapted = std::move(adapted.params);
  run.report = std::move(adapted.report);
  return run;
}

/// Runs `n` independent jobs on up to `threads` workers; results come back in
/// job order regardless of scheduling. The first failure (by index) is rethrown.
template <class T, class F>
std::vector<T> parallel_map(std::size_t n, std::size_t threads, F job) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  std::vector<std::optional<T>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(job(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  std::vector<T> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

inline std::string modality_cell(const EpisodeSummary& s, std::uint8_t m) {
  auto it = s.per_modality.find(m);
  return it == s.per_modality.end() ? "" : fixed(it->second.mean);
}

inline nlohmann::json summary_json(const EpisodeSummary& s, std::span<const EvalResult> episodes) {
  nlohmann::json j;
  j["episodes"] = s.episode_count;
  j["acc_mixed"] = {{"mean", s.mixed.mean}, {"std", s.mixed.std}, {"ci95", s.mixed.ci95}};
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [m, st] : s.per_modality)
    per[std::to_string(m)] = {{"mean", st.mean}, {"std", st.std}, {"ci95", st.ci95}, {"n", st.n}};
  j["acc_per_modality"] = per;
  nlohmann::json raw = nlohmann::json::array();
  for (const auto& e : episodes) {
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [m, t] : e.per_modality)
      counts[std::to_string(m)] = {{"correct", t.correct}, {"total", t.total}};
    raw.push_back({{"correct", e.mixed.correct}, {"total", e.mixed.total}, {"per_modality", counts}});
  }
  j["per_episode"] = raw;
  return j;
}

inline void dump_latents(GtlParams& p, std::span<const FeatureRecord> query,
                         const std::string& prefix) {
  if (p.ablation == Ablation::no_z) return;
  Rng unused(0);
  const LatentSample s = encode(p, feature_matrix(query, p.dims.dx), Mode::eval, unused);
  auto write = [&](const Matrix& m, const std::string& suffix) {
    std::vector<FeatureRecord> out;
    for (std::size_t i = 0; i < query.size(); ++i) {
      FeatureRecord r{query[i].id, {}, query[i].label, query[i].modality};
      for (double v : m.row(i)) r.feature.push_back(static_cast<float>(v));
      out.push_back(std::move(r));
    }
    save_features(prefix + suffix, out, m.cols());
  };
  write(s.z_c, "_mu_c.gtlf");
  if (p.ablation == Ablation::full) write(estimate_disturbance(p, s.hidden).u_hat, "_u_hat.gtlf");
}

inline std::vector<FeatureRecord> load_records(const std::string& path) {
  return load_features(path).records;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_synth(const RunConfig& c, std::ostream& log) {
  const SyntheticData data = synth_generate(c.synth);
  detail::ensure_dir(c.out);
  const std::string base = c.base_path(), novel = c.novel_path();
  detail::ensure_parent(base);
  detail::ensure_parent(novel);
  save_features(base, data.split.base, c.synth.dx);
  save_features(novel, data.split.novel, c.synth.dx);
  const std::size_t latent = c.synth.nc + c.synth.nm;
  save_features(c.out + "/base_latents.gtlf", data.base_latents, latent);
  save_features(c.out + "/novel_latents.gtlf", data.novel_latents, latent);

  const auto& s = c.synth;
  nlohmann::json m;
  m["synth"] = {{"classes", s.classes},
                {"base_classes", s.base_classes},
                {"modalities", s.modalities},
                {"samples_per_class_modality", s.samples_per_class_modality},
                {"nc", s.nc},
                {"nm", s.nm},
                {"dx", s.dx},
                {"separation", s.separation},
                {"modality_offset", s.modality_offset},
                {"mixing_depth", s.mixing_depth},
                {"seed", s.seed}};
  m["files"] = {{"base", base},
                {"novel", novel},
                {"base_latents", c.out + "/base_latents.gtlf"},
                {"novel_latents", c.out + "/novel_latents.gtlf"}};
  m["counts"] = {{"base", data.split.base.size()}, {"novel", data.split.novel.size()}};
  io::write_file(c.out + "/manifest.json", m.dump(2) + "\n");
  log << "synth: " << data.split.base.size() << " base and " << data.split.novel.size()
      << " novel records written to " << c.out << "\n";
  return kOk;
}

inline int cmd_train_base(const RunConfig& c, std::ostream& log) {
  const FeatureFile base = load_features(c.base_path());
  const TrainConfig cfg = detail::train_config_for(c, base.dim, c.base_path());
  Rng rng(c.seed);
  TrainedModel t = train_phase1(base.records, cfg, rng);
  const std::string ckpt = c.checkpoint_path(t.params.ablation);
  detail::ensure_dir(c.out);
  detail::ensure_parent(ckpt);
  save_checkpoint(ckpt, t.params);
  const std::string report = c.out + "/phase1_" + to_string(t.params.ablation) + ".jsonl";
  io::write_file(report, t.report.to_jsonl());
  log << "train-base: mode " << to_string(cfg.mode) << ", checkpoint " << ckpt << ", report "
      << report << " (" << detail::fixed(t.report.seconds) << " s)\n";
  return kOk;
}

/// Phase 2 on episode 0 of every configured protocol and shot count.
inline int cmd_adapt(const RunConfig& c, std::ostream& log) {
  const FeatureFile novel = load_features(c.novel_path());
  const TrainConfig cfg = detail::train_config_for(c, novel.dim, c.novel_path());
  GtlParams phase1;
  if (cfg.mode == TrainMode::gtl_t) {
    phase1.dims = cfg.dims;
  } else {
    const std::string ckpt = c.checkpoint_path(ablation_for(cfg.mode));
    phase1 = load_checkpoint(ckpt);
    detail::check_compatible(phase1, cfg.dims, ckpt);
  }
  detail::ensure_dir(c.out);
  for (std::size_t pi = 0; pi < c.eval.protocols.size(); ++pi) {
    for (std::size_t k : c.eval.shots) {
      const Protocol proto = c.eval.protocols[pi];
      auto run = detail::run_episode(phase1, novel.records, cfg, proto, k, c.seed,
                                     detail::episode_stream(pi, k, 0));
      const std::string stem =
          c.out + "/adapted_" + to_string(cfg.mode) + "_" + proto.name() + "_k" + std::to_string(k);
      save_checkpoint(stem + ".gtlp", run.adapted);
      io::write_file(stem + ".jsonl", run.report.to_jsonl());
      log << "adapt: " << proto.name() << " k=" << k << " acc_mixed "
          << detail::fixed(run.result.acc_mixed) << " -> " << stem << ".gtlp\n";
    }
  }
  return kOk;
}

inline int cmd_eval(const RunConfig& c, std::ostream& log) {
  const FeatureFile novel = load_features(c.novel_path());
  const TrainConfig base_cfg = detail::train_config_for(c, novel.dim, c.novel_path());
  detail::ensure_dir(c.out);

  std::map<Ablation, GtlParams> checkpoints;
  std::string csv = "setting,k,acc_mixed,acc_m0,acc_m1,std,ci95\n";
  nlohmann::json rows = nlohmann::json::array();
  for (TrainMode mode : c.eval.modes) {
    TrainConfig cfg = base_cfg;
    cfg.mode = mode;
    GtlParams scratch;
    const GtlParams* phase1 = &scratch;
    if (mode == TrainMode::gtl_t) {
      scratch.dims = cfg.dims;
    } else {
      const Ablation a = ablation_for(mode);
      if (!checkpoints.count(a)) {
        const std::string ckpt = c.checkpoint_path(a);
        checkpoints[a] = load_checkpoint(ckpt);
        detail::check_compatible(checkpoints[a], cfg.dims, ckpt);
      }
      phase1 = &checkpoints[a];
    }
    for (std::size_t pi = 0; pi < c.eval.protocols.size(); ++pi) {
      const Protocol proto = c.eval.protocols[pi];
      for (std::size_t k : c.eval.shots) {
        auto runs = detail::parallel_map<detail::EpisodeRun>(
            c.eval.episodes, c.eval.threads, [&](std::size_t e) {
              return detail::run_episode(*phase1, novel.records, cfg, proto, k, c.seed,
                                         detail::episode_stream(pi, k, e));
            });
        std::vector<EvalResult> results;
        for (const auto& r : runs) results.push_back(r.result);
        const EpisodeSummary s = aggregate_episodes(results);
        const std::string setting = to_string(mode) + " " + proto.name();
        csv += setting + "," + std::to_string(k) + "," + detail::fixed(s.mixed.mean) + "," +
               detail::modality_cell(s, 0) + "," + detail::modality_cell(s, 1) + "," +
               detail::fixed(s.mixed.std) + "," + detail::fixed(s.mixed.ci95) + "\n";
        nlohmann::json row = detail::summary_json(s, results);
        row["setting"] = setting;
        row["mode"] = to_string(mode);
        row["protocol"] = proto.name();
        row["k"] = k;
        rows.push_back(std::move(row));
        if (c.eval.dump_latents) {
          detail::dump_latents(runs.front().adapted, runs.front().query,
                               c.out + "/latents_" + to_string(mode) + "_" + proto.name() + "_k" +
                                   std::to_string(k));
        }
        log << "eval: " << setting << " k=" << k << " acc_mixed " << detail::fixed(s.mixed.mean)
            << " ± " << detail::fixed(s.mixed.ci95) << " over " << s.episode_count
            << " episodes\n";
      }
    }
  }
  io::write_file(c.out + "/metrics.csv", csv);
  io::write_file(c.out + "/metrics.json", rows.dump(2) + "\n");
  return kOk;
}

/// For each latent-domain count d: Phase 1 on the base set, then episode
/// evaluation per protocol at eval.sweep_shots. One CSV row per (d, protocol).
inline int cmd_sweep_d(const RunConfig& c, std::ostream& log) {
  if (c.eval.d_list.empty()) throw ValidationError("sweep-d: eval.d_list is empty");
  const FeatureFile base = load_features(c.base_path());
  const FeatureFile novel = load_features(c.novel_path());
  TrainConfig cfg = detail::train_config_for(c, base.dim, c.base_path());
  detail::train_config_for(c, novel.dim, c.novel_path());
  cfg.mode = TrainMode::full;
  detail::ensure_dir(c.out);

  std::string csv = "d,protocol,k,acc_mixed,acc_m0,acc_m1,std,ci95\n";
  nlohmann::json rows = nlohmann::json::array();
  const std::size_t k = c.eval.sweep_shots;
  for (std::size_t d : c.eval.d_list) {
    cfg.dims.domains = d;
    Rng rng(c.seed);
    const TrainedModel phase1 = train_phase1(base.records, cfg, rng);
    for (std::size_t pi = 0; pi < c.eval.protocols.size(); ++pi) {
      const Protocol proto = c.eval.protocols[pi];
      auto results = detail::parallel_map<EvalResult>(
          c.eval.episodes, c.eval.threads, [&](std::size_t e) {
            return detail::run_episode(phase1.params, novel.records, cfg, proto, k, c.seed,
                                       detail::episode_stream(pi, k, e))
                .result;
          });
      const EpisodeSummary s = aggregate_episodes(results);
      csv += std::to_string(d) + "," + proto.name() + "," + std::to_string(k) + "," +
             detail::fixed(s.mixed.mean) + "," + detail::modality_cell(s, 0) + "," +
             detail::modality_cell(s, 1) + "," + detail::fixed(s.mixed.std) + "," +
             detail::fixed(s.mixed.ci95) + "\n";
      nlohmann::json row = detail::summary_json(s, results);
      row["d"] = d;
      row["protocol"] = proto.name();
      row["k"] = k;
      rows.push_back(std::move(row));
      log << "sweep-d: d=" << d << " " << proto.name() << " acc_mixed "
          << detail::fixed(s.mixed.mean) << "\n";
    }
  }
  io::write_file(c.out + "/sweep_d.csv", csv);
  io::write_file(c.out + "/sweep_d.json", rows.dump(2) + "\n");
  return kOk;
}

struct GradcheckOutcome {
  GradCheckReport report;
  double seconds = 0.0;
};

/// ELBO + cross-entropy on a random batch, dropout off, compared against
/// central differences for every unfrozen parameter.
inline GradcheckOutcome run_gradcheck(const GradcheckSettings& g, Ablation ablation,
                                      std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(seed);
  GtlParams p = init_params(g.dims, ablation, rng, 0.0);
  p.generator.frozen = g.freeze_generator;
  Matrix x(g.batch, g.dims.dx);
  for (double& v : x.values()) v = rng.normal();
  std::vector<std::size_t> y(g.batch);
  for (std::size_t i = 0; i < g.batch; ++i) y[i] = i % g.dims.classes;
  const std::uint64_t noise_seed = rng.next_u64();

  auto loss = [&] {
    Rng r(noise_seed);
    ForwardCache cache;
    const ForwardResult f = forward_full(p, x, Mode::train, r, &cache);
    double v = ce_loss(f.logits, y).loss;
    if (ablation != Ablation::no_z) v += elbo_loss(x, f.latent, f.x_hat, 1.0).total;
    return v;
  };
  auto backward = [&] {
    Rng r(noise_seed);
    ForwardCache cache;
    const ForwardResult f = forward_full(p, x, Mode::train, r, &cache);
    full_backward(p, cache, f, x, 1.0, y, 1.0);
    if (g.corrupt) {
      ParamGroup& target = ablation == Ablation::no_z ? p.classifier : p.encoder;
      Param& w = target[ablation == Ablation::no_z ? "out.weight" : "mu.weight"];
      for (double& v : w.grad.values()) v = 1.5 * v + 1e-2;
    }
  };
  GradCheckOptions opt;
  opt.tolerance = g.tolerance;
  opt.max_entries_per_param = g.max_entries_per_param;
  opt.seed = seed;
  GradcheckOutcome out{grad_check(loss, backward, p.groups(), opt), 0.0};
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline int cmd_gradcheck(const RunConfig& c, std::ostream& log) {
  const auto out = run_gradcheck(c.gradcheck, ablation_for(c.train.mode), c.seed);
  log << "gradcheck: " << out.report.describe();
  if (!out.report.skipped_groups.empty()) {
    log << " (frozen, skipped:";
    for (const auto& s : out.report.skipped_groups) log << " " << s;
    log << ")";
  }
  log << " in " << detail::fixed(out.seconds) << " s\n";
  if (!out.report.passed) {
    log << "gradcheck: offending parameter " << out.report.worst.group << "/"
        << out.report.worst.param << "\n";
    return kCheckFailed;
  }
  return kOk;
}

}  // namespace gtl::cli
