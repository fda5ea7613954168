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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gtl/cli/commands.hpp"

using namespace gtl;
using namespace gtl::cli;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

RunConfig bundled() {
  RunConfig c = load_run_config(std::string(GTL_CONFIG_DIR) + "/tiny_synth.ini", {});
  c.eval.threads = 1;
  finalize(c);
  return c;
}

// ---------------------------------------------------------------------------

Verdict gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const GradcheckSettings g;  // dx 32, H 16, nc 8, nm 4, d 4
  const auto out = run_gradcheck(g, Ablation::full, 0);
  const double s = seconds_since(t0);
  return {out.report.passed && out.report.worst.rel_error < 1e-4 && s < 60.0,
          "max rel error " + std::to_string(out.report.worst.rel_error) + " over " +
              std::to_string(out.report.checked) + " entries in " + num(s, 1) + " s"};
}

Verdict freeze_contract() {
  RunConfig c = bundled();
  c.train.epochs = 10;
  const SyntheticData data = synth_generate(c.synth);
  Rng rng(0);
  const GtlParams phase1 = train_phase1(data.split.base, c.train, rng).params;
  const GtlParams reloaded = decode_checkpoint(encode_checkpoint(phase1));
  Rng er(1);
  const Episode ep = sample_episode(data.split.novel, Protocol::all_way(), 5, er);
  const auto support = gather(data.split.novel, ep.support);
  TrainConfig full = c.train, ft = c.train;
  full.mode = TrainMode::full;
  ft.mode = TrainMode::gtl_ft;
  Rng r1(2), r2(2);
  const auto a = adapt_phase2(reloaded, support, full, r1);
  const auto b = adapt_phase2(reloaded, support, ft, r2);
  const bool frozen = bitwise_equal(a.params.generator, phase1.generator);
  const bool tuned = !bitwise_equal(b.params.generator, phase1.generator);
  return {frozen && tuned, std::string("full generator ") + (frozen ? "identical" : "changed") +
                               ", gtl_ft generator " + (tuned ? "changed" : "identical")};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GTL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict determinism() {
  std::vector<std::string> csvs;
  for (const char* name : {"a", "b"}) {
    const fs::path dir = fs::temp_directory_path() / (std::string("gtl_acceptance_det_") + name);
    fs::remove_all(dir);
    const std::string base = "--config " + std::string(GTL_CONFIG_DIR) +
                             "/tiny_synth.ini --seed 0 --out " + dir.string() +
                             " --set eval.modes=full,no_zm,gtl_t";
    for (const char* cmd : {"synth", "train-base", "--set train.mode=no_zm train-base", "adapt",
                            "eval"}) {
      if (run_cli(base + " " + cmd) != 0) return {false, std::string(cmd) + " failed"};
    }
    csvs.push_back(io::read_file((dir / "metrics.csv").string()));
  }
  const bool same = csvs[0] == csvs[1] && !csvs[0].empty();
  return {same, same ? std::to_string(csvs[0].size()) + " identical bytes"
                     : "metrics.csv differs between runs"};
}

// Benchmark state shared by the transfer, loss and schedule criteria.
struct Benchmark {
  std::map<TrainMode, std::vector<double>> acc;  // per seed, mean over episodes
  std::vector<PhaseReport> full_phase1;          // per seed
  double seconds = 0.0;
};

Benchmark run_benchmark() {
  const auto t0 = std::chrono::steady_clock::now();
  Benchmark b;
  const std::vector<TrainMode> modes{TrainMode::full, TrainMode::no_zm, TrainMode::no_z,
                                     TrainMode::gtl_t};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RunConfig c = bundled();
    c.seed = seed;
    finalize(c);
    const SyntheticData data = synth_generate(c.synth);
    for (TrainMode mode : modes) {
      TrainConfig cfg = c.train;
      cfg.mode = mode;
      GtlParams phase1;
      if (mode == TrainMode::gtl_t) {
        phase1.dims = cfg.dims;
      } else {
        Rng rng(seed);
        TrainedModel t = train_phase1(data.split.base, cfg, rng);
        if (mode == TrainMode::full) b.full_phase1.push_back(t.report);
        phase1 = std::move(t.params);
      }
      std::vector<EvalResult> results;
      for (std::size_t e = 0; e < c.eval.episodes; ++e) {
        results.push_back(cli::detail::run_episode(phase1, data.split.novel, cfg, Protocol::all_way(),
                                              5, seed, cli::detail::episode_stream(0, 5, e))
                              .result);
      }
      b.acc[mode].push_back(aggregate_episodes(results).mixed.mean);
    }
  }
  b.seconds = seconds_since(t0);
  return b;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Verdict transfer_benchmark(const Benchmark& b) {
  const double full = mean(b.acc.at(TrainMode::full)), no_zm = mean(b.acc.at(TrainMode::no_zm)),
               no_z = mean(b.acc.at(TrainMode::no_z)), gtl_t = mean(b.acc.at(TrainMode::gtl_t));
  std::vector<std::string> failed;
  if (!(full >= 0.85)) failed.push_back("full >= 0.85");
  if (!(full >= no_zm)) failed.push_back("full >= no_zm");
  if (!(no_zm >= no_z)) failed.push_back("no_zm >= no_z");
  if (!(full >= gtl_t)) failed.push_back("full >= gtl_t");
  if (!(b.seconds < 300.0)) failed.push_back("runtime < 300 s");
  std::string detail = "mean acc full " + num(full) + ", no_zm " + num(no_zm) + ", no_z " +
                       num(no_z) + ", gtl_t " + num(gtl_t) + " in " + num(b.seconds, 1) + " s";
  if (!failed.empty()) {
    detail += "; violated:";
    for (const auto& f : failed) detail += " [" + f + "]";
  }
  return {failed.empty(), detail};
}

Verdict loss_behavior(const Benchmark& b) {
  std::size_t decreased = 0, kl_negative = 0;
  for (const auto& r : b.full_phase1) {
    if (r.representation.size() >= 60 && r.representation[59].loss_total < r.representation[0].loss_total)
      ++decreased;
    for (const auto& e : r.representation)
      if (e.loss_kl < 0.0) ++kl_negative;
  }
  return {decreased == 5 && kl_negative == 0,
          std::to_string(decreased) + "/5 seeds decreased, " + std::to_string(kl_negative) +
              " negative KL epochs"};
}

Verdict lr_schedule(const Benchmark& b) {
  std::size_t bad = 0, checked = 0;
  for (const auto& r : b.full_phase1) {
    std::istringstream lines(r.to_jsonl());
    std::string line;
    while (std::getline(lines, line)) {
      const auto j = nlohmann::json::parse(line);
      if (j["stage"] != "representation") continue;
      const std::size_t epoch = j["epoch"];
      const double lr = j["lr"];
      const double want = epoch <= 30 ? 1e-3 : 1e-4;
      ++checked;
      if (std::abs(lr - want) > 1e-15) ++bad;
    }
  }
  return {bad == 0 && checked == 300,
          std::to_string(checked) + " epoch records, " + std::to_string(bad) + " mismatches"};
}

Verdict sampler_invariants() {
  const RunConfig c = bundled();
  const auto novel = synth_generate(c.synth).split.novel;
  std::map<std::uint32_t, std::set<std::uint64_t>> ids_by_class;
  std::map<std::uint64_t, std::uint32_t> label_of;
  for (const auto& r : novel) {
    ids_by_class[r.label].insert(r.id);
    label_of[r.id] = r.label;
  }
  std::size_t violations = 0, episodes = 0;
  std::map<std::uint32_t, std::size_t> picks;
  std::size_t five_way = 0;
  Rng rng(0);
  for (const Protocol p : {Protocol::all_way(), Protocol::n_way(5)}) {
    for (std::size_t k : {1u, 5u}) {
      for (int e = 0; e < 2500; ++e, ++episodes) {
        const Episode ep = sample_episode(novel, p, k, rng);
        const std::size_t want_classes = p.is_all_way() ? ids_by_class.size() : p.way;
        if (ep.classes.size() != want_classes) ++violations;
        std::set<std::uint64_t> support(ep.support.begin(), ep.support.end());
        std::set<std::uint64_t> query(ep.query.begin(), ep.query.end());
        if (support.size() != ep.support.size() || query.size() != ep.query.size()) ++violations;
        for (auto id : support)
          if (query.count(id)) ++violations;
        std::map<std::uint32_t, std::size_t> per_class;
        for (auto id : support) ++per_class[label_of.at(id)];
        std::size_t expected_total = 0;
        for (auto label : ep.classes) {
          if (per_class[label] != k) ++violations;
          expected_total += ids_by_class[label].size();
        }
        if (per_class.size() != ep.classes.size()) ++violations;
        if (support.size() + query.size() != expected_total) ++violations;
        for (auto id : query)
          if (!std::binary_search(ep.classes.begin(), ep.classes.end(), label_of.at(id)))
            ++violations;
        if (!p.is_all_way()) {
          ++five_way;
          for (auto label : ep.classes) ++picks[label];
        }
      }
    }
  }
  const double expected = double(five_way) * 5.0 / double(ids_by_class.size());
  double chi2 = 0.0;
  for (const auto& [label, _] : ids_by_class) {
    const double d = double(picks[label]) - expected;
    chi2 += d * d / expected;
  }
  const double critical = 21.666;  // chi-square, 9 dof, alpha 0.01
  return {violations == 0 && chi2 < critical,
          std::to_string(episodes) + " episodes, " + std::to_string(violations) +
              " violations, 5-way chi2 " + num(chi2, 2) + " < " + num(critical, 3)};
}

Verdict metric_identity() {
  Rng rng(7);
  std::size_t mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.uniform_int(300);
    const std::size_t classes = 1 + rng.uniform_int(10);
    std::vector<std::uint32_t> p(n), y(n);
    std::vector<std::uint8_t> m(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<std::uint32_t>(rng.uniform_int(classes));
      p[i] = rng.uniform() < 0.5 ? y[i] : static_cast<std::uint32_t>(rng.uniform_int(classes));
      m[i] = static_cast<std::uint8_t>(rng.uniform_int(2));
    }
    const EvalResult r = top1_accuracy(p, y, m);
    std::size_t correct = 0, total = 0;
    double weighted = 0.0;
    for (const auto& [mod, tally] : r.per_modality) {
      correct += tally.correct;
      total += tally.total;
      weighted += r.acc_per_modality.at(mod) * double(tally.total);
    }
    // counts combine exactly; the floating combination agrees to rounding
    if (correct != r.mixed.correct || total != n ||
        r.acc_mixed != double(correct) / double(total) ||
        std::abs(weighted / double(total) - r.acc_mixed) > 4e-16)
      ++mismatches;
  }
  return {mismatches == 0, "100 fixtures, " + std::to_string(mismatches) + " mismatches"};
}

Verdict micro_oracles() {
  std::vector<std::string> failed;
  for (std::size_t c : {2u, 7u, 100u}) {
    const std::vector<std::size_t> y{0, c - 1};
    const double ce = softmax_ce(Matrix(2, c, 3.25), y).loss;
    if (!(std::abs(ce - std::log(double(c))) <= 1e-12)) failed.push_back("ce C=" + std::to_string(c));
  }
  if (gaussian_kl(Matrix(1, 1), Matrix(1, 1)) != 0.0) failed.push_back("kl(0,0)");
  if (!(std::abs(gaussian_kl(Matrix{{1.0}}, Matrix{{0.0}}) - 0.5) <= 1e-12)) failed.push_back("kl(1,0)");

  const std::size_t n = 100000;
  const double mu = -0.7, sd = 1.8;
  Rng rng(11);
  const auto r = reparameterize(Matrix(n, 1, mu), Matrix(n, 1, 2.0 * std::log(sd)), rng);
  double sum = 0.0, sq = 0.0;
  for (double v : r.z.values()) {
    sum += v;
    sq += (v - mu) * (v - mu);
  }
  const double mean_z = sum / double(n), var_z = sq / double(n);
  if (std::abs(mean_z - mu) > 3.0 * sd / std::sqrt(double(n))) failed.push_back("reparam mean");
  if (std::abs(var_z - sd * sd) > 3.0 * sd * sd * std::sqrt(2.0 / double(n)))
    failed.push_back("reparam variance");
  std::string detail = failed.empty() ? "ce, kl and reparameterization oracles hold" : "failed:";
  for (const auto& f : failed) detail += " " + f;
  return {failed.empty(), detail};
}

Verdict codecs() {
  Rng rng(3);
  std::size_t bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t dim = rng.uniform_int(9);
    std::vector<FeatureRecord> recs(rng.uniform_int(12));
    for (std::size_t i = 0; i < recs.size(); ++i) {
      FeatureRecord& r = recs[i];
      r.id = i;  // ids are file positions
      r.label = static_cast<std::uint32_t>(rng.next_u64());
      r.modality = static_cast<std::uint8_t>(rng.uniform_int(256));
      for (std::size_t j = 0; j < dim; ++j)
        r.feature.push_back(static_cast<float>(rng.normal() * std::exp(rng.uniform(-30, 30))));
    }
    const std::string bytes = encode_features(recs, dim);
    const FeatureFile back = decode_features(bytes);
    if (back.dim != dim || back.records != recs || encode_features(back.records, dim) != bytes) ++bad;

    ModelDims d{1 + rng.uniform_int(6), 1 + rng.uniform_int(4), 1 + rng.uniform_int(4),
                1 + rng.uniform_int(6), 1 + rng.uniform_int(4), 1 + rng.uniform_int(4),
                1 + rng.uniform_int(6)};
    GtlParams p = init_params(d, static_cast<Ablation>(rng.uniform_int(3)), rng);
    for (ParamGroup* g : p.groups()) {
      g->frozen = rng.uniform() < 0.5;
      for (auto& prm : g->params)
        for (double& v : prm.value.values()) v = rng.normal() * std::exp(rng.uniform(-300, 300));
    }
    for (double& v : p.encoder_bn.running_var.values()) v = rng.uniform(0.01, 10.0);
    const std::string ck = encode_checkpoint(p);
    const GtlParams q = decode_checkpoint(ck);
    bool same = q.dims == p.dims && q.ablation == p.ablation && q.class_labels == p.class_labels &&
                encode_checkpoint(q) == ck;
    const auto gp = p.groups();
    const auto gq = q.groups();
    for (std::size_t i = 0; same && i < gp.size(); ++i)
      same = bitwise_equal(*gp[i], *gq[i]) && gp[i]->frozen == gq[i]->frozen;
    if (!same) ++bad;
  }
  return {bad == 0, "1000 feature-file and 1000 checkpoint cases, " + std::to_string(bad) +
                        " mismatches"};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const Verdict& v) {
    std::printf("criterion %2d %s  %-22s %s\n", id, v.pass ? "PASS" : "FAIL", name,
                v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failures;
  };
  auto guarded = [](const std::function<Verdict()>& f) -> Verdict {
    try {
      return f();
    } catch (const std::exception& e) {
      return {false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "gradient suite", guarded(gradient_suite));
  report(2, "freeze contract", guarded(freeze_contract));
  report(3, "determinism", guarded(determinism));
  Benchmark bench;
  const Verdict transfer = guarded([&] {
    bench = run_benchmark();
    return transfer_benchmark(bench);
  });
  report(4, "transfer benchmark", transfer);
  report(5, "loss behavior", guarded([&] { return loss_behavior(bench); }));
  report(6, "sampler invariants", guarded(sampler_invariants));
  report(7, "metric identity", guarded(metric_identity));
  report(8, "numeric oracles", guarded(micro_oracles));
  report(9, "codec round trips", guarded(codecs));
  report(10, "lr schedule", guarded([&] { return lr_schedule(bench); }));

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
