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
#include <chrono>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gtl/data/dataset.hpp"
#include "gtl/data/features.hpp"
#include "gtl/error.hpp"
#include "gtl/model/gtl_model.hpp"
#include "gtl/numerics/adam.hpp"
#include "gtl/numerics/rng.hpp"

namespace gtl {

/// Training variants.
///   full   - Phase 1 on base, Phase 2 with the generator frozen
///   gtl_t  - no Phase 1; every module trained from scratch on the support set
///   gtl_ft - like full, but the generator is fine-tuned in Phase 2
///   no_z   - classifier on raw features, no latent variables
///   no_zm  - like full with the disturbance path removed
enum class TrainMode { full, gtl_t, gtl_ft, no_z, no_zm };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::full: return "full";
    case TrainMode::gtl_t: return "gtl_t";
    case TrainMode::gtl_ft: return "gtl_ft";
    case TrainMode::no_z: return "no_z";
    case TrainMode::no_zm: return "no_zm";
  }
  return "?";
}

inline TrainMode parse_train_mode(const std::string& s) {
  if (s == "full") return TrainMode::full;
  if (s == "gtl_t") return TrainMode::gtl_t;
  if (s == "gtl_ft") return TrainMode::gtl_ft;
  if (s == "no_z") return TrainMode::no_z;
  if (s == "no_zm") return TrainMode::no_zm;
  throw ValidationError("unknown mode '" + s + "' (expected full, gtl_t, gtl_ft, no_z or no_zm)");
}

inline Ablation ablation_for(TrainMode m) {
  switch (m) {
    case TrainMode::no_z: return Ablation::no_z;
    case TrainMode::no_zm: return Ablation::no_zm;
    default: return Ablation::full;
  }
}

struct TrainConfig {
  std::size_t epochs = 60;
  double lr_repr = 1e-3;
  double lr_cls = 1e-4;
  std::size_t decay_after_epoch = 30;
  double decay_factor = 0.1;
  double weight_decay = 1e-4;
  double lambda = 1.0;
  std::size_t batch_size = 128;
  double dropout = 0.5;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::full;
  ModelDims dims;

  void validate() const {
    if (epochs == 0) throw ValidationError("TrainConfig: epochs must be positive");
    if (!(lr_repr > 0.0) || !(lr_cls > 0.0)) {
      throw ValidationError("TrainConfig: learning rates must be positive");
    }
    if (batch_size == 0) throw ValidationError("TrainConfig: batch_size must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("TrainConfig: dropout in [0,1)");
    if (!(lambda >= 0.0)) throw ValidationError("TrainConfig: lambda must be non-negative");
    dims.validate();
  }

  /// Learning rate in effect during 1-based `epoch`.
  double lr_at(double base, std::size_t epoch) const {
    return epoch > decay_after_epoch ? base * decay_factor : base;
  }
};

struct EpochRecord {
  std::string stage;  // "representation" or "classifier"
  std::size_t epoch = 0;
  double loss_total = 0.0;
  double loss_recon = 0.0;
  double loss_kl = 0.0;
  double loss_ce = 0.0;
  double lr = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["stage"] = stage;
    j["epoch"] = epoch;
    if (stage == "representation") {
      j["loss_total"] = loss_total;
      j["loss_recon"] = loss_recon;
      j["loss_kl"] = loss_kl;
    } else {
      j["loss_total"] = loss_total;
      j["loss_ce"] = loss_ce;
    }
    j["lr"] = lr;
    return j;
  }
};

struct PhaseReport {
  std::vector<EpochRecord> representation;  // empty when the stage is skipped
  std::vector<EpochRecord> classifier;
  double seconds = 0.0;
  std::uint64_t checksum = 0;

  /// One JSON object per epoch, representation stage first.
  std::string to_jsonl() const {
    std::string out;
    for (const auto* curve : {&representation, &classifier})
      for (const auto& r : *curve) out += r.to_json().dump() + "\n";
    return out;
  }
};

inline std::uint64_t params_checksum(const GtlParams& p) {
  std::uint64_t h = 0;
  for (const ParamGroup* g : p.groups()) h = h * 0x100000001b3ULL ^ checksum(*g);
  return h;
}

namespace detail {

/// Classifier indices for `labels` given the ordered class list.
inline std::vector<std::size_t> class_indices(std::span<const FeatureRecord> records,
                                              const std::vector<std::uint32_t>& classes) {
  std::vector<std::size_t> idx;
  idx.reserve(records.size());
  for (const auto& r : records) {
    auto it = std::lower_bound(classes.begin(), classes.end(), r.label);
    if (it == classes.end() || *it != r.label) {
      throw ValidationError("label " + std::to_string(r.label) + " not in classifier label set");
    }
    idx.push_back(static_cast<std::size_t>(it - classes.begin()));
  }
  return idx;
}

inline std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch,
                                                              Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
  }
  // A trailing single row cannot be batch-normalized; fold it into the previous batch.
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

}  // namespace detail

/// Optimizes the encoder, disturbance, aggregator and generator groups on the
/// negated ELBO. Frozen groups receive no updates.
inline std::vector<EpochRecord> train_representation(GtlParams& p, const Matrix& x,
                                                     const TrainConfig& cfg, Rng& rng) {
  std::vector<EpochRecord> curve;
  if (p.ablation == Ablation::no_z) return curve;
  auto groups = p.representation_groups();
  std::vector<AdamState> opt;
  for (ParamGroup* g : groups) opt.emplace_back(*g, cfg.lr_repr, cfg.weight_decay);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(cfg.lr_repr, epoch);
    for (auto& s : opt) s.lr = lr;
    EpochRecord rec{"representation", epoch};
    for (const auto& batch : detail::shuffled_batches(x.rows(), cfg.batch_size, rng)) {
      const Matrix xb = gather_rows(x, batch);
      for (ParamGroup* g : groups) g->zero_grad();
      ForwardCache cache;
      ForwardResult fwd = forward_full(p, xb, Mode::train, rng, &cache, false);
      const auto terms = elbo_loss(xb, fwd.latent, fwd.x_hat, cfg.lambda);
      full_backward(p, cache, fwd, xb, cfg.lambda, {}, 0.0);
      for (std::size_t k = 0; k < groups.size(); ++k) adam_step(*groups[k], opt[k]);
      const double w = double(batch.size()) / double(x.rows());
      rec.loss_total += w * terms.total;
      rec.loss_recon += w * terms.recon;
      rec.loss_kl += w * terms.kl;
    }
    rec.lr = lr;
    curve.push_back(rec);
  }
  return curve;
}

/// Classifier inputs: posterior-mean z_c in eval mode, or raw features for no_z.
inline Matrix classifier_features(GtlParams& p, const Matrix& x) {
  if (p.ablation == Ablation::no_z) return x;
  Rng unused(0);
  return encode(p, x, Mode::eval, unused).z_c;
}

/// Trains the classifier group on cross-entropy with the representation held fixed.
inline std::vector<EpochRecord> train_classifier(GtlParams& p, const Matrix& x,
                                                 std::span<const std::size_t> targets,
                                                 const TrainConfig& cfg, Rng& rng) {
  const Matrix feats = classifier_features(p, x);
  AdamState opt(p.classifier, cfg.lr_cls, cfg.weight_decay);
  std::vector<EpochRecord> curve;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    opt.lr = cfg.lr_at(cfg.lr_cls, epoch);
    EpochRecord rec{"classifier", epoch};
    for (const auto& batch : detail::shuffled_batches(feats.rows(), cfg.batch_size, rng)) {
      const Matrix fb = gather_rows(feats, batch);
      std::vector<std::size_t> yb;
      for (auto i : batch) yb.push_back(targets[i]);
      p.classifier.zero_grad();
      ClassifierCache cache;
      const Matrix logits = classifier_logits(p, fb, &cache);
      auto ce = ce_loss(logits, yb);
      classifier_backward(p, cache, ce.d_logits);
      adam_step(p.classifier, opt);
      rec.loss_ce += double(batch.size()) / double(feats.rows()) * ce.loss;
    }
    rec.loss_total = rec.loss_ce;
    rec.lr = opt.lr;
    curve.push_back(rec);
  }
  return curve;
}

struct TrainedModel {
  GtlParams params;
  PhaseReport report;
};

namespace detail {

inline void check_feature_dim(std::span<const FeatureRecord> records, std::size_t dx,
                              const char* what) {
  for (const auto& r : records) {
    if (r.feature.size() != dx) {
      throw DimensionError(std::string(what) + ": record " + std::to_string(r.id) + " has " +
                           std::to_string(r.feature.size()) + " features, model expects " +
                           std::to_string(dx));
    }
  }
}

inline std::vector<std::uint32_t> sorted_labels(std::span<const FeatureRecord> records) {
  const auto s = labels_of(records);
  return {s.begin(), s.end()};
}

/// Representation stage, then a fresh classifier for the records' labels.
inline void fit(GtlParams& p, std::span<const FeatureRecord> records, const TrainConfig& cfg,
                Rng& rng, PhaseReport& report) {
  const Matrix x = feature_matrix(records, p.dims.dx);
  report.representation = train_representation(p, x, cfg, rng);

  const auto labels = sorted_labels(records);
  const bool cls_frozen = p.classifier.frozen;
  reinit_classifier(p, labels.size(), rng);
  p.classifier.frozen = cls_frozen;
  p.class_labels = labels;
  const auto targets = class_indices(records, labels);
  report.classifier = train_classifier(p, x, targets, cfg, rng);
}

}  // namespace detail

/// Phase 1: representation learning on unimodal base data, then a base
/// classifier trained with the representation frozen.
inline TrainedModel train_phase1(std::span<const FeatureRecord> base, const TrainConfig& cfg,
                                 Rng& rng) {
  cfg.validate();
  if (base.empty()) throw ValidationError("train_phase1: empty base set");
  require_unimodal_base(base);
  detail::check_feature_dim(base, cfg.dims.dx, "train_phase1");
  const auto start = std::chrono::steady_clock::now();

  ModelDims dims = cfg.dims;
  dims.classes = labels_of(base).size();
  TrainedModel out{init_params(dims, ablation_for(cfg.mode), rng, cfg.dropout), {}};
  detail::fit(out.params, base, cfg, rng, out.report);

  out.report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.report.checksum = params_checksum(out.params);
  return out;
}

/// Phase 2: adapts Phase-1 parameters to a labeled support set. The
/// generator is frozen except in gtl_ft; gtl_t discards `phase1` and trains
/// everything from scratch. The classifier is always re-initialized for the
/// support labels.
inline TrainedModel adapt_phase2(const GtlParams& phase1, std::span<const FeatureRecord> support,
                                 const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (support.empty()) throw ValidationError("adapt_phase2: empty support set");
  const auto start = std::chrono::steady_clock::now();

  TrainedModel out;
  if (cfg.mode == TrainMode::gtl_t) {
    ModelDims dims = cfg.dims;
    dims.dx = phase1.dims.dx;
    dims.classes = labels_of(support).size();
    out.params = init_params(dims, Ablation::full, rng, cfg.dropout);
  } else {
    if (phase1.ablation != ablation_for(cfg.mode)) {
      throw ValidationError("adapt_phase2: checkpoint was trained as '" +
                            to_string(phase1.ablation) + "' but mode '" + to_string(cfg.mode) +
                            "' needs '" + to_string(ablation_for(cfg.mode)) + "'");
    }
    const LabelSet base_labels(phase1.class_labels.begin(), phase1.class_labels.end());
    for (const auto& r : support) {
      if (base_labels.count(r.label)) {
        throw ValidationError("adapt_phase2: support label " + std::to_string(r.label) +
                              " also appears in the base label set");
      }
    }
    out.params = phase1;
    out.params.dropout = cfg.dropout;
  }
  detail::check_feature_dim(support, out.params.dims.dx, "adapt_phase2");
  for (ParamGroup* g : out.params.groups()) g->frozen = false;
  out.params.generator.frozen = cfg.mode != TrainMode::gtl_ft && cfg.mode != TrainMode::gtl_t;

  detail::fit(out.params, support, cfg, rng, out.report);

  out.report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.report.checksum = params_checksum(out.params);
  return out;
}

/// Deterministic inference: posterior mean z_c, argmax over class scores,
/// mapped back to dataset labels.
inline std::vector<std::uint32_t> predict(const GtlParams& params, const Matrix& query) {
  GtlParams& p = const_cast<GtlParams&>(params);  // eval mode mutates nothing
  const Matrix logits = classifier_logits(p, classifier_features(p, query));
  std::vector<std::uint32_t> out;
  out.reserve(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    out.push_back(p.class_labels.empty() ? static_cast<std::uint32_t>(best) : p.class_labels[best]);
  }
  return out;
}

inline std::vector<std::uint32_t> predict(const GtlParams& params,
                                          std::span<const FeatureRecord> query) {
  return predict(params, feature_matrix(query, params.dims.dx));
}

}  // namespace gtl
