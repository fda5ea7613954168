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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gtl/error.hpp"
#include "gtl/model/dims.hpp"
#include "gtl/numerics/layers.hpp"
#include "gtl/numerics/matrix.hpp"
#include "gtl/numerics/param.hpp"
#include "gtl/numerics/rng.hpp"

namespace gtl {

/// All learnable state of a GTL network.
///
/// Parameter groups: encoder (posterior estimator), disturbance (gate and
/// latent-domain experts), aggregator, generator and classifier. Batch-norm
/// running statistics are kept beside the group that owns the layer.
struct GtlParams {
  ModelDims dims;
  Ablation ablation = Ablation::full;
  double dropout = 0.5;

  ParamGroup encoder{"encoder"};
  ParamGroup disturbance{"disturbance"};
  ParamGroup aggregator{"aggregator"};
  ParamGroup generator{"generator"};
  ParamGroup classifier{"classifier"};

  BatchNormState encoder_bn;
  BatchNormState generator_bn;

  /// Dataset label of each classifier output, ascending.
  std::vector<std::uint32_t> class_labels;

  std::vector<ParamGroup*> groups() {
    return {&encoder, &disturbance, &aggregator, &generator, &classifier};
  }
  std::vector<const ParamGroup*> groups() const {
    return {&encoder, &disturbance, &aggregator, &generator, &classifier};
  }
  /// The groups optimized by the variational objective.
  std::vector<ParamGroup*> representation_groups() {
    return {&encoder, &disturbance, &aggregator, &generator};
  }

  std::size_t classifier_input() const {
    return ablation == Ablation::no_z ? dims.dx : dims.nc;
  }
};

namespace detail {

/// Uniform(±1/√fan_in) weight and bias, the usual dense-layer initialization.
inline void add_dense(ParamGroup& g, const std::string& prefix, std::size_t in, std::size_t out,
                      Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Matrix w(in, out), b(1, out);
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  for (double& v : b.values()) v = rng.uniform(-bound, bound);
  g.add(prefix + ".weight", std::move(w));
  g.add(prefix + ".bias", std::move(b));
}

inline void add_batchnorm(ParamGroup& g, const std::string& prefix, std::size_t features) {
  g.add(prefix + ".scale", Matrix(1, features, 1.0));
  g.add(prefix + ".shift", Matrix(1, features, 0.0));
}

}  // namespace detail

/// Fresh classifier for `classes` outputs. Draws only from `rng`, so the new
/// weights carry no information from any previous classifier.
inline void reinit_classifier(GtlParams& p, std::size_t classes, Rng& rng) {
  if (classes == 0) throw ValidationError("reinit_classifier: class count must be positive");
  p.dims.classes = classes;
  const bool frozen = p.classifier.frozen;
  p.classifier = ParamGroup("classifier");
  p.classifier.frozen = frozen;
  detail::add_dense(p.classifier, "hidden", p.classifier_input(), p.dims.classifier_hidden, rng);
  detail::add_dense(p.classifier, "out", p.dims.classifier_hidden, classes, rng);
  p.class_labels.resize(classes);
  for (std::size_t i = 0; i < classes; ++i) p.class_labels[i] = static_cast<std::uint32_t>(i);
}

inline GtlParams init_params(const ModelDims& dims, Ablation ablation, Rng& rng,
                             double dropout = 0.5) {
  dims.validate();
  GtlParams p;
  p.dims = dims;
  p.ablation = ablation;
  p.dropout = dropout;
  const std::size_t latent = dims.latent();

  detail::add_dense(p.encoder, "hidden", dims.dx, dims.hidden, rng);
  detail::add_batchnorm(p.encoder, "bn", dims.hidden);
  detail::add_dense(p.encoder, "mu", dims.hidden, latent, rng);
  detail::add_dense(p.encoder, "logvar", dims.hidden, latent, rng);

  detail::add_dense(p.disturbance, "gate", dims.hidden, dims.domains, rng);
  // d experts V_1..V_d side by side: columns [j·Nm, (j+1)·Nm) belong to V_j.
  detail::add_dense(p.disturbance, "experts", dims.hidden, dims.domains * dims.nm, rng);

  detail::add_dense(p.aggregator, "agg", 2 * dims.nm, dims.nm, rng);

  detail::add_dense(p.generator, "hidden", latent, dims.hidden, rng);
  detail::add_batchnorm(p.generator, "bn", dims.hidden);
  detail::add_dense(p.generator, "out", dims.hidden, dims.dx, rng);

  p.encoder_bn = BatchNormState(dims.hidden);
  p.generator_bn = BatchNormState(dims.hidden);
  reinit_classifier(p, dims.classes, rng);
  return p;
}

// ---------------------------------------------------------------------------
// Forward caches

struct EncoderCache {
  Matrix x;
  Matrix pre_bn;
  BatchNormCache bn;
  Matrix pre_relu;
  DropoutCache drop;
  Matrix hidden;
  Matrix logvar_raw;
  Matrix noise;  // empty when the posterior mean was used
};

struct DisturbanceCache {
  Matrix hidden;
  Matrix experts;  // B × (d·Nm)
};

struct AggregatorCache {
  Matrix input;  // [u_hat | z_m]
};

struct GeneratorCache {
  Matrix input;  // [z_c | z_m′]
  Matrix pre_bn;
  BatchNormCache bn;
  Matrix pre_relu;
  DropoutCache drop;
  Matrix hidden;
};

struct ClassifierCache {
  Matrix input;
  Matrix hidden;
};

/// Latent quantities of one forward pass. Fields a given ablation does not
/// compute are left empty.
struct LatentSample {
  Matrix hidden;
  Matrix mu;
  Matrix logvar;
  Matrix z_c;
  Matrix z_m;
  Matrix u_hat;
  Matrix z_m_prime;
  Matrix gates;
  /// Posterior moments entering the KL term. In full mode these are
  /// [μ_c | E z_m′] and [logσ²_c | log Var z_m′]; otherwise empty and the KL
  /// uses mu/logvar.
  Matrix kl_mu;
  Matrix kl_logvar;
};

namespace detail {

/// Train-mode batch norm needs at least two rows; smaller batches fall back
/// to the running statistics.
inline Mode bn_mode(Mode mode, std::size_t batch) {
  return mode == Mode::train && batch >= 2 ? Mode::train : Mode::eval;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Encoder

/// Posterior estimator. Train mode samples z by reparameterization; eval mode
/// returns z = μ. Fills hidden, mu, logvar, z_c, z_m.
inline LatentSample encode(GtlParams& p, const Matrix& x, Mode mode, Rng& rng,
                           EncoderCache* cache = nullptr) {
  if (x.cols() != p.dims.dx) {
    throw DimensionError("encode: expected " + std::to_string(p.dims.dx) + " features, got " +
                         std::to_string(x.cols()));
  }
  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  const ParamGroup& g = p.encoder;
  c.x = x;
  c.pre_bn = dense_forward(x, g["hidden.weight"].value, g["hidden.bias"].value);
  c.pre_relu = batchnorm_forward(c.pre_bn, g["bn.scale"].value, g["bn.shift"].value, p.encoder_bn,
                                 detail::bn_mode(mode, x.rows()), c.bn);
  c.hidden = dropout_forward(relu_forward(c.pre_relu), p.dropout, mode, rng, c.drop);

  LatentSample s;
  s.hidden = c.hidden;
  s.mu = dense_forward(c.hidden, g["mu.weight"].value, g["mu.bias"].value);
  c.logvar_raw = dense_forward(c.hidden, g["logvar.weight"].value, g["logvar.bias"].value);
  s.logvar = clamp_logvar(c.logvar_raw);
  Matrix z;
  if (mode == Mode::train) {
    auto r = reparameterize(s.mu, s.logvar, rng);
    z = std::move(r.z);
    c.noise = std::move(r.noise);
  } else {
    z = s.mu;
    c.noise = Matrix();
  }
  s.z_c = slice_cols(z, 0, p.dims.nc);
  s.z_m = slice_cols(z, p.dims.nc, p.dims.nm);
  return s;
}

/// Accumulates encoder gradients. `d_hidden` is the gradient reaching the
/// shared hidden activation from the disturbance path (may be empty).
inline void encoder_backward(GtlParams& p, const EncoderCache& c, const Matrix& d_mu_direct,
                             const Matrix& d_logvar_direct, const Matrix& d_z,
                             const Matrix& d_hidden_extra) {
  ParamGroup& g = p.encoder;
  Matrix d_mu = d_mu_direct;
  Matrix d_logvar = d_logvar_direct;
  if (!d_z.empty()) {
    if (c.noise.empty()) {
      d_mu += d_z;
    } else {
      auto rg = reparameterize_backward(c.logvar_raw, c.noise, d_z);
      d_mu += rg.d_mu;
      d_logvar += rg.d_logvar;
    }
  }
  // clamp passes gradient only inside [kLogvarMin, kLogvarMax]
  for (std::size_t i = 0; i < d_logvar.size(); ++i) {
    if (c.logvar_raw[i] < kLogvarMin || c.logvar_raw[i] > kLogvarMax) d_logvar[i] = 0.0;
  }

  auto mu_g = dense_backward(c.hidden, g["mu.weight"].value, d_mu);
  auto lv_g = dense_backward(c.hidden, g["logvar.weight"].value, d_logvar);
  g["mu.weight"].grad += mu_g.dw;
  g["mu.bias"].grad += mu_g.db;
  g["logvar.weight"].grad += lv_g.dw;
  g["logvar.bias"].grad += lv_g.db;

  Matrix d_hidden = mu_g.dx + lv_g.dx;
  if (!d_hidden_extra.empty()) d_hidden += d_hidden_extra;
  Matrix d_relu = relu_backward(c.pre_relu, dropout_backward(c.drop, std::move(d_hidden)));
  auto bn_g = batchnorm_backward(c.bn, g["bn.scale"].value, d_relu);
  g["bn.scale"].grad += bn_g.dscale;
  g["bn.shift"].grad += bn_g.dshift;
  auto in_g = dense_backward(c.x, g["hidden.weight"].value, bn_g.dx);
  g["hidden.weight"].grad += in_g.dw;
  g["hidden.bias"].grad += in_g.db;
}

// ---------------------------------------------------------------------------
// Disturbance estimator

struct Disturbance {
  Matrix u_hat;  // B × Nm
  Matrix gates;  // B × d
};

/// û[b] = Σ_j g_j(h[b])·V_j(h[b]) with g = softmax of a linear gate map.
inline Disturbance estimate_disturbance(const GtlParams& p, const Matrix& hidden,
                                        DisturbanceCache* cache = nullptr) {
  const ParamGroup& g = p.disturbance;
  const std::size_t d = p.dims.domains, nm = p.dims.nm, n = hidden.rows();
  if (hidden.cols() != p.dims.hidden) {
    throw DimensionError("estimate_disturbance: hidden " + hidden.shape());
  }
  Disturbance out;
  out.gates = softmax_rows(dense_forward(hidden, g["gate.weight"].value, g["gate.bias"].value));
  Matrix experts = dense_forward(hidden, g["experts.weight"].value, g["experts.bias"].value);
  out.u_hat = Matrix(n, nm);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < d; ++j) {
      const double w = out.gates(b, j);
      for (std::size_t k = 0; k < nm; ++k) out.u_hat(b, k) += w * experts(b, j * nm + k);
    }
  if (cache) {
    cache->hidden = hidden;
    cache->experts = std::move(experts);
  }
  return out;
}

/// Returns the gradient with respect to the hidden input.
inline Matrix disturbance_backward(GtlParams& p, const DisturbanceCache& c, const Matrix& gates,
                                   const Matrix& d_u_hat) {
  ParamGroup& g = p.disturbance;
  const std::size_t d = p.dims.domains, nm = p.dims.nm, n = d_u_hat.rows();
  Matrix d_experts(n, d * nm), d_gates(n, d);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < nm; ++k) {
        d_experts(b, j * nm + k) = gates(b, j) * d_u_hat(b, k);
        s += d_u_hat(b, k) * c.experts(b, j * nm + k);
      }
      d_gates(b, j) = s;
    }
  // softmax backward: dlogit = g ⊙ (dg − Σ g·dg)
  Matrix d_logits(n, d);
  for (std::size_t b = 0; b < n; ++b) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += gates(b, j) * d_gates(b, j);
    for (std::size_t j = 0; j < d; ++j) d_logits(b, j) = gates(b, j) * (d_gates(b, j) - dot);
  }
  auto eg = dense_backward(c.hidden, g["experts.weight"].value, d_experts);
  auto gg = dense_backward(c.hidden, g["gate.weight"].value, d_logits);
  g["experts.weight"].grad += eg.dw;
  g["experts.bias"].grad += eg.db;
  g["gate.weight"].grad += gg.dw;
  g["gate.bias"].grad += gg.db;
  return eg.dx + gg.dx;
}

// ---------------------------------------------------------------------------
// Aggregator

/// z_m′ = [û | z_m]·W + b
inline Matrix aggregate(const GtlParams& p, const Matrix& u_hat, const Matrix& z_m,
                        AggregatorCache* cache = nullptr) {
  if (u_hat.cols() != p.dims.nm || z_m.cols() != p.dims.nm || u_hat.rows() != z_m.rows()) {
    throw DimensionError("aggregate: u_hat " + u_hat.shape() + ", z_m " + z_m.shape());
  }
  Matrix in = hconcat(u_hat, z_m);
  Matrix out = dense_forward(in, p.aggregator["agg.weight"].value, p.aggregator["agg.bias"].value);
  if (cache) cache->input = std::move(in);
  return out;
}

struct AggregatorGrads {
  Matrix d_u_hat;
  Matrix d_z_m;
};

inline AggregatorGrads aggregator_backward(GtlParams& p, const AggregatorCache& c,
                                           const Matrix& d_out) {
  auto dg = dense_backward(c.input, p.aggregator["agg.weight"].value, d_out);
  p.aggregator["agg.weight"].grad += dg.dw;
  p.aggregator["agg.bias"].grad += dg.db;
  return {slice_cols(dg.dx, 0, p.dims.nm), slice_cols(dg.dx, p.dims.nm, p.dims.nm)};
}

/// z_m′ = û·W_u + z_m·W_z + b is affine in z_m ~ N(μ_m, diag σ²), so
/// E z_m′ = [û | μ_m]·W + b and Var z_m′_k = Σ_i W_z[i,k]²·σ_i². The KL
/// term uses these marginals with a diagonal covariance.
struct AggregatedMoments {
  Matrix mean;    // B × Nm
  Matrix logvar;  // B × Nm
};

struct MomentCache {
  Matrix input;  // [û | μ_m]
  Matrix var_m;  // σ² of z_m, B × Nm
  Matrix var;    // Var z_m′ + kVarFloor, B × Nm
};

inline constexpr double kVarFloor = 1e-12;

inline AggregatedMoments aggregated_moments(const GtlParams& p, const Matrix& u_hat,
                                            const Matrix& mu_m, const Matrix& logvar_m,
                                            MomentCache* cache = nullptr) {
  const std::size_t nm = p.dims.nm, n = u_hat.rows();
  const Matrix& w = p.aggregator["agg.weight"].value;
  MomentCache local;
  MomentCache& c = cache ? *cache : local;
  c.input = hconcat(u_hat, mu_m);
  AggregatedMoments m;
  m.mean = dense_forward(c.input, w, p.aggregator["agg.bias"].value);
  c.var_m = Matrix(n, nm);
  c.var = Matrix(n, nm, kVarFloor);
  m.logvar = Matrix(n, nm);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < nm; ++i) c.var_m(b, i) = std::exp(logvar_m(b, i));
    for (std::size_t k = 0; k < nm; ++k) {
      for (std::size_t i = 0; i < nm; ++i) {
        const double wz = w(nm + i, k);
        c.var(b, k) += wz * wz * c.var_m(b, i);
      }
      m.logvar(b, k) = std::log(c.var(b, k));
    }
  }
  return m;
}

struct MomentGrads {
  Matrix d_u_hat;
  Matrix d_mu_m;
  Matrix d_logvar_m;
};

inline MomentGrads aggregated_moments_backward(GtlParams& p, const MomentCache& c,
                                               const Matrix& d_mean, const Matrix& d_logvar) {
  const std::size_t nm = p.dims.nm, n = d_mean.rows();
  Param& w = p.aggregator["agg.weight"];
  auto dg = dense_backward(c.input, w.value, d_mean);
  w.grad += dg.dw;
  p.aggregator["agg.bias"].grad += dg.db;
  MomentGrads out{slice_cols(dg.dx, 0, nm), slice_cols(dg.dx, nm, nm), Matrix(n, nm)};
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t k = 0; k < nm; ++k) {
      const double d_var = d_logvar(b, k) / c.var(b, k);
      for (std::size_t i = 0; i < nm; ++i) {
        const double wz = w.value(nm + i, k);
        w.grad(nm + i, k) += d_var * 2.0 * wz * c.var_m(b, i);
        out.d_logvar_m(b, i) += d_var * wz * wz * c.var_m(b, i);
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Generator

/// x̂ = dense(dropout(relu(bn(dense([z_c | z_m′])))))
inline Matrix decode(GtlParams& p, const Matrix& z_c, const Matrix& z_m_prime, Mode mode, Rng& rng,
                     GeneratorCache* cache = nullptr) {
  if (z_c.cols() != p.dims.nc || z_m_prime.cols() != p.dims.nm || z_c.rows() != z_m_prime.rows()) {
    throw DimensionError("decode: z_c " + z_c.shape() + ", z_m' " + z_m_prime.shape());
  }
  GeneratorCache local;
  GeneratorCache& c = cache ? *cache : local;
  const ParamGroup& g = p.generator;
  c.input = hconcat(z_c, z_m_prime);
  c.pre_bn = dense_forward(c.input, g["hidden.weight"].value, g["hidden.bias"].value);
  c.pre_relu = batchnorm_forward(c.pre_bn, g["bn.scale"].value, g["bn.shift"].value,
                                 p.generator_bn, detail::bn_mode(mode, z_c.rows()), c.bn);
  c.hidden = dropout_forward(relu_forward(c.pre_relu), p.dropout, mode, rng, c.drop);
  return dense_forward(c.hidden, g["out.weight"].value, g["out.bias"].value);
}

struct GeneratorGrads {
  Matrix d_z_c;
  Matrix d_z_m_prime;
};

/// Accumulates generator gradients even when the group is frozen (the
/// optimizer is what honors the freeze) and returns input gradients.
inline GeneratorGrads generator_backward(GtlParams& p, const GeneratorCache& c,
                                         const Matrix& d_x_hat) {
  ParamGroup& g = p.generator;
  auto og = dense_backward(c.hidden, g["out.weight"].value, d_x_hat);
  g["out.weight"].grad += og.dw;
  g["out.bias"].grad += og.db;
  Matrix d_relu = relu_backward(c.pre_relu, dropout_backward(c.drop, std::move(og.dx)));
  auto bn_g = batchnorm_backward(c.bn, g["bn.scale"].value, d_relu);
  g["bn.scale"].grad += bn_g.dscale;
  g["bn.shift"].grad += bn_g.dshift;
  auto hg = dense_backward(c.input, g["hidden.weight"].value, bn_g.dx);
  g["hidden.weight"].grad += hg.dw;
  g["hidden.bias"].grad += hg.db;
  return {slice_cols(hg.dx, 0, p.dims.nc), slice_cols(hg.dx, p.dims.nc, p.dims.nm)};
}

// ---------------------------------------------------------------------------
// Classifier: two stacked dense layers, no activation in between.

inline Matrix classifier_logits(const GtlParams& p, const Matrix& input,
                                ClassifierCache* cache = nullptr) {
  const ParamGroup& g = p.classifier;
  if (input.cols() != p.classifier_input()) {
    throw DimensionError("classifier: expected input width " +
                         std::to_string(p.classifier_input()) + ", got " +
                         std::to_string(input.cols()));
  }
  Matrix hidden = dense_forward(input, g["hidden.weight"].value, g["hidden.bias"].value);
  Matrix logits = dense_forward(hidden, g["out.weight"].value, g["out.bias"].value);
  if (cache) {
    cache->input = input;
    cache->hidden = std::move(hidden);
  }
  return logits;
}

/// Returns the gradient with respect to the classifier input.
inline Matrix classifier_backward(GtlParams& p, const ClassifierCache& c, const Matrix& d_logits) {
  ParamGroup& g = p.classifier;
  auto og = dense_backward(c.hidden, g["out.weight"].value, d_logits);
  g["out.weight"].grad += og.dw;
  g["out.bias"].grad += og.db;
  auto hg = dense_backward(c.input, g["hidden.weight"].value, og.dx);
  g["hidden.weight"].grad += hg.dw;
  g["hidden.bias"].grad += hg.db;
  return hg.dx;
}

/// Class probabilities for intrinsic concepts z_c.
inline Matrix classify(const GtlParams& p, const Matrix& z_c) {
  return softmax_rows(classifier_logits(p, z_c));
}

// ---------------------------------------------------------------------------
// Losses

struct ElboTerms {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

/// Negated ELBO: row_sq_error(x, x̂) + λ·KL(q || N(0, I)), where q is the
/// posterior over (z_c, z_m′) when the sample carries aggregated moments and
/// over (z_c, z_m) otherwise.
inline ElboTerms elbo_loss(const Matrix& x, const LatentSample& s, const Matrix& x_hat,
                           double lambda) {
  ElboTerms t;
  t.recon = row_sq_error(x_hat, x);
  t.kl = s.kl_mu.empty() ? gaussian_kl(s.mu, s.logvar) : gaussian_kl(s.kl_mu, s.kl_logvar);
  t.total = t.recon + lambda * t.kl;
  return t;
}

/// Cross-entropy computed from logits.
inline CrossEntropy ce_loss(const Matrix& logits, std::span<const std::size_t> labels) {
  return softmax_ce(logits, labels);
}

// ---------------------------------------------------------------------------
// Full forward / backward

struct ForwardCache {
  EncoderCache encoder;
  DisturbanceCache disturbance;
  AggregatorCache aggregator;
  GeneratorCache generator;
  ClassifierCache classifier;
  MomentCache moments;
};

struct ForwardResult {
  LatentSample latent;
  Matrix x_hat;   // empty for no_z
  Matrix logits;
};

/// encode → estimate_disturbance → aggregate → decode, and classify(z_c)
/// unless `with_classifier` is false.
inline ForwardResult forward_full(GtlParams& p, const Matrix& x, Mode mode, Rng& rng,
                                  ForwardCache* cache = nullptr, bool with_classifier = true) {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  ForwardResult r;
  if (p.ablation == Ablation::no_z) {
    if (x.cols() != p.dims.dx) {
      throw DimensionError("forward_full: expected " + std::to_string(p.dims.dx) + " features");
    }
    r.logits = classifier_logits(p, x, &c.classifier);
    return r;
  }
  r.latent = encode(p, x, mode, rng, &c.encoder);
  LatentSample& s = r.latent;
  if (p.ablation == Ablation::full) {
    auto dist = estimate_disturbance(p, s.hidden, &c.disturbance);
    s.u_hat = std::move(dist.u_hat);
    s.gates = std::move(dist.gates);
    s.z_m_prime = aggregate(p, s.u_hat, s.z_m, &c.aggregator);
    auto mom = aggregated_moments(p, s.u_hat, slice_cols(s.mu, p.dims.nc, p.dims.nm),
                                  slice_cols(s.logvar, p.dims.nc, p.dims.nm), &c.moments);
    s.kl_mu = hconcat(slice_cols(s.mu, 0, p.dims.nc), mom.mean);
    s.kl_logvar = hconcat(slice_cols(s.logvar, 0, p.dims.nc), mom.logvar);
  } else {
    s.z_m_prime = Matrix(x.rows(), p.dims.nm);
  }
  r.x_hat = decode(p, s.z_c, s.z_m_prime, mode, rng, &c.generator);
  if (with_classifier) r.logits = classifier_logits(p, s.z_c, &c.classifier);
  return r;
}

/// Backpropagates `elbo_loss(x, ·, ·, lambda) + ce_weight · ce_loss(logits,
/// labels)` through a forward_full pass, accumulating into every group.
/// ce_weight = 0 skips the classifier entirely. Returns the objective value.
inline double full_backward(GtlParams& p, const ForwardCache& c, const ForwardResult& r,
                            const Matrix& x, double lambda, std::span<const std::size_t> labels,
                            double ce_weight) {
  double objective = 0.0;
  Matrix d_z_c_cls;
  if (ce_weight != 0.0) {
    auto ce = ce_loss(r.logits, labels);
    objective += ce_weight * ce.loss;
    Matrix d_in = classifier_backward(p, c.classifier, ce.d_logits * ce_weight);
    if (p.ablation == Ablation::no_z) return objective;
    d_z_c_cls = std::move(d_in);
  }
  if (p.ablation == Ablation::no_z) return objective;

  const LatentSample& s = r.latent;
  const auto terms = elbo_loss(x, s, r.x_hat, lambda);
  objective += terms.total;

  auto gen = generator_backward(p, c.generator, row_sq_error_backward(r.x_hat, x));
  Matrix d_z_c = std::move(gen.d_z_c);
  if (!d_z_c_cls.empty()) d_z_c += d_z_c_cls;

  const std::size_t nc = p.dims.nc, nm = p.dims.nm;
  Matrix d_z_m(x.rows(), nm);
  Matrix d_hidden_extra;
  Matrix d_mu, d_logvar;
  if (p.ablation == Ablation::full) {
    auto ag = aggregator_backward(p, c.aggregator, gen.d_z_m_prime);
    d_z_m = std::move(ag.d_z_m);
    auto kl = gaussian_kl_backward(s.kl_mu, s.kl_logvar);
    kl.d_mu *= lambda;
    kl.d_logvar *= lambda;
    auto mg = aggregated_moments_backward(p, c.moments, slice_cols(kl.d_mu, nc, nm),
                                          slice_cols(kl.d_logvar, nc, nm));
    d_mu = hconcat(slice_cols(kl.d_mu, 0, nc), mg.d_mu_m);
    d_logvar = hconcat(slice_cols(kl.d_logvar, 0, nc), mg.d_logvar_m);
    d_hidden_extra = disturbance_backward(p, c.disturbance, s.gates, ag.d_u_hat + mg.d_u_hat);
  } else {
    auto kl = gaussian_kl_backward(s.mu, s.logvar);
    d_mu = kl.d_mu * lambda;
    d_logvar = kl.d_logvar * lambda;
  }
  encoder_backward(p, c.encoder, d_mu, d_logvar, hconcat(d_z_c, d_z_m), d_hidden_extra);
  return objective;
}

}  // namespace gtl
