#pragma once

// Audio-guided contrastive losses (frame level and instance level), the
// per-frame segmentation sub-losses, and total-loss aggregation. Gradients
// are hand-derived closed forms; the gradcheck module certifies them.

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "seavis/errors.hpp"
#include "seavis/numkernel.hpp"

namespace seavis::agcl {

inline constexpr double kNormEps = 1e-12;
inline constexpr double kDiceEps = 1e-6;

// One frame: audio anchor vs sounding (positive) and silent/background
// (negative) embeddings.
struct FrameContrastSet {
  DenseArray anchor;
  std::vector<DenseArray> positives;
  std::vector<DenseArray> negatives;
};

// One tracked instance: mean audio anchor over its sounding frames vs its
// own embeddings in sounding (positive) and silent (negative) states.
struct InstanceContrastSet {
  int instance_id = 0;
  std::set<std::size_t> sounding_frames;
  std::set<std::size_t> silent_frames;
  std::vector<DenseArray> positives;  // embeddings from sounding frames
  std::vector<DenseArray> negatives;  // embeddings from silent frames
  DenseArray anchor;                  // mean of frame anchors over S_k

  bool eligible() const { return !positives.empty() && !negatives.empty(); }
};

// Gradients aligned index-for-index with a contrast set.
struct ContrastGrads {
  DenseArray anchor;
  std::vector<DenseArray> positives;
  std::vector<DenseArray> negatives;
};

namespace detail {

// VJP of x_hat = x / (||x|| + eps): maps an upstream gradient u on x_hat to
// the gradient on x. The radial term is dropped at x = 0 where the map is
// u / eps exactly.
inline DenseArray normalize_backward(const DenseArray& x, const DenseArray& u,
                                     double eps) {
  const double n = l2_norm(x);
  const double g = 1.0 / (n + eps);
  DenseArray out = u;
  for (double& v : out.data) v *= g;
  if (n > 0.0) {
    const double coef = dot(x, u) / (n * (n + eps) * (n + eps));
    for (std::size_t i = 0; i < out.size(); ++i)
      out.data[i] -= coef * x.data[i];
  }
  return out;
}

inline ContrastGrads zero_grads(const DenseArray& anchor, std::size_t np,
                                std::size_t nn) {
  ContrastGrads g;
  g.anchor = DenseArray(anchor.shape);
  g.positives.assign(np, DenseArray(anchor.shape));
  g.negatives.assign(nn, DenseArray(anchor.shape));
  return g;
}

inline void check_dims(const FrameContrastSet& set) {
  for (const auto& p : set.positives)
    if (!p.same_shape(set.anchor))
      throw DimensionError("contrastive loss: positive/anchor dim mismatch");
  for (const auto& n : set.negatives)
    if (!n.same_shape(set.anchor))
      throw DimensionError("contrastive loss: negative/anchor dim mismatch");
}

}  // namespace detail

// anchor = audio_feat · proj
inline DenseArray project_audio_anchor(const DenseArray& audio_feat,
                                       const DenseArray& proj) {
  if (audio_feat.ndim() != 1 || proj.ndim() != 2 ||
      audio_feat.size() != proj.rows())
    throw DimensionError("project_audio_anchor: shape mismatch");
  DenseArray row({1, audio_feat.size()}, audio_feat.data);
  DenseArray out = matmul(row, proj);
  return DenseArray({out.cols()}, std::move(out.data));
}

// a_bar_k = (1/|S_k|) sum of frame anchors over the sounding frames.
inline DenseArray instance_anchor(const std::vector<DenseArray>& frame_anchors,
                                  const std::set<std::size_t>& sounding_frames) {
  if (sounding_frames.empty())
    throw ConfigError("instance_anchor: empty sounding-frame set");
  DenseArray sum;
  for (std::size_t t : sounding_frames) {
    if (t >= frame_anchors.size())
      throw DimensionError("instance_anchor: frame index out of range");
    if (sum.size() == 0)
      sum = frame_anchors[t];
    else {
      if (!sum.same_shape(frame_anchors[t]))
        throw DimensionError("instance_anchor: anchor dim mismatch");
      for (std::size_t i = 0; i < sum.size(); ++i)
        sum.data[i] += frame_anchors[t].data[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(sounding_frames.size());
  for (double& v : sum.data) v *= inv;
  return sum;
}

struct FrameLossResult {
  double loss = 0.0;              // sum of -log s over this set's positives
  std::size_t positive_count = 0;
  ContrastGrads grads;            // gradients of `loss`
};

// Per-positive InfoNCE against the shared negative set, summed over the
// set's positives. Similarities are cosines of L2-normalized vectors scaled
// by 1/tau. A frame with no positives contributes zero loss and zero count;
// with no negatives each s is exactly 1 and everything is zero.
inline FrameLossResult frame_contrastive_loss(const FrameContrastSet& set,
                                              double tau) {
  if (tau <= 0.0) throw ConfigError("frame_contrastive_loss: tau must be > 0");
  detail::check_dims(set);

  FrameLossResult result;
  result.positive_count = set.positives.size();
  result.grads =
      detail::zero_grads(set.anchor, set.positives.size(), set.negatives.size());
  if (set.positives.empty()) return result;

  const DenseArray a_hat = l2_normalize(set.anchor, kNormEps);
  std::vector<DenseArray> p_hat, n_hat;
  p_hat.reserve(set.positives.size());
  n_hat.reserve(set.negatives.size());
  for (const auto& p : set.positives) p_hat.push_back(l2_normalize(p, kNormEps));
  for (const auto& n : set.negatives) n_hat.push_back(l2_normalize(n, kNormEps));

  std::vector<double> exp_neg(n_hat.size());
  double neg_mass = 0.0;
  for (std::size_t j = 0; j < n_hat.size(); ++j) {
    exp_neg[j] = std::exp(dot(a_hat, n_hat[j]) / tau);
    neg_mass += exp_neg[j];
  }

  DenseArray d_anchor_hat(set.anchor.shape);
  double inv_denom_sum = 0.0;  // sum over positives of 1/D_i
  for (std::size_t i = 0; i < p_hat.size(); ++i) {
    const double z = dot(a_hat, p_hat[i]) / tau;
    const double ez = std::exp(z);
    const double denom = ez + neg_mass;
    const double s = ez / denom;
    result.loss += std::log(denom) - z;  // == -log(s)
    inv_denom_sum += 1.0 / denom;

    const double coef_p = (s - 1.0) / tau;
    result.grads.positives[i] =
        detail::normalize_backward(set.positives[i], a_hat, kNormEps);
    for (double& v : result.grads.positives[i].data) v *= coef_p;
    for (std::size_t c = 0; c < d_anchor_hat.size(); ++c)
      d_anchor_hat.data[c] += coef_p * p_hat[i].data[c];
  }
  for (std::size_t j = 0; j < n_hat.size(); ++j) {
    const double coef_n = exp_neg[j] * inv_denom_sum / tau;
    result.grads.negatives[j] =
        detail::normalize_backward(set.negatives[j], a_hat, kNormEps);
    for (double& v : result.grads.negatives[j].data) v *= coef_n;
    for (std::size_t c = 0; c < d_anchor_hat.size(); ++c)
      d_anchor_hat.data[c] += coef_n * n_hat[j].data[c];
  }
  result.grads.anchor =
      detail::normalize_backward(set.anchor, d_anchor_hat, kNormEps);
  return result;
}

struct FrameLevelResult {
  double loss = 0.0;                 // L_f
  std::size_t total_positives = 0;   // sum over frames of |P_f|
  std::vector<ContrastGrads> grads;  // per input set, gradients of L_f
};

// L_f = (1 / sum_f |P_f|) * sum_f sum_i -log(s_{f,i}); all-silent input
// yields zero.
inline FrameLevelResult frame_level_loss(
    const std::vector<FrameContrastSet>& sets, double tau) {
  FrameLevelResult out;
  std::vector<FrameLossResult> per_set;
  per_set.reserve(sets.size());
  double loss_sum = 0.0;
  for (const auto& set : sets) {
    per_set.push_back(frame_contrastive_loss(set, tau));
    loss_sum += per_set.back().loss;
    out.total_positives += per_set.back().positive_count;
  }
  const double scale =
      out.total_positives == 0 ? 0.0
                               : 1.0 / static_cast<double>(out.total_positives);
  out.loss = loss_sum * scale;
  for (auto& r : per_set) {
    for (double& v : r.grads.anchor.data) v *= scale;
    for (auto& g : r.grads.positives)
      for (double& v : g.data) v *= scale;
    for (auto& g : r.grads.negatives)
      for (double& v : g.data) v *= scale;
    out.grads.push_back(std::move(r.grads));
  }
  return out;
}

struct InstanceLevelResult {
  double loss = 0.0;                 // L_i
  std::size_t eligible_count = 0;    // N_inst
  std::vector<ContrastGrads> grads;  // per input set, gradients of L_i
};

// Multi-positive InfoNCE per eligible instance, averaged over eligible
// instances; ineligible instances contribute nothing (zero gradients).
inline InstanceLevelResult instance_contrastive_loss(
    const std::vector<InstanceContrastSet>& sets, double tau) {
  if (tau <= 0.0)
    throw ConfigError("instance_contrastive_loss: tau must be > 0");

  InstanceLevelResult out;
  for (const auto& set : sets) {
    for (std::size_t t : set.sounding_frames)
      if (set.silent_frames.count(t))
        throw ConfigError("instance_contrastive_loss: S_k and U_k overlap");
    if (set.eligible()) ++out.eligible_count;
  }

  std::vector<ContrastGrads> raw;
  raw.reserve(sets.size());
  double loss_sum = 0.0;

  for (const auto& set : sets) {
    ContrastGrads g = detail::zero_grads(set.anchor, set.positives.size(),
                                         set.negatives.size());
    if (!set.eligible()) {
      raw.push_back(std::move(g));
      continue;
    }
    const DenseArray a_hat = l2_normalize(set.anchor, kNormEps);
    std::vector<DenseArray> p_hat, n_hat;
    for (const auto& p : set.positives) {
      if (!p.same_shape(set.anchor))
        throw DimensionError("instance loss: positive/anchor dim mismatch");
      p_hat.push_back(l2_normalize(p, kNormEps));
    }
    for (const auto& n : set.negatives) {
      if (!n.same_shape(set.anchor))
        throw DimensionError("instance loss: negative/anchor dim mismatch");
      n_hat.push_back(l2_normalize(n, kNormEps));
    }

    std::vector<double> ep(p_hat.size()), en(n_hat.size());
    double pos_mass = 0.0, neg_mass = 0.0;
    for (std::size_t i = 0; i < p_hat.size(); ++i) {
      ep[i] = std::exp(dot(a_hat, p_hat[i]) / tau);
      pos_mass += ep[i];
    }
    for (std::size_t j = 0; j < n_hat.size(); ++j) {
      en[j] = std::exp(dot(a_hat, n_hat[j]) / tau);
      neg_mass += en[j];
    }
    const double total = pos_mass + neg_mass;
    loss_sum += std::log(total) - std::log(pos_mass);  // == -log(s_k)

    DenseArray d_anchor_hat(set.anchor.shape);
    for (std::size_t i = 0; i < p_hat.size(); ++i) {
      const double coef = ep[i] * (1.0 / total - 1.0 / pos_mass) / tau;
      g.positives[i] =
          detail::normalize_backward(set.positives[i], a_hat, kNormEps);
      for (double& v : g.positives[i].data) v *= coef;
      for (std::size_t c = 0; c < d_anchor_hat.size(); ++c)
        d_anchor_hat.data[c] += coef * p_hat[i].data[c];
    }
    for (std::size_t j = 0; j < n_hat.size(); ++j) {
      const double coef = en[j] / total / tau;
      g.negatives[j] =
          detail::normalize_backward(set.negatives[j], a_hat, kNormEps);
      for (double& v : g.negatives[j].data) v *= coef;
      for (std::size_t c = 0; c < d_anchor_hat.size(); ++c)
        d_anchor_hat.data[c] += coef * n_hat[j].data[c];
    }
    g.anchor = detail::normalize_backward(set.anchor, d_anchor_hat, kNormEps);
    raw.push_back(std::move(g));
  }

  if (out.eligible_count == 0) {
    out.grads = std::move(raw);
    return out;  // L_i = 0 by convention
  }
  const double scale = 1.0 / static_cast<double>(out.eligible_count);
  out.loss = loss_sum * scale;
  for (auto& g : raw) {
    for (double& v : g.anchor.data) v *= scale;
    for (auto& e : g.positives)
      for (double& v : e.data) v *= scale;
    for (auto& e : g.negatives)
      for (double& v : e.data) v *= scale;
  }
  out.grads = std::move(raw);
  return out;
}

// 1 - 2*sum(pred*gt) / (sum(pred) + sum(gt) + eps)
inline double dice_loss(const DenseArray& pred, const DenseArray& gt) {
  if (!pred.same_shape(gt)) throw DimensionError("dice_loss: shape mismatch");
  double inter = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred.data[i] * gt.data[i];
    mass += pred.data[i] + gt.data[i];
  }
  return 1.0 - 2.0 * inter / (mass + kDiceEps);
}

// Mean binary cross-entropy over pixels, on logits (numerically stable form).
inline double bce_loss(const DenseArray& pred_logits, const DenseArray& gt_mask) {
  if (!pred_logits.same_shape(gt_mask))
    throw DimensionError("bce_loss: shape mismatch");
  if (pred_logits.size() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred_logits.size(); ++i) {
    const double x = pred_logits.data[i];
    const double y = gt_mask.data[i];
    sum += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
  }
  return sum / static_cast<double>(pred_logits.size());
}

// Softmax cross-entropy over classes. `assignment[i]` maps prediction i to a
// ground-truth index; unassigned predictions are supervised toward the
// no-object class (last column).
inline double cls_loss(const DenseArray& class_logits,
                       const std::vector<int>& gt_class,
                       const std::vector<std::optional<std::size_t>>& assignment) {
  if (class_logits.ndim() != 2)
    throw DimensionError("cls_loss: logits must be 2-D");
  const std::size_t n = class_logits.rows(), k = class_logits.cols();
  if (assignment.size() != n)
    throw DimensionError("cls_loss: assignment size mismatch");
  if (n == 0) return 0.0;

  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t target = k - 1;  // no-object
    if (assignment[i].has_value()) {
      const std::size_t gi = *assignment[i];
      if (gi >= gt_class.size())
        throw DimensionError("cls_loss: assignment index out of range");
      if (gt_class[gi] < 0 || static_cast<std::size_t>(gt_class[gi]) >= k)
        throw DimensionError("cls_loss: ground-truth class out of range");
      target = static_cast<std::size_t>(gt_class[gi]);
    }
    double row_max = class_logits(i, 0);
    for (std::size_t j = 1; j < k; ++j)
      row_max = std::max(row_max, class_logits(i, j));
    double lse = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      lse += std::exp(class_logits(i, j) - row_max);
    sum += std::log(lse) + row_max - class_logits(i, target);
  }
  return sum / static_cast<double>(n);
}

struct LossWeights {
  double lambda_cls = 2.0;
  double lambda_ce = 5.0;
  double lambda_dice = 5.0;
  double lambda_emb = 2.0;
  double lambda_f = 1.0;
  double lambda_i = 1.0;
  double tau = 0.07;
};

struct LossTerms {
  double cls = 0.0;
  double ce = 0.0;
  double dice = 0.0;
  double f = 0.0;
  double i = 0.0;
};

struct LossReport {
  double l_cls = 0.0, l_ce = 0.0, l_dice = 0.0;
  double l_emb = 0.0, l_f = 0.0, l_i = 0.0;
  double l_frame = 0.0;
  double total = 0.0;
  // Gradients of the weighted total w.r.t. each contributing embedding,
  // keyed "f<frame>.{anchor|p<i>|n<j>}" and "k<idx>.{anchor|p<i>|n<j>}".
  std::map<std::string, DenseArray> gradients;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["l_cls"] = l_cls;
    j["l_ce"] = l_ce;
    j["l_dice"] = l_dice;
    j["l_emb"] = l_emb;
    j["l_f"] = l_f;
    j["l_i"] = l_i;
    j["l_frame"] = l_frame;
    j["total"] = total;
    return j;
  }
};

// L_frame = lambda_cls*L_cls + lambda_ce*L_ce + lambda_dice*L_dice
// L       = L_frame + lambda_emb*L_emb + lambda_f*L_f + lambda_i*L_i
inline LossReport total_loss(const LossTerms& terms, const LossWeights& w,
                             double emb_term = 0.0) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v))
      throw NumericError(std::string("total_loss: non-finite term ") + name);
  };
  check(terms.cls, "L_cls");
  check(terms.ce, "L_ce");
  check(terms.dice, "L_dice");
  check(terms.f, "L_f");
  check(terms.i, "L_i");
  check(emb_term, "L_emb");

  LossReport r;
  r.l_cls = terms.cls;
  r.l_ce = terms.ce;
  r.l_dice = terms.dice;
  r.l_emb = emb_term;
  r.l_f = terms.f;
  r.l_i = terms.i;
  r.l_frame = w.lambda_cls * r.l_cls + w.lambda_ce * r.l_ce +
              w.lambda_dice * r.l_dice;
  r.total = r.l_frame + w.lambda_emb * r.l_emb + w.lambda_f * r.l_f +
            w.lambda_i * r.l_i;
  return r;
}

// Full AGCL evaluation: contrastive losses from the given sets, segmentation
// terms passed through, gradients scaled into total-loss space.
inline LossReport build_report(const std::vector<FrameContrastSet>& frame_sets,
                               const std::vector<InstanceContrastSet>& inst_sets,
                               double l_cls, double l_ce, double l_dice,
                               const LossWeights& w, double emb_term = 0.0) {
  const FrameLevelResult fr = frame_level_loss(frame_sets, w.tau);
  const InstanceLevelResult ir = instance_contrastive_loss(inst_sets, w.tau);

  LossTerms terms;
  terms.cls = l_cls;
  terms.ce = l_ce;
  terms.dice = l_dice;
  terms.f = fr.loss;
  terms.i = ir.loss;
  LossReport report = total_loss(terms, w, emb_term);

  auto store = [&report](const std::string& key, const DenseArray& g,
                         double lambda) {
    DenseArray scaled = g;
    for (double& v : scaled.data) v *= lambda;
    report.gradients[key] = std::move(scaled);
  };
  for (std::size_t f = 0; f < fr.grads.size(); ++f) {
    const std::string base = "f" + std::to_string(f);
    store(base + ".anchor", fr.grads[f].anchor, w.lambda_f);
    for (std::size_t i = 0; i < fr.grads[f].positives.size(); ++i)
      store(base + ".p" + std::to_string(i), fr.grads[f].positives[i],
            w.lambda_f);
    for (std::size_t j = 0; j < fr.grads[f].negatives.size(); ++j)
      store(base + ".n" + std::to_string(j), fr.grads[f].negatives[j],
            w.lambda_f);
  }
  for (std::size_t k = 0; k < ir.grads.size(); ++k) {
    const std::string base = "k" + std::to_string(k);
    store(base + ".anchor", ir.grads[k].anchor, w.lambda_i);
    for (std::size_t i = 0; i < ir.grads[k].positives.size(); ++i)
      store(base + ".p" + std::to_string(i), ir.grads[k].positives[i],
            w.lambda_i);
    for (std::size_t j = 0; j < ir.grads[k].negatives.size(); ++j)
      store(base + ".n" + std::to_string(j), ir.grads[k].negatives[j],
            w.lambda_i);
  }
  return report;
}

}  // namespace seavis::agcl
