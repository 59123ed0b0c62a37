#pragma once

// Desk-scale evaluation. fsla_simplified is a declared simplification of the
// benchmark FSLA: a frame is correct iff the predicted set matches the
// ground-truth sounding set one-to-one (mask IoU when both sides carry
// masks, ground-truth provenance otherwise). It is never a substitute for
// the official benchmark metric.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seavis/errors.hpp"
#include "seavis/numkernel.hpp"

namespace seavis::metrics {

struct PredEntry {
  std::uint64_t pred_id = 0;
  int class_id = 0;
  std::optional<DenseArray> mask;
  std::optional<int> gt_hint;  // provenance link used when masks are absent
};

struct GtEntry {
  int gt_id = 0;
  int class_id = 0;
  bool sounding = false;
  std::optional<DenseArray> mask;
};

struct EvalPair {
  std::vector<std::vector<PredEntry>> predictions;   // per frame
  std::vector<std::vector<GtEntry>> ground_truth;    // per frame
};

// |a & b| / |a | b|; two empty masks count as identical.
inline double mask_iou(const DenseArray& a, const DenseArray& b) {
  if (!a.same_shape(b)) throw DimensionError("mask_iou: shape mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool av = a.data[i] != 0.0;
    const bool bv = b.data[i] != 0.0;
    inter += av && bv;
    uni += av || bv;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace detail {

// Greedy pred -> gt matching within one frame. With masks on both sides the
// pairing maximizes IoU above the threshold; otherwise provenance ids pair
// entries exactly. Returns per-pred gt indices.
inline std::vector<std::optional<std::size_t>> match_frame(
    const std::vector<PredEntry>& preds, const std::vector<GtEntry>& gts,
    double iou_threshold) {
  std::vector<std::optional<std::size_t>> matched(preds.size());
  std::vector<bool> gt_used(gts.size(), false);

  struct Cand {
    double iou;
    std::size_t pred, gt;
  };
  std::vector<Cand> cands;
  for (std::size_t p = 0; p < preds.size(); ++p) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (preds[p].mask.has_value() && gts[g].mask.has_value()) {
        const double iou = mask_iou(*preds[p].mask, *gts[g].mask);
        if (iou >= iou_threshold) cands.push_back({iou, p, g});
      } else if (preds[p].gt_hint.has_value() &&
                 *preds[p].gt_hint == gts[g].gt_id) {
        cands.push_back({1.0, p, g});
      }
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.gt < b.gt;
  });
  for (const auto& c : cands) {
    if (matched[c.pred].has_value() || gt_used[c.gt]) continue;
    matched[c.pred] = c.gt;
    gt_used[c.gt] = true;
  }
  return matched;
}

}  // namespace detail

struct FslaScores {
  double fsla = 0.0;
  double fsla_n = 0.0;  // frames with no sound source
  double fsla_s = 0.0;  // single source
  double fsla_m = 0.0;  // multiple simultaneous sources
  std::size_t frames = 0, frames_n = 0, frames_s = 0, frames_m = 0;
};

inline FslaScores fsla_simplified(const EvalPair& pair,
                                  double matching_threshold = 0.5) {
  if (pair.predictions.size() != pair.ground_truth.size())
    throw DimensionError("fsla_simplified: frame count mismatch");

  FslaScores s;
  s.frames = pair.predictions.size();
  std::size_t ok = 0, ok_n = 0, ok_s = 0, ok_m = 0;
  for (std::size_t t = 0; t < s.frames; ++t) {
    const auto& preds = pair.predictions[t];
    std::vector<GtEntry> sounding;
    for (const auto& g : pair.ground_truth[t])
      if (g.sounding) sounding.push_back(g);

    const auto matched = detail::match_frame(preds, sounding,
                                             matching_threshold);
    std::size_t hits = 0;
    bool clean = true;
    for (const auto& m : matched) {
      if (m.has_value())
        ++hits;
      else
        clean = false;  // an extra prediction not in the sounding set
    }
    const bool correct = clean && hits == sounding.size();

    if (sounding.empty()) {
      ++s.frames_n;
      ok_n += correct;
    } else if (sounding.size() == 1) {
      ++s.frames_s;
      ok_s += correct;
    } else {
      ++s.frames_m;
      ok_m += correct;
    }
    ok += correct;
  }
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  s.fsla = ratio(ok, s.frames);
  s.fsla_n = ratio(ok_n, s.frames_n);
  s.fsla_s = ratio(ok_s, s.frames_s);
  s.fsla_m = ratio(ok_m, s.frames_m);
  return s;
}

// For each ground-truth track, count frames where the matched prediction id
// differs from the previously matched one (unmatched frames are skipped).
inline std::size_t idsw(const EvalPair& pair, double matching_threshold = 0.5) {
  if (pair.predictions.size() != pair.ground_truth.size())
    throw DimensionError("idsw: frame count mismatch");

  std::map<int, std::uint64_t> last_pred;  // gt_id -> last matched pred id
  std::size_t switches = 0;
  for (std::size_t t = 0; t < pair.predictions.size(); ++t) {
    const auto& preds = pair.predictions[t];
    const auto& gts = pair.ground_truth[t];
    const auto matched = detail::match_frame(preds, gts, matching_threshold);
    for (std::size_t p = 0; p < preds.size(); ++p) {
      if (!matched[p].has_value()) continue;
      const int gt_id = gts[*matched[p]].gt_id;
      auto it = last_pred.find(gt_id);
      if (it != last_pred.end() && it->second != preds[p].pred_id) ++switches;
      last_pred[gt_id] = preds[p].pred_id;
    }
  }
  return switches;
}

struct Report {
  FslaScores fsla;
  std::size_t idsw = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["fsla"] = fsla.fsla;
    j["fsla_n"] = fsla.fsla_n;
    j["fsla_s"] = fsla.fsla_s;
    j["fsla_m"] = fsla.fsla_m;
    j["frames"] = fsla.frames;
    j["frames_n"] = fsla.frames_n;
    j["frames_s"] = fsla.frames_s;
    j["frames_m"] = fsla.frames_m;
    j["idsw"] = idsw;
    return j;
  }

  std::string to_csv() const {
    const nlohmann::ordered_json j = to_json();
    std::string out = "metric,value\n";
    for (const auto& [key, value] : j.items())
      out += key + "," + value.dump() + "\n";
    return out;
  }
};

inline Report evaluate(const EvalPair& pair, double matching_threshold = 0.5) {
  Report r;
  r.fsla = fsla_simplified(pair, matching_threshold);
  r.idsw = idsw(pair, matching_threshold);
  return r;
}

}  // namespace seavis::metrics
