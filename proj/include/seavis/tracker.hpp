#pragma once

// Online instance association: an external memory bank of tracklets with
// momentum-averaged prototype embeddings. Detections match greedily against
// the prototypes; unmatched detections either open a new tracklet (valid
// sounding objects) or are suppressed as background (silent instances).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seavis/errors.hpp"
#include "seavis/numkernel.hpp"
#include "seavis/stream.hpp"

namespace seavis::track {

enum class Similarity { kCosine, kBiSoftmax };

struct TrackerConfig {
  double match_threshold = 0.5;      // theta_m
  double new_tracklet_score = 0.6;   // theta_new
  std::optional<double> audio_gate;  // theta_s; disabled when absent
  double momentum = 0.75;            // beta in [0, 1)
  std::size_t max_inactive_frames = 10;
  Similarity similarity = Similarity::kCosine;
};

struct Tracklet {
  struct Observation {
    std::size_t frame = 0;
    DenseArray embedding;
    double score = 0.0;
    int class_id = 0;
    std::optional<DenseArray> mask;
  };

  std::uint64_t id = 0;
  DenseArray ma_embedding;  // unit norm
  std::vector<Observation> history;  // frames strictly increasing
  std::size_t last_seen = 0;
  bool active = true;
};

struct MemoryBank {
  std::vector<Tracklet> tracklets;
  std::uint64_t next_id = 0;
  std::optional<std::size_t> frame_cursor;  // last processed frame
};

// det index -> tracklet id (or none)
using Assignment = std::vector<std::optional<std::uint64_t>>;

struct FrameOutput {
  struct Instance {
    std::uint64_t id = 0;
    double score = 0.0;
    int class_id = 0;
    std::optional<DenseArray> mask;
    std::size_t det_index = 0;  // provenance for metrics; not serialized
  };
  std::size_t frame = 0;
  std::vector<Instance> instances;
};

namespace detail {

inline void check_frame_order(const MemoryBank& bank, std::size_t frame) {
  if (bank.frame_cursor.has_value() && frame <= *bank.frame_cursor)
    throw OrderingError("tracker: frame " + std::to_string(frame) +
                        " not after cursor " +
                        std::to_string(*bank.frame_cursor));
}

inline double cosine_unit(const DenseArray& unit_a, const DenseArray& unit_b) {
  return dot(unit_a, unit_b);
}

}  // namespace detail

// Greedy one-to-one matching by descending similarity between normalized
// detection embeddings and the MA prototypes of active tracklets. Pairs
// below the match threshold stay unmatched; ties break toward the lower
// tracklet id, then the lower detection index.
inline Assignment match_detections(const MemoryBank& bank,
                                   const std::vector<Detection>& dets,
                                   const TrackerConfig& cfg) {
  Assignment assignment(dets.size());
  if (dets.empty()) return assignment;
  detail::check_frame_order(bank, dets.front().frame);
  for (const auto& det : dets)
    if (det.frame != dets.front().frame)
      throw OrderingError("match_detections: detections span multiple frames");

  std::vector<std::size_t> active;
  for (std::size_t m = 0; m < bank.tracklets.size(); ++m)
    if (bank.tracklets[m].active) active.push_back(m);
  if (active.empty()) return assignment;

  std::vector<DenseArray> det_unit;
  det_unit.reserve(dets.size());
  for (const auto& det : dets) det_unit.push_back(l2_normalize(det.embedding));

  // Raw cosine to each active prototype.
  DenseArray sim({dets.size(), active.size()});
  for (std::size_t i = 0; i < dets.size(); ++i)
    for (std::size_t j = 0; j < active.size(); ++j)
      sim(i, j) = detail::cosine_unit(det_unit[i],
                                      bank.tracklets[active[j]].ma_embedding);

  if (cfg.similarity == Similarity::kBiSoftmax) {
    // Mean of detection-wise and tracklet-wise softmax of the cosine matrix.
    DenseArray e({dets.size(), active.size()});
    for (std::size_t i = 0; i < e.size(); ++i)
      e.data[i] = std::exp(sim.data[i]);
    std::vector<double> row_sum(dets.size(), 0.0), col_sum(active.size(), 0.0);
    for (std::size_t i = 0; i < dets.size(); ++i)
      for (std::size_t j = 0; j < active.size(); ++j) {
        row_sum[i] += e(i, j);
        col_sum[j] += e(i, j);
      }
    for (std::size_t i = 0; i < dets.size(); ++i)
      for (std::size_t j = 0; j < active.size(); ++j)
        sim(i, j) = 0.5 * (e(i, j) / row_sum[i] + e(i, j) / col_sum[j]);
  }

  struct Candidate {
    double sim;
    std::uint64_t tracklet_id;
    std::size_t det_index;
    std::size_t bank_index;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < dets.size(); ++i)
    for (std::size_t j = 0; j < active.size(); ++j)
      if (sim(i, j) >= cfg.match_threshold)
        candidates.push_back(
            {sim(i, j), bank.tracklets[active[j]].id, i, active[j]});
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.sim != b.sim) return a.sim > b.sim;
              if (a.tracklet_id != b.tracklet_id)
                return a.tracklet_id < b.tracklet_id;
              return a.det_index < b.det_index;
            });

  std::vector<bool> det_used(dets.size(), false);
  std::vector<bool> trk_used(bank.tracklets.size(), false);
  for (const auto& c : candidates) {
    if (det_used[c.det_index] || trk_used[c.bank_index]) continue;
    det_used[c.det_index] = true;
    trk_used[c.bank_index] = true;
    assignment[c.det_index] = c.tracklet_id;
  }
  return assignment;
}

// Apply one frame's assignment. Matched tracklets take a momentum step on
// their prototype; unmatched detections open a new tracklet only when the
// score gate (and the audio gate, when configured with an anchor) passes,
// otherwise they are suppressed with no output and no bank growth.
inline FrameOutput update_bank(MemoryBank& bank, const Assignment& assignment,
                               const std::vector<Detection>& dets,
                               const TrackerConfig& cfg,
                               const std::optional<DenseArray>& audio_anchor,
                               std::size_t frame) {
  if (assignment.size() != dets.size())
    throw DimensionError("update_bank: assignment/detection size mismatch");
  detail::check_frame_order(bank, frame);

  FrameOutput out;
  out.frame = frame;

  std::optional<DenseArray> anchor_unit;
  if (cfg.audio_gate.has_value() && audio_anchor.has_value())
    anchor_unit = l2_normalize(*audio_anchor);

  for (std::size_t i = 0; i < dets.size(); ++i) {
    const Detection& det = dets[i];
    const DenseArray det_unit = l2_normalize(det.embedding);

    if (assignment[i].has_value()) {
      auto it = std::find_if(bank.tracklets.begin(), bank.tracklets.end(),
                             [&](const Tracklet& t) {
                               return t.id == *assignment[i];
                             });
      if (it == bank.tracklets.end())
        throw OrderingError("update_bank: assignment names unknown tracklet");
      Tracklet& trk = *it;
      DenseArray blended = trk.ma_embedding;
      for (std::size_t c = 0; c < blended.size(); ++c)
        blended.data[c] = cfg.momentum * blended.data[c] +
                          (1.0 - cfg.momentum) * det_unit.data[c];
      trk.ma_embedding = l2_normalize(blended);
      trk.history.push_back({frame, det.embedding, det.score, det.class_id,
                             det.mask});
      trk.last_seen = frame;
      out.instances.push_back({trk.id, det.score, det.class_id, det.mask, i});
      continue;
    }

    // New-tracklet gate: score threshold plus optional audio-anchor check.
    bool valid = det.score >= cfg.new_tracklet_score;
    if (valid && anchor_unit.has_value())
      valid = detail::cosine_unit(det_unit, *anchor_unit) >= *cfg.audio_gate;
    if (!valid) continue;  // suppressed as background

    Tracklet trk;
    trk.id = bank.next_id++;
    trk.ma_embedding = det_unit;
    trk.history.push_back({frame, det.embedding, det.score, det.class_id,
                           det.mask});
    trk.last_seen = frame;
    trk.active = true;
    out.instances.push_back({trk.id, det.score, det.class_id, det.mask, i});
    bank.tracklets.push_back(std::move(trk));
  }

  for (Tracklet& trk : bank.tracklets)
    if (trk.active && frame - trk.last_seen > cfg.max_inactive_frames)
      trk.active = false;

  bank.frame_cursor = frame;
  return out;
}

// match + update for one stream frame. The frame's audio feature serves as
// the audio-gate anchor when that gate is configured.
inline FrameOutput process_frame(MemoryBank& bank, const StreamFrame& frame,
                                 const TrackerConfig& cfg) {
  detail::check_frame_order(bank, frame.frame);
  const Assignment assignment = match_detections(bank, frame.detections, cfg);
  std::optional<DenseArray> anchor;
  if (frame.audio_feature.size() > 0) anchor = frame.audio_feature;
  return update_bank(bank, assignment, frame.detections, cfg, anchor,
                     frame.frame);
}

struct VideoResult {
  struct TrackSummary {
    std::uint64_t id = 0;
    int class_id = 0;  // argmax of mean per-class score over the history
    std::size_t observations = 0;
    std::size_t first_frame = 0;
    std::size_t last_frame = 0;
  };
  struct FrameEntry {
    std::size_t frame = 0;
    struct Item {
      std::uint64_t id = 0;
      double score = 0.0;
      std::optional<DenseArray> mask;
    };
    std::vector<Item> items;
  };
  std::vector<TrackSummary> tracklets;  // ordered by id
  std::vector<FrameEntry> frames;       // ordered by frame, items by id
};

// Video-level integration: each tracklet's class is the argmax of its mean
// class score over the whole history (ties to the lower class id).
inline VideoResult finalize(const MemoryBank& bank) {
  VideoResult result;
  std::vector<const Tracklet*> ordered;
  for (const auto& trk : bank.tracklets) ordered.push_back(&trk);
  std::sort(ordered.begin(), ordered.end(),
            [](const Tracklet* a, const Tracklet* b) { return a->id < b->id; });

  std::map<std::size_t, VideoResult::FrameEntry> by_frame;
  for (const Tracklet* trk : ordered) {
    if (trk->history.empty()) continue;
    std::map<int, double> score_sum;
    for (const auto& obs : trk->history) score_sum[obs.class_id] += obs.score;
    int best_class = score_sum.begin()->first;
    double best_mean = -1.0;
    const double inv = 1.0 / static_cast<double>(trk->history.size());
    for (const auto& [cls, sum] : score_sum) {
      const double mean = sum * inv;
      if (mean > best_mean) {
        best_mean = mean;
        best_class = cls;
      }
    }
    result.tracklets.push_back({trk->id, best_class, trk->history.size(),
                                trk->history.front().frame,
                                trk->history.back().frame});
    for (const auto& obs : trk->history) {
      auto& entry = by_frame[obs.frame];
      entry.frame = obs.frame;
      entry.items.push_back({trk->id, obs.score, obs.mask});
    }
  }
  for (auto& [frame, entry] : by_frame) {
    std::sort(entry.items.begin(), entry.items.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    result.frames.push_back(std::move(entry));
  }
  return result;
}

// --- JSON-lines serialization ---------------------------------------------

namespace detail {

inline nlohmann::ordered_json mask_to_json(const DenseArray& mask) {
  nlohmann::ordered_json j;
  j["shape"] = mask.shape;
  j["data"] = mask.data;
  return j;
}

}  // namespace detail

// One line per frame: {"frame": t, "instances": [{"id", "class", "score"
// (, "mask")}...]}
inline void write_frame_outputs_jsonl(const std::vector<FrameOutput>& outputs,
                                      std::ostream& os) {
  for (const auto& fo : outputs) {
    nlohmann::ordered_json j;
    j["frame"] = fo.frame;
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto& inst : fo.instances) {
      nlohmann::ordered_json e;
      e["id"] = inst.id;
      e["class"] = inst.class_id;
      e["score"] = inst.score;
      if (inst.mask.has_value()) e["mask"] = detail::mask_to_json(*inst.mask);
      list.push_back(std::move(e));
    }
    j["instances"] = std::move(list);
    os << j.dump() << '\n';
  }
}

// Line 1 summarizes tracklets; each following line is one frame's ID table.
inline void write_video_result_jsonl(const VideoResult& result,
                                     std::ostream& os) {
  nlohmann::ordered_json header;
  nlohmann::ordered_json trks = nlohmann::ordered_json::array();
  for (const auto& t : result.tracklets) {
    nlohmann::ordered_json e;
    e["id"] = t.id;
    e["class"] = t.class_id;
    e["observations"] = t.observations;
    e["first_frame"] = t.first_frame;
    e["last_frame"] = t.last_frame;
    trks.push_back(std::move(e));
  }
  header["tracklets"] = std::move(trks);
  os << header.dump() << '\n';
  for (const auto& fe : result.frames) {
    nlohmann::ordered_json j;
    j["frame"] = fe.frame;
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto& item : fe.items) {
      nlohmann::ordered_json e;
      e["id"] = item.id;
      e["score"] = item.score;
      if (item.mask.has_value()) e["mask"] = detail::mask_to_json(*item.mask);
      list.push_back(std::move(e));
    }
    j["instances"] = std::move(list);
    os << j.dump() << '\n';
  }
}

}  // namespace seavis::track
