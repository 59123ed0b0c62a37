#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "seavis/synth.hpp"
#include "seavis/tracker.hpp"

using namespace seavis;
using namespace seavis::track;

namespace {

Detection make_det(std::vector<double> emb, double score, int cls,
                   std::size_t frame) {
  Detection d;
  const std::size_t n = emb.size();
  d.embedding = DenseArray({n}, std::move(emb));
  d.score = score;
  d.class_id = cls;
  d.frame = frame;
  return d;
}

MemoryBank bank_with_prototype(std::vector<double> emb) {
  MemoryBank bank;
  Tracklet t;
  t.id = bank.next_id++;
  const std::size_t n = emb.size();
  t.ma_embedding = l2_normalize(DenseArray({n}, std::move(emb)));
  t.last_seen = 0;
  bank.tracklets.push_back(std::move(t));
  bank.frame_cursor = 0;
  return bank;
}

}  // namespace

TEST_CASE("empty bank leaves all detections unmatched") {
  MemoryBank bank;
  const std::vector<Detection> dets = {make_det({1, 0}, 0.9, 0, 0),
                                       make_det({0, 1}, 0.9, 1, 0)};
  const Assignment a = match_detections(bank, dets, TrackerConfig{});
  REQUIRE(!a[0].has_value());
  REQUIRE(!a[1].has_value());
}

TEST_CASE("identical embedding matches its prototype") {
  MemoryBank bank = bank_with_prototype({1, 0});
  const std::vector<Detection> dets = {make_det({2, 0}, 0.9, 0, 1)};
  TrackerConfig cfg;
  cfg.match_threshold = 0.5;
  const Assignment a = match_detections(bank, dets, cfg);
  REQUIRE(a[0].has_value());
  REQUIRE(*a[0] == 0);
}

TEST_CASE("greedy matching prefers the higher similarity") {
  MemoryBank bank = bank_with_prototype({1, 0});
  const double s9 = std::sqrt(1.0 - 0.81), s8 = std::sqrt(1.0 - 0.64);
  const std::vector<Detection> dets = {make_det({0.8, s8}, 0.9, 0, 1),
                                       make_det({0.9, s9}, 0.9, 0, 1)};
  TrackerConfig cfg;
  cfg.match_threshold = 0.5;
  const Assignment a = match_detections(bank, dets, cfg);
  REQUIRE(!a[0].has_value());  // cosine 0.8 loses to 0.9
  REQUIRE(a[1].has_value());
}

TEST_CASE("below-threshold pairs stay unmatched") {
  MemoryBank bank = bank_with_prototype({1, 0});
  const std::vector<Detection> dets = {make_det({0, 1}, 0.9, 0, 1)};
  TrackerConfig cfg;
  cfg.match_threshold = 0.5;
  const Assignment a = match_detections(bank, dets, cfg);
  REQUIRE(!a[0].has_value());
}

TEST_CASE("momentum update hand case") {
  // beta=0.75, ma=[1,0], det=[0,1]: blend [0.75, 0.25] then renormalize.
  MemoryBank bank = bank_with_prototype({1, 0});
  TrackerConfig cfg;
  cfg.momentum = 0.75;
  const std::vector<Detection> dets = {make_det({0, 1}, 0.9, 0, 1)};
  Assignment a(1);
  a[0] = 0;
  update_bank(bank, a, dets, cfg, std::nullopt, 1);
  const DenseArray& ma = bank.tracklets[0].ma_embedding;
  REQUIRE(ma[0] == Catch::Approx(0.9486832980505138).margin(1e-12));
  REQUIRE(ma[1] == Catch::Approx(0.31622776601683794).margin(1e-12));
}

TEST_CASE("unmatched detection above the score gate opens a tracklet") {
  MemoryBank bank;
  TrackerConfig cfg;
  cfg.new_tracklet_score = 0.6;
  const std::vector<Detection> dets = {make_det({1, 0}, 0.9, 3, 0)};
  const FrameOutput out =
      update_bank(bank, Assignment(1), dets, cfg, std::nullopt, 0);
  REQUIRE(bank.tracklets.size() == 1);
  REQUIRE(bank.tracklets[0].id == 0);
  REQUIRE(bank.next_id == 1);
  REQUIRE(out.instances.size() == 1);
  REQUIRE(out.instances[0].id == 0);
}

TEST_CASE("low-score unmatched detection is suppressed") {
  MemoryBank bank;
  TrackerConfig cfg;
  cfg.new_tracklet_score = 0.6;
  const std::vector<Detection> dets = {make_det({1, 0}, 0.2, 3, 0)};
  const FrameOutput out =
      update_bank(bank, Assignment(1), dets, cfg, std::nullopt, 0);
  REQUIRE(bank.tracklets.empty());
  REQUIRE(out.instances.empty());
  REQUIRE(bank.frame_cursor == 0);
}

TEST_CASE("audio gate vetoes detections pointing away from the anchor") {
  TrackerConfig cfg;
  cfg.new_tracklet_score = 0.6;
  cfg.audio_gate = 0.5;
  const DenseArray anchor = DenseArray::vector({1, 0});

  MemoryBank bank;
  const std::vector<Detection> away = {make_det({-1, 0}, 0.9, 0, 0)};
  update_bank(bank, Assignment(1), away, cfg, anchor, 0);
  REQUIRE(bank.tracklets.empty());

  MemoryBank bank2;
  const std::vector<Detection> toward = {make_det({1, 0.1}, 0.9, 0, 0)};
  update_bank(bank2, Assignment(1), toward, cfg, anchor, 0);
  REQUIRE(bank2.tracklets.size() == 1);
}

TEST_CASE("process_frame enforces frame ordering") {
  MemoryBank bank;
  StreamFrame f0;
  f0.frame = 0;
  f0.detections.push_back(make_det({1, 0}, 0.9, 0, 0));
  process_frame(bank, f0, TrackerConfig{});
  REQUIRE_THROWS_AS(process_frame(bank, f0, TrackerConfig{}), OrderingError);

  StreamFrame f2;
  f2.frame = 2;
  process_frame(bank, f2, TrackerConfig{});  // gaps are fine
  StreamFrame f1;
  f1.frame = 1;
  REQUIRE_THROWS_AS(process_frame(bank, f1, TrackerConfig{}), OrderingError);
}

TEST_CASE("replaying a stream gives bit-identical outputs") {
  synth::ScenarioConfig cfg;
  cfg.num_instances = 2;
  cfg.num_frames = 6;
  cfg.embed_dim = 8;
  cfg.sounding_schedule = {{{0, 6}}, {{0, 6}}};
  cfg.appearance_noise = 0.05;
  cfg.seed = 71;
  const synth::Stream stream = synth::generate(cfg);

  auto run = [&stream]() {
    MemoryBank bank;
    std::ostringstream ss;
    std::vector<FrameOutput> outs;
    for (const auto& frame : stream.frames)
      outs.push_back(process_frame(bank, frame, TrackerConfig{}));
    write_frame_outputs_jsonl(outs, ss);
    return ss.str();
  };
  REQUIRE(run() == run());
}

TEST_CASE("clean two-instance stream keeps stable ids") {
  synth::ScenarioConfig cfg;
  cfg.num_instances = 2;
  cfg.num_frames = 8;
  cfg.embed_dim = 16;
  cfg.sounding_schedule = {{{0, 8}}, {{0, 8}}};
  cfg.appearance_noise = 0.01;
  cfg.seed = 13;
  const synth::Stream stream = synth::generate(cfg);

  MemoryBank bank;
  std::map<int, std::set<std::uint64_t>> ids_per_gt;
  for (const auto& frame : stream.frames) {
    const FrameOutput out = process_frame(bank, frame, TrackerConfig{});
    for (const auto& inst : out.instances)
      ids_per_gt[frame.detections[inst.det_index].gt_id].insert(inst.id);
  }
  REQUIRE(ids_per_gt.size() == 2);
  for (const auto& [gt, ids] : ids_per_gt) REQUIRE(ids.size() == 1);
}

TEST_CASE("silent flip suppresses the instance without a new id") {
  // Instance 0 goes silent from frame 3; the offset pushes its embedding out
  // of the sounding cluster so it fails the match, and the silent-state
  // score fails the new-tracklet gate.
  synth::ScenarioConfig cfg;
  cfg.num_instances = 2;
  cfg.num_frames = 6;
  cfg.embed_dim = 8;
  cfg.sounding_schedule = {{{0, 3}}, {{0, 6}}};
  cfg.state_offset = DenseArray({8});
  cfg.state_offset.data[0] = 1.2;
  cfg.seed = 29;
  const synth::Stream stream = synth::generate(cfg);

  TrackerConfig tcfg;
  tcfg.match_threshold = 0.5;
  tcfg.new_tracklet_score = 0.85;  // sounding 0.9 passes, silent 0.8 fails

  MemoryBank bank;
  std::set<std::uint64_t> ids;
  for (const auto& frame : stream.frames) {
    const FrameOutput out = process_frame(bank, frame, tcfg);
    for (const auto& inst : out.instances) {
      ids.insert(inst.id);
      if (frame.frame >= 3)
        REQUIRE(frame.detections[inst.det_index].gt_id == 1);
    }
  }
  REQUIRE(ids.size() == 2);  // no third identity ever appears
  REQUIRE(bank.next_id == 2);
}

TEST_CASE("prototypes stay unit norm and ids never repeat") {
  synth::ScenarioConfig cfg;
  cfg.num_instances = 3;
  cfg.num_frames = 10;
  cfg.embed_dim = 8;
  cfg.sounding_schedule = {{{0, 10}}, {{0, 5}}, {{2, 9}}};
  cfg.appearance_noise = 0.2;
  cfg.state_offset = DenseArray({8});
  cfg.state_offset.data[1] = 0.5;
  cfg.seed = 3;
  const synth::Stream stream = synth::generate(cfg);

  TrackerConfig tcfg;
  tcfg.match_threshold = 0.3;
  MemoryBank bank;
  std::vector<std::uint64_t> first_seen;
  for (const auto& frame : stream.frames) {
    const FrameOutput out = process_frame(bank, frame, tcfg);
    for (const auto& trk : bank.tracklets)
      REQUIRE(std::fabs(l2_norm(trk.ma_embedding) - 1.0) < 1e-9);
    for (const auto& inst : out.instances)
      if (std::find(first_seen.begin(), first_seen.end(), inst.id) ==
          first_seen.end())
        first_seen.push_back(inst.id);
  }
  for (std::size_t i = 1; i < first_seen.size(); ++i)
    REQUIRE(first_seen[i] > first_seen[i - 1]);
}

TEST_CASE("stale tracklets leave matching but remain for finalization") {
  TrackerConfig cfg;
  cfg.max_inactive_frames = 2;
  MemoryBank bank;

  StreamFrame f0;
  f0.frame = 0;
  f0.detections.push_back(make_det({1, 0}, 0.9, 0, 0));
  process_frame(bank, f0, cfg);
  REQUIRE(bank.tracklets[0].active);

  for (std::size_t t = 1; t <= 4; ++t) {
    StreamFrame empty;
    empty.frame = t;
    process_frame(bank, empty, cfg);
  }
  REQUIRE(!bank.tracklets[0].active);

  // a matching detection now opens a fresh id instead
  StreamFrame f5;
  f5.frame = 5;
  f5.detections.push_back(make_det({1, 0}, 0.9, 0, 5));
  const FrameOutput out = process_frame(bank, f5, cfg);
  REQUIRE(out.instances[0].id == 1);

  const VideoResult video = finalize(bank);
  REQUIRE(video.tracklets.size() == 2);  // the stale one is still reported
}

TEST_CASE("bi-softmax similarity matches the obvious pairing") {
  MemoryBank bank;
  Tracklet a, b;
  a.id = bank.next_id++;
  a.ma_embedding = l2_normalize(DenseArray::vector({1, 0}));
  b.id = bank.next_id++;
  b.ma_embedding = l2_normalize(DenseArray::vector({0, 1}));
  bank.tracklets.push_back(a);
  bank.tracklets.push_back(b);
  bank.frame_cursor = 0;

  TrackerConfig cfg;
  cfg.similarity = Similarity::kBiSoftmax;
  cfg.match_threshold = 0.5;
  const std::vector<Detection> dets = {make_det({0, 1}, 0.9, 0, 1),
                                       make_det({1, 0}, 0.9, 0, 1)};
  const Assignment assignment = match_detections(bank, dets, cfg);
  REQUIRE(assignment[0].has_value());
  REQUIRE(*assignment[0] == 1);
  REQUIRE(assignment[1].has_value());
  REQUIRE(*assignment[1] == 0);
}

TEST_CASE("finalize integrates classes and frame tables") {
  REQUIRE(finalize(MemoryBank{}).tracklets.empty());

  MemoryBank bank;
  Tracklet t;
  t.id = 0;
  t.ma_embedding = l2_normalize(DenseArray::vector({1, 0}));
  // class 0 scored 0.6 twice, class 1 scored 0.9 once: means 0.4 vs 0.3
  t.history.push_back({0, DenseArray::vector({1, 0}), 0.6, 0, std::nullopt});
  t.history.push_back({1, DenseArray::vector({1, 0}), 0.6, 0, std::nullopt});
  t.history.push_back({2, DenseArray::vector({1, 0}), 0.9, 1, std::nullopt});
  t.last_seen = 2;
  bank.tracklets.push_back(t);
  bank.next_id = 1;
  bank.frame_cursor = 2;

  const VideoResult video = finalize(bank);
  REQUIRE(video.tracklets.size() == 1);
  REQUIRE(video.tracklets[0].class_id == 0);
  REQUIRE(video.tracklets[0].observations == 3);
  REQUIRE(video.frames.size() == 3);
  REQUIRE(video.frames[1].items[0].id == 0);
}

TEST_CASE("frame outputs serialize with stable keys") {
  std::vector<FrameOutput> outs(1);
  outs[0].frame = 0;
  outs[0].instances.push_back({7, 0.5, 2, std::nullopt, 0});
  std::ostringstream ss;
  write_frame_outputs_jsonl(outs, ss);
  REQUIRE(ss.str() ==
          "{\"frame\":0,\"instances\":[{\"id\":7,\"class\":2,\"score\":0.5}]}\n");
}
