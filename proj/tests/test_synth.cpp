#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "seavis/synth.hpp"

using namespace seavis;
using namespace seavis::synth;

namespace {

ScenarioConfig two_instance_config() {
  ScenarioConfig cfg;
  cfg.num_instances = 2;
  cfg.num_frames = 4;
  cfg.embed_dim = 6;
  cfg.sounding_schedule = {{{0, 4}}, {{0, 2}}};
  cfg.appearance_noise = 0.01;
  cfg.state_offset = DenseArray({6}, {0.3, 0, 0, 0, 0, 0});
  cfg.audio_noise = 0.01;
  cfg.seed = 21;
  return cfg;
}

bool streams_equal(const Stream& a, const Stream& b) {
  if (a.frames.size() != b.frames.size()) return false;
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    if (a.frames[t].audio_feature.data != b.frames[t].audio_feature.data)
      return false;
    if (a.frames[t].detections.size() != b.frames[t].detections.size())
      return false;
    for (std::size_t d = 0; d < a.frames[t].detections.size(); ++d) {
      const Detection& x = a.frames[t].detections[d];
      const Detection& y = b.frames[t].detections[d];
      if (x.embedding.data != y.embedding.data || x.score != y.score ||
          x.class_id != y.class_id || x.gt_id != y.gt_id ||
          x.gt_sounding != y.gt_sounding)
        return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  const ScenarioConfig cfg = two_instance_config();
  const Stream a = generate(cfg);
  const Stream b = generate(cfg);
  REQUIRE(streams_equal(a, b));

  ScenarioConfig other = cfg;
  other.seed = 22;
  REQUIRE(!streams_equal(a, generate(other)));
}

TEST_CASE("no instances means empty detections and a silence token") {
  ScenarioConfig cfg;
  cfg.num_instances = 0;
  cfg.num_frames = 3;
  cfg.embed_dim = 4;
  cfg.seed = 5;
  const Stream s = generate(cfg);
  REQUIRE(s.frames.size() == 3);
  for (const auto& frame : s.frames) {
    REQUIRE(frame.detections.empty());
    REQUIRE(std::fabs(l2_norm(frame.audio_feature) - 1.0) < 1e-9);
    REQUIRE(frame.audio_feature.data == s.frames[0].audio_feature.data);
  }
}

TEST_CASE("schedule fidelity") {
  ScenarioConfig cfg;
  cfg.num_instances = 1;
  cfg.num_frames = 3;
  cfg.embed_dim = 4;
  cfg.sounding_schedule = {{{0, 2}}};
  cfg.seed = 9;
  const Stream s = generate(cfg);
  REQUIRE(s.frames[0].detections[0].gt_sounding);
  REQUIRE(s.frames[1].detections[0].gt_sounding);
  REQUIRE(!s.frames[2].detections[0].gt_sounding);
  REQUIRE(s.frames[0].detections[0].score == kSoundingScore);
  REQUIRE(s.frames[2].detections[0].score == kSilentScore);
}

TEST_CASE("state offset separates sounding from silent embeddings") {
  // With zero appearance noise the sounding/silent cosine for one instance
  // strictly decreases as the offset grows.
  double prev = 2.0;
  for (double magnitude : {0.25, 0.5, 1.0, 1.5}) {
    ScenarioConfig cfg;
    cfg.num_instances = 1;
    cfg.num_frames = 2;
    cfg.embed_dim = 8;
    cfg.sounding_schedule = {{{0, 1}}};  // sounds at frame 0, silent at 1
    cfg.state_offset = DenseArray({8});
    cfg.state_offset.data[2] = magnitude;
    cfg.seed = 33;
    const Stream s = generate(cfg);
    const DenseArray& sounding = s.frames[0].detections[0].embedding;
    const DenseArray& silent = s.frames[1].detections[0].embedding;
    const double cosine = dot(sounding, silent);
    REQUIRE(cosine < prev);
    prev = cosine;
  }
}

TEST_CASE("invalid schedule is rejected") {
  ScenarioConfig cfg;
  cfg.num_instances = 1;
  cfg.num_frames = 3;
  cfg.embed_dim = 4;
  cfg.sounding_schedule = {{{0, 5}}};  // end beyond the stream
  REQUIRE_THROWS_AS(generate(cfg), ConfigError);
}

TEST_CASE("stream round trip is exact") {
  const Stream s = generate(two_instance_config());
  std::ostringstream os;
  write_stream(s, os);

  std::istringstream is(os.str());
  const Stream back = read_stream(is);
  REQUIRE(streams_equal(s, back));
  REQUIRE(back.config.num_instances == s.config.num_instances);
  REQUIRE(back.config.seed == s.config.seed);
  REQUIRE(back.config.state_offset.data == s.config.state_offset.data);
}

TEST_CASE("empty stream serializes to a header line only") {
  ScenarioConfig cfg;
  cfg.num_instances = 0;
  cfg.num_frames = 0;
  cfg.embed_dim = 4;
  std::ostringstream os;
  write_stream(generate(cfg), os);
  const std::string text = os.str();
  REQUIRE(std::count(text.begin(), text.end(), '\n') == 1);
  std::istringstream is(text);
  REQUIRE(read_stream(is).frames.empty());
}

TEST_CASE("truncated stream names the failing line") {
  const Stream s = generate(two_instance_config());
  std::ostringstream os;
  write_stream(s, os);
  const std::string text = os.str();

  // keep the config line and two of the four frames
  std::size_t pos = 0;
  for (int cut = 0; cut < 3; ++cut) pos = text.find('\n', pos) + 1;
  std::istringstream is(text.substr(0, pos));
  REQUIRE_THROWS_WITH(read_stream(is),
                      Catch::Matchers::ContainsSubstring("line 4"));
}

TEST_CASE("malformed line names the failing line") {
  std::istringstream is(
      "{\"num_instances\":0,\"num_frames\":1,\"embed_dim\":2}\n"
      "this is not json\n");
  REQUIRE_THROWS_WITH(read_stream(is),
                      Catch::Matchers::ContainsSubstring("line 2"));
}
