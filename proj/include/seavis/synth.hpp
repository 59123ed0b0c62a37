#pragma once

// Seeded synthetic audio-visual streams with ground-truth identities and
// sounding schedules. Every draw comes from one mt19937_64 stream in a fixed
// order (appearances, silence token, then per frame: per-instance noise and,
// on sounding frames, audio noise), so a config reproduces its stream bit
// for bit and golden files stay portable.

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seavis/errors.hpp"
#include "seavis/numkernel.hpp"
#include "seavis/rng.hpp"
#include "seavis/stream.hpp"

namespace seavis::synth {

// Detector confidence emitted with each synthetic detection.
inline constexpr double kSoundingScore = 0.9;
inline constexpr double kSilentScore = 0.8;

struct FrameInterval {
  std::size_t begin = 0;
  std::size_t end = 0;  // half-open [begin, end)
};

struct ScenarioConfig {
  std::size_t num_instances = 0;
  std::size_t num_frames = 0;
  std::size_t embed_dim = 0;
  std::vector<std::vector<FrameInterval>> sounding_schedule;  // per instance
  double appearance_noise = 0.0;  // sigma_a
  DenseArray state_offset;        // (C_e) direction split sounding/silent
  double audio_noise = 0.0;       // sigma_au
  std::uint64_t seed = 0;
};

struct Stream {
  ScenarioConfig config;
  std::vector<StreamFrame> frames;
};

namespace detail {

inline bool sounding_at(const ScenarioConfig& cfg, std::size_t instance,
                        std::size_t frame) {
  if (instance >= cfg.sounding_schedule.size()) return false;
  for (const auto& iv : cfg.sounding_schedule[instance])
    if (frame >= iv.begin && frame < iv.end) return true;
  return false;
}

inline DenseArray gaussian_vector(Rng& rng, std::size_t dim) {
  DenseArray v({dim});
  for (double& x : v.data) x = rng.gaussian();
  return v;
}

}  // namespace detail

inline void validate(const ScenarioConfig& cfg) {
  if (cfg.embed_dim == 0) throw ConfigError("scenario: embed_dim must be >= 1");
  if (cfg.sounding_schedule.size() > cfg.num_instances)
    throw ConfigError("scenario: schedule lists more instances than exist");
  for (const auto& per_instance : cfg.sounding_schedule)
    for (const auto& iv : per_instance)
      if (iv.begin > iv.end || iv.end > cfg.num_frames)
        throw ConfigError("scenario: interval outside [0, num_frames)");
  if (cfg.appearance_noise < 0.0 || cfg.audio_noise < 0.0)
    throw ConfigError("scenario: noise sigmas must be >= 0");
  if (cfg.state_offset.size() != 0 && cfg.state_offset.size() != cfg.embed_dim)
    throw ConfigError("scenario: state_offset dimension mismatch");
}

inline Stream generate(const ScenarioConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const std::size_t dim = cfg.embed_dim;

  // Per-instance unit appearance vectors.
  std::vector<DenseArray> appearance;
  appearance.reserve(cfg.num_instances);
  for (std::size_t k = 0; k < cfg.num_instances; ++k)
    appearance.push_back(l2_normalize(detail::gaussian_vector(rng, dim)));

  // Silence token: unit vector orthogonalized against every appearance.
  DenseArray silence;
  for (int attempt = 0; attempt < 16; ++attempt) {
    DenseArray cand = detail::gaussian_vector(rng, dim);
    for (const auto& u : appearance) {
      const double proj = dot(cand, u);
      for (std::size_t i = 0; i < dim; ++i) cand.data[i] -= proj * u.data[i];
    }
    if (l2_norm(cand) > 1e-9) {
      silence = l2_normalize(cand);
      break;
    }
  }
  if (silence.size() == 0)
    silence = l2_normalize(detail::gaussian_vector(rng, dim));

  const bool has_offset = cfg.state_offset.size() == dim;

  Stream stream;
  stream.config = cfg;
  stream.frames.reserve(cfg.num_frames);
  for (std::size_t t = 0; t < cfg.num_frames; ++t) {
    StreamFrame frame;
    frame.frame = t;

    DenseArray audio_mean({dim});
    std::size_t sounding_count = 0;
    for (std::size_t k = 0; k < cfg.num_instances; ++k) {
      const bool sounding = detail::sounding_at(cfg, k, t);
      const double sign = sounding ? 1.0 : -1.0;
      DenseArray noise = detail::gaussian_vector(rng, dim);

      DenseArray emb = appearance[k];
      for (std::size_t i = 0; i < dim; ++i) {
        if (has_offset) emb.data[i] += sign * cfg.state_offset.data[i];
        emb.data[i] += cfg.appearance_noise * noise.data[i];
      }
      Detection det;
      det.embedding = l2_normalize(emb);
      det.score = sounding ? kSoundingScore : kSilentScore;
      det.class_id = static_cast<int>(k);
      det.frame = t;
      det.gt_id = static_cast<int>(k);
      det.gt_sounding = sounding;
      frame.detections.push_back(std::move(det));

      if (sounding) {
        ++sounding_count;
        for (std::size_t i = 0; i < dim; ++i)
          audio_mean.data[i] += appearance[k].data[i];
      }
    }

    if (sounding_count > 0) {
      const double inv = 1.0 / static_cast<double>(sounding_count);
      DenseArray noise = detail::gaussian_vector(rng, dim);
      for (std::size_t i = 0; i < dim; ++i)
        audio_mean.data[i] =
            audio_mean.data[i] * inv + cfg.audio_noise * noise.data[i];
      frame.audio_feature = l2_normalize(audio_mean);
    } else {
      frame.audio_feature = silence;
    }
    stream.frames.push_back(std::move(frame));
  }
  return stream;
}

// --- JSON-lines serialization ---------------------------------------------
// Line 1 is the scenario config; each following line is one frame:
//   {"frame": t, "audio": [...], "dets": [{"emb": [...], "score": s,
//    "class": c, "gt_id": g, "gt_sounding": b}, ...]}

inline nlohmann::ordered_json config_to_json(const ScenarioConfig& cfg) {
  nlohmann::ordered_json j;
  j["num_instances"] = cfg.num_instances;
  j["num_frames"] = cfg.num_frames;
  j["embed_dim"] = cfg.embed_dim;
  nlohmann::ordered_json sched = nlohmann::ordered_json::array();
  for (const auto& per_instance : cfg.sounding_schedule) {
    nlohmann::ordered_json iv_list = nlohmann::ordered_json::array();
    for (const auto& iv : per_instance)
      iv_list.push_back({iv.begin, iv.end});
    sched.push_back(std::move(iv_list));
  }
  j["sounding_schedule"] = std::move(sched);
  j["appearance_noise"] = cfg.appearance_noise;
  j["state_offset"] = cfg.state_offset.data;
  j["audio_noise"] = cfg.audio_noise;
  j["seed"] = cfg.seed;
  return j;
}

inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  ScenarioConfig cfg;
  cfg.num_instances = j.at("num_instances").get<std::size_t>();
  cfg.num_frames = j.at("num_frames").get<std::size_t>();
  cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
  for (const auto& per_instance : j.value("sounding_schedule",
                                          nlohmann::json::array())) {
    std::vector<FrameInterval> list;
    for (const auto& iv : per_instance)
      list.push_back({iv.at(0).get<std::size_t>(), iv.at(1).get<std::size_t>()});
    cfg.sounding_schedule.push_back(std::move(list));
  }
  cfg.appearance_noise = j.value("appearance_noise", 0.0);
  if (j.contains("state_offset")) {
    std::vector<double> v = j.at("state_offset").get<std::vector<double>>();
    const std::size_t n = v.size();
    cfg.state_offset = DenseArray({n}, std::move(v));
  }
  cfg.audio_noise = j.value("audio_noise", 0.0);
  cfg.seed = j.value("seed", std::uint64_t{0});
  return cfg;
}

inline void write_stream(const Stream& stream, std::ostream& os) {
  os << config_to_json(stream.config).dump() << '\n';
  for (const auto& frame : stream.frames) {
    nlohmann::ordered_json j;
    j["frame"] = frame.frame;
    j["audio"] = frame.audio_feature.data;
    nlohmann::ordered_json dets = nlohmann::ordered_json::array();
    for (const auto& det : frame.detections) {
      nlohmann::ordered_json d;
      d["emb"] = det.embedding.data;
      d["score"] = det.score;
      d["class"] = det.class_id;
      d["gt_id"] = det.gt_id;
      d["gt_sounding"] = det.gt_sounding;
      dets.push_back(std::move(d));
    }
    j["dets"] = std::move(dets);
    os << j.dump() << '\n';
  }
}

inline void write_stream(const Stream& stream, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("write_stream: cannot open " + path);
  write_stream(stream, os);
}

inline Stream read_stream(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;

  auto fail = [&line_no](const std::string& what) -> ParseError {
    return ParseError("stream line " + std::to_string(line_no) + ": " + what);
  };

  ++line_no;
  if (!std::getline(is, line)) throw fail("missing config line");
  Stream stream;
  try {
    stream.config = config_from_json(nlohmann::json::parse(line));
  } catch (const nlohmann::json::exception& e) {
    throw fail(e.what());
  }

  for (std::size_t t = 0; t < stream.config.num_frames; ++t) {
    ++line_no;
    if (!std::getline(is, line)) throw fail("truncated stream");
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      StreamFrame frame;
      frame.frame = j.at("frame").get<std::size_t>();
      std::vector<double> audio = j.at("audio").get<std::vector<double>>();
      const std::size_t audio_len = audio.size();
      frame.audio_feature = DenseArray({audio_len}, std::move(audio));
      for (const auto& d : j.at("dets")) {
        Detection det;
        std::vector<double> emb = d.at("emb").get<std::vector<double>>();
        const std::size_t emb_len = emb.size();
        det.embedding = DenseArray({emb_len}, std::move(emb));
        det.score = d.at("score").get<double>();
        det.class_id = d.at("class").get<int>();
        det.gt_id = d.value("gt_id", -1);
        det.gt_sounding = d.value("gt_sounding", false);
        det.frame = frame.frame;
        frame.detections.push_back(std::move(det));
      }
      stream.frames.push_back(std::move(frame));
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    }
  }
  return stream;
}

inline Stream read_stream(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("read_stream: cannot open " + path);
  return read_stream(is);
}

}  // namespace seavis::synth
