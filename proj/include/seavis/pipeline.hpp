#pragma once

// End-to-end online run: stream in, windowed causal fusion, frame-by-frame
// association, metrics and artifacts out. Every output is a pure function of
// the config, so one (config, seed) pair reproduces a run byte for byte.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seavis/agcl.hpp"
#include "seavis/ccaf.hpp"
#include "seavis/errors.hpp"
#include "seavis/gradcheck.hpp"
#include "seavis/log.hpp"
#include "seavis/metrics.hpp"
#include "seavis/numkernel.hpp"
#include "seavis/rng.hpp"
#include "seavis/synth.hpp"
#include "seavis/tracker.hpp"

namespace seavis::pipeline {

inline constexpr const char* kVersion = "0.1.0";

struct CcafSetup {
  std::uint64_t seed = 1;
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t channels = 8;
  std::size_t d_k = 8;
  std::size_t heads = 1;
  std::vector<int> levels = {2, 3, 4};
};

struct RunConfig {
  std::optional<std::string> scenario_path;
  std::optional<synth::ScenarioConfig> scenario;
  track::TrackerConfig tracker;
  agcl::LossWeights weights;
  CcafSetup ccaf;
  std::size_t window = 5;  // frames per CCAF segment
  std::string out_dir;
  bool enable_ccaf = true;
  std::optional<std::string> heatmap_format;  // "csv", "pgm" or "both"
  bool run_gradcheck = false;
  bool metrics_csv = false;
  double metrics_match_threshold = 0.5;
};

// --- config (de)serialization ----------------------------------------------

inline nlohmann::ordered_json tracker_to_json(const track::TrackerConfig& t) {
  nlohmann::ordered_json j;
  j["match_threshold"] = t.match_threshold;
  j["new_tracklet_score"] = t.new_tracklet_score;
  if (t.audio_gate.has_value())
    j["audio_gate"] = *t.audio_gate;
  else
    j["audio_gate"] = nullptr;
  j["momentum"] = t.momentum;
  j["max_inactive_frames"] = t.max_inactive_frames;
  j["similarity"] =
      t.similarity == track::Similarity::kCosine ? "cosine" : "bisoftmax";
  return j;
}

inline track::TrackerConfig tracker_from_json(const nlohmann::json& j) {
  track::TrackerConfig t;
  t.match_threshold = j.value("match_threshold", t.match_threshold);
  t.new_tracklet_score = j.value("new_tracklet_score", t.new_tracklet_score);
  if (j.contains("audio_gate") && !j.at("audio_gate").is_null())
    t.audio_gate = j.at("audio_gate").get<double>();
  t.momentum = j.value("momentum", t.momentum);
  if (t.momentum < 0.0 || t.momentum >= 1.0)
    throw ConfigError("tracker: momentum must be in [0, 1)");
  t.max_inactive_frames =
      j.value("max_inactive_frames", t.max_inactive_frames);
  const std::string sim = j.value("similarity", "cosine");
  if (sim == "cosine")
    t.similarity = track::Similarity::kCosine;
  else if (sim == "bisoftmax")
    t.similarity = track::Similarity::kBiSoftmax;
  else
    throw ConfigError("tracker: unknown similarity '" + sim + "'");
  return t;
}

inline nlohmann::ordered_json weights_to_json(const agcl::LossWeights& w) {
  nlohmann::ordered_json j;
  j["lambda_cls"] = w.lambda_cls;
  j["lambda_ce"] = w.lambda_ce;
  j["lambda_dice"] = w.lambda_dice;
  j["lambda_emb"] = w.lambda_emb;
  j["lambda_f"] = w.lambda_f;
  j["lambda_i"] = w.lambda_i;
  j["tau"] = w.tau;
  return j;
}

inline agcl::LossWeights weights_from_json(const nlohmann::json& j) {
  agcl::LossWeights w;
  w.lambda_cls = j.value("lambda_cls", w.lambda_cls);
  w.lambda_ce = j.value("lambda_ce", w.lambda_ce);
  w.lambda_dice = j.value("lambda_dice", w.lambda_dice);
  w.lambda_emb = j.value("lambda_emb", w.lambda_emb);
  w.lambda_f = j.value("lambda_f", w.lambda_f);
  w.lambda_i = j.value("lambda_i", w.lambda_i);
  w.tau = j.value("tau", w.tau);
  if (w.tau <= 0.0) throw ConfigError("loss weights: tau must be > 0");
  return w;
}

inline nlohmann::ordered_json ccaf_to_json(const CcafSetup& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["image_height"] = c.image_height;
  j["image_width"] = c.image_width;
  j["channels"] = c.channels;
  j["d_k"] = c.d_k;
  j["heads"] = c.heads;
  j["levels"] = c.levels;
  return j;
}

inline CcafSetup ccaf_from_json(const nlohmann::json& j) {
  CcafSetup c;
  c.seed = j.value("seed", c.seed);
  c.image_height = j.value("image_height", c.image_height);
  c.image_width = j.value("image_width", c.image_width);
  c.channels = j.value("channels", c.channels);
  c.d_k = j.value("d_k", c.d_k);
  c.heads = j.value("heads", c.heads);
  if (j.contains("levels")) c.levels = j.at("levels").get<std::vector<int>>();
  return c;
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig cfg;
  if (j.contains("scenario_path"))
    cfg.scenario_path = j.at("scenario_path").get<std::string>();
  if (j.contains("scenario"))
    cfg.scenario = synth::config_from_json(j.at("scenario"));
  if (j.contains("tracker")) cfg.tracker = tracker_from_json(j.at("tracker"));
  if (j.contains("loss_weights"))
    cfg.weights = weights_from_json(j.at("loss_weights"));
  if (j.contains("ccaf")) cfg.ccaf = ccaf_from_json(j.at("ccaf"));
  cfg.window = j.value("window", cfg.window);
  if (cfg.window < 1) throw ConfigError("run config: window must be >= 1");
  cfg.out_dir = j.value("out", cfg.out_dir);
  cfg.enable_ccaf = j.value("enable_ccaf", cfg.enable_ccaf);
  if (j.contains("heatmap") && !j.at("heatmap").is_null())
    cfg.heatmap_format = j.at("heatmap").get<std::string>();
  cfg.run_gradcheck = j.value("gradcheck", cfg.run_gradcheck);
  cfg.metrics_csv = j.value("metrics_csv", cfg.metrics_csv);
  cfg.metrics_match_threshold =
      j.value("metrics_match_threshold", cfg.metrics_match_threshold);
  return cfg;
}

// Canonical config used for the manifest and its hash; the scenario is the
// resolved one and the output directory is deliberately excluded so that two
// runs into different directories stay comparable.
inline nlohmann::ordered_json canonical_config(
    const RunConfig& cfg, const synth::ScenarioConfig& resolved_scenario) {
  nlohmann::ordered_json j;
  j["scenario"] = synth::config_to_json(resolved_scenario);
  j["tracker"] = tracker_to_json(cfg.tracker);
  j["loss_weights"] = weights_to_json(cfg.weights);
  j["ccaf"] = ccaf_to_json(cfg.ccaf);
  j["window"] = cfg.window;
  j["enable_ccaf"] = cfg.enable_ccaf;
  j["heatmap"] = cfg.heatmap_format.has_value()
                     ? nlohmann::ordered_json(*cfg.heatmap_format)
                     : nlohmann::ordered_json(nullptr);
  j["metrics_match_threshold"] = cfg.metrics_match_threshold;
  return j;
}

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

// --- online-contract probe --------------------------------------------------

// All stream reads go through this wrapper; an access to a frame beyond the
// position currently being processed is recorded as a violation.
class FrameProbe {
 public:
  explicit FrameProbe(const synth::Stream& stream) : stream_(&stream) {}

  void begin_frame(std::size_t t) { position_ = t; }

  const StreamFrame& frame(std::size_t idx) {
    if (!position_.has_value() || idx > *position_) ++violations_;
    return stream_->frames.at(idx);
  }

  std::size_t size() const { return stream_->frames.size(); }
  std::size_t violations() const { return violations_; }

 private:
  const synth::Stream* stream_;
  std::optional<std::size_t> position_;
  std::size_t violations_ = 0;
};

// --- gradient certification --------------------------------------------------

struct GradcheckReport {
  std::size_t cases = 0;
  double h = 1e-5;
  double threshold = 1e-5;
  double frame_max_rel_error = 0.0;
  double instance_max_rel_error = 0.0;
  bool pass = false;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["cases"] = cases;
    j["h"] = h;
    j["threshold"] = threshold;
    j["frame_max_rel_error"] = frame_max_rel_error;
    j["instance_max_rel_error"] = instance_max_rel_error;
    j["pass"] = pass;
    return j;
  }
};

namespace detail {

inline DenseArray random_embedding(Rng& rng, std::size_t dim) {
  DenseArray v({dim});
  const double scale = rng.uniform(0.5, 2.0);
  for (double& x : v.data) x = scale * rng.gaussian();
  return v;
}

}  // namespace detail

namespace detail {

// One configuration's full parameter vector: every anchor and embedding laid
// out back to back. The oracle probes this whole vector, so a component with
// a vanishing gradient is compared inside the norm of the healthy ones
// rather than against bare finite-difference noise.
template <typename SetT>
DenseArray flatten_sets(const std::vector<SetT>& sets) {
  std::vector<double> flat;
  for (const auto& set : sets) {
    flat.insert(flat.end(), set.anchor.data.begin(), set.anchor.data.end());
    for (const auto& p : set.positives)
      flat.insert(flat.end(), p.data.begin(), p.data.end());
    for (const auto& n : set.negatives)
      flat.insert(flat.end(), n.data.begin(), n.data.end());
  }
  const std::size_t n = flat.size();
  return DenseArray({n}, std::move(flat));
}

template <typename SetT>
void scatter_sets(const DenseArray& flat, std::vector<SetT>& sets) {
  std::size_t pos = 0;
  auto take = [&flat, &pos](DenseArray& dst) {
    for (double& v : dst.data) v = flat.data[pos++];
  };
  for (auto& set : sets) {
    take(set.anchor);
    for (auto& p : set.positives) take(p);
    for (auto& n : set.negatives) take(n);
  }
}

inline DenseArray flatten_grads(const std::vector<agcl::ContrastGrads>& grads) {
  std::vector<double> flat;
  for (const auto& g : grads) {
    flat.insert(flat.end(), g.anchor.data.begin(), g.anchor.data.end());
    for (const auto& p : g.positives)
      flat.insert(flat.end(), p.data.begin(), p.data.end());
    for (const auto& n : g.negatives)
      flat.insert(flat.end(), n.data.begin(), n.data.end());
  }
  const std::size_t n = flat.size();
  return DenseArray({n}, std::move(flat));
}

}  // namespace detail

// Certify the analytic gradients of both contrastive losses against central
// finite differences on seeded random configurations, including frames with
// no positives, empty negative sets and ineligible instances. Per
// configuration, the gradient with respect to every anchor and embedding is
// compared as one vector.
inline GradcheckReport certify_gradients(std::uint64_t seed = 2024,
                                         std::size_t cases = 50,
                                         double h = 1e-5,
                                         double threshold = 1e-5) {
  GradcheckReport report;
  report.cases = cases;
  report.h = h;
  report.threshold = threshold;

  for (std::size_t c = 0; c < cases; ++c) {
    Rng rng(mix_seed(seed, c));
    const std::size_t dim = 3 + rng.next_u64() % 6;
    const double tau = (c % 2 == 0) ? 0.07 : 0.3;

    // Frame-level case.
    std::vector<agcl::FrameContrastSet> frame_sets;
    const std::size_t n_frames = 1 + rng.next_u64() % 3;
    for (std::size_t f = 0; f < n_frames; ++f) {
      agcl::FrameContrastSet set;
      set.anchor = detail::random_embedding(rng, dim);
      const bool silent_frame = (c % 7 == 0 && f == 0);
      const bool no_negatives = (c % 5 == 0 && f == 0);
      const std::size_t np = silent_frame ? 0 : 2 + rng.next_u64() % 2;
      const std::size_t nn = no_negatives ? 0 : 1 + rng.next_u64() % 3;
      for (std::size_t i = 0; i < np; ++i)
        set.positives.push_back(detail::random_embedding(rng, dim));
      for (std::size_t i = 0; i < nn; ++i)
        set.negatives.push_back(detail::random_embedding(rng, dim));
      frame_sets.push_back(std::move(set));
    }
    const agcl::FrameLevelResult fr = agcl::frame_level_loss(frame_sets, tau);
    {
      const DenseArray x0 = detail::flatten_sets(frame_sets);
      gradcheck::ScalarField field;
      field.dimension = x0.size();
      field.eval = [&frame_sets, tau](const DenseArray& x) {
        std::vector<agcl::FrameContrastSet> sets = frame_sets;
        detail::scatter_sets(x, sets);
        return agcl::frame_level_loss(sets, tau).loss;
      };
      const DenseArray fd = gradcheck::central_diff_grad(field, x0, h);
      report.frame_max_rel_error =
          std::max(report.frame_max_rel_error,
                   gradcheck::rel_error(detail::flatten_grads(fr.grads), fd));
    }

    // Instance-level case.
    std::vector<agcl::InstanceContrastSet> inst_sets;
    const std::size_t n_inst = 1 + rng.next_u64() % 3;
    for (std::size_t k = 0; k < n_inst; ++k) {
      agcl::InstanceContrastSet set;
      set.instance_id = static_cast<int>(k);
      set.anchor = detail::random_embedding(rng, dim);
      const bool ineligible = (c % 4 == 0 && k == 0);
      const std::size_t np = 1 + rng.next_u64() % 3;  // multi-positive mix
      const std::size_t nn = ineligible ? 0 : 1 + rng.next_u64() % 3;
      for (std::size_t i = 0; i < np; ++i) {
        set.positives.push_back(detail::random_embedding(rng, dim));
        set.sounding_frames.insert(i);
      }
      for (std::size_t i = 0; i < nn; ++i) {
        set.negatives.push_back(detail::random_embedding(rng, dim));
        set.silent_frames.insert(100 + i);
      }
      inst_sets.push_back(std::move(set));
    }
    const agcl::InstanceLevelResult ir =
        agcl::instance_contrastive_loss(inst_sets, tau);
    {
      const DenseArray x0 = detail::flatten_sets(inst_sets);
      gradcheck::ScalarField field;
      field.dimension = x0.size();
      field.eval = [&inst_sets, tau](const DenseArray& x) {
        std::vector<agcl::InstanceContrastSet> sets = inst_sets;
        detail::scatter_sets(x, sets);
        return agcl::instance_contrastive_loss(sets, tau).loss;
      };
      const DenseArray fd = gradcheck::central_diff_grad(field, x0, h);
      report.instance_max_rel_error =
          std::max(report.instance_max_rel_error,
                   gradcheck::rel_error(detail::flatten_grads(ir.grads), fd));
    }
  }

  report.pass = report.frame_max_rel_error < threshold &&
                report.instance_max_rel_error < threshold;
  return report;
}

// --- the run itself -----------------------------------------------------------

struct RunResult {
  metrics::Report report;
  std::size_t probe_violations = 0;
  std::size_t frames = 0;
  std::size_t windows = 0;
  std::optional<GradcheckReport> gradcheck;
};

namespace detail {

inline std::size_t ceil_div(std::size_t a, std::size_t b) {
  return (a + b - 1) / b;
}

// Seeded stand-in for a backbone/pixel-decoder feature map at one frame.
inline DenseArray synth_frame_features(std::uint64_t seed, int level_index,
                                       std::size_t frame, std::size_t height,
                                       std::size_t width, std::size_t channels) {
  Rng rng(mix_seed(mix_seed(seed, 31 + static_cast<std::uint64_t>(level_index)),
                   frame));
  DenseArray values({height, width, channels});
  for (double& v : values.data) v = rng.gaussian();
  return values;
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open output file " + path.string());
  os << content;
}

}  // namespace detail

inline RunResult run_pipeline(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.out_dir.empty()) throw ConfigError("run: output directory not set");

  synth::Stream stream;
  if (cfg.scenario_path.has_value())
    stream = synth::read_stream(*cfg.scenario_path);
  else if (cfg.scenario.has_value())
    stream = synth::generate(*cfg.scenario);
  else
    throw ConfigError("run: neither scenario nor scenario_path given");

  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  log::info("run: " + std::to_string(stream.frames.size()) + " frames -> " +
            cfg.out_dir);

  FrameProbe probe(stream);
  const std::size_t total_frames = probe.size();

  // Per-level CCAF parameters and the audio projection into the visual width.
  struct LevelSetup {
    int index;
    std::size_t height, width;
    ccaf::CcafParams params;
  };
  std::vector<LevelSetup> level_setups;
  DenseArray audio_proj;
  const std::size_t audio_dim = stream.config.embed_dim;
  if (cfg.enable_ccaf && total_frames > 0) {
    for (int li : cfg.ccaf.levels) {
      const std::size_t stride = std::size_t{1} << (li + 1);
      LevelSetup ls;
      ls.index = li;
      ls.height = detail::ceil_div(cfg.ccaf.image_height, stride);
      ls.width = detail::ceil_div(cfg.ccaf.image_width, stride);
      ls.params = ccaf::make_ccaf_params(
          cfg.ccaf.channels, cfg.ccaf.d_k, cfg.window, ls.height, ls.width,
          cfg.ccaf.heads, mix_seed(cfg.ccaf.seed, static_cast<std::uint64_t>(li)));
      level_setups.push_back(std::move(ls));
    }
    audio_proj = DenseArray({audio_dim, cfg.ccaf.channels});
    Rng rng(mix_seed(cfg.ccaf.seed, 1000));
    const double bound =
        std::sqrt(6.0 / static_cast<double>(audio_dim + cfg.ccaf.channels));
    for (double& v : audio_proj.data) v = rng.uniform(-bound, bound);
  }

  track::MemoryBank bank;
  std::vector<track::FrameOutput> frame_outputs;
  std::vector<DenseArray> window_heatmaps;

  std::size_t window_count = 0;
  for (std::size_t w0 = 0; w0 < total_frames; w0 += cfg.window, ++window_count) {
    const std::size_t w_end = std::min(w0 + cfg.window, total_frames);
    const std::size_t w_len = w_end - w0;

    // Buffers for the current segment: features per frame per level and the
    // projected audio rows seen so far.
    std::vector<std::vector<DenseArray>> feat_buffer(level_setups.size());
    DenseArray audio_rows({w_len, cfg.ccaf.channels});
    DenseArray window_attn;
    std::size_t lead_spatial = 0;
    if (!level_setups.empty()) {
      lead_spatial = level_setups.front().height * level_setups.front().width;
      window_attn = DenseArray({w_len * lead_spatial, w_len});
    }

    for (std::size_t t = w0; t < w_end; ++t) {
      probe.begin_frame(t);
      const StreamFrame& frame = probe.frame(t);
      const std::size_t local = t - w0;

      if (!level_setups.empty()) {
        if (frame.audio_feature.size() != audio_dim)
          throw DimensionError("run: audio feature width differs from config");
        // Project this frame's audio and cache this frame's features.
        DenseArray arow({1, audio_dim}, frame.audio_feature.data);
        const DenseArray projected = matmul(arow, audio_proj);
        for (std::size_t ch = 0; ch < cfg.ccaf.channels; ++ch)
          audio_rows(local, ch) = projected(0, ch);
        for (std::size_t l = 0; l < level_setups.size(); ++l)
          feat_buffer[l].push_back(detail::synth_frame_features(
              cfg.ccaf.seed, level_setups[l].index, t, level_setups[l].height,
              level_setups[l].width, cfg.ccaf.channels));

        // Fuse the prefix seen so far; causality makes the rows of earlier
        // frames identical to what a full-window pass would produce, so only
        // the newest frame's attention rows need keeping.
        const std::size_t prefix = local + 1;
        ccaf::AudioSequence audio_seq;
        audio_seq.frames = prefix;
        audio_seq.channels = cfg.ccaf.channels;
        audio_seq.raw_dim = audio_dim;
        audio_seq.values = DenseArray({prefix, cfg.ccaf.channels});
        std::copy(audio_rows.data.begin(),
                  audio_rows.data.begin() +
                      static_cast<std::ptrdiff_t>(prefix * cfg.ccaf.channels),
                  audio_seq.values.data.begin());

        std::vector<ccaf::VisualFeatureLevel> levels;
        std::vector<ccaf::CcafParams> params;
        for (std::size_t l = 0; l < level_setups.size(); ++l) {
          ccaf::VisualFeatureLevel lvl;
          lvl.level_index = level_setups[l].index;
          lvl.frames = prefix;
          lvl.height = level_setups[l].height;
          lvl.width = level_setups[l].width;
          lvl.channels = cfg.ccaf.channels;
          lvl.values = DenseArray(
              {prefix, lvl.height, lvl.width, cfg.ccaf.channels});
          for (std::size_t f = 0; f < prefix; ++f)
            std::copy(feat_buffer[l][f].data.begin(),
                      feat_buffer[l][f].data.end(),
                      lvl.values.data.begin() +
                          static_cast<std::ptrdiff_t>(
                              f * lvl.height * lvl.width * cfg.ccaf.channels));
          levels.push_back(std::move(lvl));
          params.push_back(level_setups[l].params);
        }
        const std::vector<ccaf::FusedLevel> fused =
            ccaf::fuse_multiscale(levels, audio_seq, params);

        const DenseArray& attn = fused.front().attention;
        for (std::size_t s = 0; s < lead_spatial; ++s)
          for (std::size_t j = 0; j < prefix; ++j)
            window_attn(local * lead_spatial + s, j) =
                attn(local * lead_spatial + s, j);
      }

      frame_outputs.push_back(track::process_frame(bank, frame, cfg.tracker));
      log::debug("frame " + std::to_string(t) + ": " +
                 std::to_string(frame_outputs.back().instances.size()) +
                 " instances");
    }

    if (!level_setups.empty() && cfg.heatmap_format.has_value())
      window_heatmaps.push_back(
          ccaf::attention_heatmap(window_attn, lead_spatial));
  }

  const track::VideoResult video = track::finalize(bank);

  // Evaluation pair: ground truth from stream provenance, predictions from
  // the tracker outputs.
  metrics::EvalPair pair;
  pair.predictions.resize(total_frames);
  pair.ground_truth.resize(total_frames);
  for (std::size_t t = 0; t < total_frames; ++t) {
    for (const auto& det : stream.frames[t].detections)
      pair.ground_truth[t].push_back(
          {det.gt_id, det.class_id, det.gt_sounding, det.mask});
    for (const auto& inst : frame_outputs[t].instances) {
      metrics::PredEntry p;
      p.pred_id = inst.id;
      p.class_id = inst.class_id;
      p.mask = inst.mask;
      p.gt_hint = stream.frames[t].detections[inst.det_index].gt_id;
      pair.predictions[t].push_back(std::move(p));
    }
  }

  RunResult result;
  result.report = metrics::evaluate(pair, cfg.metrics_match_threshold);
  result.probe_violations = probe.violations();
  result.frames = total_frames;
  result.windows = window_count;

  // Artifacts.
  {
    std::ostringstream ss;
    track::write_frame_outputs_jsonl(frame_outputs, ss);
    detail::write_text_file(out / "frame_outputs.jsonl", ss.str());
  }
  {
    std::ostringstream ss;
    track::write_video_result_jsonl(video, ss);
    detail::write_text_file(out / "video_result.jsonl", ss.str());
  }
  {
    nlohmann::ordered_json j = result.report.to_json();
    j["probe_violations"] = result.probe_violations;
    detail::write_text_file(out / "metrics.json", j.dump(2) + "\n");
    if (cfg.metrics_csv) {
      metrics::Report r = result.report;
      detail::write_text_file(out / "metrics.csv", r.to_csv());
    }
  }
  for (std::size_t w = 0; w < window_heatmaps.size(); ++w) {
    char name[48];
    const bool csv =
        *cfg.heatmap_format == "csv" || *cfg.heatmap_format == "both";
    const bool pgm =
        *cfg.heatmap_format == "pgm" || *cfg.heatmap_format == "both";
    if (csv) {
      std::snprintf(name, sizeof(name), "heatmap_w%03zu.csv", w);
      std::ostringstream ss;
      ccaf::write_heatmap_csv(window_heatmaps[w], ss);
      detail::write_text_file(out / name, ss.str());
    }
    if (pgm) {
      std::snprintf(name, sizeof(name), "heatmap_w%03zu.pgm", w);
      std::ostringstream ss;
      ccaf::write_heatmap_pgm(window_heatmaps[w], ss);
      detail::write_text_file(out / name, ss.str());
    }
  }
  if (cfg.run_gradcheck) {
    result.gradcheck = certify_gradients();
    detail::write_text_file(out / "gradcheck.json",
                            result.gradcheck->to_json().dump(2) + "\n");
  }
  {
    nlohmann::ordered_json manifest;
    manifest["version"] = kVersion;
    const nlohmann::ordered_json canon = canonical_config(cfg, stream.config);
    manifest["config_hash"] = fnv1a_hex(canon.dump());
    manifest["seed"] = stream.config.seed;
    manifest["config"] = canon;
    detail::write_text_file(out / "manifest.json", manifest.dump(2) + "\n");
  }
  log::info("run complete: fsla=" + std::to_string(result.report.fsla.fsla) +
            " idsw=" + std::to_string(result.report.idsw));
  return result;
}

}  // namespace seavis::pipeline
