#pragma once

// Causal Cross-Attention Fusion: inject the audio history into per-frame
// multi-scale visual features. Visual queries at frame t may attend only to
// audio frames <= t; the additive mask enforces this exactly, so outputs at
// already-seen frames are bit-identical no matter what later audio holds.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <vector>

#include "seavis/errors.hpp"
#include "seavis/numkernel.hpp"
#include "seavis/rng.hpp"

namespace seavis::ccaf {

struct VisualFeatureLevel {
  int level_index = 2;  // feature stride is 2^(level_index+1)
  std::size_t frames = 0, height = 0, width = 0, channels = 0;
  DenseArray values;  // (T, H', W', C)

  std::size_t spatial() const { return height * width; }
};

struct AudioSequence {
  std::size_t frames = 0, channels = 0;
  DenseArray values;        // (T, C), already projected to the visual width
  std::size_t raw_dim = 0;  // width of the pre-projection audio feature
};

struct CcafParams {
  DenseArray w_q, w_k, w_v;  // (C, d_k)
  DenseArray w_out;          // (d_k, C), output projection before residual
  std::size_t d_k = 0;
  std::size_t heads = 1;
  DenseArray visual_pe;  // (H', W', C) fixed sine table, added to queries
  DenseArray audio_pe;   // (T_max, C) learnable table, added to keys
};

// Mask of shape (T*spatial) x T with entry (i, j) visible iff the audio
// frame j is not in the future of the query's frame floor(i / spatial).
inline AdditiveMask build_causal_mask(std::size_t frames, std::size_t spatial) {
  if (frames == 0 || spatial == 0)
    throw DimensionError("build_causal_mask: frames and spatial must be >= 1");
  AdditiveMask mask(frames * spatial, frames);
  for (std::size_t i = 0; i < mask.rows; ++i) {
    const std::size_t t = i / spatial;
    for (std::size_t j = t + 1; j < frames; ++j) mask.exclude(i, j);
  }
  return mask;
}

// Fixed 2-D sine positional encoding: the first half of the channels encodes
// the row position, the second half the column position, each as an
// interleaved sin/cos ladder with base 10000.
inline DenseArray sine_spatial_pe(std::size_t height, std::size_t width,
                                  std::size_t channels) {
  if (channels % 2 != 0)
    throw ConfigError("sine_spatial_pe: channel count must be even");
  const std::size_t half = channels / 2;
  DenseArray pe({height, width, channels});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < half; ++c) {
        const double freq =
            std::pow(10000.0, 2.0 * static_cast<double>(c / 2) /
                                  static_cast<double>(half));
        const double vy = static_cast<double>(y) / freq;
        const double vx = static_cast<double>(x) / freq;
        pe(y, x, c) = (c % 2 == 0) ? std::sin(vy) : std::cos(vy);
        pe(y, x, half + c) = (c % 2 == 0) ? std::sin(vx) : std::cos(vx);
      }
    }
  }
  return pe;
}

// Seeded parameter set: Xavier-uniform projections, uniform(-0.02, 0.02)
// audio positions, sine visual positions. Draw order is fixed (w_q, w_k,
// w_v, w_out, audio_pe) so a seed pins every weight.
inline CcafParams make_ccaf_params(std::size_t channels, std::size_t d_k,
                                   std::size_t t_max, std::size_t height,
                                   std::size_t width, std::size_t heads,
                                   std::uint64_t seed) {
  if (d_k == 0) throw ConfigError("make_ccaf_params: d_k must be >= 1");
  if (heads == 0 || d_k % heads != 0)
    throw ConfigError("make_ccaf_params: heads must divide d_k");
  Rng rng(seed);
  auto fill_uniform = [&rng](DenseArray& a, double bound) {
    for (double& v : a.data) v = rng.uniform(-bound, bound);
  };
  CcafParams p;
  p.d_k = d_k;
  p.heads = heads;
  const double b_in = std::sqrt(6.0 / static_cast<double>(channels + d_k));
  p.w_q = DenseArray({channels, d_k});
  fill_uniform(p.w_q, b_in);
  p.w_k = DenseArray({channels, d_k});
  fill_uniform(p.w_k, b_in);
  p.w_v = DenseArray({channels, d_k});
  fill_uniform(p.w_v, b_in);
  p.w_out = DenseArray({d_k, channels});
  fill_uniform(p.w_out, b_in);
  p.audio_pe = DenseArray({t_max, channels});
  fill_uniform(p.audio_pe, 0.02);
  p.visual_pe = sine_spatial_pe(height, width, channels);
  return p;
}

struct FusedLevel {
  VisualFeatureLevel fused;
  DenseArray attention;  // (T*spatial, T); head-averaged when heads > 1
};

// softmax(Q K^T / sqrt(d_head) + M) V per head, concatenated, projected back
// to C and residual-added onto the input level. Positional encodings go into
// queries and keys only, so the attended values are the audio projections
// themselves.
inline FusedLevel fuse_level(const VisualFeatureLevel& level,
                             const AudioSequence& audio,
                             const CcafParams& params,
                             const AdditiveMask& mask) {
  const std::size_t t_len = level.frames;
  const std::size_t spatial = level.spatial();
  const std::size_t c = level.channels;
  const std::size_t d_k = params.d_k;
  const std::size_t heads = params.heads;

  if (audio.frames != t_len)
    throw DimensionError("fuse_level: visual/audio frame count mismatch");
  if (audio.channels != c)
    throw DimensionError("fuse_level: visual/audio channel mismatch");
  if (mask.rows != t_len * spatial || mask.cols != t_len)
    throw DimensionError("fuse_level: mask shape mismatch");
  if (params.w_q.ndim() != 2 || params.w_q.rows() != c ||
      params.w_q.cols() != d_k || !params.w_k.same_shape(params.w_q) ||
      !params.w_v.same_shape(params.w_q))
    throw DimensionError("fuse_level: projection weight shape mismatch");
  if (params.w_out.rows() != d_k || params.w_out.cols() != c)
    throw DimensionError("fuse_level: output projection shape mismatch");
  if (params.visual_pe.ndim() != 3 || params.visual_pe.shape[0] != level.height ||
      params.visual_pe.shape[1] != level.width ||
      params.visual_pe.shape[2] != c)
    throw DimensionError("fuse_level: visual PE shape mismatch");
  if (params.audio_pe.ndim() != 2 || params.audio_pe.rows() < t_len ||
      params.audio_pe.cols() != c)
    throw DimensionError("fuse_level: audio PE table too short");
  if (heads == 0 || d_k % heads != 0)
    throw ConfigError("fuse_level: heads must divide d_k");

  const std::size_t n_rows = t_len * spatial;

  // Flattened query input with spatial PE; key input with audio PE.
  DenseArray q_in({n_rows, c});
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t y = 0; y < level.height; ++y)
      for (std::size_t x = 0; x < level.width; ++x) {
        const std::size_t r = (t * level.height + y) * level.width + x;
        for (std::size_t ch = 0; ch < c; ++ch)
          q_in(r, ch) = level.values(t, y, x, ch) + params.visual_pe(y, x, ch);
      }
  DenseArray k_in({t_len, c});
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t ch = 0; ch < c; ++ch)
      k_in(t, ch) = audio.values(t, ch) + params.audio_pe(t, ch);

  const DenseArray q = matmul(q_in, params.w_q);
  const DenseArray k = matmul(k_in, params.w_k);
  const DenseArray v = matmul(audio.values, params.w_v);

  const std::size_t d_h = d_k / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_h));

  DenseArray attended({n_rows, d_k});
  DenseArray attn_mean({n_rows, t_len});
  DenseArray scores({n_rows, t_len});
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * d_h;
    for (std::size_t r = 0; r < n_rows; ++r)
      for (std::size_t j = 0; j < t_len; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < d_h; ++d)
          s += q(r, off + d) * k(j, off + d);
        scores(r, j) = s * scale;
      }
    const DenseArray attn = softmax_rows(scores, &mask);
    for (std::size_t r = 0; r < n_rows; ++r)
      for (std::size_t j = 0; j < t_len; ++j) {
        const double w = attn(r, j);
        if (w == 0.0) continue;  // masked; keep future audio out of the sum
        attn_mean(r, j) += w / static_cast<double>(heads);
        for (std::size_t d = 0; d < d_h; ++d)
          attended(r, off + d) += w * v(j, off + d);
      }
  }

  const DenseArray out = matmul(attended, params.w_out);

  FusedLevel result;
  result.fused = level;
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t y = 0; y < level.height; ++y)
      for (std::size_t x = 0; x < level.width; ++x) {
        const std::size_t r = (t * level.height + y) * level.width + x;
        for (std::size_t ch = 0; ch < c; ++ch)
          result.fused.values(t, y, x, ch) += out(r, ch);
      }
  result.attention = std::move(attn_mean);
  return result;
}

// Independent fusion per scale; output order matches input order.
inline std::vector<FusedLevel> fuse_multiscale(
    const std::vector<VisualFeatureLevel>& levels, const AudioSequence& audio,
    const std::vector<CcafParams>& params_per_level) {
  if (levels.size() != params_per_level.size())
    throw DimensionError("fuse_multiscale: one parameter set per level");
  std::vector<FusedLevel> out;
  out.reserve(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const AdditiveMask mask =
        build_causal_mask(levels[i].frames, levels[i].spatial());
    out.push_back(fuse_level(levels[i], audio, params_per_level[i], mask));
  }
  return out;
}

// Per-frame view of an attention matrix: entry (y, x) is the mean attention
// that frame y's spatial positions pay to audio frame x. Rows stay
// probability rows supported on x <= y.
inline DenseArray attention_heatmap(const DenseArray& attn,
                                    std::size_t spatial) {
  if (attn.ndim() != 2) throw DimensionError("attention_heatmap: attn not 2-D");
  if (spatial == 0 || attn.rows() % spatial != 0)
    throw DimensionError("attention_heatmap: rows not divisible by spatial");
  const std::size_t t_len = attn.rows() / spatial;
  if (t_len != attn.cols())
    throw DimensionError("attention_heatmap: row/column frame counts differ");
  DenseArray heat({t_len, t_len});
  const double inv = 1.0 / static_cast<double>(spatial);
  for (std::size_t y = 0; y < t_len; ++y)
    for (std::size_t s = 0; s < spatial; ++s)
      for (std::size_t x = 0; x < t_len; ++x)
        heat(y, x) += attn(y * spatial + s, x) * inv;
  return heat;
}

// CSV export: one line per frame y, comma-separated scores at 9 significant
// digits, LF line endings.
inline void write_heatmap_csv(const DenseArray& heat, std::ostream& os) {
  if (heat.ndim() != 2) throw DimensionError("write_heatmap_csv: not 2-D");
  char buf[40];
  for (std::size_t y = 0; y < heat.rows(); ++y) {
    for (std::size_t x = 0; x < heat.cols(); ++x) {
      std::snprintf(buf, sizeof(buf), "%.9g", heat(y, x));
      if (x) os << ',';
      os << buf;
    }
    os << '\n';
  }
}

// Binary 8-bit PGM (P5), score mapped to round(255 * value).
inline void write_heatmap_pgm(const DenseArray& heat, std::ostream& os) {
  if (heat.ndim() != 2) throw DimensionError("write_heatmap_pgm: not 2-D");
  os << "P5\n" << heat.cols() << ' ' << heat.rows() << "\n255\n";
  for (std::size_t y = 0; y < heat.rows(); ++y)
    for (std::size_t x = 0; x < heat.cols(); ++x) {
      long v = std::lround(255.0 * heat(y, x));
      if (v < 0) v = 0;
      if (v > 255) v = 255;
      os.put(static_cast<char>(static_cast<unsigned char>(v)));
    }
}

}  // namespace seavis::ccaf
