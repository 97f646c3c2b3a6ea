#pragma once

#include <string>
#include <vector>

#include "tsrnet/attention.hpp"
#include "tsrnet/classifier.hpp"
#include "tsrnet/dataset.hpp"
#include "tsrnet/training.hpp"

namespace tsrnet {

struct DetectConfig {
  double theta = 0.5;      // weight of the RGB stream when fusing frame scores
  double threshold = 0.2;  // per-frame fused score needed to be kept
};

inline void validate_detect_config(const DetectConfig& c) {
  if (!(c.theta >= 0.0 && c.theta <= 1.0)) fail(ErrorKind::Config, "detect.theta must lie in [0, 1]");
  if (!(c.threshold > 0.0 && c.threshold < 1.0)) fail(ErrorKind::Config, "detect.threshold must lie in (0, 1)");
}

/// A temporal detection. Frame indices are half-open: [ind_start, ind_end).
struct Proposal {
  int label = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  double confidence = 0.0;
  std::size_t ind_start = 0;
  std::size_t ind_end = 0;
};

/// Per-frame, per-class weighted scores of one stream (n x C), plus the
/// video-level logits from the same forward pass.
struct StreamScores {
  Matrix frame_scores;
  Vector video_logits;
};

inline StreamScores stream_frame_scores(const FeatureMatrix& x, const StreamModel& model, AttentionSettings settings) {
  const auto att = attend(x, model.attention, settings);
  const Vector weights = detection_weights(att, settings);
  StreamScores out;
  out.video_logits = classify(att.pooled, model.classifier).logits;
  const std::size_t classes = model.classes();
  out.frame_scores = Matrix(x.frames(), classes);
  for (std::size_t i = 0; i < x.frames(); ++i) {
    const Vector z = frame_logits(x.frame(i), model.classifier);
    for (std::size_t c = 0; c < classes; ++c) out.frame_scores(i, c) = weights[i] * sigmoid(z[c]);
  }
  return out;
}

/// theta * rgb + (1 - theta) * flow, elementwise.
inline Matrix fused_frame_scores(const Matrix& rgb, const Matrix& flow, double theta) {
  if (rgb.rows() != flow.rows()) fail(ErrorKind::Shape, "fused_frame_scores: streams cover different frame counts");
  if (rgb.cols() != flow.cols()) fail(ErrorKind::Shape, "fused_frame_scores: streams have different class counts");
  Matrix out(rgb.rows(), rgb.cols());
  for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] = theta * rgb.data()[k] + (1.0 - theta) * flow.data()[k];
  return out;
}

/// Maximal runs of frames whose score reaches the threshold, per class.
/// Output is ordered by class, then start time.
inline std::vector<Proposal> extract_proposals(const Matrix& scores, double fps, const DetectConfig& cfg) {
  if (!(fps > 0.0)) fail(ErrorKind::Input, "extract_proposals: fps must be positive");
  std::vector<Proposal> out;
  const std::size_t n = scores.rows();
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    std::size_t i = 0;
    while (i < n) {
      if (scores(i, c) < cfg.threshold) {
        ++i;
        continue;
      }
      const std::size_t begin = i;
      double sum = 0.0;
      while (i < n && scores(i, c) >= cfg.threshold) sum += scores(i++, c);
      Proposal p;
      p.label = static_cast<int>(c);
      p.ind_start = begin;
      p.ind_end = i;
      p.t_start = static_cast<double>(begin) / fps;
      p.t_end = static_cast<double>(i) / fps;
      p.confidence = sum / static_cast<double>(i - begin);
      out.push_back(p);
    }
  }
  return out;
}

struct VideoDetection {
  std::string video_id;
  std::vector<Proposal> proposals;
  Vector logits_rgb;
  Vector logits_flow;
  Vector probs_fused;
};

inline VideoDetection detect_video(const VideoRecord& rec, const FeatureMatrix& rgb, const FeatureMatrix& flow,
                                   const std::array<StreamModel, 2>& models, const std::array<AttentionSettings, 2>& settings,
                                   const DetectConfig& cfg) {
  validate_detect_config(cfg);
  const auto s_rgb = stream_frame_scores(rgb, models[0], settings[0]);
  const auto s_flow = stream_frame_scores(flow, models[1], settings[1]);
  VideoDetection out;
  out.video_id = rec.id;
  out.proposals = extract_proposals(fused_frame_scores(s_rgb.frame_scores, s_flow.frame_scores, cfg.theta), rec.fps, cfg);
  out.logits_rgb = s_rgb.video_logits;
  out.logits_flow = s_flow.video_logits;
  out.probs_fused = fuse_streams(s_rgb.video_logits, s_flow.video_logits);
  return out;
}

inline std::vector<VideoDetection> detect_split(const Dataset& ds, Split split, const std::array<StreamModel, 2>& models,
                                                const std::array<AttentionSettings, 2>& settings, const DetectConfig& cfg) {
  std::vector<VideoDetection> out;
  for (std::size_t i : ds.indices(split))
    out.push_back(detect_video(ds.manifest.videos[i], ds.feature(i, Stream::Rgb), ds.feature(i, Stream::Flow), models,
                               settings, cfg));
  return out;
}

}  // namespace tsrnet
