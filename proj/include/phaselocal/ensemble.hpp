// Copyright 2026 The Phaselocal Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <future>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "phaselocal/dataset.hpp"
#include "phaselocal/localizer.hpp"
#include "phaselocal/models.hpp"
#include "phaselocal/phase.hpp"
#include "phaselocal/timeline.hpp"
#include "phaselocal/util.hpp"

namespace phaselocal {

// Independent relevant-class probabilities from the four one-vs-rest
// networks. Values need not sum to 1.
struct PhaseProbabilities {
  std::map<PhaseLabel, double> p;

  double at(PhaseLabel label) const {
    auto it = p.find(label);
    if (it == p.end())
      throw std::invalid_argument("missing probability for phase " +
                                  std::string(to_string(label)));
    return it->second;
  }
};

struct FusionConfig {
  double threshold = 0.5;
  std::array<PhaseLabel, 4> tie_order = {PhaseLabel::Rhexis, PhaseLabel::Phaco,
                                         PhaseLabel::IrrAspVisc, PhaseLabel::LensImpl};
};

inline void validate(const FusionConfig& cfg) {
  check(cfg.threshold > 0.0 && cfg.threshold < 1.0, "fusion threshold must lie in (0,1)");
}

// Decision rule: among phases whose classifier fired (p >= threshold), pick
// the highest probability; ties fall back to the configured phase order. No
// phase firing means the clip is non-relevant action (Rest).
inline PhaseLabel integrate(const PhaseProbabilities& probs, const FusionConfig& cfg) {
  validate(cfg);
  for (PhaseLabel label : kRelevantPhases) {
    const double v = probs.at(label);
    check(v >= 0.0 && v <= 1.0, "probability for " + std::string(to_string(label)) +
                                    " outside [0,1]: " + format_double(v));
  }
  bool found = false;
  PhaseLabel best = PhaseLabel::Rest;
  double best_p = -1.0;
  for (PhaseLabel label : cfg.tie_order) {
    const double v = probs.at(label);
    if (v < cfg.threshold) continue;
    if (!found || v > best_p) {
      found = true;
      best = label;
      best_p = v;
    }
  }
  return found ? best : PhaseLabel::Rest;
}

// Per-segment entry of the inference decision log.
struct SegmentDecision {
  long start = 0;
  long end = 0;
  PhaseLabel label = PhaseLabel::Rest;
  std::map<PhaseLabel, double> mean_probs;  // averaged over the segment's clips
};

struct InferConfig {
  FilterConfig filter;
  FusionConfig fusion;
  long clip_len = 75;
  long stride = 25;      // clip start step inside a segment
  int seq_len = 5;
  std::uint64_t seed = 7;
  int workers = 1;
};

struct InferResult {
  Timeline timeline;
  std::vector<SegmentDecision> decisions;
  std::vector<std::string> warnings;
  long crop_fallbacks = 0;  // frames classified without a cornea detection
};

namespace detail {

struct ClipDecision {
  long start = 0;  // clip frame range [start, start + clip_len), clamped to segment
  long end = 0;
  PhaseLabel label = PhaseLabel::Rest;
  std::map<PhaseLabel, double> probs;
};

}  // namespace detail

// Full pipeline for one video: idle/action classification per frame, mean
// filtering, segment extraction, then per segment sliding-clip relevance
// classification over cornea crops with one-vs-rest fusion. Frames take the
// majority label of their covering clips (ties: earliest clip). Segments
// shorter than clip_len are classified from one clip padded by repeating the
// final frame.
inline InferResult infer_video(const std::string& video_id, double fps,
                               const std::vector<Image>& frames,
                               Classifier& idle_model,
                               const DetectorInterface& detector,
                               std::map<PhaseLabel, Classifier*> relevance_models,
                               const InferConfig& cfg) {
  check(!frames.empty(), "infer_video: no frames");
  validate(cfg.fusion);
  check(cfg.clip_len >= 1 && cfg.stride >= 1, "clip_len and stride must be >= 1");
  for (PhaseLabel label : kRelevantPhases)
    check(relevance_models.count(label) && relevance_models.at(label) != nullptr,
          "missing relevance model for " + std::string(to_string(label)));

  const BackboneSpec& in_spec = idle_model.backbone_spec();

  // Stage 1: per-frame idle/action predictions (class 1 = action).
  std::vector<std::uint8_t> preds(frames.size(), 0);
  auto predict_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const Image input = resize_bilinear(frames[i], in_spec.input_w, in_spec.input_h);
      const auto p = idle_model.predict(std::span<const Image>(&input, 1));
      preds[i] = p[1] >= p[0] ? 1 : 0;
    }
  };
  if (cfg.workers > 1) {
    const std::size_t chunk = (frames.size() + cfg.workers - 1) / cfg.workers;
    std::vector<std::future<void>> futs;
    for (std::size_t lo = 0; lo < frames.size(); lo += chunk)
      futs.push_back(std::async(std::launch::async, predict_range, lo,
                                std::min(frames.size(), lo + chunk)));
    for (auto& f : futs) f.get();
  } else {
    predict_range(0, frames.size());
  }

  // Stages 2-3: temporal smoothing and segment extraction.
  InferResult result;
  result.timeline = timeline_from_predictions(video_id, fps, preds, cfg.filter);
  const std::vector<Segment> segments = extract_action_segments(result.timeline);

  // Stages 4-5: per-segment clip classification.
  struct SegmentOutcome {
    std::vector<detail::ClipDecision> clips;
    bool all_frames_undetected = true;
    long fallbacks = 0;
  };

  auto classify_segment = [&](const Segment& seg) {
    SegmentOutcome outcome;
    std::vector<long> clip_starts;
    if (seg.length() >= cfg.clip_len) {
      for (long s = seg.start; s + cfg.clip_len <= seg.end; s += cfg.stride)
        clip_starts.push_back(s);
      const long last = seg.end - cfg.clip_len;
      if (clip_starts.back() != last) clip_starts.push_back(last);  // cover the tail
    } else {
      clip_starts.push_back(seg.start);  // single padded clip
    }
    for (long cs : clip_starts) {
      ClipSpec clip{video_id, cs, cfg.clip_len, PhaseLabel::Rest};
      const std::vector<long> offsets =
          sequence_sample(clip, cfg.seq_len, derive_seed(cfg.seed, "infer-seq"));
      std::vector<Image> inputs;
      inputs.reserve(offsets.size());
      for (long off : offsets) {
        // Padding rule for short segments: repeat the final frame.
        const long f = std::min(cs + off, seg.end - 1);
        const Image& frame = frames[static_cast<std::size_t>(f)];
        const std::vector<Detection> dets = detector.detect(frame);
        if (!dets.empty()) {
          outcome.all_frames_undetected = false;
          inputs.push_back(crop_to_cornea(frame, dets.front(), in_spec.input_w, in_spec.input_h));
        } else {
          ++outcome.fallbacks;
          inputs.push_back(resize_bilinear(frame, in_spec.input_w, in_spec.input_h));
        }
      }
      detail::ClipDecision decision;
      decision.start = cs;
      decision.end = std::min(cs + cfg.clip_len, seg.end);
      PhaseProbabilities probs;
      for (PhaseLabel label : kRelevantPhases) {
        const auto p = relevance_models.at(label)->predict(inputs);
        probs.p[label] = p[1];
      }
      decision.probs = probs.p;
      decision.label = integrate(probs, cfg.fusion);
      outcome.clips.push_back(std::move(decision));
    }
    return outcome;
  };

  std::vector<SegmentOutcome> outcomes(segments.size());
  if (cfg.workers > 1 && segments.size() > 1) {
    std::vector<std::future<SegmentOutcome>> futs;
    futs.reserve(segments.size());
    for (const Segment& seg : segments)
      futs.push_back(std::async(std::launch::async, classify_segment, seg));
    for (std::size_t i = 0; i < futs.size(); ++i) outcomes[i] = futs[i].get();
  } else {
    for (std::size_t i = 0; i < segments.size(); ++i)
      outcomes[i] = classify_segment(segments[i]);
  }

  for (std::size_t si = 0; si < segments.size(); ++si) {
    const Segment& seg = segments[si];
    const SegmentOutcome& outcome = outcomes[si];
    result.crop_fallbacks += outcome.fallbacks;
    if (outcome.all_frames_undetected)
      result.warnings.push_back("segment [" + std::to_string(seg.start) + "," +
                                std::to_string(seg.end) +
                                ") had no cornea detection; used whole frames");

    // Majority vote over covering clips; on ties the earliest covering clip
    // holding a tied label decides.
    auto majority_label = [](const std::vector<const detail::ClipDecision*>& covering) {
      std::map<PhaseLabel, long> votes;
      for (const auto* clip : covering) ++votes[clip->label];
      long best = 0;
      for (const auto& [label, n] : votes) best = std::max(best, n);
      for (const auto* clip : covering)
        if (votes[clip->label] == best) return clip->label;
      return PhaseLabel::Rest;  // unreachable for non-empty input
    };
    for (long f = seg.start; f < seg.end; ++f) {
      std::vector<const detail::ClipDecision*> covering;
      for (const detail::ClipDecision& clip : outcome.clips)
        if (f >= clip.start && f < clip.end) covering.push_back(&clip);
      result.timeline.labels[static_cast<std::size_t>(f)] = majority_label(covering);
    }

    SegmentDecision sd;
    sd.start = seg.start;
    sd.end = seg.end;
    for (PhaseLabel label : kRelevantPhases) {
      double sum = 0;
      for (const detail::ClipDecision& clip : outcome.clips) sum += clip.probs.at(label);
      sd.mean_probs[label] = sum / static_cast<double>(outcome.clips.size());
    }
    {
      std::map<PhaseLabel, long> frame_votes;
      for (long f = seg.start; f < seg.end; ++f)
        ++frame_votes[result.timeline.labels[static_cast<std::size_t>(f)]];
      long best = 0;
      for (const auto& [label, n] : frame_votes) best = std::max(best, n);
      sd.label = outcome.clips.front().label;
      for (long f = seg.start; f < seg.end; ++f) {
        const PhaseLabel l = result.timeline.labels[static_cast<std::size_t>(f)];
        if (frame_votes[l] == best) {
          sd.label = l;
          break;
        }
      }
    }
    result.decisions.push_back(std::move(sd));
  }
  return result;
}

// Decision log: `segment_start,segment_end,label,p_rhexis,p_phaco,
// p_irraspvisc,p_lensimpl`.
inline void write_decision_log(std::ostream& os, const std::vector<SegmentDecision>& decisions) {
  for (const SegmentDecision& d : decisions) {
    os << d.start << ',' << d.end << ',' << to_string(d.label);
    for (PhaseLabel label : kRelevantPhases) os << ',' << format_double(d.mean_probs.at(label));
    os << '\n';
  }
}

}  // namespace phaselocal
