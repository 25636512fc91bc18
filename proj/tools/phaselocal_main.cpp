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
//
// Command-line front end wiring fixtures, dataset construction, training,
// inference, and evaluation into reproducible runs.

#include <CLI11.hpp>

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "phaselocal/config.hpp"
#include "phaselocal/dataset.hpp"
#include "phaselocal/ensemble.hpp"
#include "phaselocal/eval.hpp"
#include "phaselocal/fixtures.hpp"
#include "phaselocal/framesource.hpp"
#include "phaselocal/models.hpp"
#include "phaselocal/training.hpp"

namespace fs = std::filesystem;
using namespace phaselocal;

namespace {

void require_path(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path))
    throw std::runtime_error("missing input: " + path.string() + " (expected from " +
                             producer + ")");
}

std::string now_stamp() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

std::string resolve_stamp(const RunConfig& cfg) {
  return cfg.stamp.empty() ? now_stamp() : cfg.stamp;
}

fs::path task_run_dir(const RunConfig& cfg, const std::string& task, const std::string& stamp) {
  return cfg.run_path() / "runs" / task / stamp;
}

void write_latest(const RunConfig& cfg, const std::string& task, const std::string& stamp) {
  std::ofstream os(cfg.run_path() / "runs" / task / "latest");
  os << stamp << '\n';
}

std::string read_latest(const RunConfig& cfg, const std::string& task) {
  const fs::path marker = cfg.run_path() / "runs" / task / "latest";
  require_path(marker, "a prior training run of task '" + task + "'");
  std::ifstream is(marker);
  std::string stamp;
  std::getline(is, stamp);
  check(!stamp.empty(), "empty latest marker for task '" + task + "'");
  return stamp;
}

struct FixtureInputs {
  std::vector<AnnotationRecord> annotations;
  std::vector<VideoInfo> index;
  std::unique_ptr<DirectoryFrameSource> source;

  double fps_of(const std::string& video_id) const {
    for (const VideoInfo& v : index)
      if (v.video_id == video_id) return v.fps;
    throw std::runtime_error("video '" + video_id + "' not in the video index");
  }
};

FixtureInputs load_fixture_inputs(const RunConfig& cfg) {
  const fs::path root = cfg.fixtures_path();
  require_path(root / "annotations.csv", "make-fixtures");
  require_path(root / "videos.csv", "make-fixtures");
  require_path(root / "videos", "make-fixtures");

  FixtureInputs in;
  {
    std::ifstream is(root / "annotations.csv");
    in.annotations = read_annotations(is);
  }
  {
    std::ifstream is(root / "videos.csv");
    in.index = read_video_index(is);
  }
  for (AnnotationRecord& rec : in.annotations) {
    for (const VideoInfo& v : in.index)
      if (v.video_id == rec.video_id) rec.total_frames = v.total_frames;
    validate(rec);
  }
  in.source = std::make_unique<DirectoryFrameSource>(root / "videos");
  return in;
}

struct Split {
  std::vector<std::string> train, test;
};

Split read_split(const RunConfig& cfg) {
  const fs::path path = cfg.run_path() / "dataset" / "split.json";
  require_path(path, "build-dataset");
  std::ifstream is(path);
  const nlohmann::json j = nlohmann::json::parse(is);
  return {j.at("train").get<std::vector<std::string>>(),
          j.at("test").get<std::vector<std::string>>()};
}

SplitManifest read_manifest(const RunConfig& cfg) {
  const fs::path path = cfg.run_path() / "dataset" / "clip_manifest.csv";
  require_path(path, "build-dataset");
  std::ifstream is(path);
  return read_clip_manifest(is);
}

void write_run_artifacts(const RunConfig& cfg, const std::string& task,
                         const std::string& stamp, const TrainResult& result,
                         const Classifier& model) {
  const fs::path dir = task_run_dir(cfg, task, stamp);
  fs::create_directories(dir / "checkpoints");
  {
    std::ofstream os(dir / "config.json");
    os << config_to_json(cfg).dump(2) << '\n';
  }
  {
    std::ofstream os(dir / "log.csv");
    os << "epoch,lr,mean_loss,val_accuracy\n";
    for (const EpochLog& e : result.log)
      os << e.epoch << ',' << format_double(e.lr) << ',' << format_double(e.mean_loss)
         << ',' << format_double(e.val_accuracy) << '\n';
  }
  {
    std::ofstream os(dir / "metrics.json");
    os << nlohmann::json{{"task", task},
                         {"epochs", result.log.size()},
                         {"final_val_accuracy", result.final_val_accuracy}}
              .dump(2)
       << '\n';
  }
  save_checkpoint(model, dir / "checkpoints", task);
  write_latest(cfg, task, stamp);
}

// --- commands ----------------------------------------------------------------

int cmd_make_fixtures(const RunConfig& cfg, std::string out_dir, int videos, int phases,
                      int frame_size) {
  FixtureConfig fc;
  fc.n_videos = videos;
  fc.n_phases = phases;
  fc.width = frame_size;
  fc.height = frame_size;
  fc.fps = 25.0;
  fc.seed = cfg.seed;
  validate(fc);
  const fs::path out = out_dir.empty() ? cfg.fixtures_path() : fs::path(out_dir);
  const FixtureSet set = make_fixtures(fc, out);
  long frames = 0;
  for (const FixtureVideo& v : set.videos) frames += v.annotation.total_frames;
  std::cout << "make-fixtures: " << set.videos.size() << " videos, " << frames
            << " frames, " << phases << " phases -> " << out.string() << "\n";
  return 0;
}

int cmd_build_dataset(const RunConfig& cfg) {
  const FixtureInputs in = load_fixture_inputs(cfg);
  check(in.annotations.size() >= 2, "need at least two videos to form a split");

  std::vector<std::string> ids;
  for (const AnnotationRecord& rec : in.annotations) ids.push_back(rec.video_id);
  std::sort(ids.begin(), ids.end());
  Rng split_rng(derive_seed(cfg.seed, "video-split"));
  split_rng.shuffle(ids);
  const int n = static_cast<int>(ids.size());
  int train_count = cfg.train_videos > 0 ? cfg.train_videos : (2 * n + 2) / 3;
  train_count = std::min(train_count, n - 1);
  check(train_count >= 1, "split leaves no training videos");
  Split split;
  split.train.assign(ids.begin(), ids.begin() + train_count);
  split.test.assign(ids.begin() + train_count, ids.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());

  const auto frames = sample_balanced_frames(in.annotations, cfg.frames_per_class, cfg.seed);

  std::map<PhaseLabel, std::vector<ClipSpec>> train_pool, test_pool;
  for (const AnnotationRecord& rec : in.annotations) {
    const bool is_train =
        std::find(split.train.begin(), split.train.end(), rec.video_id) != split.train.end();
    auto& pool = is_train ? train_pool : test_pool;
    for (const Segment& seg : rec.segments)
      for (ClipSpec& clip : generate_clips(rec.video_id, seg, cfg.clips))
        pool[clip.label].push_back(std::move(clip));
  }
  const SplitManifest manifest = sample_clip_dataset(
      train_pool, test_pool, split.train, split.test, cfg.clips_train, cfg.clips_test, cfg.seed);

  const fs::path out = cfg.run_path() / "dataset";
  fs::create_directories(out);
  {
    std::ofstream os(out / "frame_manifest.csv");
    write_frame_manifest(os, frames);
  }
  {
    std::ofstream os(out / "clip_manifest.csv");
    write_clip_manifest(os, manifest);
  }
  {
    std::ofstream os(out / "split.json");
    os << nlohmann::json{{"train", split.train}, {"test", split.test}}.dump(2) << '\n';
  }
  std::cout << "build-dataset: " << frames.size() << " frames, "
            << manifest.train_clips.size() << " classes x " << cfg.clips_train
            << " train clips, " << split.train.size() << "/" << split.test.size()
            << " train/test videos -> " << out.string() << "\n";
  return 0;
}

TaskDataset idle_dataset(const RunConfig& cfg, const FixtureInputs& in,
                         const std::vector<FrameSample>& frames,
                         const std::vector<std::string>& videos, bool training) {
  std::vector<FrameSample> selected;
  for (const FrameSample& s : frames)
    if (std::find(videos.begin(), videos.end(), s.video_id) != videos.end())
      selected.push_back(s);
  check(!selected.empty(), "no manifest frames for the requested videos");

  TaskDataset data;
  for (const FrameSample& s : selected) data.labels.push_back(s.is_action ? 1 : 0);
  const DirectoryFrameSource* source = in.source.get();
  const int input = cfg.backbone.input_w;
  const bool do_augment = training && cfg.augment_enabled;
  const AugmentationSpec aug = cfg.augmentation;
  data.load = [selected, source, input, do_augment, aug](std::size_t index,
                                                         std::uint64_t draw_seed) {
    const FrameSample& s = selected[index];
    Image img = source->frame(s.video_id, s.frame);
    if (do_augment) img = augment(img, aug, draw_seed);
    TrainExample ex;
    ex.frames.push_back(resize_bilinear(img, input, input));
    ex.label = s.is_action ? 1 : 0;
    return ex;
  };
  return data;
}

int cmd_train_idle(const RunConfig& cfg) {
  const FixtureInputs in = load_fixture_inputs(cfg);
  const fs::path manifest_path = cfg.run_path() / "dataset" / "frame_manifest.csv";
  require_path(manifest_path, "build-dataset");
  std::vector<FrameSample> frames;
  {
    std::ifstream is(manifest_path);
    frames = read_frame_manifest(is);
  }
  const Split split = read_split(cfg);

  auto model = build_static_classifier(cfg.backbone, {cfg.idle_dropout, 2},
                                       derive_seed(cfg.seed, "init/idle"));
  if (!cfg.idle_freeze.empty()) freeze_layers(*model, cfg.idle_freeze);

  const TaskDataset train = idle_dataset(cfg, in, frames, split.train, true);
  const TaskDataset val = idle_dataset(cfg, in, frames, split.test, false);
  const TrainResult result = train_task("idle", train, val, *model, cfg.idle_schedule_cfg,
                                        cfg.optimizer, cfg.batch_size, cfg.seed);

  const std::string stamp = resolve_stamp(cfg);
  write_run_artifacts(cfg, "idle", stamp, result, *model);
  std::cout << "train-idle: " << result.log.size() << " epochs, val accuracy "
            << format_fixed2(result.final_val_accuracy) << " -> "
            << task_run_dir(cfg, "idle", stamp).string() << "\n";
  return 0;
}

TaskDataset relevance_dataset(const RunConfig& cfg, const FixtureInputs& in,
                              const std::vector<std::pair<ClipSpec, int>>& items,
                              bool training) {
  check(!items.empty(), "no clips selected for the relevance task");
  TaskDataset data;
  for (const auto& [clip, label] : items) data.labels.push_back(label);
  const DirectoryFrameSource* source = in.source.get();
  const int input = cfg.backbone.input_w;
  const bool do_augment = training && cfg.augment_enabled;
  const AugmentationSpec aug = cfg.augmentation;
  const ReferenceDetector detector(cfg.detector_threshold, cfg.detector_min_area);
  data.load = [items, source, input, do_augment, aug, detector, training](
                  std::size_t index, std::uint64_t draw_seed) {
    const auto& [clip, label] = items[index];
    const std::vector<long> offsets = training
                                          ? sequence_sample(clip, 5, draw_seed)
                                          : sequence_centers(clip.clip_len, 5);
    TrainExample ex;
    ex.label = label;
    for (std::size_t t = 0; t < offsets.size(); ++t) {
      const Image frame = source->frame(clip.video_id, clip.start + offsets[t]);
      const auto dets = detector.detect(frame);
      Image input_img = dets.empty()
                            ? resize_bilinear(frame, input, input)
                            : crop_to_cornea(frame, dets.front(), input, input);
      if (do_augment) input_img = augment(input_img, aug, derive_seed(draw_seed, "frame", t));
      ex.frames.push_back(std::move(input_img));
    }
    return ex;
  };
  return data;
}

int cmd_train_relevance(const RunConfig& cfg, const std::string& phase_arg) {
  const FixtureInputs in = load_fixture_inputs(cfg);
  const SplitManifest manifest = read_manifest(cfg);

  std::vector<PhaseLabel> targets;
  if (phase_arg == "all")
    targets.assign(kRelevantPhases.begin(), kRelevantPhases.end());
  else
    targets.push_back(phase_from_task_name(phase_arg));

  const std::string stamp = resolve_stamp(cfg);
  for (PhaseLabel target : targets) {
    const std::string task = task_name(target);
    RecurrentHeadSpec head;
    head.cell = cfg.relevance_cell;
    head.bidirectional = cfg.relevance_bidirectional;
    auto model = build_recurrent_classifier(cfg.backbone, head, cfg.relevance_mode,
                                            derive_seed(cfg.seed, "init", task));
    if (!cfg.relevance_freeze.empty() && cfg.relevance_mode == TrainingMode::EndToEnd)
      freeze_layers(*model, cfg.relevance_freeze);

    const auto train_items =
        binary_task_clips(manifest.train_clips, target, derive_seed(cfg.seed, "train-rest"));
    const auto val_items =
        binary_task_clips(manifest.test_clips, target, derive_seed(cfg.seed, "test-rest"));
    const TaskDataset train = relevance_dataset(cfg, in, train_items, true);
    const TaskDataset val = relevance_dataset(cfg, in, val_items, false);

    const TrainResult result =
        train_task(task, train, val, *model, cfg.relevance_schedule_cfg, cfg.optimizer,
                   cfg.batch_size, derive_seed(cfg.seed, "train", task));
    write_run_artifacts(cfg, task, stamp, result, *model);
    std::cout << "train-relevance: task " << task << ", " << result.log.size()
              << " epochs, val accuracy " << format_fixed2(result.final_val_accuracy)
              << " -> " << task_run_dir(cfg, task, stamp).string() << "\n";
  }
  return 0;
}

int cmd_eval_detector(const RunConfig& cfg, const std::string& split_sel) {
  const FixtureInputs in = load_fixture_inputs(cfg);
  require_path(cfg.fixtures_path() / "detector_gt.csv", "make-fixtures");

  std::vector<std::string> videos;
  if (split_sel == "all")
    videos = in.source->video_ids();
  else
    videos = read_split(cfg).test;

  const ReferenceDetector detector(cfg.detector_threshold, cfg.detector_min_area);
  std::vector<DetRecord> dets;
  std::mutex mutex;
  auto process_video = [&](const std::string& vid) {
    std::vector<DetRecord> local;
    const long n = in.source->frame_count(vid);
    for (long f = 0; f < n; ++f)
      for (const Detection& d : detector.detect(in.source->frame(vid, f)))
        local.push_back({vid, f, d.bbox, d.score});
    std::scoped_lock lock(mutex);
    dets.insert(dets.end(), local.begin(), local.end());
  };
  if (cfg.workers > 1) {
    std::vector<std::future<void>> futs;
    for (const std::string& vid : videos)
      futs.push_back(std::async(std::launch::async, process_video, vid));
    for (auto& f : futs) f.get();
  } else {
    for (const std::string& vid : videos) process_video(vid);
  }
  // Canonical order regardless of worker completion order.
  std::sort(dets.begin(), dets.end(), [](const DetRecord& a, const DetRecord& b) {
    return std::tie(a.video_id, a.frame, b.score) < std::tie(b.video_id, b.frame, a.score);
  });

  std::vector<GtRecord> gt;
  {
    std::ifstream is(cfg.fixtures_path() / "detector_gt.csv");
    for (const GtRecord& g : read_ground_truth(is))
      if (std::find(videos.begin(), videos.end(), g.video_id) != videos.end())
        gt.push_back(g);
  }
  check(!gt.empty(), "no ground-truth boxes for the selected videos");

  const EvalConfig eval_cfg = EvalConfig::range(cfg.iou_from, cfg.iou_to, cfg.iou_step);
  const APReport report = map_over_range(dets, gt, eval_cfg);

  const fs::path out = cfg.run_path() / "eval";
  fs::create_directories(out);
  {
    std::ofstream os(out / "detections.csv");
    write_detections(os, dets);
  }
  {
    std::ofstream os(out / "detector_ap.csv");
    os << "iou_threshold,ap\n";
    for (const auto& [t, ap] : report.ap_by_threshold)
      os << format_double(t) << ',' << format_double(ap) << '\n';
    os << "mAP," << format_double(report.mean_ap) << '\n';
  }
  std::cout << "eval-detector: mAP " << format_fixed2(report.mean_ap);
  if (cfg.iou_from <= 0.80 + 1e-9 && 0.85 <= cfg.iou_to + 1e-9)
    std::cout << ", AP@0.80 " << format_fixed2(report.at(0.80)) << ", AP@0.85 "
              << format_fixed2(report.at(0.85));
  std::cout << " over " << gt.size() << " boxes -> " << (out / "detector_ap.csv").string()
            << "\n";
  return 0;
}

int cmd_infer(const RunConfig& cfg, const std::string& video_sel) {
  const FixtureInputs in = load_fixture_inputs(cfg);
  std::vector<std::string> videos;
  if (video_sel.empty())
    videos = read_split(cfg).test;
  else
    videos.push_back(video_sel);

  const fs::path idle_dir =
      task_run_dir(cfg, "idle", read_latest(cfg, "idle")) / "checkpoints";
  auto idle_model = load_checkpoint(idle_dir, "idle");
  std::map<PhaseLabel, std::unique_ptr<Classifier>> relevance;
  std::map<PhaseLabel, Classifier*> relevance_ptrs;
  for (PhaseLabel phase : kRelevantPhases) {
    const std::string task = task_name(phase);
    const fs::path dir = task_run_dir(cfg, task, read_latest(cfg, task)) / "checkpoints";
    relevance[phase] = load_checkpoint(dir, task);
    relevance_ptrs[phase] = relevance[phase].get();
  }

  const ReferenceDetector detector(cfg.detector_threshold, cfg.detector_min_area);
  InferConfig icfg;
  icfg.filter = cfg.filter;
  icfg.fusion = cfg.fusion;
  icfg.clip_len = cfg.clips.clip_len;
  icfg.stride = cfg.infer_stride;
  icfg.seq_len = 5;
  icfg.seed = cfg.seed;
  icfg.workers = cfg.workers;

  const fs::path out = cfg.run_path() / "infer";
  fs::create_directories(out);
  for (const std::string& vid : videos) {
    const long n = in.source->frame_count(vid);
    std::vector<Image> frames;
    frames.reserve(static_cast<std::size_t>(n));
    for (long f = 0; f < n; ++f) frames.push_back(in.source->frame(vid, f));

    const InferResult result =
        infer_video(vid, in.fps_of(vid), frames, *idle_model, detector, relevance_ptrs, icfg);
    {
      std::ofstream os(out / (vid + ".timeline.csv"));
      write_timeline(os, result.timeline);
    }
    {
      std::ofstream os(out / (vid + ".segments.csv"));
      write_decision_log(os, result.decisions);
    }
    for (const std::string& w : result.warnings)
      std::cerr << "warning: " << vid << ": " << w << "\n";
    std::cout << "infer: " << vid << ": " << result.decisions.size() << " segments, "
              << result.warnings.size() << " warnings -> "
              << (out / (vid + ".timeline.csv")).string() << "\n";
  }
  return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
  const Split split = read_split(cfg);
  require_path(cfg.fixtures_path() / "truth_timelines.csv", "make-fixtures");
  std::map<std::string, Timeline> truth;
  {
    std::ifstream is(cfg.fixtures_path() / "truth_timelines.csv");
    for (Timeline& t : read_timelines(is)) truth.emplace(t.video_id, std::move(t));
  }

  std::vector<std::string> class_names;
  for (PhaseLabel l : kAllLabels) class_names.emplace_back(to_string(l));
  ConfusionMatrix cm(class_names);
  std::map<PhaseLabel, std::pair<long, long>> binary;  // phase -> (correct, total)
  long frames = 0;

  for (const std::string& vid : split.test) {
    const fs::path pred_path = cfg.run_path() / "infer" / (vid + ".timeline.csv");
    require_path(pred_path, "infer");
    std::ifstream is(pred_path);
    const Timeline pred = read_timeline(is);
    auto truth_it = truth.find(vid);
    check(truth_it != truth.end(), "no ground-truth timeline for video '" + vid + "'");
    const Timeline& gt = truth_it->second;
    check(gt.frame_count() == pred.frame_count(),
          "prediction length mismatch for video '" + vid + "'");
    for (long f = 0; f < gt.frame_count(); ++f) {
      const PhaseLabel t = gt.labels[static_cast<std::size_t>(f)];
      const PhaseLabel p = pred.labels[static_cast<std::size_t>(f)];
      cm.add(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
      ++frames;
      for (PhaseLabel phase : kRelevantPhases) {
        auto& [correct, total] = binary[phase];
        ++total;
        if ((t == phase) == (p == phase)) ++correct;
      }
    }
  }
  const ClassificationReport report = metrics(cm);

  const fs::path out = cfg.run_path() / "eval";
  fs::create_directories(out);
  {
    std::ofstream os(out / "report.txt");
    os << render_classification_report(report);
    for (const std::string& w : report.warnings) os << "note: " << w << '\n';
  }
  {
    std::ofstream os(out / "report.csv");
    write_report_csv(os, report);
  }
  {
    nlohmann::json binary_json;
    for (PhaseLabel phase : kRelevantPhases) {
      const auto& [correct, total] = binary[phase];
      binary_json[task_name(phase)] =
          total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    }
    std::ofstream os(out / "summary.json");
    os << nlohmann::json{{"fused_macro_f1", report.macro.f1},
                         {"fused_accuracy", report.accuracy},
                         {"binary_accuracy", binary_json},
                         {"frames", frames},
                         {"videos", split.test}}
              .dump(2)
       << '\n';
  }
  std::cout << "evaluate: macro F1 " << format_fixed2(report.macro.f1) << ", accuracy "
            << format_fixed2(report.accuracy) << " over " << split.test.size()
            << " videos (" << frames << " frames) -> " << (out / "report.txt").string()
            << "\n";
  return 0;
}

int cmd_plot_timeline(const RunConfig& cfg, const std::string& input,
                      const std::string& output) {
  std::vector<Timeline> timelines;
  if (!input.empty()) {
    require_path(input, "a timeline-producing command");
    std::ifstream is(input);
    timelines = read_timelines(is);
  } else {
    const fs::path dir = cfg.run_path() / "infer";
    require_path(dir, "infer");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().string().ends_with(".timeline.csv")) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    check(!files.empty(), "no timeline files under " + dir.string());
    for (const fs::path& p : files) {
      std::ifstream is(p);
      timelines.push_back(read_timeline(is));
    }
  }
  const fs::path out =
      output.empty() ? cfg.run_path() / "plots" / "timelines.ppm" : fs::path(output);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  plot_timelines(timelines, out);
  std::cout << "plot-timeline: " << timelines.size() << " videos -> " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cataract-surgery phase relevance detection pipeline"};
  app.require_subcommand(1);

  std::string config_path, run_dir_flag, stamp_flag;
  std::int64_t seed_flag = -1;
  int workers_flag = 0;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed_flag, "Sampling/training seed (overrides config)");
  app.add_option("--run-dir", run_dir_flag, "Run directory (overrides config)");
  app.add_option("--workers", workers_flag, "Worker threads (overrides config)");
  app.add_option("--stamp", stamp_flag, "Fixed run stamp instead of a timestamp");

  auto* mk = app.add_subcommand("make-fixtures", "Generate synthetic videos with ground truth");
  std::string mk_out;
  int mk_videos = 6, mk_phases = 4, mk_frame = 64;
  mk->add_option("--out", mk_out, "Output directory (default: fixtures dir)");
  mk->add_option("--videos", mk_videos, "Number of videos");
  mk->add_option("--phases", mk_phases, "Number of relevant phases to plant (1-4)");
  mk->add_option("--frame-size", mk_frame, "Square frame size in pixels");

  auto* bd = app.add_subcommand("build-dataset", "Build frame and clip manifests");

  auto* ti = app.add_subcommand("train-idle", "Train the idle/action classifier");

  auto* tr = app.add_subcommand("train-relevance", "Train one-vs-rest relevance classifiers");
  std::string tr_phase;
  tr->add_option("--phase", tr_phase, "rhexis|phaco|irraspvisc|lensimpl|all")->required();

  auto* ed = app.add_subcommand("eval-detector", "Evaluate the cornea detector (AP/mAP)");
  std::string ed_split = "test";
  double ed_from = -1, ed_to = -1, ed_step = -1;
  ed->add_option("--iou-from", ed_from, "Lowest IoU threshold");
  ed->add_option("--iou-to", ed_to, "Highest IoU threshold");
  ed->add_option("--iou-step", ed_step, "IoU threshold step");
  ed->add_option("--split", ed_split, "test|all");

  auto* inf = app.add_subcommand("infer", "Run the full pipeline on test videos");
  std::string inf_video;
  inf->add_option("--video", inf_video, "Single video id (default: all test videos)");

  auto* ev = app.add_subcommand("evaluate", "Score inferred timelines against ground truth");

  auto* pt = app.add_subcommand("plot-timeline", "Render timeline bars as an image");
  std::string pt_input, pt_out;
  pt->add_option("--input", pt_input, "Timeline file (default: all inferred timelines)");
  pt->add_option("--out", pt_out, "Output image path (.ppm)");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (!run_dir_flag.empty()) cfg.run_dir = run_dir_flag;
    if (workers_flag > 0) cfg.workers = workers_flag;
    if (!stamp_flag.empty()) cfg.stamp = stamp_flag;
    if (seed_flag >= 0) cfg.seed = static_cast<std::uint64_t>(seed_flag);
    if (const char* env_seed = std::getenv("PHASELOCAL_SEED"))
      cfg.seed = static_cast<std::uint64_t>(parse_long(env_seed, "PHASELOCAL_SEED"));
    if (ed_from > 0) cfg.iou_from = ed_from;
    if (ed_to > 0) cfg.iou_to = ed_to;
    if (ed_step > 0) cfg.iou_step = ed_step;
    validate(cfg);

    if (mk->parsed()) return cmd_make_fixtures(cfg, mk_out, mk_videos, mk_phases, mk_frame);
    if (bd->parsed()) return cmd_build_dataset(cfg);
    if (ti->parsed()) return cmd_train_idle(cfg);
    if (tr->parsed()) return cmd_train_relevance(cfg, tr_phase);
    if (ed->parsed()) return cmd_eval_detector(cfg, ed_split);
    if (inf->parsed()) return cmd_infer(cfg, inf_video);
    if (ev->parsed()) return cmd_evaluate(cfg);
    if (pt->parsed()) return cmd_plot_timeline(cfg, pt_input, pt_out);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
