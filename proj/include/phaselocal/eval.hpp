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

#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "phaselocal/image.hpp"
#include "phaselocal/timeline.hpp"
#include "phaselocal/util.hpp"

namespace phaselocal {

// Rows are truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> class_names)
      : classes_(std::move(class_names)),
        counts_(classes_.size() * classes_.size(), 0) {
    check(!classes_.empty(), "confusion matrix needs at least one class");
  }

  void add(std::size_t truth, std::size_t predicted, long n = 1) {
    check(truth < classes_.size() && predicted < classes_.size(),
          "confusion matrix index out of range");
    counts_[truth * classes_.size() + predicted] += n;
  }

  long at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_.size() + predicted];
  }

  std::size_t n_classes() const { return classes_.size(); }
  const std::vector<std::string>& classes() const { return classes_; }

  long total() const {
    long t = 0;
    for (long v : counts_) t += v;
    return t;
  }

 private:
  std::vector<std::string> classes_;
  std::vector<long> counts_;
};

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  long support = 0;
};

struct ClassificationReport {
  std::vector<std::string> classes;
  std::vector<ClassMetrics> per_class;
  ClassMetrics macro;  // unweighted means; support = total samples
  double accuracy = 0;
  std::vector<std::string> warnings;  // zero-denominator notes
};

// precision = TP/(TP+FP), recall = TP/(TP+FN), F1 their harmonic mean,
// accuracy = trace/total. Zero denominators yield 0 with a recorded warning.
inline ClassificationReport metrics(const ConfusionMatrix& cm) {
  check(cm.total() > 0, "confusion matrix is empty");
  ClassificationReport report;
  report.classes = cm.classes();
  const std::size_t n = cm.n_classes();
  long trace = 0;
  double macro_p = 0, macro_r = 0, macro_f = 0;
  for (std::size_t c = 0; c < n; ++c) {
    long tp = cm.at(c, c), fp = 0, fn = 0;
    for (std::size_t other = 0; other < n; ++other) {
      if (other == c) continue;
      fp += cm.at(other, c);
      fn += cm.at(c, other);
    }
    trace += tp;
    ClassMetrics m;
    m.support = tp + fn;
    if (tp + fp > 0) {
      m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    } else {
      report.warnings.push_back("class " + cm.classes()[c] +
                                ": no predictions, precision reported as 0");
    }
    if (tp + fn > 0) {
      m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    } else {
      report.warnings.push_back("class " + cm.classes()[c] +
                                ": no samples, recall reported as 0");
    }
    if (m.precision + m.recall > 0)
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    macro_p += m.precision;
    macro_r += m.recall;
    macro_f += m.f1;
    report.per_class.push_back(m);
  }
  report.macro.precision = macro_p / static_cast<double>(n);
  report.macro.recall = macro_r / static_cast<double>(n);
  report.macro.f1 = macro_f / static_cast<double>(n);
  report.macro.support = cm.total();
  report.accuracy = static_cast<double>(trace) / static_cast<double>(cm.total());
  return report;
}

// --- report rendering -----------------------------------------------------------

// Per-class table in the style of the idle/action report: one row per class
// plus the macro average, values rounded half-up to two decimals.
inline std::string render_classification_report(const ClassificationReport& report) {
  std::size_t name_w = 9;  // "Macro avg"
  for (const std::string& c : report.classes) name_w = std::max(name_w, c.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "Class"
     << std::right << std::setw(10) << "Precision" << std::setw(8) << "Recall"
     << std::setw(10) << "F1-Score" << std::setw(9) << "Support" << '\n';
  for (std::size_t c = 0; c < report.classes.size(); ++c) {
    const ClassMetrics& m = report.per_class[c];
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << report.classes[c]
       << std::right << std::setw(10) << format_fixed2(m.precision)
       << std::setw(8) << format_fixed2(m.recall)
       << std::setw(10) << format_fixed2(m.f1)
       << std::setw(9) << m.support << '\n';
  }
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "Macro avg"
     << std::right << std::setw(10) << format_fixed2(report.macro.precision)
     << std::setw(8) << format_fixed2(report.macro.recall)
     << std::setw(10) << format_fixed2(report.macro.f1)
     << std::setw(9) << report.macro.support << '\n';
  os << "Accuracy " << format_fixed2(report.accuracy) << '\n';
  return os.str();
}

// Cross-model comparison table: one row per model, a Precision/Recall/
// F1-Score column group per phase.
inline std::string render_report(
    const std::vector<std::pair<std::string, std::map<std::string, ClassMetrics>>>& rows,
    const std::vector<std::string>& phase_order) {
  check(!rows.empty(), "render_report: no rows");
  std::size_t name_w = 7;  // "Network"
  for (const auto& [name, by_phase] : rows) name_w = std::max(name_w, name.size());
  const int group_w = 24;  // three 8-wide numeric columns

  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "Network";
  for (const std::string& phase : phase_order) {
    std::string centered = phase;
    if (static_cast<int>(centered.size()) < group_w) {
      const int pad = group_w - static_cast<int>(centered.size());
      centered = std::string(static_cast<std::size_t>(pad / 2), ' ') + centered +
                 std::string(static_cast<std::size_t>(pad - pad / 2), ' ');
    }
    os << centered;
  }
  os << '\n' << std::setw(static_cast<int>(name_w) + 2) << "";
  for (std::size_t i = 0; i < phase_order.size(); ++i)
    os << std::right << std::setw(8) << "Prec" << std::setw(8) << "Rec"
       << std::setw(8) << "F1";
  os << '\n';
  for (const auto& [name, by_phase] : rows) {
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << name;
    for (const std::string& phase : phase_order) {
      auto it = by_phase.find(phase);
      check(it != by_phase.end(), "render_report: row '" + name +
                                      "' is missing phase '" + phase + "'");
      os << std::right << std::setw(8) << format_fixed2(it->second.precision)
         << std::setw(8) << format_fixed2(it->second.recall)
         << std::setw(8) << format_fixed2(it->second.f1);
    }
    os << '\n';
  }
  return os.str();
}

// Machine-readable companion: `class,precision,recall,f1,support` rows plus
// macro and accuracy lines. Written values carry full precision.
inline void write_report_csv(std::ostream& os, const ClassificationReport& report) {
  os << "class,precision,recall,f1,support\n";
  for (std::size_t c = 0; c < report.classes.size(); ++c) {
    const ClassMetrics& m = report.per_class[c];
    os << report.classes[c] << ',' << format_double(m.precision) << ','
       << format_double(m.recall) << ',' << format_double(m.f1) << ',' << m.support << '\n';
  }
  os << "macro," << format_double(report.macro.precision) << ','
     << format_double(report.macro.recall) << ',' << format_double(report.macro.f1)
     << ',' << report.macro.support << '\n';
  os << "accuracy," << format_double(report.accuracy) << ",,,\n";
}

// --- timeline plots -------------------------------------------------------------

namespace detail {

inline std::array<float, 3> label_color(PhaseLabel l) {
  switch (l) {
    case PhaseLabel::Idle: return {40, 40, 48};
    case PhaseLabel::Rest: return {150, 150, 150};
    case PhaseLabel::Rhexis: return {220, 60, 50};
    case PhaseLabel::Phaco: return {60, 190, 80};
    case PhaseLabel::IrrAspVisc: return {70, 110, 235};
    case PhaseLabel::LensImpl: return {235, 205, 60};
  }
  return {0, 0, 0};
}

}  // namespace detail

// Horizontal bar raster, one row band per timeline. Columns map to frame
// indices (nearest-index sampling when a video exceeds max_width), so the
// output is deterministic for fixed input.
inline void plot_timelines(const std::vector<Timeline>& timelines,
                           const std::filesystem::path& path, int max_width = 1024,
                           int band_height = 18, int separator = 2) {
  check(!timelines.empty(), "plot_timelines: nothing to plot");
  long longest = 0;
  for (const Timeline& t : timelines) {
    validate(t);
    longest = std::max(longest, t.frame_count());
  }
  const int width = static_cast<int>(std::min<long>(longest, max_width));
  const int height = static_cast<int>(timelines.size()) * (band_height + separator) - separator;
  Image img(width, height, 3, 12.f);
  // All rows share one frame axis; videos shorter than the longest leave the
  // tail of their band as background.
  for (std::size_t row = 0; row < timelines.size(); ++row) {
    const Timeline& t = timelines[row];
    const int y0 = static_cast<int>(row) * (band_height + separator);
    for (int x = 0; x < width; ++x) {
      const long frame = static_cast<long>((static_cast<double>(x) + 0.5) *
                                           static_cast<double>(longest) /
                                           static_cast<double>(width));
      if (frame >= t.frame_count()) continue;
      const auto [r, g, b] = detail::label_color(t.labels[static_cast<std::size_t>(frame)]);
      for (int y = y0; y < y0 + band_height; ++y) {
        img.at(y, x, 0) = r;
        img.at(y, x, 1) = g;
        img.at(y, x, 2) = b;
      }
    }
  }
  write_ppm(path, img);
}

inline void plot_timeline(const Timeline& timeline, const std::filesystem::path& path) {
  plot_timelines({timeline}, path);
}

}  // namespace phaselocal
