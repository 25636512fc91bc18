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

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "phaselocal/eval.hpp"
#include "phaselocal/rng.hpp"

using namespace phaselocal;

namespace {

// Recount oracle: per-class tallies straight from the (truth, prediction)
// pairs.
struct Tally {
  long tp = 0, fp = 0, fn = 0;
};

std::vector<Tally> tally_pairs(const std::vector<std::pair<int, int>>& pairs, int n_classes) {
  std::vector<Tally> tallies(static_cast<std::size_t>(n_classes));
  for (const auto& [truth, pred] : pairs) {
    if (truth == pred) {
      ++tallies[static_cast<std::size_t>(truth)].tp;
    } else {
      ++tallies[static_cast<std::size_t>(pred)].fp;
      ++tallies[static_cast<std::size_t>(truth)].fn;
    }
  }
  return tallies;
}

}  // namespace

TEST_CASE("metrics on a perfect diagonal are all 1", "[eval]") {
  ConfusionMatrix cm({"a", "b", "c"});
  cm.add(0, 0, 10);
  cm.add(1, 1, 4);
  cm.add(2, 2, 6);
  const ClassificationReport r = metrics(cm);
  for (const ClassMetrics& m : r.per_class) {
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
  }
  CHECK(r.accuracy == 1.0);
  CHECK(r.macro.f1 == 1.0);
  CHECK(r.warnings.empty());
}

TEST_CASE("metrics match hand arithmetic on a binary matrix", "[eval]") {
  // rows truth, cols prediction: [[8,2],[1,9]]
  ConfusionMatrix cm({"neg", "pos"});
  cm.add(0, 0, 8);
  cm.add(0, 1, 2);
  cm.add(1, 0, 1);
  cm.add(1, 1, 9);
  const ClassificationReport r = metrics(cm);
  CHECK(r.per_class[1].precision == 9.0 / 11.0);
  CHECK(r.per_class[1].recall == 0.9);
  const double f1 = 2.0 * (9.0 / 11.0 * 0.9) / (9.0 / 11.0 + 0.9);
  CHECK(r.per_class[1].f1 == Catch::Approx(f1).margin(1e-15));
  CHECK(r.accuracy == 17.0 / 20.0);
}

TEST_CASE("macro averaging rounds half-up at two decimals", "[eval]") {
  CHECK(format_fixed2((0.93 + 0.94) / 2.0) == "0.94");
  CHECK(format_fixed2(0.934) == "0.93");
  CHECK(format_fixed2(0.995) == "1.00");
  CHECK(format_fixed2(0.0) == "0.00");
}

TEST_CASE("metrics equal a per-sample recount oracle", "[eval]") {
  Rng rng(2026);
  const int n_classes = 4;
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < 1000; ++i)
    pairs.emplace_back(static_cast<int>(rng.below(n_classes)),
                       static_cast<int>(rng.below(n_classes)));
  ConfusionMatrix cm({"c0", "c1", "c2", "c3"});
  for (const auto& [t, p] : pairs) cm.add(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  const ClassificationReport r = metrics(cm);

  const auto tallies = tally_pairs(pairs, n_classes);
  long correct = 0;
  for (int c = 0; c < n_classes; ++c) {
    const Tally& t = tallies[static_cast<std::size_t>(c)];
    correct += t.tp;
    const double precision = t.tp + t.fp > 0 ? static_cast<double>(t.tp) / (t.tp + t.fp) : 0.0;
    const double recall = t.tp + t.fn > 0 ? static_cast<double>(t.tp) / (t.tp + t.fn) : 0.0;
    CHECK(r.per_class[static_cast<std::size_t>(c)].precision == precision);
    CHECK(r.per_class[static_cast<std::size_t>(c)].recall == recall);
    const double f1 =
        precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    CHECK(r.per_class[static_cast<std::size_t>(c)].f1 == f1);
    CHECK(r.per_class[static_cast<std::size_t>(c)].support == t.tp + t.fn);
  }
  CHECK(r.accuracy == static_cast<double>(correct) / 1000.0);
}

TEST_CASE("accuracy equals micro-averaged recall", "[eval]") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    ConfusionMatrix cm({"a", "b", "c"});
    long total = 0, tp_sum = 0, support_sum = 0;
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t p = 0; p < 3; ++p) {
        const long n = static_cast<long>(rng.below(20));
        cm.add(t, p, n);
        total += n;
      }
    if (total == 0) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      tp_sum += cm.at(c, c);
      for (std::size_t p = 0; p < 3; ++p) support_sum += cm.at(c, p);
    }
    const double micro_recall = static_cast<double>(tp_sum) / static_cast<double>(support_sum);
    CHECK(metrics(cm).accuracy == micro_recall);
  }
}

TEST_CASE("zero denominators report 0 with a warning", "[eval]") {
  ConfusionMatrix cm({"seen", "never_predicted"});
  cm.add(0, 0, 5);
  cm.add(1, 0, 3);  // class 1 never predicted
  const ClassificationReport r = metrics(cm);
  CHECK(r.per_class[1].precision == 0.0);
  REQUIRE(!r.warnings.empty());
  CHECK(r.warnings[0].find("never_predicted") != std::string::npos);

  ConfusionMatrix empty({"a"});
  CHECK_THROWS_AS(metrics(empty), std::invalid_argument);
}

TEST_CASE("classification report renders and accuracy line parses back", "[eval]") {
  ConfusionMatrix cm({"Action", "Idle"});
  cm.add(0, 0, 85);
  cm.add(0, 1, 15);
  cm.add(1, 1, 100);
  const ClassificationReport r = metrics(cm);
  const std::string text = render_classification_report(r);
  CHECK(text.find("Action") != std::string::npos);
  CHECK(text.find("Macro avg") != std::string::npos);
  CHECK(text.find("1.00") != std::string::npos);  // Action precision
  CHECK(text.find("0.85") != std::string::npos);  // Action recall
}

TEST_CASE("phase comparison table round-trips its rounded values", "[eval]") {
  std::vector<std::pair<std::string, std::map<std::string, ClassMetrics>>> rows;
  Rng rng(3);
  const std::vector<std::string> phases{"Rhexis", "Phaco", "LensImpl", "IrrAspVisc"};
  for (const std::string& model : {"CNN50", "GRU-FB", "BiLSTM-E2E"}) {
    std::map<std::string, ClassMetrics> by_phase;
    for (const std::string& phase : phases) {
      ClassMetrics m;
      m.precision = rng.unit();
      m.recall = rng.unit();
      m.f1 = rng.unit();
      by_phase[phase] = m;
    }
    rows.emplace_back(model, by_phase);
  }
  const std::string table = render_report(rows, phases);

  // Parse the numeric grid back and compare against the rounded inputs.
  std::istringstream is(table);
  std::string line;
  std::getline(is, line);  // phase header
  std::getline(is, line);  // column header
  for (const auto& [model, by_phase] : rows) {
    REQUIRE(std::getline(is, line));
    std::istringstream row(line);
    std::string name;
    row >> name;
    CHECK(name == model);
    for (const std::string& phase : phases) {
      std::string p, r, f;
      row >> p >> r >> f;
      CHECK(p == format_fixed2(by_phase.at(phase).precision));
      CHECK(r == format_fixed2(by_phase.at(phase).recall));
      CHECK(f == format_fixed2(by_phase.at(phase).f1));
    }
  }
}

TEST_CASE("csv report carries full precision and parses back", "[eval]") {
  ConfusionMatrix cm({"a", "b"});
  cm.add(0, 0, 7);
  cm.add(0, 1, 3);
  cm.add(1, 1, 5);
  const ClassificationReport r = metrics(cm);
  std::stringstream ss;
  write_report_csv(ss, r);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "class,precision,recall,f1,support");
  std::getline(ss, line);
  const auto fields = split(line, ',');
  REQUIRE(fields.size() == 5);
  CHECK(parse_double(fields[1], "precision") == r.per_class[0].precision);
  CHECK(parse_double(fields[2], "recall") == r.per_class[0].recall);
}

TEST_CASE("timeline plots are deterministic raster files", "[eval]") {
  const auto dir = std::filesystem::temp_directory_path() / "phaselocal_plot_test";
  std::filesystem::create_directories(dir);
  Timeline t{"v", 25.0, {}};
  Rng rng(4);
  for (int i = 0; i < 300; ++i)
    t.labels.push_back(kAllLabels[static_cast<std::size_t>(rng.below(6))]);
  Timeline t2 = t;
  t2.video_id = "w";
  t2.labels.resize(150);

  plot_timelines({t, t2}, dir / "plot_a.ppm");
  plot_timelines({t, t2}, dir / "plot_b.ppm");

  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  const std::string a = slurp(dir / "plot_a.ppm");
  CHECK(!a.empty());
  CHECK(a == slurp(dir / "plot_b.ppm"));
  CHECK(a.rfind("P6", 0) == 0);

  CHECK_THROWS(plot_timeline(t, dir / "missing_subdir" / "x.ppm"));
  std::filesystem::remove_all(dir);
}
