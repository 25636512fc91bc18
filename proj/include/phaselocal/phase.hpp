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
#include <stdexcept>
#include <string>
#include <string_view>

namespace phaselocal {

// Frame label vocabulary. Idle marks instrument-free spans; Rest is surgical
// action that belongs to none of the four medically relevant phases.
enum class PhaseLabel { Idle = 0, Rest, Rhexis, Phaco, IrrAspVisc, LensImpl };

inline constexpr std::array<PhaseLabel, 6> kAllLabels = {
    PhaseLabel::Idle,  PhaseLabel::Rest,       PhaseLabel::Rhexis,
    PhaseLabel::Phaco, PhaseLabel::IrrAspVisc, PhaseLabel::LensImpl};

inline constexpr std::array<PhaseLabel, 4> kRelevantPhases = {
    PhaseLabel::Rhexis, PhaseLabel::Phaco, PhaseLabel::IrrAspVisc,
    PhaseLabel::LensImpl};

inline constexpr bool is_relevant(PhaseLabel l) {
  return l == PhaseLabel::Rhexis || l == PhaseLabel::Phaco ||
         l == PhaseLabel::IrrAspVisc || l == PhaseLabel::LensImpl;
}

inline constexpr std::string_view to_string(PhaseLabel l) {
  switch (l) {
    case PhaseLabel::Idle: return "Idle";
    case PhaseLabel::Rest: return "Rest";
    case PhaseLabel::Rhexis: return "Rhexis";
    case PhaseLabel::Phaco: return "Phaco";
    case PhaseLabel::IrrAspVisc: return "IrrAspVisc";
    case PhaseLabel::LensImpl: return "LensImpl";
  }
  return "?";
}

inline PhaseLabel phase_from_string(std::string_view s) {
  for (PhaseLabel l : kAllLabels)
    if (s == to_string(l)) return l;
  throw std::invalid_argument("unknown phase label: '" + std::string(s) + "'");
}

// Lowercase task names used for checkpoints and CLI selection.
inline std::string task_name(PhaseLabel l) {
  std::string s(to_string(l));
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline PhaseLabel phase_from_task_name(std::string_view s) {
  for (PhaseLabel l : kRelevantPhases)
    if (s == task_name(l)) return l;
  throw std::invalid_argument("unknown relevance task: '" + std::string(s) +
                              "' (expected rhexis|phaco|irraspvisc|lensimpl)");
}

}  // namespace phaselocal
