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

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "phaselocal/image.hpp"
#include "phaselocal/util.hpp"

namespace phaselocal {

// Frame access abstraction. Decoded video files would implement the same
// interface; the shipped backend reads directories of numbered images, which
// keeps tests free of any codec dependency.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::vector<std::string> video_ids() const = 0;
  virtual long frame_count(const std::string& video_id) const = 0;
  virtual Image frame(const std::string& video_id, long index) const = 0;
};

inline std::string frame_file_name(long index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06ld.ppm", index);
  return buf;
}

// Layout: <root>/<video_id>/frame_000000.ppm ...
class DirectoryFrameSource final : public FrameSource {
 public:
  explicit DirectoryFrameSource(std::filesystem::path root) : root_(std::move(root)) {
    if (!std::filesystem::is_directory(root_))
      throw std::runtime_error("frame directory does not exist: " + root_.string());
    for (const auto& entry : std::filesystem::directory_iterator(root_)) {
      if (!entry.is_directory()) continue;
      long n = 0;
      while (std::filesystem::exists(entry.path() / frame_file_name(n))) ++n;
      if (n > 0) counts_[entry.path().filename().string()] = n;
    }
  }

  std::vector<std::string> video_ids() const override {
    std::vector<std::string> ids;
    for (const auto& [id, n] : counts_) ids.push_back(id);
    return ids;  // std::map keeps them sorted
  }

  long frame_count(const std::string& video_id) const override {
    auto it = counts_.find(video_id);
    if (it == counts_.end())
      throw std::runtime_error("unknown video '" + video_id + "' under " + root_.string());
    return it->second;
  }

  Image frame(const std::string& video_id, long index) const override {
    const long n = frame_count(video_id);
    check(index >= 0 && index < n, "frame index " + std::to_string(index) +
                                       " out of range for video '" + video_id + "'");
    return read_ppm(root_ / video_id / frame_file_name(index));
  }

 private:
  std::filesystem::path root_;
  std::map<std::string, long> counts_;
};

}  // namespace phaselocal
