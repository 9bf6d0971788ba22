// Copyright 2026 the blidar authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace blidar {

/// Bad configuration values (ranges, modes, file-level settings). CLI exit code 2.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or inconsistent data (files, records, scene specs). CLI exit code 3.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failures: non-finite values, degenerate geometry, undefined stats.
/// CLI exit code 4.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace blidar
