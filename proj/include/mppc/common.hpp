// Copyright 2026 The MPPC Authors
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

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace mppc {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kDefaultGravity = 9.81;

constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

enum class ErrorCode {
  kInvalidArgument,
  kOverlappingObstacles,
  kInvertedBounds,
  kOutOfExtent,
  kUnknownId,
  kDuplicateId,
  kUnreachable,
  kDegenerateAngle,
  kNonpositiveStroke,
  kNoForwardProgress,
  kWrongPhase,
  kParseError,
  kUnsupportedFormat,
  kSessionClosed,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kOverlappingObstacles: return "OverlappingObstacles";
    case ErrorCode::kInvertedBounds: return "InvertedBounds";
    case ErrorCode::kOutOfExtent: return "OutOfExtent";
    case ErrorCode::kUnknownId: return "UnknownId";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kUnreachable: return "Unreachable";
    case ErrorCode::kDegenerateAngle: return "DegenerateAngle";
    case ErrorCode::kNonpositiveStroke: return "NonpositiveStroke";
    case ErrorCode::kNoForwardProgress: return "NoForwardProgress";
    case ErrorCode::kWrongPhase: return "WrongPhase";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kSessionClosed: return "SessionClosed";
  }
  return "Unknown";
}

// All recoverable failures of the library surface as this exception; the
// code lets callers (CLI exit codes, wire rejections) branch without parsing
// the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

inline bool all_finite(std::initializer_list<double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace mppc
