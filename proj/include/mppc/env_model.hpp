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

// Planar parkour terrain: block obstacles on flat ground, restricted landing
// areas and the landing margins that surround every obstacle edge.

#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mppc/common.hpp"

namespace mppc {

inline constexpr double kDefaultMargin = 0.05;

struct Obstacle {
  std::string id;
  double A = 0.0;  // front
  double B = 0.0;  // back
  double H = 0.0;  // height
  bool operator==(const Obstacle&) const = default;
};

struct RestrictedArea {
  std::string id;
  double a = 0.0;
  double b = 0.0;
  bool operator==(const RestrictedArea&) const = default;
};

struct Parkour {
  std::vector<Obstacle> obstacles;
  std::vector<RestrictedArea> areas;
  double margin_h = kDefaultMargin;
  double margin_v = kDefaultMargin;
  double x_min = 0.0;
  double x_max = 10.0;
  bool operator==(const Parkour&) const = default;
};

// Maximal x-range of constant terrain height on which a landing is allowed.
struct LandingInterval {
  double lo = 0.0;
  double hi = 0.0;
  double z = 0.0;
  bool operator==(const LandingInterval&) const = default;
};

// A piece of the piecewise-constant height profile. `obstacle` is the index
// into the sorted obstacle list, or -1 for ground.
struct TerrainPiece {
  double lo = 0.0;
  double hi = 0.0;
  double z = 0.0;
  int obstacle = -1;
};

// Parkour that passed validation: obstacles sorted by front position,
// pairwise disjoint, everything inside the course extent. Immutable.
class ValidatedParkour {
 public:
  const Parkour& data() const { return data_; }
  const Parkour* operator->() const { return &data_; }
  const std::vector<Obstacle>& obstacles() const { return data_.obstacles; }
  const std::vector<RestrictedArea>& areas() const { return data_.areas; }

  std::optional<std::size_t> find_obstacle(const std::string& id) const {
    for (std::size_t i = 0; i < data_.obstacles.size(); ++i) {
      if (data_.obstacles[i].id == id) return i;
    }
    return std::nullopt;
  }

  bool operator==(const ValidatedParkour&) const = default;

 private:
  friend ValidatedParkour validate(Parkour parkour);
  explicit ValidatedParkour(Parkour p) : data_(std::move(p)) {}
  Parkour data_;
};

inline ValidatedParkour validate(Parkour parkour) {
  if (!all_finite({parkour.x_min, parkour.x_max, parkour.margin_h, parkour.margin_v})) {
    throw Error(ErrorCode::kInvalidArgument, "course extent and margins must be finite");
  }
  if (!(parkour.x_min < parkour.x_max)) {
    throw Error(ErrorCode::kInvertedBounds, "course extent x_min >= x_max");
  }
  if (parkour.margin_h < 0.0 || parkour.margin_v < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "margins must be non-negative");
  }
  for (std::size_t i = 0; i < parkour.obstacles.size(); ++i) {
    auto& o = parkour.obstacles[i];
    if (o.id.empty()) o.id = "obstacle" + std::to_string(i);
    if (!all_finite({o.A, o.B, o.H})) {
      throw Error(ErrorCode::kInvalidArgument, "obstacle '" + o.id + "' has non-finite values");
    }
    if (!(o.A < o.B)) {
      throw Error(ErrorCode::kInvertedBounds, "obstacle '" + o.id + "' has A >= B");
    }
    if (!(o.H > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "obstacle '" + o.id + "' has non-positive height");
    }
    if (o.A < parkour.x_min || o.B > parkour.x_max) {
      throw Error(ErrorCode::kOutOfExtent, "obstacle '" + o.id + "' leaves the course extent");
    }
  }
  for (std::size_t i = 0; i < parkour.areas.size(); ++i) {
    auto& r = parkour.areas[i];
    if (r.id.empty()) r.id = "area" + std::to_string(i);
    if (!all_finite({r.a, r.b})) {
      throw Error(ErrorCode::kInvalidArgument, "restricted area '" + r.id + "' has non-finite values");
    }
    if (!(r.a < r.b)) {
      throw Error(ErrorCode::kInvertedBounds, "restricted area '" + r.id + "' has a >= b");
    }
    if (r.a < parkour.x_min || r.b > parkour.x_max) {
      throw Error(ErrorCode::kOutOfExtent, "restricted area '" + r.id + "' leaves the course extent");
    }
  }
  auto check_unique = [](const auto& items, const char* what) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      for (std::size_t j = i + 1; j < items.size(); ++j) {
        if (items[i].id == items[j].id) {
          throw Error(ErrorCode::kDuplicateId, std::string(what) + " id '" + items[i].id + "' is not unique");
        }
      }
    }
  };
  check_unique(parkour.obstacles, "obstacle");
  check_unique(parkour.areas, "restricted area");

  std::stable_sort(parkour.obstacles.begin(), parkour.obstacles.end(),
                   [](const Obstacle& l, const Obstacle& r) { return l.A < r.A; });
  std::stable_sort(parkour.areas.begin(), parkour.areas.end(),
                   [](const RestrictedArea& l, const RestrictedArea& r) { return l.a < r.a; });
  // Closed tops: touching obstacles share a point and count as overlapping.
  for (std::size_t i = 1; i < parkour.obstacles.size(); ++i) {
    const auto& prev = parkour.obstacles[i - 1];
    const auto& cur = parkour.obstacles[i];
    if (cur.A <= prev.B) {
      throw Error(ErrorCode::kOverlappingObstacles,
                  "obstacle '" + cur.id + "' overlaps obstacle '" + prev.id + "'");
    }
  }
  return ValidatedParkour(std::move(parkour));
}

inline constexpr double kExtentTolerance = 1e-9;

inline bool within_extent(const ValidatedParkour& p, double x) {
  return x >= p->x_min - kExtentTolerance && x <= p->x_max + kExtentTolerance;
}

/// Terrain height at `x`. Obstacle tops are closed intervals, so a point on
/// an edge reads the obstacle height.
inline double locate(const ValidatedParkour& p, double x) {
  if (!std::isfinite(x) || !within_extent(p, x)) {
    throw Error(ErrorCode::kOutOfExtent, "x = " + std::to_string(x) + " is outside the course");
  }
  for (const auto& o : p.obstacles()) {
    if (x < o.A) break;
    if (x <= o.B) return o.H;
  }
  return 0.0;
}

/// The height profile over the full extent, ordered by x.
inline std::vector<TerrainPiece> terrain_pieces(const ValidatedParkour& p) {
  std::vector<TerrainPiece> pieces;
  double cursor = p->x_min;
  for (std::size_t k = 0; k < p.obstacles().size(); ++k) {
    const auto& o = p.obstacles()[k];
    if (o.A > cursor) pieces.push_back({cursor, o.A, 0.0, -1});
    pieces.push_back({o.A, o.B, o.H, static_cast<int>(k)});
    cursor = o.B;
  }
  if (p->x_max > cursor) pieces.push_back({cursor, p->x_max, 0.0, -1});
  return pieces;
}

/// Forbidden landing zones as open intervals: half the horizontal margin on
/// both sides of every obstacle edge plus every restricted area.
inline std::vector<std::pair<double, double>> forbidden_landing_zones(const ValidatedParkour& p) {
  std::vector<std::pair<double, double>> zones;
  const double half = 0.5 * p->margin_h;
  if (half > 0.0) {
    for (const auto& o : p.obstacles()) {
      zones.emplace_back(o.A - half, o.A + half);
      zones.emplace_back(o.B - half, o.B + half);
    }
  }
  for (const auto& r : p.areas()) zones.emplace_back(r.a, r.b);
  std::sort(zones.begin(), zones.end());
  return zones;
}

/// `slack` shrinks every forbidden zone, so points within `slack` of a zone
/// boundary still count as permitted.
inline bool landing_permitted(const ValidatedParkour& p, double x, double slack = 0.0) {
  for (const auto& [lo, hi] : forbidden_landing_zones(p)) {
    if (x > lo + slack && x < hi - slack) return false;
  }
  return within_extent(p, x);
}

inline constexpr double kMinIntervalLength = 1e-9;

inline std::vector<LandingInterval> landing_intervals(const ValidatedParkour& p, double lo, double hi) {
  if (!(lo < hi)) throw Error(ErrorCode::kInvertedBounds, "landing query needs lo < hi");
  if (!within_extent(p, lo) || !within_extent(p, hi)) {
    throw Error(ErrorCode::kOutOfExtent, "landing query leaves the course");
  }
  const auto zones = forbidden_landing_zones(p);
  std::vector<LandingInterval> out;
  for (const auto& piece : terrain_pieces(p)) {
    double start = std::max(piece.lo, lo);
    const double end = std::min(piece.hi, hi);
    if (end - start < kMinIntervalLength) continue;
    // Zones are sorted by their lower end, so one sweep carves the piece.
    for (const auto& [zl, zh] : zones) {
      if (zh <= start) continue;
      if (zl >= end) break;
      if (zl - start >= kMinIntervalLength) out.push_back({start, zl, piece.z});
      start = std::max(start, zh);
      if (end - start < kMinIntervalLength) break;
    }
    if (end - start >= kMinIntervalLength) out.push_back({start, end, piece.z});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runtime updates.

struct AddObstacle {
  Obstacle obstacle;
  bool operator==(const AddObstacle&) const = default;
};
struct MoveObstacle {
  std::string id;
  double A = 0.0;
  double B = 0.0;
  double H = 0.0;
  bool operator==(const MoveObstacle&) const = default;
};
struct RemoveObstacle {
  std::string id;
  bool operator==(const RemoveObstacle&) const = default;
};
// Adds the area, or replaces the one with the same id.
struct SetRestrictedArea {
  RestrictedArea area;
  bool operator==(const SetRestrictedArea&) const = default;
};
struct RemoveRestrictedArea {
  std::string id;
  bool operator==(const RemoveRestrictedArea&) const = default;
};

using EnvironmentUpdate =
    std::variant<AddObstacle, MoveObstacle, RemoveObstacle, SetRestrictedArea, RemoveRestrictedArea>;

namespace detail {
template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

inline std::size_t require_obstacle(const Parkour& p, const std::string& id) {
  for (std::size_t i = 0; i < p.obstacles.size(); ++i) {
    if (p.obstacles[i].id == id) return i;
  }
  throw Error(ErrorCode::kUnknownId, "no obstacle with id '" + id + "'");
}
}  // namespace detail

/// Applies `update` and re-validates. The input is never modified; on error
/// the caller still holds the previous course.
inline ValidatedParkour apply_update(const ValidatedParkour& parkour, const EnvironmentUpdate& update) {
  Parkour next = parkour.data();
  std::visit(
      detail::Overloaded{
          [&](const AddObstacle& u) {
            if (u.obstacle.id.empty()) throw Error(ErrorCode::kInvalidArgument, "new obstacle needs an id");
            for (const auto& o : next.obstacles) {
              if (o.id == u.obstacle.id) {
                throw Error(ErrorCode::kDuplicateId, "obstacle id '" + u.obstacle.id + "' already exists");
              }
            }
            next.obstacles.push_back(u.obstacle);
          },
          [&](const MoveObstacle& u) {
            auto& o = next.obstacles[detail::require_obstacle(next, u.id)];
            o.A = u.A;
            o.B = u.B;
            o.H = u.H;
          },
          [&](const RemoveObstacle& u) {
            next.obstacles.erase(next.obstacles.begin() +
                                 static_cast<std::ptrdiff_t>(detail::require_obstacle(next, u.id)));
          },
          [&](const SetRestrictedArea& u) {
            if (u.area.id.empty()) throw Error(ErrorCode::kInvalidArgument, "restricted area needs an id");
            auto it = std::find_if(next.areas.begin(), next.areas.end(),
                                   [&](const RestrictedArea& r) { return r.id == u.area.id; });
            if (it == next.areas.end()) {
              next.areas.push_back(u.area);
            } else {
              *it = u.area;
            }
          },
          [&](const RemoveRestrictedArea& u) {
            auto it = std::find_if(next.areas.begin(), next.areas.end(),
                                   [&](const RestrictedArea& r) { return r.id == u.id; });
            if (it == next.areas.end()) {
              throw Error(ErrorCode::kUnknownId, "no restricted area with id '" + u.id + "'");
            }
            next.areas.erase(it);
          },
      },
      update);
  return validate(std::move(next));
}

/// The update that undoes `update` when applied to apply_update(before, update).
inline EnvironmentUpdate inverse_update(const ValidatedParkour& before, const EnvironmentUpdate& update) {
  return std::visit(
      detail::Overloaded{
          [&](const AddObstacle& u) -> EnvironmentUpdate { return RemoveObstacle{u.obstacle.id}; },
          [&](const MoveObstacle& u) -> EnvironmentUpdate {
            const auto& o = before.obstacles()[detail::require_obstacle(before.data(), u.id)];
            return MoveObstacle{o.id, o.A, o.B, o.H};
          },
          [&](const RemoveObstacle& u) -> EnvironmentUpdate {
            return AddObstacle{before.obstacles()[detail::require_obstacle(before.data(), u.id)]};
          },
          [&](const SetRestrictedArea& u) -> EnvironmentUpdate {
            for (const auto& r : before.areas()) {
              if (r.id == u.area.id) return SetRestrictedArea{r};
            }
            return RemoveRestrictedArea{u.area.id};
          },
          [&](const RemoveRestrictedArea& u) -> EnvironmentUpdate {
            for (const auto& r : before.areas()) {
              if (r.id == u.id) return SetRestrictedArea{r};
            }
            throw Error(ErrorCode::kUnknownId, "no restricted area with id '" + u.id + "'");
          },
      },
      update);
}

}  // namespace mppc
