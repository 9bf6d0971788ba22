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

#include <array>
#include <cmath>
#include <vector>

namespace blidar {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

/// Oriented 3D box in the sensor frame (x forward, y left, z up).
///
/// Corner order is fixed and shared by the box encoding, decoding and
/// evaluation code: bottom face counter-clockwise (viewed from above)
/// starting at front-left, then the top face in the same order.
///   0 front-left-bottom   1 rear-left-bottom
///   2 rear-right-bottom   3 front-right-bottom
///   4..7 same, top face
struct Box3D {
  Vec3 center;
  double length = 0.0;  // extent along local x (heading)
  double width = 0.0;   // extent along local y
  double height = 0.0;  // extent along z
  double yaw = 0.0;     // radians about z, in (-pi, pi]

  std::array<Vec3, 8> corners() const;

  /// Bottom-face footprint, counter-clockwise.
  std::array<Vec2, 4> footprint() const;

  double volume() const { return length * width * height; }
  double bev_area() const { return length * width; }
  double z_min() const { return center.z - 0.5 * height; }
  double z_max() const { return center.z + 0.5 * height; }
};

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Area of a simple polygon (shoelace, positive for counter-clockwise).
double polygon_area(const std::vector<Vec2>& poly);

/// Intersection of two convex polygons (Sutherland-Hodgman clip of
/// `subject` against counter-clockwise `clip`). Collinearity epsilon 1e-9.
std::vector<Vec2> convex_intersect(const std::vector<Vec2>& subject,
                                   const std::vector<Vec2>& clip);

/// Bird's-eye-view IoU of the two box footprints, in [0, 1].
double iou_bev(const Box3D& a, const Box3D& b);

/// Oriented 3D IoU: BEV polygon intersection times vertical overlap, over
/// the union of the two volumes. Result in [0, 1].
double iou_3d(const Box3D& a, const Box3D& b);

/// True when the open segment from `from` to `to` passes through the box
/// interior. Touching an endpoint or grazing a face does not count.
bool segment_intersects_box(const Vec3& from, const Vec3& to, const Box3D& box);

}  // namespace blidar
