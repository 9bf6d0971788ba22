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

#include "blidar/box3d.hpp"

#include <algorithm>

namespace blidar {

namespace {

constexpr double kCollinearEps = 1e-9;

// Local bottom-face corner offsets, counter-clockwise from front-left.
constexpr double kCornerSign[4][2] = {
    {+1.0, +1.0},  // front-left
    {-1.0, +1.0},  // rear-left
    {-1.0, -1.0},  // rear-right
    {+1.0, -1.0},  // front-right
};

double cross2(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

std::array<Vec3, 8> Box3D::corners() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  std::array<Vec3, 8> out;
  for (int i = 0; i < 4; ++i) {
    const double lx = kCornerSign[i][0] * 0.5 * length;
    const double ly = kCornerSign[i][1] * 0.5 * width;
    const double wx = center.x + c * lx - s * ly;
    const double wy = center.y + s * lx + c * ly;
    out[i] = {wx, wy, center.z - 0.5 * height};
    out[i + 4] = {wx, wy, center.z + 0.5 * height};
  }
  return out;
}

std::array<Vec2, 4> Box3D::footprint() const {
  const auto cs = corners();
  return {Vec2{cs[0].x, cs[0].y}, Vec2{cs[1].x, cs[1].y},
          Vec2{cs[2].x, cs[2].y}, Vec2{cs[3].x, cs[3].y}};
}

double polygon_area(const std::vector<Vec2>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % n];
    acc += p.x * q.y - q.x * p.y;
  }
  return 0.5 * acc;
}

std::vector<Vec2> convex_intersect(const std::vector<Vec2>& subject,
                                   const std::vector<Vec2>& clip) {
  std::vector<Vec2> output = subject;
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % m];
    std::vector<Vec2> input;
    input.swap(output);
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& cur = input[i];
      const Vec2& nxt = input[(i + 1) % n];
      const double dc = cross2(a, b, cur);
      const double dn = cross2(a, b, nxt);
      const bool cur_in = dc >= -kCollinearEps;
      const bool nxt_in = dn >= -kCollinearEps;
      if (cur_in) output.push_back(cur);
      if (cur_in != nxt_in) {
        const double t = dc / (dc - dn);
        output.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
      }
    }
  }
  return output;
}

double iou_bev(const Box3D& a, const Box3D& b) {
  const auto fa = a.footprint();
  const auto fb = b.footprint();
  const std::vector<Vec2> pa(fa.begin(), fa.end());
  const std::vector<Vec2> pb(fb.begin(), fb.end());
  const double inter = std::max(0.0, polygon_area(convex_intersect(pa, pb)));
  const double uni = a.bev_area() + b.bev_area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const auto fa = a.footprint();
  const auto fb = b.footprint();
  const std::vector<Vec2> pa(fa.begin(), fa.end());
  const std::vector<Vec2> pb(fb.begin(), fb.end());
  const double inter_bev = std::max(0.0, polygon_area(convex_intersect(pa, pb)));
  const double dz = std::min(a.z_max(), b.z_max()) - std::max(a.z_min(), b.z_min());
  const double inter = inter_bev * std::max(0.0, dz);
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool segment_intersects_box(const Vec3& from, const Vec3& to, const Box3D& box) {
  // Work in the box frame, then run a slab test on the centered AABB.
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const auto to_local = [&](const Vec3& p) -> Vec3 {
    const double dx = p.x - box.center.x;
    const double dy = p.y - box.center.y;
    return {c * dx + s * dy, -s * dx + c * dy, p.z - box.center.z};
  };
  const Vec3 p0 = to_local(from);
  const Vec3 p1 = to_local(to);
  const double half[3] = {0.5 * box.length, 0.5 * box.width, 0.5 * box.height};
  const double o[3] = {p0.x, p0.y, p0.z};
  const double d[3] = {p1.x - p0.x, p1.y - p0.y, p1.z - p0.z};

  constexpr double kEps = 1e-9;
  double t_enter = 0.0 + kEps;  // open segment: endpoints excluded
  double t_exit = 1.0 - kEps;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (o[k] < -half[k] || o[k] > half[k]) return false;
      continue;
    }
    double t0 = (-half[k] - o[k]) / d[k];
    double t1 = (half[k] - o[k]) / d[k];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    if (t_enter >= t_exit - kEps) return false;
  }
  return true;
}

}  // namespace blidar
