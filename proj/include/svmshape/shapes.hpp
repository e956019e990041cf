#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svmshape/error.hpp"
#include "svmshape/point_set.hpp"
#include "svmshape/rng.hpp"
#include "svmshape/textio.hpp"

namespace svmshape {

enum class ShapeKind { sphere, box, ellipsoid, torus, union_of_two, difference_of_two };

inline const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::box: return "box";
    case ShapeKind::ellipsoid: return "ellipsoid";
    case ShapeKind::torus: return "torus";
    case ShapeKind::union_of_two: return "union-of-two";
    case ShapeKind::difference_of_two: return "difference-of-two";
  }
  return "?";
}

inline ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "sphere") return ShapeKind::sphere;
  if (s == "box") return ShapeKind::box;
  if (s == "ellipsoid") return ShapeKind::ellipsoid;
  if (s == "torus") return ShapeKind::torus;
  if (s == "union-of-two") return ShapeKind::union_of_two;
  if (s == "difference-of-two") return ShapeKind::difference_of_two;
  throw Error(ErrorCode::invalid_spec, "unknown shape kind: " + s);
}

/// Analytic shape description in the normalized domain [-0.5, 0.5]^3.
///
/// Parameter layout:
///   sphere     [cx cy cz r]
///   box        [cx cy cz hx hy hz]          (half extents)
///   ellipsoid  [cx cy cz ax ay az]          (semi axes)
///   torus      [cx cy cz R r]               (tube around the z axis)
///   union/difference-of-two: two 7-slot child records
///     [kind cx cy cz p0 p1 p2] with primitive kind codes 0..3.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::sphere;
  std::vector<double> params;
};

namespace detail {

constexpr double kDomainHalf = 0.5;
constexpr double kMargin = 0.02;

struct Primitive {
  ShapeKind kind;
  Vec3 center;
  Vec3 p;  // meaning depends on kind, see ShapeSpec docs
};

inline double sdf_sphere(const Primitive& s, const Vec3& q) { return (q - s.center).norm() - s.p.x(); }

inline double sdf_box(const Primitive& s, const Vec3& q) {
  const Vec3 d = (q - s.center).cwiseAbs() - s.p;
  const double outside = d.cwiseMax(0.0).norm();
  const double inside = std::min(d.maxCoeff(), 0.0);
  return outside + inside;
}

inline double sdf_torus(const Primitive& s, const Vec3& q) {
  const Vec3 d = q - s.center;
  const double ring = std::hypot(d.x(), d.y()) - s.p.x();
  return std::hypot(ring, d.z()) - s.p.y();
}

/// Distance from a point with nonnegative coordinates to the axis-aligned
/// ellipsoid surface sum((x_i/e_i)^2)=1. Bisection on the Lagrange parameter;
/// exact-zero coordinates are handled by case analysis so interior queries on
/// symmetry axes resolve to the correct off-axis foot point.
inline double ellipsoid_octant_distance(std::vector<double> e, std::vector<double> y) {
  const std::size_t m = e.size();
  if (m == 1) return std::abs(y[0] - e[0]);

  std::size_t jmin = 0;
  for (std::size_t i = 1; i < m; ++i)
    if (e[i] < e[jmin]) jmin = i;

  bool all_zero = true;
  for (double v : y) all_zero &= (v == 0.0);
  if (all_zero) return e[jmin];

  if (y[jmin] > 0.0) {
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum_sq += e[i] * e[i] * y[i] * y[i];
    const double ej2 = e[jmin] * e[jmin];
    double t_lo = -ej2 + e[jmin] * y[jmin];
    double t_hi = -ej2 + std::sqrt(sum_sq);
    auto G = [&](double t) {
      double g = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (y[i] == 0.0) continue;
        const double r = e[i] * y[i] / (t + e[i] * e[i]);
        g += r * r;
      }
      return g - 1.0;
    };
    for (int it = 0; it < 200 && t_hi - t_lo > 0.0; ++it) {
      const double t = 0.5 * (t_lo + t_hi);
      if (t == t_lo || t == t_hi) break;
      (G(t) > 0.0 ? t_lo : t_hi) = t;
    }
    const double t = 0.5 * (t_lo + t_hi);
    double d2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double xi = e[i] * e[i] * y[i] / (t + e[i] * e[i]);
      d2 += (xi - y[i]) * (xi - y[i]);
    }
    return std::sqrt(d2);
  }

  // y[jmin] == 0: the foot point may leave the y[jmin]=0 plane.
  double r = 0.0;
  const double ej2 = e[jmin] * e[jmin];
  bool tied_axis = false;
  for (std::size_t i = 0; i < m; ++i) {
    if (y[i] == 0.0) continue;
    const double denom = e[i] * e[i] - ej2;
    if (denom <= 0.0) {
      tied_axis = true;
      break;
    }
    const double v = e[i] * y[i] / denom;
    r += v * v;
  }
  if (!tied_axis && r < 1.0) {
    double d2 = 0.0;
    double frac = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (y[i] == 0.0) continue;
      const double xi = e[i] * e[i] * y[i] / (e[i] * e[i] - ej2);
      d2 += (xi - y[i]) * (xi - y[i]);
      frac += (xi / e[i]) * (xi / e[i]);
    }
    const double xj = e[jmin] * std::sqrt(std::max(0.0, 1.0 - frac));
    return std::sqrt(d2 + xj * xj);
  }

  // Foot point stays in the plane: drop the smallest axis and recurse.
  std::vector<double> e2, y2;
  for (std::size_t i = 0; i < m; ++i) {
    if (i == jmin) continue;
    e2.push_back(e[i]);
    y2.push_back(y[i]);
  }
  return ellipsoid_octant_distance(std::move(e2), std::move(y2));
}

inline double sdf_ellipsoid(const Primitive& s, const Vec3& q) {
  const Vec3 d = (q - s.center).cwiseAbs();
  const Vec3 a = s.p;
  const double k0 = (d.array() / a.array()).matrix().squaredNorm();
  const double dist =
      ellipsoid_octant_distance({a.x(), a.y(), a.z()}, {d.x(), d.y(), d.z()});
  return k0 <= 1.0 ? -dist : dist;
}

inline double sdf_primitive(const Primitive& s, const Vec3& q) {
  switch (s.kind) {
    case ShapeKind::sphere: return sdf_sphere(s, q);
    case ShapeKind::box: return sdf_box(s, q);
    case ShapeKind::ellipsoid: return sdf_ellipsoid(s, q);
    case ShapeKind::torus: return sdf_torus(s, q);
    default: throw Error(ErrorCode::invalid_spec, "not a primitive kind");
  }
}

inline Vec3 bbox_halfwidth(const Primitive& s) {
  switch (s.kind) {
    case ShapeKind::sphere: return Vec3::Constant(s.p.x());
    case ShapeKind::box:
    case ShapeKind::ellipsoid: return s.p;
    case ShapeKind::torus: return Vec3(s.p.x() + s.p.y(), s.p.x() + s.p.y(), s.p.y());
    default: throw Error(ErrorCode::invalid_spec, "not a primitive kind");
  }
}

inline void validate_primitive(const Primitive& s) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw Error(ErrorCode::invalid_spec, msg);
  };
  require(s.center.allFinite() && s.p.allFinite(), "non-finite shape parameters");
  switch (s.kind) {
    case ShapeKind::sphere: require(s.p.x() > 0.0, "sphere radius must be positive"); break;
    case ShapeKind::box: require((s.p.array() > 0.0).all(), "box half-extents must be positive"); break;
    case ShapeKind::ellipsoid: require((s.p.array() > 0.0).all(), "ellipsoid semi-axes must be positive"); break;
    case ShapeKind::torus:
      require(s.p.y() > 0.0 && s.p.x() > s.p.y(), "torus needs 0 < minor < major radius");
      break;
    default: throw Error(ErrorCode::invalid_spec, "not a primitive kind");
  }
  const Vec3 hw = bbox_halfwidth(s);
  const double reach = (s.center.cwiseAbs() + hw).maxCoeff();
  require(reach <= kDomainHalf - kMargin,
          "shape exceeds the unit cube margin (extent " + fmt(reach) + " > " + fmt(kDomainHalf - kMargin) + ")");
}

// Surface-area weights used for exact area-uniform proposals.
inline double proposal_weight_max(const Primitive& s) {
  const double pi = 3.14159265358979323846;
  switch (s.kind) {
    case ShapeKind::sphere: return 4.0 * pi * s.p.x() * s.p.x();
    case ShapeKind::ellipsoid: {
      const Vec3& a = s.p;
      const double g = std::max({a.y() * a.z(), a.x() * a.z(), a.x() * a.y()});
      return 4.0 * pi * g;
    }
    case ShapeKind::box: {
      const Vec3& h = s.p;
      const double area = 8.0 * (h.x() * h.y() + h.y() * h.z() + h.x() * h.z());
      return area;  // direct area-weighted face sampling, weight is constant
    }
    case ShapeKind::torus: return 4.0 * pi * pi * s.p.y() * (s.p.x() + s.p.y());
    default: throw Error(ErrorCode::invalid_spec, "not a primitive kind");
  }
}

/// Proposes a point on the primitive surface together with its importance
/// weight; accepting with probability weight / proposal_weight_max yields an
/// exactly area-uniform sample.
inline std::pair<Vec3, double> propose_surface_point(const Primitive& s, Rng& rng) {
  const double pi = 3.14159265358979323846;
  switch (s.kind) {
    case ShapeKind::sphere:
    case ShapeKind::ellipsoid: {
      Vec3 u(rng.normal(), rng.normal(), rng.normal());
      double n = u.norm();
      while (n < 1e-12) {
        u = Vec3(rng.normal(), rng.normal(), rng.normal());
        n = u.norm();
      }
      u /= n;
      const Vec3 a = s.kind == ShapeKind::sphere ? Vec3::Constant(s.p.x()) : s.p;
      const Vec3 q = s.center + a.cwiseProduct(u);
      const Vec3 j(a.y() * a.z() * u.x(), a.x() * a.z() * u.y(), a.x() * a.y() * u.z());
      return {q, 4.0 * pi * j.norm()};
    }
    case ShapeKind::box: {
      const Vec3& h = s.p;
      const std::array<double, 3> face_area = {4.0 * h.y() * h.z(), 4.0 * h.x() * h.z(), 4.0 * h.x() * h.y()};
      const double total = 2.0 * (face_area[0] + face_area[1] + face_area[2]);
      double pick = rng.uniform() * total;
      int axis = 2;
      double side = 1.0;
      for (int f = 0; f < 6; ++f) {
        if (pick < face_area[f / 2] || f == 5) {
          axis = f / 2;
          side = (f % 2 == 0) ? -1.0 : 1.0;
          break;
        }
        pick -= face_area[f / 2];
      }
      Vec3 q = s.center;
      q[axis] += side * h[axis];
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      q[u] += rng.uniform(-h[u], h[u]);
      q[v] += rng.uniform(-h[v], h[v]);
      return {q, total};
    }
    case ShapeKind::torus: {
      const double R = s.p.x(), r = s.p.y();
      const double theta = rng.uniform() * 2.0 * pi;
      const double phi = rng.uniform() * 2.0 * pi;
      const double ring = R + r * std::cos(phi);
      const Vec3 q = s.center + Vec3(ring * std::cos(theta), ring * std::sin(theta), r * std::sin(phi));
      return {q, 4.0 * pi * pi * r * ring};
    }
    default: throw Error(ErrorCode::invalid_spec, "not a primitive kind");
  }
}

inline std::optional<double> primitive_volume(const Primitive& s) {
  const double pi = 3.14159265358979323846;
  switch (s.kind) {
    case ShapeKind::sphere: return 4.0 / 3.0 * pi * std::pow(s.p.x(), 3);
    case ShapeKind::box: return 8.0 * s.p.x() * s.p.y() * s.p.z();
    case ShapeKind::ellipsoid: return 4.0 / 3.0 * pi * s.p.x() * s.p.y() * s.p.z();
    case ShapeKind::torus: return 2.0 * pi * pi * s.p.x() * s.p.y() * s.p.y();
    default: return std::nullopt;
  }
}

}  // namespace detail

/// Ground-truth shape with exact indicator / signed-distance queries and a
/// fixed-length descriptor acting as the task input at desk scale.
class ShapeOracle {
public:
  static constexpr int kDescriptorSize = 16;

  const ShapeSpec& spec() const { return spec_; }
  const Eigen::VectorXd& descriptor() const { return descriptor_; }

  /// Exact signed distance for primitives. For union-of-two this is the min of
  /// child SDFs; for difference-of-two max(sdf_a, -sdf_b). Both are lower
  /// bounds on the true distance away from the surface but share its exact
  /// zero set and sign.
  double signed_distance(const Vec3& p) const {
    switch (op_) {
      case Op::single: return detail::sdf_primitive(prims_[0], p);
      case Op::unite: return std::min(detail::sdf_primitive(prims_[0], p), detail::sdf_primitive(prims_[1], p));
      case Op::subtract:
        return std::max(detail::sdf_primitive(prims_[0], p), -detail::sdf_primitive(prims_[1], p));
    }
    return 0.0;
  }

  /// Occupancy with the boundary counted as inside, so indicator(p) == 1 is
  /// exactly equivalent to signed_distance(p) <= 0.
  int indicator(const Vec3& p) const { return signed_distance(p) <= 0.0 ? 1 : 0; }

  /// Closed-form volume where one exists (primitives only).
  std::optional<double> exact_volume() const {
    if (op_ != Op::single) return std::nullopt;
    return detail::primitive_volume(prims_[0]);
  }

  int primitive_count() const { return op_ == Op::single ? 1 : 2; }
  bool is_difference() const { return op_ == Op::subtract; }
  const detail::Primitive& primitive(int i) const { return prims_[i]; }

private:
  friend ShapeOracle make_shape(const ShapeSpec&);
  enum class Op { single, unite, subtract };
  ShapeSpec spec_;
  Eigen::VectorXd descriptor_;
  std::array<detail::Primitive, 2> prims_{};
  Op op_ = Op::single;
};

namespace detail {

inline Primitive primitive_from_params(ShapeKind kind, const double* p, std::size_t n) {
  Primitive prim;
  prim.kind = kind;
  switch (kind) {
    case ShapeKind::sphere:
      if (n != 4) throw Error(ErrorCode::invalid_spec, "sphere expects 4 params");
      prim.center = Vec3(p[0], p[1], p[2]);
      prim.p = Vec3(p[3], 0.0, 0.0);
      break;
    case ShapeKind::box:
    case ShapeKind::ellipsoid:
      if (n != 6) throw Error(ErrorCode::invalid_spec, "box/ellipsoid expects 6 params");
      prim.center = Vec3(p[0], p[1], p[2]);
      prim.p = Vec3(p[3], p[4], p[5]);
      break;
    case ShapeKind::torus:
      if (n != 5) throw Error(ErrorCode::invalid_spec, "torus expects 5 params");
      prim.center = Vec3(p[0], p[1], p[2]);
      prim.p = Vec3(p[3], p[4], 0.0);
      break;
    default: throw Error(ErrorCode::invalid_spec, "not a primitive kind");
  }
  return prim;
}

inline Primitive primitive_from_child_record(const double* rec) {
  const int code = static_cast<int>(rec[0]);
  if (code < 0 || code > 3) throw Error(ErrorCode::invalid_spec, "child kind code out of range");
  const ShapeKind kind = static_cast<ShapeKind>(code);
  Primitive prim;
  prim.kind = kind;
  prim.center = Vec3(rec[1], rec[2], rec[3]);
  prim.p = Vec3(rec[4], rec[5], rec[6]);
  if (kind == ShapeKind::sphere) prim.p.y() = prim.p.z() = 0.0;
  if (kind == ShapeKind::torus) prim.p.z() = 0.0;
  return prim;
}

}  // namespace detail

inline ShapeOracle make_shape(const ShapeSpec& spec) {
  for (double v : spec.params)
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_spec, "non-finite shape parameters");

  ShapeOracle oracle;
  oracle.spec_ = spec;
  const auto& p = spec.params;
  switch (spec.kind) {
    case ShapeKind::sphere:
    case ShapeKind::box:
    case ShapeKind::ellipsoid:
    case ShapeKind::torus:
      oracle.prims_[0] = detail::primitive_from_params(spec.kind, p.data(), p.size());
      oracle.op_ = ShapeOracle::Op::single;
      detail::validate_primitive(oracle.prims_[0]);
      break;
    case ShapeKind::union_of_two:
    case ShapeKind::difference_of_two: {
      if (p.size() != 14) throw Error(ErrorCode::invalid_spec, "two-child shapes expect 14 params");
      oracle.prims_[0] = detail::primitive_from_child_record(p.data());
      oracle.prims_[1] = detail::primitive_from_child_record(p.data() + 7);
      oracle.op_ = spec.kind == ShapeKind::union_of_two ? ShapeOracle::Op::unite : ShapeOracle::Op::subtract;
      detail::validate_primitive(oracle.prims_[0]);
      detail::validate_primitive(oracle.prims_[1]);
      break;
    }
  }

  Eigen::VectorXd d = Eigen::VectorXd::Zero(ShapeOracle::kDescriptorSize);
  d[0] = static_cast<double>(spec.kind);
  if (p.size() + 1 > static_cast<std::size_t>(ShapeOracle::kDescriptorSize))
    throw Error(ErrorCode::invalid_spec, "parameter vector too long for descriptor");
  for (std::size_t i = 0; i < p.size(); ++i) d[1 + static_cast<int>(i)] = p[i];
  oracle.descriptor_ = d;
  return oracle;
}

/// Uniform i.i.d. samples of the bounding box, labeled by the exact indicator.
inline LabeledPointSet sample_uniform(const ShapeOracle& oracle, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::invalid_spec, "count must be >= 1");
  Rng rng(seed);
  LabeledPointSet out;
  out.convention = LabelConvention::occupancy_01;
  out.points.reserve(count);
  out.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Vec3 q(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    out.push_back(q, oracle.indicator(q));
  }
  return out;
}

namespace detail {

/// Area-uniform surface point; also used as the proposal for CSG rejection.
inline Vec3 sample_surface_point(const ShapeOracle& oracle, Rng& rng, std::size_t& proposals,
                                 std::size_t& accepted) {
  const int n_children = oracle.primitive_count();
  double wmax = 0.0;
  for (int c = 0; c < n_children; ++c) wmax = std::max(wmax, proposal_weight_max(oracle.primitive(c)));

  while (true) {
    ++proposals;
    if (proposals >= 1000000 && accepted < proposals / 1000)
      throw Error(ErrorCode::sampling_stalled, "surface sampling acceptance below 0.1%");
    const int c = n_children == 1 ? 0 : static_cast<int>(rng.below(2));
    const auto [q, w] = propose_surface_point(oracle.primitive(c), rng);
    if (w < wmax && rng.uniform() * wmax >= w) continue;
    if (n_children == 2) {
      // Keep only points on the CSG boundary.
      const double other = sdf_primitive(oracle.primitive(1 - c), q);
      if (!oracle.is_difference()) {
        if (other < 0.0) continue;  // inside the sibling: swallowed by the union
      } else {
        if (c == 0 && other < 0.0) continue;   // carved away
        if (c == 1 && sdf_primitive(oracle.primitive(0), q) > 0.0) continue;  // outside A
      }
    }
    ++accepted;
    return q;
  }
}

}  // namespace detail

/// Area-weighted surface samples, |signed_distance| <= 1e-6 each.
inline std::vector<Vec3> sample_surface(const ShapeOracle& oracle, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::invalid_spec, "count must be >= 1");
  Rng rng(seed);
  std::vector<Vec3> out;
  out.reserve(count);
  std::size_t proposals = 0, accepted = 0;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(detail::sample_surface_point(oracle, rng, proposals, accepted));
  return out;
}

/// Surface samples displaced by isotropic Gaussian noise, clamped to the
/// domain and labeled by the exact indicator.
inline LabeledPointSet sample_near_surface(const ShapeOracle& oracle, std::size_t count, double noise_std,
                                           std::uint64_t seed) {
  if (!(noise_std > 0.0)) throw Error(ErrorCode::invalid_spec, "noise_std must be positive");
  Rng rng(seed);
  LabeledPointSet out;
  out.convention = LabelConvention::occupancy_01;
  out.points.reserve(count);
  out.labels.reserve(count);
  std::size_t proposals = 0, accepted = 0;
  for (std::size_t i = 0; i < count; ++i) {
    Vec3 q = detail::sample_surface_point(oracle, rng, proposals, accepted);
    q += noise_std * Vec3(rng.normal(), rng.normal(), rng.normal());
    q = q.cwiseMax(-0.5).cwiseMin(0.5);
    out.push_back(q, oracle.indicator(q));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape spec files: key-value text.

inline std::string to_text(const ShapeSpec& spec) {
  std::string out = "kind=";
  out += to_string(spec.kind);
  out += '\n';
  auto vec_str = [](const double* p, int n) {
    std::string s;
    for (int i = 0; i < n; ++i) {
      if (i) s += ' ';
      s += fmt(p[i]);
    }
    return s;
  };
  const auto& p = spec.params;
  auto child_text = [&](const char* prefix, const double* rec) {
    std::string s;
    const int code = static_cast<int>(rec[0]);
    s += std::string(prefix) + ".kind=" + to_string(static_cast<ShapeKind>(code)) + '\n';
    s += std::string(prefix) + ".center=" + vec_str(rec + 1, 3) + '\n';
    switch (static_cast<ShapeKind>(code)) {
      case ShapeKind::sphere: s += std::string(prefix) + ".radius=" + fmt(rec[4]) + '\n'; break;
      case ShapeKind::box: s += std::string(prefix) + ".half_extents=" + vec_str(rec + 4, 3) + '\n'; break;
      case ShapeKind::ellipsoid: s += std::string(prefix) + ".semi_axes=" + vec_str(rec + 4, 3) + '\n'; break;
      case ShapeKind::torus:
        s += std::string(prefix) + ".major_radius=" + fmt(rec[4]) + '\n';
        s += std::string(prefix) + ".minor_radius=" + fmt(rec[5]) + '\n';
        break;
      default: break;
    }
    return s;
  };
  switch (spec.kind) {
    case ShapeKind::sphere:
      out += "center=" + vec_str(p.data(), 3) + "\nradius=" + fmt(p[3]) + '\n';
      break;
    case ShapeKind::box:
      out += "center=" + vec_str(p.data(), 3) + "\nhalf_extents=" + vec_str(p.data() + 3, 3) + '\n';
      break;
    case ShapeKind::ellipsoid:
      out += "center=" + vec_str(p.data(), 3) + "\nsemi_axes=" + vec_str(p.data() + 3, 3) + '\n';
      break;
    case ShapeKind::torus:
      out += "center=" + vec_str(p.data(), 3) + "\nmajor_radius=" + fmt(p[3]) + "\nminor_radius=" + fmt(p[4]) + '\n';
      break;
    case ShapeKind::union_of_two:
    case ShapeKind::difference_of_two:
      out += child_text("a", p.data());
      out += child_text("b", p.data() + 7);
      break;
  }
  return out;
}

namespace detail {

inline std::vector<double> parse_vec(const std::string& v, std::size_t n, const std::string& key) {
  const auto tok = split_ws(v);
  if (tok.size() != n) throw Error(ErrorCode::invalid_spec, key + " expects " + std::to_string(n) + " numbers");
  std::vector<double> out;
  for (const auto& t : tok) out.push_back(parse_double(t));
  return out;
}

inline void append_child_record(std::vector<double>& params, const std::map<std::string, std::string>& kv,
                                const std::string& prefix) {
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(prefix + "." + key);
    if (it == kv.end()) throw Error(ErrorCode::invalid_spec, "missing key " + prefix + "." + key);
    return it->second;
  };
  const ShapeKind kind = shape_kind_from_string(get("kind"));
  if (static_cast<int>(kind) > 3) throw Error(ErrorCode::invalid_spec, "child shapes must be primitives");
  params.push_back(static_cast<double>(kind));
  const auto c = parse_vec(get("center"), 3, "center");
  params.insert(params.end(), c.begin(), c.end());
  switch (kind) {
    case ShapeKind::sphere:
      params.push_back(parse_double(get("radius")));
      params.push_back(0.0);
      params.push_back(0.0);
      break;
    case ShapeKind::box:
    case ShapeKind::ellipsoid: {
      const auto h = parse_vec(get(kind == ShapeKind::box ? "half_extents" : "semi_axes"), 3, "extents");
      params.insert(params.end(), h.begin(), h.end());
      break;
    }
    case ShapeKind::torus:
      params.push_back(parse_double(get("major_radius")));
      params.push_back(parse_double(get("minor_radius")));
      params.push_back(0.0);
      break;
    default: break;
  }
}

}  // namespace detail

inline ShapeSpec shape_spec_from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : parse_key_values(text)) kv[k] = v;
  const auto kind_it = kv.find("kind");
  if (kind_it == kv.end()) throw Error(ErrorCode::invalid_spec, "spec file misses kind=");
  ShapeSpec spec;
  spec.kind = shape_kind_from_string(kind_it->second);
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::invalid_spec, "missing key " + key);
    return it->second;
  };
  switch (spec.kind) {
    case ShapeKind::sphere: {
      const auto c = detail::parse_vec(get("center"), 3, "center");
      spec.params = {c[0], c[1], c[2], parse_double(get("radius"))};
      break;
    }
    case ShapeKind::box:
    case ShapeKind::ellipsoid: {
      const auto c = detail::parse_vec(get("center"), 3, "center");
      const auto h = detail::parse_vec(get(spec.kind == ShapeKind::box ? "half_extents" : "semi_axes"), 3, "extents");
      spec.params = {c[0], c[1], c[2], h[0], h[1], h[2]};
      break;
    }
    case ShapeKind::torus: {
      const auto c = detail::parse_vec(get("center"), 3, "center");
      spec.params = {c[0], c[1], c[2], parse_double(get("major_radius")), parse_double(get("minor_radius"))};
      break;
    }
    case ShapeKind::union_of_two:
    case ShapeKind::difference_of_two:
      detail::append_child_record(spec.params, kv, "a");
      detail::append_child_record(spec.params, kv, "b");
      break;
  }
  return spec;
}

inline void save_shape_spec(const ShapeSpec& spec, const std::string& path) {
  write_text_file(path, to_text(spec));
}

inline ShapeSpec load_shape_spec(const std::string& path) {
  return shape_spec_from_text(read_text_file(path));
}

}  // namespace svmshape
