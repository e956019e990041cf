#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "svmshape/error.hpp"
#include "svmshape/textio.hpp"

namespace svmshape {

using Vec3 = Eigen::Vector3d;

enum class LabelConvention { svm_pm1, occupancy_01 };

/// Labeled 3d point set. Holds either SVM-style {-1,+1} labels or occupancy
/// {0,1} labels; y_svm = 2*y_occ - 1 is the only bridge between the two.
struct LabeledPointSet {
  std::vector<Vec3> points;
  std::vector<int> labels;
  LabelConvention convention = LabelConvention::occupancy_01;

  std::size_t size() const { return points.size(); }

  void push_back(const Vec3& p, int label) {
    points.push_back(p);
    labels.push_back(label);
  }

  void validate() const {
    if (points.size() != labels.size())
      throw Error(ErrorCode::shape_mismatch, "point/label count mismatch");
    for (int y : labels) {
      const bool ok = convention == LabelConvention::svm_pm1 ? (y == -1 || y == 1) : (y == 0 || y == 1);
      if (!ok) throw Error(ErrorCode::shape_mismatch, "label out of range for convention");
    }
  }

  LabeledPointSet to_svm_labels() const {
    if (convention == LabelConvention::svm_pm1) return *this;
    LabeledPointSet out;
    out.convention = LabelConvention::svm_pm1;
    out.points = points;
    out.labels.reserve(labels.size());
    for (int y : labels) out.labels.push_back(2 * y - 1);
    return out;
  }
};

inline std::string to_text(const LabeledPointSet& ps) {
  std::string out = "# labels=";
  out += ps.convention == LabelConvention::svm_pm1 ? "svm_pm1" : "occupancy_01";
  out += '\n';
  for (std::size_t i = 0; i < ps.size(); ++i) {
    out += fmt(ps.points[i].x()) + ' ' + fmt(ps.points[i].y()) + ' ' + fmt(ps.points[i].z()) + ' ' +
           std::to_string(ps.labels[i]) + '\n';
  }
  return out;
}

inline LabeledPointSet point_set_from_text(const std::string& text) {
  LabeledPointSet ps;
  bool saw_header = false;
  std::istringstream iss(text);
  std::string line;
  while (std::getline(iss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("labels=");
      if (pos != std::string::npos) {
        const std::string conv = line.substr(pos + 7);
        if (conv == "svm_pm1") ps.convention = LabelConvention::svm_pm1;
        else if (conv == "occupancy_01") ps.convention = LabelConvention::occupancy_01;
        else throw Error(ErrorCode::io, "unknown label convention: " + conv);
        saw_header = true;
      }
      continue;
    }
    const auto tok = split_ws(line);
    if (tok.size() != 4) throw Error(ErrorCode::io, "expected 'x y z label', got: " + line);
    ps.push_back(Vec3(parse_double(tok[0]), parse_double(tok[1]), parse_double(tok[2])),
                 static_cast<int>(parse_double(tok[3])));
  }
  if (!saw_header) throw Error(ErrorCode::io, "point-set file misses '# labels=' header");
  ps.validate();
  return ps;
}

inline void save_point_set(const LabeledPointSet& ps, const std::string& path) {
  write_text_file(path, to_text(ps));
}

inline LabeledPointSet load_point_set(const std::string& path) {
  return point_set_from_text(read_text_file(path));
}

}  // namespace svmshape
