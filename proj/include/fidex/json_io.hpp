#pragma once

// JSON plumbing shared by every file format: located parse errors, typed
// field access with path-qualified diagnostics, and the RigidTransform
// encoding {translation: [x,y,z], quaternion: [w,x,y,z]}.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "fidex/error.hpp"
#include "fidex/geometry.hpp"

namespace fidex {

using Json = nlohmann::json;

/// Quaternions further than this from unit norm are rejected on parse.
inline constexpr double kQuaternionNormTolerance = 1e-6;

inline Json parse_json_text(const std::string& text, const std::string& source = "<input>") {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw Error(ErrorKind::Parse, source + ":" + std::to_string(line) + ":" + std::to_string(column) +
                                      ": malformed JSON");
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Parse, path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json read_json_file(const std::string& path) { return parse_json_text(read_text_file(path), path); }

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Parse, path + ": cannot open file for writing");
  out << text;
}

namespace json_detail {

inline std::string child_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline std::string index_path(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

}  // namespace json_detail

inline const Json& require_field(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw Error(ErrorKind::Parse, (path.empty() ? "<root>" : path) + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorKind::Parse, json_detail::child_path(path, key) + ": missing field");
  return *it;
}

inline double as_number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw Error(ErrorKind::Parse, path + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw Error(ErrorKind::Parse, path + ": expected a finite number");
  return v;
}

inline std::string as_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw Error(ErrorKind::Parse, path + ": expected a string");
  return j.get<std::string>();
}

inline long long as_integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw Error(ErrorKind::Parse, path + ": expected an integer");
  return j.get<long long>();
}

inline bool as_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) throw Error(ErrorKind::Parse, path + ": expected a boolean");
  return j.get<bool>();
}

inline const Json& as_array(const Json& j, const std::string& path) {
  if (!j.is_array()) throw Error(ErrorKind::Parse, path + ": expected an array");
  return j;
}

inline Eigen::VectorXd as_vector(const Json& j, const std::string& path) {
  as_array(j, path);
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = as_number(j[i], json_detail::index_path(path, i));
  return v;
}

inline Eigen::VectorXd as_fixed_vector(const Json& j, std::size_t n, const std::string& path) {
  as_array(j, path);
  if (j.size() != n) {
    throw Error(ErrorKind::Parse, path + ": expected " + std::to_string(n) + " numbers, got " + std::to_string(j.size()));
  }
  return as_vector(j, path);
}

inline Json to_json(const Eigen::VectorXd& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Rotation quaternion_from_json(const Json& j, const std::string& path) {
  const Eigen::VectorXd q = as_fixed_vector(j, 4, path);
  if (std::abs(q.norm() - 1.0) > kQuaternionNormTolerance) {
    throw Error(ErrorKind::Validation, path + ": quaternion norm " + std::to_string(q.norm()) + " is not 1");
  }
  return Rotation::from_wxyz(q[0], q[1], q[2], q[3]);
}

inline RigidTransform transform_from_json(const Json& j, const std::string& path) {
  const Eigen::VectorXd t = as_fixed_vector(require_field(j, "translation", path), 3,
                                            json_detail::child_path(path, "translation"));
  const Rotation r = quaternion_from_json(require_field(j, "quaternion", path),
                                          json_detail::child_path(path, "quaternion"));
  return {r, Vec3(t[0], t[1], t[2])};
}

inline Json to_json(const RigidTransform& t) {
  const Eigen::Quaterniond& q = t.rotation.quaternion();
  return Json{{"translation", to_json(t.translation)}, {"quaternion", Json::array({q.w(), q.x(), q.y(), q.z()})}};
}

/// 64-bit FNV-1a, used to fingerprint configurations in reports.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace fidex
