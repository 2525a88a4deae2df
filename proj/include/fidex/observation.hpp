#pragma once

/// @file
/// Fiducial exoskeleton geometry and the conversion of marker detections
/// into link-pose observations in the robot base frame.
///
/// Frame chain for a link carrying a marker:
///   T_cam_link = T_cam_marker * T_marker_exo * T_exo_link
/// The base entry's T_exo_link is the exoskeleton-to-robot-base transform.

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fidex/error.hpp"
#include "fidex/geometry.hpp"
#include "fidex/json_io.hpp"
#include "fidex/kinematics.hpp"

namespace fidex {

struct RegistryEntry {
  std::string link_name;
  std::size_t link_index = 0;  // 0 = base
  int marker_id = 0;
  RigidTransform marker_to_exo;  // T_marker_exo
  RigidTransform exo_to_link;    // T_exo_link

  RigidTransform marker_to_link() const { return compose(marker_to_exo, exo_to_link); }
};

/// Per-link marker geometry, bound to one chain. Immutable after construction.
class ExoskeletonRegistry {
public:
  ExoskeletonRegistry(std::vector<RegistryEntry> entries, const KinematicChain& chain)
      : entries_(std::move(entries)), num_links_(chain.dof()) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      RegistryEntry& e = entries_[i];
      if (e.link_name == "base") {
        e.link_index = 0;
      } else if (auto idx = chain.link_index(e.link_name)) {
        e.link_index = *idx;
      } else {
        throw Error(ErrorKind::Validation,
                    "registry entry " + std::to_string(i) + ": link '" + e.link_name + "' is not in chain '" + chain.name() + "'");
      }
      if (!by_marker_.emplace(e.marker_id, i).second) {
        throw Error(ErrorKind::Validation, "registry: duplicate marker id " + std::to_string(e.marker_id));
      }
    }
  }

  const std::vector<RegistryEntry>& entries() const { return entries_; }
  std::size_t num_links() const { return num_links_; }

  const RegistryEntry* find(int marker_id) const {
    auto it = by_marker_.find(marker_id);
    return it == by_marker_.end() ? nullptr : &entries_[it->second];
  }

  /// First entry registered for `link_index`, if any.
  const RegistryEntry* entry_for_link(std::size_t link_index) const {
    for (const RegistryEntry& e : entries_) {
      if (e.link_index == link_index) return &e;
    }
    return nullptr;
  }

  bool has_base() const { return entry_for_link(0) != nullptr; }

private:
  std::vector<RegistryEntry> entries_;
  std::unordered_map<int, std::size_t> by_marker_;
  std::size_t num_links_;
};

struct MarkerDetection {
  int marker_id = 0;
  RigidTransform camera_to_marker;  // T_cam_marker
  double confidence = 1.0;
};

struct DetectionFrame {
  std::string frame_id;
  std::vector<MarkerDetection> detections;
};

struct LinkObservation {
  bool visible = false;
  RigidTransform pose;  // robot base frame; meaningful only when visible
  int marker_id = -1;
  double confidence = 0.0;
};

struct ObservationSet {
  std::vector<LinkObservation> links;           // element j-1 describes link j
  std::optional<MarkerDetection> base_detection;
  std::optional<RigidTransform> base_in_camera;  // T_cam_robot

  std::size_t visible_count() const {
    std::size_t n = 0;
    for (const LinkObservation& l : links) n += l.visible ? 1 : 0;
    return n;
  }

  std::vector<std::size_t> visible_links() const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < links.size(); ++j) {
      if (links[j].visible) out.push_back(j + 1);
    }
    return out;
  }
};

/// Link (or base) pose in the camera frame.
inline RigidTransform link_pose_from_marker(const MarkerDetection& det, const ExoskeletonRegistry& reg) {
  const RegistryEntry* e = reg.find(det.marker_id);
  if (e == nullptr) throw Error(ErrorKind::UnknownMarker, "marker id " + std::to_string(det.marker_id) + " is not registered");
  return compose(det.camera_to_marker, e->marker_to_link());
}

/// Expresses every detected link in the robot base frame via the base marker.
/// Detections below `min_confidence` and unregistered marker ids are ignored;
/// several detections for one link resolve to the most confident one.
inline ObservationSet build_observation_set(const std::vector<MarkerDetection>& dets, const ExoskeletonRegistry& reg,
                                            double min_confidence = 0.0) {
  const std::size_t d = reg.num_links();
  std::vector<const MarkerDetection*> best(d + 1, nullptr);
  for (const MarkerDetection& det : dets) {
    if (det.confidence < min_confidence) continue;
    const RegistryEntry* e = reg.find(det.marker_id);
    if (e == nullptr) continue;
    const MarkerDetection*& slot = best[e->link_index];
    if (slot == nullptr || det.confidence > slot->confidence) slot = &det;
  }

  ObservationSet obs;
  obs.links.resize(d);
  bool any_link = false;
  for (std::size_t j = 1; j <= d; ++j) any_link = any_link || best[j] != nullptr;

  if (best[0] == nullptr) {
    if (any_link) {
      throw Error(ErrorKind::BaseUnobserved, "link markers detected without the base marker; poses cannot be expressed in the robot frame");
    }
    return obs;
  }

  obs.base_detection = *best[0];
  obs.base_in_camera = link_pose_from_marker(*best[0], reg);
  const RigidTransform robot_from_camera = inverse(*obs.base_in_camera);
  for (std::size_t j = 1; j <= d; ++j) {
    if (best[j] == nullptr) continue;
    LinkObservation& lo = obs.links[j - 1];
    lo.visible = true;
    lo.pose = compose(robot_from_camera, link_pose_from_marker(*best[j], reg));
    lo.marker_id = best[j]->marker_id;
    lo.confidence = best[j]->confidence;
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Registry and detection documents

inline ExoskeletonRegistry registry_from_json(const Json& doc, const KinematicChain& chain) {
  const Json& entries = as_array(require_field(doc, "entries", ""), "entries");
  std::vector<RegistryEntry> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string path = json_detail::index_path("entries", i);
    const Json& e = entries[i];
    RegistryEntry entry;
    entry.link_name = as_string(require_field(e, "link_name", path), path + ".link_name");
    entry.marker_id = static_cast<int>(as_integer(require_field(e, "marker_id", path), path + ".marker_id"));
    entry.marker_to_exo = transform_from_json(require_field(e, "t_aruco_exo", path), path + ".t_aruco_exo");
    entry.exo_to_link = transform_from_json(require_field(e, "t_exo_link", path), path + ".t_exo_link");
    out.push_back(std::move(entry));
  }
  return ExoskeletonRegistry(std::move(out), chain);
}

inline Json registry_to_json(const ExoskeletonRegistry& reg) {
  Json entries = Json::array();
  for (const RegistryEntry& e : reg.entries()) {
    entries.push_back(Json{{"link_name", e.link_name},
                           {"marker_id", e.marker_id},
                           {"t_aruco_exo", to_json(e.marker_to_exo)},
                           {"t_exo_link", to_json(e.exo_to_link)}});
  }
  return Json{{"entries", std::move(entries)}};
}

inline ExoskeletonRegistry load_registry_file(const std::string& path, const KinematicChain& chain) {
  return registry_from_json(read_json_file(path), chain);
}

inline DetectionFrame detections_from_json(const Json& doc) {
  DetectionFrame frame;
  const Json& fid = require_field(doc, "frame_id", "");
  frame.frame_id = fid.is_string() ? fid.get<std::string>() : std::to_string(as_integer(fid, "frame_id"));
  const Json& dets = as_array(require_field(doc, "detections", ""), "detections");
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const std::string path = json_detail::index_path("detections", i);
    const Json& d = dets[i];
    MarkerDetection det;
    det.marker_id = static_cast<int>(as_integer(require_field(d, "marker_id", path), path + ".marker_id"));
    det.camera_to_marker = transform_from_json(d, path);
    if (d.contains("confidence")) det.confidence = as_number(d["confidence"], path + ".confidence");
    if (det.confidence < 0.0 || det.confidence > 1.0) {
      throw Error(ErrorKind::Validation, path + ".confidence: must lie in [0, 1]");
    }
    frame.detections.push_back(det);
  }
  return frame;
}

inline Json detections_to_json(const DetectionFrame& frame) {
  Json dets = Json::array();
  for (const MarkerDetection& d : frame.detections) {
    Json entry = to_json(d.camera_to_marker);
    entry["marker_id"] = d.marker_id;
    entry["confidence"] = d.confidence;
    dets.push_back(std::move(entry));
  }
  return Json{{"frame_id", frame.frame_id}, {"detections", std::move(dets)}};
}

inline DetectionFrame load_detections_file(const std::string& path) { return detections_from_json(read_json_file(path)); }

}  // namespace fidex
