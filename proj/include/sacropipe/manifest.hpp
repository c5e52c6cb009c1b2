#pragma once

// Manifest files: JSON documents listing samples with paths relative to the
// manifest's own directory.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sacropipe/errors.hpp"
#include "sacropipe/image.hpp"

namespace sacropipe {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr const char* kGeneratorVersion = "sacropipe-phantom/1.0";

struct SijBoxes {
  Box left;
  Box right;
  double margin_applied = 0.0;

  friend bool operator==(const SijBoxes&, const SijBoxes&) = default;
};

struct ManifestEntry {
  std::string sample_id;
  std::string image_path;
  std::string mask_path;
  int grade_left = 0;
  int grade_right = 0;
  int label = 0;
  std::string cohort_tag;
  std::optional<SijBoxes> truth_boxes;

  // Written by downstream stages.
  std::optional<std::string> seg_mask_path;
  std::optional<SijBoxes> sij_boxes;
  std::optional<std::string> crop_path;
  std::optional<Box> crop_box;
  bool crop_fallback_full = false;
};

struct Manifest {
  int schema_version = kManifestSchemaVersion;
  std::string generator_version = kGeneratorVersion;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
  // Directory relative paths resolve against; not serialized.
  fs::path base_dir;

  fs::path resolve(const std::string& rel) const { return base_dir / rel; }
};

struct FollowUpEntry {
  std::string sample_id;
  int baseline_label = 0;
  int followup_label = 0;
  int horizon_months = 24;
};

struct FollowUpManifest {
  int schema_version = kManifestSchemaVersion;
  std::uint64_t seed = 0;
  std::vector<FollowUpEntry> entries;
};

// ---- JSON mapping ---------------------------------------------------------

inline void to_json(json& j, const Box& b) { j = json::array({b.row0, b.col0, b.row1, b.col1}); }
inline void from_json(const json& j, Box& b) {
  if (!j.is_array() || j.size() != 4) throw ConfigError("box must be [row0, col0, row1, col1]");
  b = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

inline void to_json(json& j, const SijBoxes& b) {
  j = json{{"left", b.left}, {"right", b.right}, {"margin_applied", b.margin_applied}};
}
inline void from_json(const json& j, SijBoxes& b) {
  b.left = j.at("left").get<Box>();
  b.right = j.at("right").get<Box>();
  b.margin_applied = j.value("margin_applied", 0.0);
}

inline void to_json(json& j, const ManifestEntry& e) {
  j = json{{"sample_id", e.sample_id},
           {"image_path", e.image_path},
           {"mask_path", e.mask_path},
           {"grades", {e.grade_left, e.grade_right}},
           {"label", e.label},
           {"cohort_tag", e.cohort_tag}};
  if (e.truth_boxes) j["truth_boxes"] = *e.truth_boxes;
  if (e.seg_mask_path) j["seg_mask_path"] = *e.seg_mask_path;
  if (e.sij_boxes) j["sij_boxes"] = *e.sij_boxes;
  if (e.crop_path) j["crop_path"] = *e.crop_path;
  if (e.crop_box) j["crop_box"] = *e.crop_box;
  if (e.crop_fallback_full) j["crop_fallback_full"] = true;
}

inline void from_json(const json& j, ManifestEntry& e) {
  e.sample_id = j.at("sample_id").get<std::string>();
  e.image_path = j.at("image_path").get<std::string>();
  e.mask_path = j.value("mask_path", std::string{});
  const auto& g = j.at("grades");
  e.grade_left = g.at(0).get<int>();
  e.grade_right = g.at(1).get<int>();
  e.label = j.at("label").get<int>();
  e.cohort_tag = j.value("cohort_tag", std::string{});
  if (j.contains("truth_boxes")) e.truth_boxes = j["truth_boxes"].get<SijBoxes>();
  if (j.contains("seg_mask_path")) e.seg_mask_path = j["seg_mask_path"].get<std::string>();
  if (j.contains("sij_boxes")) e.sij_boxes = j["sij_boxes"].get<SijBoxes>();
  if (j.contains("crop_path")) e.crop_path = j["crop_path"].get<std::string>();
  if (j.contains("crop_box")) e.crop_box = j["crop_box"].get<Box>();
  e.crop_fallback_full = j.value("crop_fallback_full", false);
}

inline void to_json(json& j, const Manifest& m) {
  j = json{{"schema_version", m.schema_version},
           {"generator_version", m.generator_version},
           {"seed", m.seed},
           {"entries", m.entries}};
}

inline void from_json(const json& j, Manifest& m) {
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != kManifestSchemaVersion)
    throw ConfigError("unsupported manifest schema_version " + std::to_string(m.schema_version));
  m.generator_version = j.value("generator_version", std::string{});
  m.seed = j.value("seed", std::uint64_t{0});
  m.entries = j.at("entries").get<std::vector<ManifestEntry>>();
}

inline void to_json(json& j, const FollowUpEntry& e) {
  j = json{{"sample_id", e.sample_id},
           {"baseline_label", e.baseline_label},
           {"followup_label", e.followup_label},
           {"horizon_months", e.horizon_months}};
}
inline void from_json(const json& j, FollowUpEntry& e) {
  e.sample_id = j.at("sample_id").get<std::string>();
  e.baseline_label = j.at("baseline_label").get<int>();
  e.followup_label = j.at("followup_label").get<int>();
  e.horizon_months = j.value("horizon_months", 24);
}
inline void to_json(json& j, const FollowUpManifest& m) {
  j = json{{"schema_version", m.schema_version}, {"seed", m.seed}, {"entries", m.entries}};
}
inline void from_json(const json& j, FollowUpManifest& m) {
  m.schema_version = j.at("schema_version").get<int>();
  m.seed = j.value("seed", std::uint64_t{0});
  m.entries = j.at("entries").get<std::vector<FollowUpEntry>>();
}

// ---- files ----------------------------------------------------------------

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

/// Writes via a temporary file and rename so readers never see partial output.
inline void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_json(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

inline void validate(const Manifest& m) {
  std::set<std::string> ids;
  for (const auto& e : m.entries) {
    if (!ids.insert(e.sample_id).second) throw ConfigError("duplicate sample_id " + e.sample_id);
    if (e.label != 0 && e.label != 1) throw ConfigError("label must be 0 or 1 for " + e.sample_id);
  }
}

inline Manifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw UpstreamMissing("manifest not found: " + path.string(), "generate");
  Manifest m;
  try {
    m = read_json(path).get<Manifest>();
  } catch (const json::exception& e) {
    throw ConfigError("invalid manifest " + path.string() + ": " + e.what());
  }
  m.base_dir = path.parent_path();
  validate(m);
  return m;
}

inline void save_manifest(const fs::path& path, const Manifest& m) {
  validate(m);
  write_json(path, json(m));
}

inline FollowUpManifest load_followup(const fs::path& path) {
  if (!fs::exists(path)) throw UpstreamMissing("follow-up manifest not found: " + path.string(), "followup");
  return read_json(path).get<FollowUpManifest>();
}

/// Rewrites relative paths of `m` so they resolve from `new_base`.
inline Manifest rebase(Manifest m, const fs::path& new_base) {
  auto fix = [&](std::string& p) {
    if (p.empty()) return;
    p = fs::relative(fs::absolute(m.base_dir / p), fs::absolute(new_base)).generic_string();
  };
  for (auto& e : m.entries) {
    fix(e.image_path);
    fix(e.mask_path);
    if (e.seg_mask_path) fix(*e.seg_mask_path);
    if (e.crop_path) fix(*e.crop_path);
  }
  m.base_dir = new_base;
  return m;
}

}  // namespace sacropipe
