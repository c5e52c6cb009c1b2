#pragma once

// Modified New York criterion, reader consensus rules and dataset splitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "sacropipe/errors.hpp"
#include "sacropipe/manifest.hpp"
#include "sacropipe/random.hpp"

namespace sacropipe::labels {

inline constexpr int kMaxGrade = 4;

struct GradingRecord {
  std::string reader_id;
  int grade_left = 0;
  int grade_right = 0;
};

enum class Provenance { single_reader, two_of_three, pair_consensus, adjudicated };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::single_reader: return "single-reader";
    case Provenance::two_of_three: return "two-of-three";
    case Provenance::pair_consensus: return "pair-consensus";
    case Provenance::adjudicated: return "adjudicated";
  }
  return "?";
}

struct StudyLabel {
  bool positive = false;
  Provenance provenance = Provenance::single_reader;
  // Set by pair_consensus when the two readers disagree.
  bool needs_adjudication = false;
};

inline void check_grade(int g) {
  if (g < 0 || g > kMaxGrade) throw DomainError("sacroiliitis grade out of range 0..4: " + std::to_string(g));
}

/// Definite radiographic sacroiliitis: grade >= 2 bilaterally or grade 3-4 unilaterally.
inline bool mny_positive(int grade_left, int grade_right) {
  check_grade(grade_left);
  check_grade(grade_right);
  return (grade_left >= 2 && grade_right >= 2) || grade_left >= 3 || grade_right >= 3;
}

inline bool mny_positive(const GradingRecord& r) { return mny_positive(r.grade_left, r.grade_right); }

inline StudyLabel single_reader(const GradingRecord& r) { return {mny_positive(r), Provenance::single_reader, false}; }

/// Local reader plus central reader; a second central reader breaks ties.
inline StudyLabel adjudicate_proof(bool local, bool central1, std::optional<bool> central2) {
  if (local == central1) {
    if (central2) throw ProtocolError("second central read supplied although local and central reader agree");
    return {local, Provenance::pair_consensus, false};
  }
  if (!central2) throw ProtocolError("local and central reader disagree: second central read required");
  const int votes = int(local) + int(central1) + int(*central2);
  return {votes >= 2, Provenance::adjudicated, false};
}

/// Three independent readers, two-out-of-three decides.
inline StudyLabel majority_of_three(bool a, bool b, bool c) {
  return {int(a) + int(b) + int(c) >= 2, Provenance::two_of_three, false};
}

/// Two-reader consensus: positive only if both agree; disagreement is flagged, not resolved.
inline StudyLabel pair_consensus(bool a, bool b) { return {a && b, Provenance::pair_consensus, a != b}; }

/// Validation share rounds half away from zero: round(1483 * 0.15) = 222.
inline std::pair<std::size_t, std::size_t> split_sizes(std::size_t n, double val_fraction) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
  if (n < 2) throw ConfigError("cannot split fewer than two samples");
  auto val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
  val = std::clamp<std::size_t>(val, 1, n - 1);
  return {n - val, val};
}

/// Deterministic random split; independent of the input entry order.
inline std::pair<Manifest, Manifest> split_dataset(const Manifest& manifest, double val_fraction, std::uint64_t seed) {
  const auto [n_train, n_val] = split_sizes(manifest.entries.size(), val_fraction);
  auto entries = manifest.entries;
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.sample_id < b.sample_id; });
  // Fisher-Yates with explicit index draws; std::shuffle's draw pattern is library-specific.
  Rng rng = make_rng(seed, "split");
  for (std::size_t i = entries.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(entries[i], entries[j]);
  }
  Manifest train = manifest;
  Manifest val = manifest;
  train.entries.assign(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(n_train));
  val.entries.assign(entries.begin() + static_cast<std::ptrdiff_t>(n_train), entries.end());
  auto by_id = [](const ManifestEntry& a, const ManifestEntry& b) { return a.sample_id < b.sample_id; };
  std::sort(train.entries.begin(), train.entries.end(), by_id);
  std::sort(val.entries.begin(), val.entries.end(), by_id);
  (void)n_val;
  return {std::move(train), std::move(val)};
}

}  // namespace sacropipe::labels
