#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "icon/observation.hpp"

namespace icon {

struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool operator==(const BBox&) const = default;
};

/// Intersection-over-union of two axis-aligned boxes; 0 when disjoint.
double iou(const BBox& a, const BBox& b);

/// One planted blob of the synthetic generator (sidecar truth file).
struct PlantedBlob {
  std::string study_id;
  Observation observation = Observation::NoFinding;
  BBox bbox;

  bool operator==(const PlantedBlob&) const = default;
};

// Corpus JSONL: one study per line. Parse errors carry the 1-based line number.
std::vector<Study> parse_corpus(std::istream& in);
std::vector<Study> load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, const std::vector<Study>& studies);
void write_corpus(const std::filesystem::path& path, const std::vector<Study>& studies);
std::string study_to_json_line(const Study& study);

std::vector<PlantedBlob> load_truth(const std::filesystem::path& path);
void write_truth(const std::filesystem::path& path, const std::vector<PlantedBlob>& blobs);

}  // namespace icon
