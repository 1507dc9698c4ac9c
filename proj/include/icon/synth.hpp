#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "icon/corpus_io.hpp"
#include "icon/image.hpp"
#include "icon/observation.hpp"

namespace icon {

// Planted-lesion synthetic corpus. Every abnormal observation owns a fixed
// anchor slot on a 4x4 grid of 256 px cells; its blob is a flat disk placed
// near that anchor. Blob appearance encodes the severity attribute:
//   mild   -> intensity 200..215, diameter 120..150
//   severe -> intensity 235..255, diameter 170..200
// The temporal attribute is "unchanged" when the study has a prior visit and
// "new" otherwise.

inline constexpr int kBackgroundMax = 40;
inline constexpr int kAnchorCell = 256;
inline constexpr int kAnchorJitter = 24;

struct SyntheticTerms {
  Observation observation;
  std::string_view noun;
  std::string_view mild;
  std::string_view severe;
  std::string_view location;
};

/// Lexicon entries for the 13 abnormal observations (No Finding excluded),
/// in observation-index order. Every token is unique across the table.
const std::array<SyntheticTerms, kNumObservations - 1>& synthetic_lexicon();
const SyntheticTerms& synthetic_terms(Observation o);

inline constexpr std::string_view kTemporalNew = "new";
inline constexpr std::string_view kTemporalUnchanged = "unchanged";

enum class Severity : std::uint8_t { Mild, Severe };

struct BlobPlan {
  Observation observation = Observation::NoFinding;
  Severity severity = Severity::Mild;
  BBox bbox;  // square, side = diameter
  std::uint8_t intensity = 0;
};

struct StudyPlan {
  Study study;
  std::vector<BlobPlan> blobs;
  std::uint64_t noise_seed = 0;
};

struct SynthOptions {
  int n_studies = 200;
  std::uint64_t seed = 7;
  int canvas_size = kCanvasSize;
};

/// Deterministic study records and blob layouts; no pixels are produced.
std::vector<StudyPlan> plan_corpus(const SynthOptions& options);

/// Noise background (<= kBackgroundMax) plus every planned blob.
ImageGray render_view(const StudyPlan& plan, int view, int canvas_size = kCanvasSize);

struct SynthOutput {
  std::vector<Study> studies;
  std::vector<PlantedBlob> truth;
};

/// Writes <out>/corpus.jsonl, <out>/truth.jsonl and <out>/images/*.pgm.
/// Image paths in the corpus are relative to <out>/images.
SynthOutput synth_corpus(const SynthOptions& options, const std::filesystem::path& out_dir);

}  // namespace icon
