#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "icon/annotate.hpp"
#include "icon/consistency.hpp"
#include "icon/lesion.hpp"
#include "icon/observation.hpp"

namespace icon {

/// Predicted attributes of one lesion, as written by `icon generate`.
struct AttributeRecord {
  std::string study_id;
  Observation observation = Observation::NoFinding;
  std::vector<std::string> attributes;
  std::vector<double> probs;

  bool operator==(const AttributeRecord&) const = default;
};

void write_attributes(std::ostream& out, const std::vector<AttributeRecord>& records);
void write_attributes(const std::filesystem::path& path, const std::vector<AttributeRecord>& records);
std::vector<AttributeRecord> load_attributes(const std::filesystem::path& path);

/// Retrieval key: positive observations plus (observation, attribute) pairs.
struct Signature {
  std::set<Observation> positives;
  std::set<std::pair<Observation, std::string>> attributes;

  bool empty() const { return positives.empty() && attributes.empty(); }
  bool operator==(const Signature&) const = default;
};

/// Attribute pairs whose observation has no lesion are dropped.
Signature build_signature(std::span<const Observation> lesion_observations,
                          std::span<const AttributeRecord> attributes);

/// Gold positives (No Finding excluded) and every gold entity that belongs to
/// the vocabulary of one of them.
Signature gold_signature(const Study& study, const AttributeVocab& vocab);

struct IndexEntry {
  std::string study_id;
  std::string report;
  Signature signature;
};

struct ReportIndex {
  std::vector<IndexEntry> entries;  // sorted by study_id
  std::string majority;
};

ReportIndex build_report_index(const Corpus& corpus, const AttributeVocab& vocab);

struct ComposeWeights {
  double observations = 0.5;
  double attributes = 0.5;
};

double signature_similarity(const Signature& a, const Signature& b, const ComposeWeights& weights = {});

/// Report of the best-scoring entry, ties to the smallest study_id; the
/// majority report for an empty signature. Throws DataError on an empty index.
const std::string& retrieve_report(const Signature& signature, const ReportIndex& index,
                                   const ComposeWeights& weights = {});

/// Signatures and retrieved reports for every study of `split`.
HypothesisMap compose_hypotheses(const Corpus& corpus, Split split, const ReportIndex& index,
                                 std::span<const LesionRecord> lesions,
                                 std::span<const AttributeRecord> attributes,
                                 const ComposeWeights& weights = {});

/// Each study of `split` gets a uniformly drawn train report.
HypothesisMap random_baseline(const Corpus& corpus, Split split, std::uint64_t seed);

}  // namespace icon
