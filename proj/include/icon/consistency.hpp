#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "icon/annotate.hpp"
#include "icon/observation.hpp"

namespace icon {

using EntitySet = std::set<std::string>;
/// study_id -> hypothesis report text.
using HypothesisMap = std::map<std::string, std::string>;

inline constexpr double kThetaObservation = 0.75;
inline constexpr double kThetaEntity = 0.5;

/// |A ∩ B| / min(|A|, |B|). Both empty -> 1, exactly one empty -> 0.
template <typename T>
double overlap(const std::set<T>& a, const std::set<T>& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::size_t shared = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++shared;
      ++ia;
      ++ib;
    }
  }
  return static_cast<double>(shared) / static_cast<double>(std::min(a.size(), b.size()));
}

struct NeighborSet {
  std::string query_id;
  std::vector<std::string> neighbor_ids;  // sorted

  std::size_t size() const { return neighbor_ids.size(); }
  bool operator==(const NeighborSet&) const = default;
};

struct MiningOptions {
  double theta_obs = kThetaObservation;
  double theta_ent = kThetaEntity;
  Split split = Split::Test;
  unsigned jobs = 1;
};

/// Two studies of the same split are semantically equivalent when their
/// positive-observation overlap reaches theta_obs and their gold-entity
/// overlap reaches theta_ent. Queries without neighbors are omitted; output
/// is sorted by query id.
std::vector<NeighborSet> mine_neighbors(const Corpus& corpus, const MiningOptions& options = {});

bool semantically_equivalent(const Study& a, const Study& b, double theta_obs, double theta_ent);

/// Mean overlap between the query hypothesis and each neighbor hypothesis.
/// Throws DataError when there are no neighbors.
double con_score(const EntitySet& hyp_query, std::span<const EntitySet> hyp_neighbors);

struct ConsistencyScore {
  double con = 0.0;
  double tau = 0.0;
  double r_con = 0.0;
  std::size_t n = 0;
};

/// tau = overlap(hypothesis, reference); r_con = tau * con.
ConsistencyScore r_con_score(const EntitySet& hyp_query, const EntitySet& ref_query,
                             std::span<const EntitySet> hyp_neighbors);

struct QueryScore {
  std::string study_id;
  ConsistencyScore score;
};

struct EvaluationReport {
  std::vector<QueryScore> rows;  // sorted by study_id
  std::optional<double> macro_con;
  std::optional<double> macro_rcon;
};

struct EvaluationOptions {
  MiningOptions mining;
  /// Extra lexicon terms (e.g. an attribute vocabulary) beyond the corpus'
  /// gold entity texts.
  const AttributeVocab* vocab = nullptr;
};

/// Mines neighbors, extracts entities from every hypothesis and scores each
/// query. Throws DataError naming the first study without a hypothesis.
EvaluationReport evaluate(const Corpus& corpus, const HypothesisMap& hypotheses,
                          const EvaluationOptions& options = {});

/// study_id<TAB>n<TAB>con<TAB>tau<TAB>r_con, then #macro_con / #macro_rcon
/// lines. Values use 4 decimals; an undefined macro prints "n/a".
void write_scores_tsv(std::ostream& out, const EvaluationReport& report);

/// Most frequent train report; ties go to the lexicographically smallest text.
std::string majority_report(const Corpus& corpus);

/// Every study of `split` mapped to the majority train report.
HypothesisMap majority_baseline(const Corpus& corpus, Split split = Split::Test);

// Hypotheses JSONL: {"study_id": s, "report": s}
HypothesisMap parse_hypotheses(std::istream& in);
HypothesisMap load_hypotheses(const std::filesystem::path& path);
void write_hypotheses(std::ostream& out, const HypothesisMap& hypotheses);
void write_hypotheses(const std::filesystem::path& path, const HypothesisMap& hypotheses);

}  // namespace icon
