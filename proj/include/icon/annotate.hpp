#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "icon/observation.hpp"

namespace icon {

/// One bit per observation; true means Positive (Present or Uncertain).
struct LabelVector {
  std::array<bool, kNumObservations> bits{};

  bool operator[](Observation o) const { return bits[index_of(o)]; }
  bool& operator[](Observation o) { return bits[index_of(o)]; }
  bool operator==(const LabelVector&) const = default;
};

/// Throws DataError when No Finding is Uncertain.
LabelVector to_label(const StatusMap& statuses);

struct ClassWeights {
  std::array<double, kNumObservations> alpha{};
  std::size_t train_size = 0;
  std::array<std::size_t, kNumObservations> counts{};
};

/// alpha = 1 + ln((train_size - count) / count). Requires 0 < count < train_size.
double positive_weight(std::size_t train_size, std::size_t count);

/// Throws DataError naming the first observation with zero or saturated count.
ClassWeights class_weights(std::span<const Study* const> train);

struct RankedAttribute {
  std::string attribute;
  double pmi = 0.0;

  bool operator==(const RankedAttribute&) const = default;
};

/// Per-observation attribute lists, descending by PMI, ties lexicographic.
class AttributeVocab {
 public:
  AttributeVocab() = default;
  explicit AttributeVocab(std::array<std::vector<RankedAttribute>, kNumObservations> lists);

  const std::vector<RankedAttribute>& attributes(Observation o) const { return lists_[index_of(o)]; }
  std::size_t size(Observation o) const { return lists_[index_of(o)].size(); }
  std::optional<std::size_t> position(Observation o, std::string_view attribute) const;
  std::vector<std::string> names(Observation o) const;

  /// Bit k is set when the k-th attribute of `o` is among `entity_texts`.
  std::vector<std::uint8_t> label_bits(Observation o, const std::set<std::string>& entity_texts) const;

  bool operator==(const AttributeVocab&) const = default;

 private:
  std::array<std::vector<RankedAttribute>, kNumObservations> lists_;
};

inline constexpr std::size_t kDefaultTopK = 30;
inline constexpr std::size_t kDefaultMinAttributeCount = 3;

/// ln((c_oa + 1) * total / (c_o * c_a)); add-one smoothing on the joint count.
double pmi(std::size_t c_oa, std::size_t c_o, std::size_t c_a, std::size_t total);

/// Study-level PMI between positive observations and modify/located_at
/// entities. Attributes seen in fewer than `min_count` studies, or never
/// together with the observation, are not candidates.
AttributeVocab pmi_rank(std::span<const Study* const> train, std::size_t k = kDefaultTopK,
                        std::size_t min_count = kDefaultMinAttributeCount);

// TSV: observation<TAB>rank<TAB>attribute<TAB>pmi, rank starting at 1.
void write_vocab_tsv(std::ostream& out, const AttributeVocab& vocab);
void write_vocab_tsv(const std::filesystem::path& path, const AttributeVocab& vocab);
AttributeVocab read_vocab_tsv(std::istream& in);
AttributeVocab read_vocab_tsv(const std::filesystem::path& path);

using Lexicon = std::unordered_set<std::string>;

/// Vocabulary attributes plus every gold entity text of `studies`.
Lexicon build_lexicon(const AttributeVocab* vocab, std::span<const Study* const> studies);

/// Lowercase, strip punctuation, split on whitespace, keep lexicon tokens.
std::set<std::string> extract_entities(std::string_view text, const Lexicon& lexicon);

}  // namespace icon
