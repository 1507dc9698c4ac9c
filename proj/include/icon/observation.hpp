#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace icon {

inline constexpr std::size_t kNumObservations = 14;

// Ordering follows the standard 14-label chest X-ray annotation scheme.
enum class Observation : std::uint8_t {
  NoFinding = 0,
  Cardiomegaly,
  PleuralEffusion,
  Pneumothorax,
  EnlargedCardiomediastinum,
  Consolidation,
  LungOpacity,
  Fracture,
  LungLesion,
  Edema,
  Atelectasis,
  SupportDevices,
  Pneumonia,
  PleuralOther,
};

constexpr std::size_t index_of(Observation o) { return static_cast<std::size_t>(o); }

Observation observation_at(std::size_t index);
std::string_view observation_name(Observation o);
std::optional<Observation> parse_observation(std::string_view name);
const std::array<Observation, kNumObservations>& all_observations();

enum class Status : std::uint8_t { Blank = 0, Present, Absent, Uncertain };

std::string_view status_name(Status s);
std::optional<Status> parse_status(std::string_view name);

using StatusMap = std::array<Status, kNumObservations>;

enum class Relation : std::uint8_t { None = 0, Modify, LocatedAt };

std::string_view relation_name(Relation r);
std::optional<Relation> parse_relation(std::string_view name);

struct Entity {
  std::string text;
  Relation relation = Relation::None;

  auto operator<=>(const Entity&) const = default;
};

/// Lowercases `text` and validates it is a single nonempty token.
/// Throws DataError otherwise.
Entity make_entity(std::string_view text, Relation relation);

enum class Split : std::uint8_t { Train = 0, Valid, Test };

std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view name);

struct Study {
  std::string study_id;
  std::string subject_id;
  Split split = Split::Train;
  std::vector<std::string> image_paths;
  std::vector<std::string> prior_study_ids;
  std::string report;
  std::set<Entity> entities;
  StatusMap statuses{};

  bool operator==(const Study&) const = default;

  /// Entity texts regardless of relation; the unit of every overlap metric.
  std::set<std::string> entity_texts() const;
  /// Observations whose status is Present or Uncertain.
  std::set<Observation> positive_observations() const;
};

/// Immutable, id-indexed collection of studies in file order.
class Corpus {
 public:
  Corpus() = default;
  /// Throws DataError on duplicate study ids.
  explicit Corpus(std::vector<Study> studies);

  const std::vector<Study>& studies() const { return studies_; }
  std::size_t size() const { return studies_.size(); }
  bool empty() const { return studies_.empty(); }

  const Study* find(std::string_view study_id) const;
  std::vector<const Study*> split(Split s) const;
  /// Prior-study references that do not resolve within the corpus, as
  /// (study_id, missing prior id) pairs.
  std::vector<std::pair<std::string, std::string>> unresolved_priors() const;

 private:
  std::vector<Study> studies_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

}  // namespace icon
