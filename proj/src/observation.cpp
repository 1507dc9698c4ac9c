#include "icon/observation.hpp"

#include <algorithm>
#include <cctype>

#include "icon/error.hpp"

namespace icon {

namespace {

constexpr std::array<std::string_view, kNumObservations> kObservationNames = {
    "No Finding",    "Cardiomegaly",  "Pleural Effusion", "Pneumothorax",
    "Enlarged Cardiomediastinum",     "Consolidation",    "Lung Opacity",
    "Fracture",      "Lung Lesion",   "Edema",            "Atelectasis",
    "Support Devices", "Pneumonia",   "Pleural Other",
};

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

Observation observation_at(std::size_t index) {
  if (index >= kNumObservations) {
    throw DataError("observation index out of range: " + std::to_string(index));
  }
  return static_cast<Observation>(index);
}

std::string_view observation_name(Observation o) { return kObservationNames[index_of(o)]; }

std::optional<Observation> parse_observation(std::string_view name) {
  for (std::size_t i = 0; i < kNumObservations; ++i) {
    if (kObservationNames[i] == name) return static_cast<Observation>(i);
  }
  return std::nullopt;
}

const std::array<Observation, kNumObservations>& all_observations() {
  static const auto all = [] {
    std::array<Observation, kNumObservations> out{};
    for (std::size_t i = 0; i < kNumObservations; ++i) out[i] = static_cast<Observation>(i);
    return out;
  }();
  return all;
}

std::string_view status_name(Status s) {
  switch (s) {
    case Status::Present: return "present";
    case Status::Absent: return "absent";
    case Status::Uncertain: return "uncertain";
    case Status::Blank: return "blank";
  }
  return "blank";
}

std::optional<Status> parse_status(std::string_view name) {
  const auto lower = lowercase(name);
  if (lower == "present") return Status::Present;
  if (lower == "absent") return Status::Absent;
  if (lower == "uncertain") return Status::Uncertain;
  if (lower == "blank") return Status::Blank;
  return std::nullopt;
}

std::string_view relation_name(Relation r) {
  switch (r) {
    case Relation::Modify: return "modify";
    case Relation::LocatedAt: return "located_at";
    case Relation::None: return "none";
  }
  return "none";
}

std::optional<Relation> parse_relation(std::string_view name) {
  if (name == "modify") return Relation::Modify;
  if (name == "located_at") return Relation::LocatedAt;
  if (name == "none") return Relation::None;
  return std::nullopt;
}

Entity make_entity(std::string_view text, Relation relation) {
  if (text.empty()) throw DataError("entity text is empty");
  if (std::any_of(text.begin(), text.end(),
                  [](unsigned char c) { return std::isspace(c) != 0; })) {
    throw DataError("entity text contains whitespace: '" + std::string(text) + "'");
  }
  return Entity{lowercase(text), relation};
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "valid") return Split::Valid;
  if (name == "test") return Split::Test;
  return std::nullopt;
}

std::set<std::string> Study::entity_texts() const {
  std::set<std::string> out;
  for (const auto& e : entities) out.insert(e.text);
  return out;
}

std::set<Observation> Study::positive_observations() const {
  std::set<Observation> out;
  for (std::size_t i = 0; i < kNumObservations; ++i) {
    if (statuses[i] == Status::Present || statuses[i] == Status::Uncertain) {
      out.insert(static_cast<Observation>(i));
    }
  }
  return out;
}

Corpus::Corpus(std::vector<Study> studies) : studies_(std::move(studies)) {
  by_id_.reserve(studies_.size());
  for (std::size_t i = 0; i < studies_.size(); ++i) {
    if (!by_id_.emplace(studies_[i].study_id, i).second) {
      throw DataError("duplicate study_id: " + studies_[i].study_id);
    }
  }
}

const Study* Corpus::find(std::string_view study_id) const {
  auto it = by_id_.find(std::string(study_id));
  return it == by_id_.end() ? nullptr : &studies_[it->second];
}

std::vector<const Study*> Corpus::split(Split s) const {
  std::vector<const Study*> out;
  for (const auto& st : studies_) {
    if (st.split == s) out.push_back(&st);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> Corpus::unresolved_priors() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& st : studies_) {
    for (const auto& prior : st.prior_study_ids) {
      if (!find(prior)) out.emplace_back(st.study_id, prior);
    }
  }
  return out;
}

}  // namespace icon
