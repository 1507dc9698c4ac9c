#include "icon/compose.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "icon/error.hpp"
#include "icon/rng.hpp"

namespace icon {

using nlohmann::json;

void write_attributes(std::ostream& out, const std::vector<AttributeRecord>& records) {
  for (const auto& r : records) {
    json obj;
    obj["study_id"] = r.study_id;
    obj["observation"] = std::string(observation_name(r.observation));
    obj["attributes"] = r.attributes;
    obj["probs"] = r.probs;
    out << obj.dump() << '\n';
  }
}

void write_attributes(const std::filesystem::path& path, const std::vector<AttributeRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write attributes: " + path.string());
  write_attributes(out, records);
}

std::vector<AttributeRecord> load_attributes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open attributes: " + path.string());
  std::vector<AttributeRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "attributes line " + std::to_string(line_no) + ": ";
    try {
      const auto obj = json::parse(line);
      AttributeRecord r;
      r.study_id = obj.at("study_id").get<std::string>();
      const auto name = obj.at("observation").get<std::string>();
      const auto o = parse_observation(name);
      if (!o) throw DataError(where + "unknown observation \"" + name + "\"");
      r.observation = *o;
      r.attributes = obj.at("attributes").get<std::vector<std::string>>();
      r.probs = obj.at("probs").get<std::vector<double>>();
      if (r.probs.size() != r.attributes.size()) throw DataError(where + "attributes and probs differ in length");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(where + e.what());
    }
  }
  return out;
}

Signature build_signature(std::span<const Observation> lesion_observations,
                          std::span<const AttributeRecord> attributes) {
  Signature sig;
  sig.positives.insert(lesion_observations.begin(), lesion_observations.end());
  for (const auto& r : attributes) {
    if (!sig.positives.count(r.observation)) continue;
    for (const auto& a : r.attributes) sig.attributes.emplace(r.observation, a);
  }
  return sig;
}

Signature gold_signature(const Study& study, const AttributeVocab& vocab) {
  Signature sig;
  const auto texts = study.entity_texts();
  for (auto o : study.positive_observations()) {
    if (o == Observation::NoFinding) continue;
    sig.positives.insert(o);
    for (const auto& ra : vocab.attributes(o)) {
      if (texts.count(ra.attribute)) sig.attributes.emplace(o, ra.attribute);
    }
  }
  return sig;
}

ReportIndex build_report_index(const Corpus& corpus, const AttributeVocab& vocab) {
  ReportIndex index;
  for (const Study* st : corpus.split(Split::Train)) {
    index.entries.push_back({st->study_id, st->report, gold_signature(*st, vocab)});
  }
  std::sort(index.entries.begin(), index.entries.end(),
            [](const IndexEntry& a, const IndexEntry& b) { return a.study_id < b.study_id; });
  if (!index.entries.empty()) index.majority = majority_report(corpus);
  return index;
}

double signature_similarity(const Signature& a, const Signature& b, const ComposeWeights& weights) {
  return weights.observations * overlap(a.positives, b.positives) +
         weights.attributes * overlap(a.attributes, b.attributes);
}

const std::string& retrieve_report(const Signature& signature, const ReportIndex& index,
                                   const ComposeWeights& weights) {
  if (index.entries.empty()) throw DataError("report index is empty");
  if (signature.empty()) return index.majority;
  const IndexEntry* best = nullptr;
  double best_score = 0.0;
  for (const auto& e : index.entries) {  // sorted, so strict > keeps the smallest id
    const double s = signature_similarity(signature, e.signature, weights);
    if (!best || s > best_score) {
      best = &e;
      best_score = s;
    }
  }
  return best->report;
}

HypothesisMap compose_hypotheses(const Corpus& corpus, Split split, const ReportIndex& index,
                                 std::span<const LesionRecord> lesions,
                                 std::span<const AttributeRecord> attributes,
                                 const ComposeWeights& weights) {
  std::map<std::string, std::vector<Observation>> lesion_obs;
  for (const auto& l : lesions) lesion_obs[l.study_id].push_back(l.observation);
  std::map<std::string, std::vector<AttributeRecord>> attrs;
  for (const auto& a : attributes) attrs[a.study_id].push_back(a);

  HypothesisMap out;
  for (const Study* st : corpus.split(split)) {
    const auto lo = lesion_obs.find(st->study_id);
    const auto at = attrs.find(st->study_id);
    const auto sig = build_signature(
        lo == lesion_obs.end() ? std::span<const Observation>{} : std::span<const Observation>(lo->second),
        at == attrs.end() ? std::span<const AttributeRecord>{} : std::span<const AttributeRecord>(at->second));
    out[st->study_id] = retrieve_report(sig, index, weights);
  }
  return out;
}

HypothesisMap random_baseline(const Corpus& corpus, Split split, std::uint64_t seed) {
  auto train = corpus.split(Split::Train);
  if (train.empty()) throw DataError("random baseline needs train studies");
  std::sort(train.begin(), train.end(), [](const Study* a, const Study* b) { return a->study_id < b->study_id; });
  auto targets = corpus.split(split);
  std::sort(targets.begin(), targets.end(),
            [](const Study* a, const Study* b) { return a->study_id < b->study_id; });
  Rng rng(seed);
  HypothesisMap out;
  for (const Study* st : targets) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(train.size()) - 1));
    out[st->study_id] = train[k]->report;
  }
  return out;
}

}  // namespace icon
