#include "icon/annotate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "icon/error.hpp"

namespace icon {

LabelVector to_label(const StatusMap& statuses) {
  if (statuses[index_of(Observation::NoFinding)] == Status::Uncertain) {
    throw DataError("No Finding admits only present or absent, got uncertain");
  }
  LabelVector out;
  for (std::size_t i = 0; i < kNumObservations; ++i) {
    out.bits[i] = statuses[i] == Status::Present || statuses[i] == Status::Uncertain;
  }
  return out;
}

double positive_weight(std::size_t train_size, std::size_t count) {
  if (count == 0 || count >= train_size) {
    throw DataError("class weight undefined for count " + std::to_string(count) + " of " +
                    std::to_string(train_size));
  }
  return 1.0 + std::log(static_cast<double>(train_size - count) / static_cast<double>(count));
}

ClassWeights class_weights(std::span<const Study* const> train) {
  ClassWeights w;
  w.train_size = train.size();
  for (const Study* st : train) {
    const auto labels = to_label(st->statuses);
    for (std::size_t i = 0; i < kNumObservations; ++i) w.counts[i] += labels.bits[i] ? 1 : 0;
  }
  for (std::size_t i = 0; i < kNumObservations; ++i) {
    try {
      w.alpha[i] = positive_weight(w.train_size, w.counts[i]);
    } catch (const DataError& e) {
      throw DataError(std::string(observation_name(observation_at(i))) + ": " + e.what());
    }
  }
  return w;
}

AttributeVocab::AttributeVocab(std::array<std::vector<RankedAttribute>, kNumObservations> lists)
    : lists_(std::move(lists)) {}

std::optional<std::size_t> AttributeVocab::position(Observation o, std::string_view attribute) const {
  const auto& list = lists_[index_of(o)];
  for (std::size_t k = 0; k < list.size(); ++k) {
    if (list[k].attribute == attribute) return k;
  }
  return std::nullopt;
}

std::vector<std::string> AttributeVocab::names(Observation o) const {
  std::vector<std::string> out;
  for (const auto& r : lists_[index_of(o)]) out.push_back(r.attribute);
  return out;
}

std::vector<std::uint8_t> AttributeVocab::label_bits(Observation o,
                                                     const std::set<std::string>& entity_texts) const {
  const auto& list = lists_[index_of(o)];
  std::vector<std::uint8_t> bits(list.size(), 0);
  for (std::size_t k = 0; k < list.size(); ++k) bits[k] = entity_texts.count(list[k].attribute) ? 1 : 0;
  return bits;
}

double pmi(std::size_t c_oa, std::size_t c_o, std::size_t c_a, std::size_t total) {
  return std::log((static_cast<double>(c_oa) + 1.0) * static_cast<double>(total) /
                  (static_cast<double>(c_o) * static_cast<double>(c_a)));
}

AttributeVocab pmi_rank(std::span<const Study* const> train, std::size_t k, std::size_t min_count) {
  if (train.empty()) throw DataError("PMI ranking needs a nonempty train split");

  std::array<std::size_t, kNumObservations> c_o{};
  std::map<std::string, std::size_t> c_a;
  std::array<std::map<std::string, std::size_t>, kNumObservations> c_oa;

  for (const Study* st : train) {
    std::set<std::string> attrs;
    for (const auto& e : st->entities) {
      if (e.relation == Relation::Modify || e.relation == Relation::LocatedAt) attrs.insert(e.text);
    }
    for (const auto& a : attrs) ++c_a[a];
    const auto labels = to_label(st->statuses);
    for (std::size_t o = 0; o < kNumObservations; ++o) {
      if (!labels.bits[o]) continue;
      ++c_o[o];
      for (const auto& a : attrs) ++c_oa[o][a];
    }
  }

  std::array<std::vector<RankedAttribute>, kNumObservations> lists;
  for (std::size_t o = 0; o < kNumObservations; ++o) {
    auto& list = lists[o];
    for (const auto& [attr, joint] : c_oa[o]) {
      const auto marginal = c_a[attr];
      if (marginal < min_count) continue;
      list.push_back({attr, pmi(joint, c_o[o], marginal, train.size())});
    }
    std::sort(list.begin(), list.end(), [](const RankedAttribute& a, const RankedAttribute& b) {
      if (a.pmi != b.pmi) return a.pmi > b.pmi;
      return a.attribute < b.attribute;
    });
    if (list.size() > k) list.resize(k);
  }
  return AttributeVocab(std::move(lists));
}

void write_vocab_tsv(std::ostream& out, const AttributeVocab& vocab) {
  for (auto o : all_observations()) {
    const auto& list = vocab.attributes(o);
    for (std::size_t r = 0; r < list.size(); ++r) {
      out << observation_name(o) << '\t' << (r + 1) << '\t' << list[r].attribute << '\t'
          << std::setprecision(17) << list[r].pmi << '\n';
    }
  }
}

void write_vocab_tsv(const std::filesystem::path& path, const AttributeVocab& vocab) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary: " + path.string());
  write_vocab_tsv(out, vocab);
}

AttributeVocab read_vocab_tsv(std::istream& in) {
  std::array<std::vector<RankedAttribute>, kNumObservations> lists;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    const auto where = "vocabulary line " + std::to_string(line_no) + ": ";
    if (fields.size() != 4) throw DataError(where + "expected 4 tab-separated fields");
    const auto o = parse_observation(fields[0]);
    if (!o) throw DataError(where + "unknown observation \"" + fields[0] + "\"");
    auto& list = lists[index_of(*o)];
    std::size_t rank = 0;
    double score = 0.0;
    try {
      rank = std::stoul(fields[1]);
      score = std::stod(fields[3]);
    } catch (const std::exception&) {
      throw DataError(where + "bad rank or pmi value");
    }
    if (rank != list.size() + 1) throw DataError(where + "ranks must be consecutive from 1");
    list.push_back({fields[2], score});
  }
  return AttributeVocab(std::move(lists));
}

AttributeVocab read_vocab_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary: " + path.string());
  return read_vocab_tsv(in);
}

Lexicon build_lexicon(const AttributeVocab* vocab, std::span<const Study* const> studies) {
  Lexicon lex;
  if (vocab) {
    for (auto o : all_observations()) {
      for (const auto& r : vocab->attributes(o)) lex.insert(r.attribute);
    }
  }
  for (const Study* st : studies) {
    for (const auto& e : st->entities) lex.insert(e.text);
  }
  return lex;
}

std::set<std::string> extract_entities(std::string_view text, const Lexicon& lexicon) {
  std::set<std::string> out;
  std::string token;
  auto flush = [&] {
    if (!token.empty() && lexicon.count(token)) out.insert(token);
    token.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (!std::ispunct(c)) {
      token.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

}  // namespace icon
