#include "icon/consistency.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "icon/error.hpp"
#include "icon/parallel.hpp"

namespace icon {

using nlohmann::json;

bool semantically_equivalent(const Study& a, const Study& b, double theta_obs, double theta_ent) {
  return overlap(a.positive_observations(), b.positive_observations()) >= theta_obs &&
         overlap(a.entity_texts(), b.entity_texts()) >= theta_ent;
}

std::vector<NeighborSet> mine_neighbors(const Corpus& corpus, const MiningOptions& options) {
  auto pool = corpus.split(options.split);
  std::sort(pool.begin(), pool.end(),
            [](const Study* a, const Study* b) { return a->study_id < b->study_id; });

  std::vector<std::set<Observation>> obs(pool.size());
  std::vector<EntitySet> ents(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    obs[i] = pool[i]->positive_observations();
    ents[i] = pool[i]->entity_texts();
  }

  std::vector<NeighborSet> per_query(pool.size());
  parallel_for(pool.size(), options.jobs, [&](std::size_t i) {
    per_query[i].query_id = pool[i]->study_id;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (i == j) continue;
      if (overlap(obs[i], obs[j]) >= options.theta_obs && overlap(ents[i], ents[j]) >= options.theta_ent) {
        per_query[i].neighbor_ids.push_back(pool[j]->study_id);
      }
    }
  });

  std::vector<NeighborSet> out;
  for (auto& ns : per_query) {
    if (!ns.neighbor_ids.empty()) out.push_back(std::move(ns));
  }
  return out;
}

double con_score(const EntitySet& hyp_query, std::span<const EntitySet> hyp_neighbors) {
  if (hyp_neighbors.empty()) throw DataError("consistency is undefined for a query without neighbors");
  double sum = 0.0;
  for (const auto& k : hyp_neighbors) sum += overlap(hyp_query, k);
  return sum / static_cast<double>(hyp_neighbors.size());
}

ConsistencyScore r_con_score(const EntitySet& hyp_query, const EntitySet& ref_query,
                             std::span<const EntitySet> hyp_neighbors) {
  ConsistencyScore s;
  s.con = con_score(hyp_query, hyp_neighbors);
  s.tau = overlap(hyp_query, ref_query);
  s.r_con = s.tau * s.con;
  s.n = hyp_neighbors.size();
  return s;
}

EvaluationReport evaluate(const Corpus& corpus, const HypothesisMap& hypotheses,
                          const EvaluationOptions& options) {
  std::vector<const Study*> everyone;
  for (const auto& st : corpus.studies()) everyone.push_back(&st);
  const auto lexicon = build_lexicon(options.vocab, everyone);
  const auto neighbors = mine_neighbors(corpus, options.mining);

  // Extract each needed hypothesis once.
  std::unordered_map<std::string, EntitySet> extracted;
  auto entities_of = [&](const std::string& id) -> const EntitySet& {
    auto it = extracted.find(id);
    if (it != extracted.end()) return it->second;
    auto h = hypotheses.find(id);
    if (h == hypotheses.end()) throw DataError("missing hypothesis for study " + id);
    return extracted.emplace(id, extract_entities(h->second, lexicon)).first->second;
  };
  for (const auto& ns : neighbors) {
    entities_of(ns.query_id);
    for (const auto& k : ns.neighbor_ids) entities_of(k);
  }

  EvaluationReport report;
  report.rows.resize(neighbors.size());
  parallel_for(neighbors.size(), options.mining.jobs, [&](std::size_t i) {
    const auto& ns = neighbors[i];
    std::vector<EntitySet> hyp_k;
    hyp_k.reserve(ns.neighbor_ids.size());
    for (const auto& k : ns.neighbor_ids) hyp_k.push_back(extracted.at(k));
    report.rows[i].study_id = ns.query_id;
    report.rows[i].score =
        r_con_score(extracted.at(ns.query_id), corpus.find(ns.query_id)->entity_texts(), hyp_k);
  });

  if (!report.rows.empty()) {
    double con = 0.0;
    double rcon = 0.0;
    for (const auto& row : report.rows) {
      con += row.score.con;
      rcon += row.score.r_con;
    }
    report.macro_con = con / static_cast<double>(report.rows.size());
    report.macro_rcon = rcon / static_cast<double>(report.rows.size());
  }
  return report;
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fixed4(const std::optional<double>& v) { return v ? fixed4(*v) : std::string("n/a"); }

}  // namespace

void write_scores_tsv(std::ostream& out, const EvaluationReport& report) {
  for (const auto& row : report.rows) {
    out << row.study_id << '\t' << row.score.n << '\t' << fixed4(row.score.con) << '\t'
        << fixed4(row.score.tau) << '\t' << fixed4(row.score.r_con) << '\n';
  }
  out << "#macro_con\t" << fixed4(report.macro_con) << '\n';
  out << "#macro_rcon\t" << fixed4(report.macro_rcon) << '\n';
}

std::string majority_report(const Corpus& corpus) {
  std::map<std::string, std::size_t> counts;
  for (const Study* st : corpus.split(Split::Train)) ++counts[st->report];
  if (counts.empty()) throw DataError("majority baseline needs a nonempty train split");
  // std::map iterates in lexicographic order, so the first maximum wins ties.
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

HypothesisMap majority_baseline(const Corpus& corpus, Split split) {
  const auto report = majority_report(corpus);
  HypothesisMap out;
  for (const Study* st : corpus.split(split)) out[st->study_id] = report;
  return out;
}

HypothesisMap parse_hypotheses(std::istream& in) {
  HypothesisMap out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "hypotheses line " + std::to_string(line_no) + ": ";
    try {
      const auto obj = json::parse(line);
      if (!obj.is_object() || !obj.contains("study_id") || !obj.contains("report") ||
          !obj["study_id"].is_string() || !obj["report"].is_string()) {
        throw DataError(where + "expected {\"study_id\": s, \"report\": s}");
      }
      const auto id = obj["study_id"].get<std::string>();
      if (!out.emplace(id, obj["report"].get<std::string>()).second) {
        throw DataError(where + "duplicate study_id " + id);
      }
    } catch (const json::exception& e) {
      throw DataError(where + e.what());
    }
  }
  return out;
}

HypothesisMap load_hypotheses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open hypotheses: " + path.string());
  return parse_hypotheses(in);
}

void write_hypotheses(std::ostream& out, const HypothesisMap& hypotheses) {
  for (const auto& [id, report] : hypotheses) {
    json obj;
    obj["study_id"] = id;
    obj["report"] = report;
    out << obj.dump() << '\n';
  }
}

void write_hypotheses(const std::filesystem::path& path, const HypothesisMap& hypotheses) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write hypotheses: " + path.string());
  write_hypotheses(out, hypotheses);
}

}  // namespace icon
