#include <doctest.h>

#include <algorithm>
#include <iterator>
#include <sstream>

#include "helpers.hpp"
#include "icon/consistency.hpp"
#include "icon/error.hpp"
#include "icon/synth.hpp"

using namespace icon;
using icon::testing::make_study;
using O = Observation;

namespace {

// Independent oracle: intersection size via std::set_intersection.
double overlap_oracle(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::vector<std::string> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  return static_cast<double>(both.size()) / static_cast<double>(std::min(a.size(), b.size()));
}

std::set<std::string> obs_names(const Study& s) {
  std::set<std::string> out;
  for (auto o : s.positive_observations()) out.insert(std::string(observation_name(o)));
  return out;
}

std::vector<NeighborSet> brute_force(const Corpus& corpus, Split split, double t_obs, double t_ent) {
  std::vector<NeighborSet> out;
  std::vector<const Study*> pool;
  for (const auto& s : corpus.studies()) {
    if (s.split == split) pool.push_back(&s);
  }
  std::sort(pool.begin(), pool.end(), [](auto* a, auto* b) { return a->study_id < b->study_id; });
  for (const Study* q : pool) {
    NeighborSet ns{q->study_id, {}};
    for (const Study* k : pool) {
      if (k == q) continue;
      if (overlap_oracle(obs_names(*q), obs_names(*k)) >= t_obs &&
          overlap_oracle(q->entity_texts(), k->entity_texts()) >= t_ent) {
        ns.neighbor_ids.push_back(k->study_id);
      }
    }
    if (!ns.neighbor_ids.empty()) out.push_back(ns);
  }
  return out;
}

Corpus planned_corpus(int n, std::uint64_t seed) {
  std::vector<Study> studies;
  for (auto& p : plan_corpus({n, seed, 1024})) studies.push_back(std::move(p.study));
  return Corpus(std::move(studies));
}

}  // namespace

TEST_CASE("overlap coefficient examples") {
  const std::set<std::string> abc{"a", "b", "c"};
  CHECK(overlap(abc, abc) == 1.0);
  CHECK(overlap(abc, {"b", "c", "d", "e"}) == doctest::Approx(2.0 / 3.0));
  CHECK(overlap(std::set<std::string>{}, std::set<std::string>{"a"}) == 0.0);
  CHECK(overlap(std::set<std::string>{}, std::set<std::string>{}) == 1.0);
}

TEST_CASE("property: overlap range, symmetry, identity and monotonicity") {
  Rng rng(31);
  auto random_set = [&] {
    std::set<std::string> s;
    const auto n = rng.uniform_int(0, 8);
    for (int i = 0; i < n; ++i) s.insert("t" + std::to_string(rng.uniform_int(0, 11)));
    return s;
  };
  for (int trial = 0; trial < 2000; ++trial) {
    const auto a = random_set();
    const auto b = random_set();
    const double v = overlap(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == overlap(b, a));
    CHECK(v == overlap_oracle(a, b));
    if (!a.empty()) CHECK(overlap(a, a) == 1.0);
    if (!a.empty() && !b.empty()) {
      auto a2 = a, b2 = b;
      a2.insert("shared_x");
      b2.insert("shared_x");
      CHECK(overlap(a2, b2) >= v);
    }
  }
}

TEST_CASE("mining: identical studies are mutual neighbors") {
  const Corpus corpus({make_study("a", Split::Test, {O::Edema}, {"mild", "bilateral"}),
                       make_study("b", Split::Test, {O::Edema}, {"mild", "bilateral"}),
                       make_study("c", Split::Train, {O::Edema}, {"mild", "bilateral"})});
  const auto sets = mine_neighbors(corpus);
  REQUIRE(sets.size() == 2);
  CHECK(sets[0] == NeighborSet{"a", {"b"}});
  CHECK(sets[1] == NeighborSet{"b", {"a"}});
}

TEST_CASE("mining: observation overlap below 0.75 blocks neighbors whatever the entities") {
  // 2/3 observation overlap.
  const Corpus two_thirds({make_study("a", Split::Test, {O::Edema, O::Fracture, O::Pneumonia}, {"x"}),
                           make_study("b", Split::Test, {O::Edema, O::Fracture, O::Atelectasis}, {"x"})});
  CHECK(mine_neighbors(two_thirds).empty());

  // 7/10 observation overlap.
  const Corpus seven_tenths(
      {make_study("a", Split::Test,
                  {O::Cardiomegaly, O::PleuralEffusion, O::Pneumothorax, O::EnlargedCardiomediastinum,
                   O::Consolidation, O::LungOpacity, O::Fracture, O::LungLesion, O::Edema, O::Atelectasis},
                  {"x"}),
       make_study("b", Split::Test,
                  {O::Cardiomegaly, O::PleuralEffusion, O::Pneumothorax, O::EnlargedCardiomediastinum,
                   O::Consolidation, O::LungOpacity, O::Fracture, O::SupportDevices, O::Pneumonia, O::PleuralOther},
                  {"x"})});
  CHECK(mine_neighbors(seven_tenths).empty());

  // Exactly 3/4 passes.
  const Corpus three_quarters(
      {make_study("a", Split::Test, {O::Edema, O::Fracture, O::Pneumonia, O::Atelectasis}, {"x"}),
       make_study("b", Split::Test, {O::Edema, O::Fracture, O::Pneumonia, O::Cardiomegaly}, {"x"})});
  CHECK(mine_neighbors(three_quarters).size() == 2);

  // Entity overlap below 0.5 blocks too.
  const Corpus entities({make_study("a", Split::Test, {O::Edema}, {"p", "q", "r"}),
                         make_study("b", Split::Test, {O::Edema}, {"p", "s", "t"})});
  CHECK(mine_neighbors(entities).empty());
}

TEST_CASE("mining a 6-study hand corpus matches the all-pairs oracle") {
  const Corpus corpus({
      make_study("s1", Split::Test, {O::Edema}, {"mild", "bilateral"}),
      make_study("s2", Split::Test, {O::Edema}, {"mild", "basal"}),
      make_study("s3", Split::Test, {O::Edema, O::Fracture}, {"mild", "bilateral", "rib"}),
      make_study("s4", Split::Test, {O::Fracture}, {"rib", "healed"}),
      make_study("s5", Split::Test, {}, {"clear"}),
      make_study("s6", Split::Test, {}, {"clear", "lungs"}),
  });
  const auto mined = mine_neighbors(corpus);
  CHECK(mined == brute_force(corpus, Split::Test, 0.75, 0.5));
  // s1~s2 (entities 1/2), s1~s3 fails on observations (1/1 = 1 passes; entities 2/2), s5~s6.
  REQUIRE(!mined.empty());
  CHECK(mined.front() == NeighborSet{"s1", {"s2", "s3"}});
}

TEST_CASE("property: mining equals brute force and is symmetric on synthetic corpora") {
  for (int n : {1, 2, 5, 17, 40, 73, 100}) {
    for (std::uint64_t seed : {1u, 7u, 99u}) {
      const auto corpus = planned_corpus(n, seed);
      for (Split split : {Split::Train, Split::Valid, Split::Test}) {
        MiningOptions options;
        options.split = split;
        const auto mined = mine_neighbors(corpus, options);
        CHECK(mined == brute_force(corpus, split, 0.75, 0.5));
        options.jobs = 3;
        CHECK(mine_neighbors(corpus, options) == mined);
        std::set<std::pair<std::string, std::string>> edges;
        for (const auto& ns : mined) {
          for (const auto& k : ns.neighbor_ids) edges.insert({ns.query_id, k});
        }
        for (const auto& [a, b] : edges) CHECK(edges.count({b, a}) == 1);
      }
    }
  }
}

TEST_CASE("con and r-con examples") {
  const EntitySet q{"a", "b"};
  const std::vector<EntitySet> same{q, q, q};
  CHECK(con_score(q, same) == 1.0);

  const std::vector<EntitySet> mixed{{"a", "b"}, {"a", "c"}};
  CHECK(con_score(q, mixed) == doctest::Approx(0.75));

  const std::vector<EntitySet> disjoint{{"z"}};
  CHECK(con_score(q, disjoint) == 0.0);
  CHECK_THROWS_AS(con_score(q, std::vector<EntitySet>{}), DataError);

  const auto perfect = r_con_score(q, q, same);
  CHECK(perfect.tau == 1.0);
  CHECK(perfect.con == 1.0);
  CHECK(perfect.r_con == 1.0);
  CHECK(perfect.n == 3);

  // tau = 4/5, con = 0.75 -> 0.6.
  const EntitySet hyp{"a", "b", "c", "d", "e"};
  const EntitySet ref{"a", "b", "c", "d", "x"};
  const std::vector<EntitySet> neigh{hyp, {"a", "b", "c", "f", "g"}};
  const auto s = r_con_score(hyp, ref, neigh);
  CHECK(s.tau == doctest::Approx(0.8));
  CHECK(s.con == doctest::Approx(0.8));
  CHECK(s.r_con == s.tau * s.con);

  const auto annihilated = r_con_score(q, {"zz"}, same);
  CHECK(annihilated.r_con == 0.0);
  CHECK(annihilated.con == 1.0);
}

TEST_CASE("r-con of tau 0.8 and con 0.75 is 0.6") {
  const EntitySet hyp{"a", "b", "c", "d", "e"};
  const EntitySet ref{"a", "b", "c", "d", "x"};                          // tau = 4/5
  const std::vector<EntitySet> neigh{hyp, {"a", "q"}};                  // overlaps 1 and 1/2
  const auto s = r_con_score(hyp, ref, neigh);
  CHECK(s.tau == doctest::Approx(0.8));
  CHECK(s.con == doctest::Approx(0.75));
  CHECK(s.r_con == doctest::Approx(0.6));
}

TEST_CASE("property: r_con never exceeds tau or con") {
  Rng rng(12);
  auto random_set = [&] {
    EntitySet s;
    const auto n = rng.uniform_int(0, 6);
    for (int i = 0; i < n; ++i) s.insert("t" + std::to_string(rng.uniform_int(0, 9)));
    return s;
  };
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<EntitySet> neigh;
    const auto n = rng.uniform_int(1, 5);
    for (int i = 0; i < n; ++i) neigh.push_back(random_set());
    const auto s = r_con_score(random_set(), random_set(), neigh);
    CHECK(s.r_con <= std::min(s.tau, s.con) + 1e-15);
    CHECK(s.r_con == s.tau * s.con);
    CHECK(s.n == neigh.size());
  }
}

namespace {

std::vector<Study> eval_studies() {
  return {
      make_study("t1", Split::Train, {O::Edema}, {"mild", "edema"}, "mild edema."),
      make_study("t2", Split::Train, {O::Edema}, {"mild", "edema"}, "mild edema."),
      make_study("t3", Split::Train, {O::Fracture}, {"rib", "fracture"}, "rib fracture."),
      make_study("q1", Split::Test, {O::Edema}, {"mild", "edema"}, "mild edema."),
      make_study("q2", Split::Test, {O::Edema}, {"mild", "edema", "new"}, "new mild edema."),
      make_study("q3", Split::Test, {O::Fracture}, {"rib", "fracture"}, "rib fracture."),
      make_study("q4", Split::Test, {O::Fracture}, {"rib", "fracture", "healed"}, "healed rib fracture."),
      make_study("q5", Split::Test, {O::Pneumonia}, {"pneumonia"}, "pneumonia."),
  };
}

}  // namespace

TEST_CASE("evaluate the majority baseline gives CON 1") {
  const Corpus corpus(eval_studies());
  CHECK(majority_report(corpus) == "mild edema.");
  const auto hyps = majority_baseline(corpus);
  CHECK(hyps.size() == 5);
  for (const auto& [id, r] : hyps) CHECK(r == "mild edema.");
  const auto report = evaluate(corpus, hyps);
  CHECK(report.rows.size() == 4);
  REQUIRE(report.macro_con);
  CHECK(*report.macro_con == 1.0);
  REQUIRE(report.macro_rcon);
  // tau: q1 1, q2 1, q3 0, q4 0.
  CHECK(*report.macro_rcon == doctest::Approx(0.5));
}

TEST_CASE("evaluate with no equivalent pairs reports n/a") {
  const Corpus corpus({make_study("t", Split::Train, {O::Edema}, {"a"}),
                       make_study("q", Split::Test, {O::Edema}, {"a"}),
                       make_study("r", Split::Test, {O::Fracture}, {"b"})});
  const auto report = evaluate(corpus, majority_baseline(corpus));
  CHECK(report.rows.empty());
  CHECK_FALSE(report.macro_con);
  std::ostringstream out;
  write_scores_tsv(out, report);
  CHECK(out.str() == "#macro_con\tn/a\n#macro_rcon\tn/a\n");
}

TEST_CASE("evaluate names the study whose hypothesis is missing") {
  const Corpus corpus(eval_studies());
  auto hyps = majority_baseline(corpus);
  hyps.erase("q3");
  try {
    evaluate(corpus, hyps);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("q3") != std::string::npos);
  }
}

TEST_CASE("evaluate is independent of corpus order and of entity-preserving rewording") {
  auto studies = eval_studies();
  const Corpus corpus(studies);
  HypothesisMap hyps{{"q1", "mild edema"}, {"q2", "edema, new"}, {"q3", "rib fracture"},
                     {"q4", "healed fracture"}, {"q5", "pneumonia"}};
  const auto base = evaluate(corpus, hyps);
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(studies);
    const auto shuffled = evaluate(Corpus(studies), hyps);
    CHECK(shuffled.macro_con == base.macro_con);
    CHECK(shuffled.macro_rcon == base.macro_rcon);
  }
  HypothesisMap reworded{{"q1", "There is MILD edema!"}, {"q2", "New: edema."}, {"q3", "Fracture of a rib."},
                         {"q4", "Fracture (healed)."}, {"q5", "Likely pneumonia"}};
  const auto again = evaluate(corpus, reworded);
  CHECK(again.macro_con == base.macro_con);
  CHECK(again.macro_rcon == base.macro_rcon);
}

TEST_CASE("scores TSV layout") {
  const Corpus corpus(eval_studies());
  const auto report = evaluate(corpus, majority_baseline(corpus));
  std::ostringstream out;
  write_scores_tsv(out, report);
  const auto text = out.str();
  CHECK(text.rfind("q1\t1\t1.0000\t1.0000\t1.0000\n", 0) == 0);
  CHECK(text.find("#macro_con\t1.0000\n#macro_rcon\t0.5000\n") != std::string::npos);
}

TEST_CASE("majority ties go to the lexicographically smallest report") {
  const Corpus corpus({make_study("a", Split::Train, {}, {}, "zeta"), make_study("b", Split::Train, {}, {}, "alpha"),
                       make_study("c", Split::Train, {}, {}, "zeta"), make_study("d", Split::Train, {}, {}, "alpha")});
  CHECK(majority_report(corpus) == "alpha");
  CHECK_THROWS_AS(majority_report(Corpus({make_study("q", Split::Test, {}, {})})), DataError);
}

TEST_CASE("hypotheses JSONL round-trips") {
  const HypothesisMap hyps{{"a", "one \"quoted\" line"}, {"b", "two\nlines"}};
  std::stringstream buf;
  write_hypotheses(buf, hyps);
  CHECK(parse_hypotheses(buf) == hyps);
  std::istringstream bad("{\"study_id\": \"a\"}\n");
  CHECK_THROWS_AS(parse_hypotheses(bad), DataError);
}
