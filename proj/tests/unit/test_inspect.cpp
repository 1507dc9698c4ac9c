#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "icon/checkpoint.hpp"
#include "icon/error.hpp"
#include "icon/inspect.hpp"
#include "icon/pipeline.hpp"
#include "icon/synth.hpp"

using namespace icon;
using icon::testing::make_study;
using O = Observation;

namespace {

PixelBlock random_block(Rng& rng, int w, int h) {
  PixelBlock b{w, h, std::vector<double>(static_cast<std::size_t>(w) * h)};
  for (auto& v : b.values) v = static_cast<double>(rng.uniform_int(0, 255));
  return b;
}

std::vector<std::uint8_t> bits(std::initializer_list<int> v) { return std::vector<std::uint8_t>(v.begin(), v.end()); }

}  // namespace

TEST_CASE("mixup examples") {
  Rng rng(1);
  const auto a = random_block(rng, 20, 18);
  const auto b = random_block(rng, 20, 18);
  CHECK(mixup(a, b, 1.0) == a);
  CHECK(mixup(a, a, 0.3) == a);

  const PixelBlock p{1, 1, {100.0}};
  const PixelBlock q{1, 1, {200.0}};
  CHECK(mixup(p, q, 0.75).values[0] == 125.0);
  CHECK(mixup(p, q).values[0] == 125.0);

  CHECK_THROWS_AS(mixup(a, random_block(rng, 18, 20)), DataError);
  CHECK_THROWS_AS(mixup(a, b, 0.0), DataError);
  CHECK_THROWS_AS(mixup(a, b, 1.5), DataError);
}

TEST_CASE("property: featurize commutes with mixup") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = static_cast<int>(rng.uniform_int(16, 200));
    const int h = static_cast<int>(rng.uniform_int(16, 200));
    const auto a = random_block(rng, w, h);
    const auto b = random_block(rng, w, h);
    const double lambda = trial == 0 ? kMixupLambda : rng.uniform(1e-3, 1.0);
    const auto mixed = featurize_block(mixup(a, b, lambda));
    const auto fa = featurize_block(a);
    const auto fb = featurize_block(b);
    double worst = 0;
    for (std::size_t i = 0; i < kFeatureDim; ++i) {
      worst = std::max(worst, std::abs(mixed[i] - (lambda * fa[i] + (1 - lambda) * fb[i])));
    }
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("mixup loss examples") {
  const std::vector<double> half{0.5};
  CHECK(mixup_loss(half, bits({1}), bits({0}), 0.75) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 30));
    std::vector<double> p(n);
    std::vector<std::uint8_t> a(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform();
      a[i] = rng.bernoulli(0.5);
    }
    const double lambda = rng.uniform(0.01, 1.0);
    CHECK(std::abs(mixup_loss(p, a, a, lambda) - bce(p, a)) <= 1e-12);

    std::vector<double> optimum(a.begin(), a.end());
    CHECK(mixup_loss(optimum, a, a, lambda) < 1e-6);
  }
  CHECK_THROWS_AS(mixup_loss(half, bits({1, 0}), bits({1}), 0.5), DataError);
}

TEST_CASE("property: mixup loss is linear in lambda and shared positives keep the plain gradient") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 12));
    std::vector<double> p(n);
    std::vector<std::uint8_t> aj(n), ak(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform(0.01, 0.99);
      aj[i] = rng.bernoulli(0.5);
      ak[i] = rng.bernoulli(0.5);
    }
    const double l1 = rng.uniform(0.01, 1.0), l2 = rng.uniform(0.01, 1.0), t = rng.uniform();
    const double lm = t * l1 + (1 - t) * l2;
    CHECK(mixup_loss(p, aj, ak, lm) ==
          doctest::Approx(t * mixup_loss(p, aj, ak, l1) + (1 - t) * mixup_loss(p, aj, ak, l2)).epsilon(1e-12));

    const auto g = mixup_loss_grad(p, aj, ak, l1);
    const std::vector<double> ones(n, 1.0);
    const auto plain = wbce(p, aj, ones).grad;
    for (std::size_t i = 0; i < n; ++i) {
      if (aj[i] == ak[i]) CHECK(g[i] == doctest::Approx(plain[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: attribute head gradients match central differences") {
  Rng rng(5);
  const double h = 1e-5;
  std::size_t compared = 0;
  for (int point = 0; point < 100; ++point) {
    const auto n_out = static_cast<std::size_t>(rng.uniform_int(1, 6));
    auto head = AttrHead::initialized(n_out, rng.next());
    auto params = head.parameters();
    for (auto& v : params) v += rng.uniform(-0.05, 0.05);  // nonzero biases too
    std::vector<double> x(kAttrInput);
    for (auto& v : x) v = rng.uniform();
    std::vector<std::uint8_t> aj(n_out), ak(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
      aj[i] = rng.bernoulli(0.5);
      ak[i] = rng.bernoulli(0.5);
    }
    const double lambda = rng.bernoulli(0.5) ? kMixupLambda : 1.0;
    const auto g = head.loss_and_grad(x, aj, ak, lambda);
    CHECK(g.loss == doctest::Approx(mixup_loss(head.probabilities(x), aj, ak, lambda)).epsilon(1e-12));

    // Sample parameters from every block: w1, b1, w2, b2.
    const std::size_t w1 = kAttrHidden * kAttrInput, b1 = w1 + kAttrHidden, w2 = b1 + n_out * kAttrHidden;
    std::vector<std::size_t> picks;
    for (int k = 0; k < 4; ++k) picks.push_back(static_cast<std::size_t>(rng.uniform_int(0, w1 - 1)));
    for (int k = 0; k < 2; ++k) picks.push_back(w1 + static_cast<std::size_t>(rng.uniform_int(0, kAttrHidden - 1)));
    for (int k = 0; k < 3; ++k) picks.push_back(b1 + static_cast<std::size_t>(rng.uniform_int(0, n_out * kAttrHidden - 1)));
    picks.push_back(w2 + static_cast<std::size_t>(rng.uniform_int(0, n_out - 1)));

    for (auto i : picks) {
      const double saved = params[i];
      params[i] = saved + h;
      const double up = mixup_loss(head.probabilities(x), aj, ak, lambda);
      params[i] = saved - h;
      const double down = mixup_loss(head.probabilities(x), aj, ak, lambda);
      params[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max(std::abs(numeric), std::abs(g.params[i]));
      if (scale < 1e-7) {  // inactive ReLU unit: both must vanish
        CHECK(std::abs(numeric - g.params[i]) < 1e-9);
        continue;
      }
      CHECK(std::abs(numeric - g.params[i]) / scale < 1e-4);
      ++compared;
    }
  }
  CHECK(compared > 500);
}

TEST_CASE("attribute head shape checks and checkpoint round-trip") {
  CHECK_THROWS_AS(AttrHead(4, 2, 1, std::vector<double>(3)), DataError);
  const auto head = AttrHead::initialized(5, 77);
  CHECK(head.n_in() == kAttrInput);
  CHECK(head.n_hidden() == kAttrHidden);
  const auto bytes = encode_head(head);
  CHECK(bytes[4] == 2);
  CHECK(decode_attr_head(bytes) == head);
  CHECK_THROWS_AS(decode_linear_head(bytes), DataError);
  auto cut = bytes;
  cut.resize(cut.size() - 9);
  CHECK_THROWS_AS(decode_attr_head(cut), DataError);
}

namespace {

TrainingLesion candidate(const Study& st, O o) {
  TrainingLesion tl;
  tl.study = &st;
  tl.lesion.observation = o;
  return tl;
}

}  // namespace

TEST_CASE("retrieve_pair examples") {
  const auto q = make_study("q", Split::Train, {O::Edema}, {"mild", "bilateral", "new"});
  const auto dup = make_study("m", Split::Train, {O::Edema}, {"mild", "bilateral", "new"});
  const auto half = make_study("a", Split::Train, {O::Edema}, {"mild", "basal"});
  const auto other = make_study("b", Split::Train, {O::Fracture}, {"mild", "bilateral", "new"});

  const std::vector<TrainingLesion> pool{candidate(q, O::Edema), candidate(half, O::Edema), candidate(dup, O::Edema),
                                         candidate(other, O::Fracture)};
  const auto m = retrieve_pair(q, O::Edema, pool);
  REQUIRE(m);
  CHECK(pool[m->index].study->study_id == "m");
  CHECK(m->similarity == 1.0);

  const std::vector<TrainingLesion> alone{candidate(q, O::Edema), candidate(other, O::Fracture)};
  CHECK_FALSE(retrieve_pair(q, O::Edema, alone));
}

TEST_CASE("property: retrieve_pair matches an exhaustive scan over 5 candidates") {
  Rng rng(6);
  const char* words[] = {"w0", "w1", "w2", "w3", "w4", "w5"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Study> studies;
    for (int i = 0; i < 6; ++i) {
      auto st = make_study("s" + std::to_string(rng.uniform_int(10, 99)) + "_" + std::to_string(i), Split::Train,
                           {O::Edema}, {});
      for (const char* w : words) {
        if (rng.bernoulli(0.4)) st.entities.insert(make_entity(w, Relation::Modify));
      }
      studies.push_back(st);
    }
    const Study& query = studies[0];
    std::vector<TrainingLesion> pool;
    for (std::size_t i = 1; i < studies.size(); ++i) pool.push_back(candidate(studies[i], O::Edema));
    pool.push_back(candidate(query, O::Edema));

    // Exhaustive oracle: best overlap, then smallest id.
    std::size_t best = pool.size();
    double best_sim = -1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool[i].study == &query) continue;
      const auto& a = query.entity_texts();
      const auto& b = pool[i].study->entity_texts();
      std::size_t shared = 0;
      for (const auto& e : a) shared += b.count(e);
      const double sim = (a.empty() && b.empty()) ? 1.0
                         : (a.empty() || b.empty()) ? 0.0
                                                    : double(shared) / double(std::min(a.size(), b.size()));
      if (sim > best_sim || (sim == best_sim && pool[i].study->study_id < pool[best].study->study_id)) {
        best = i;
        best_sim = sim;
      }
    }
    const auto m = retrieve_pair(query, O::Edema, pool);
    REQUIRE(m);
    CHECK(m->index == best);
    CHECK(pool[m->index].study != &query);
    CHECK(retrieve_pair(query, O::Edema, pool)->index == m->index);
  }
}

TEST_CASE("predict_attributes with a constant head") {
  const std::size_t n_out = 4;
  std::vector<double> params(kAttrHidden * (kAttrInput + 1) + n_out * (kAttrHidden + 1), 0.0);
  const std::size_t b2 = params.size() - n_out;
  params[b2 + 0] = std::log(0.6 / 0.4);   // p = 0.6
  params[b2 + 1] = -2.0;                  // p < 0.5
  params[b2 + 2] = 0.0;                   // p = 0.5 exactly, kept
  params[b2 + 3] = 3.0;                   // highest
  const AttrHead head(kAttrInput, kAttrHidden, n_out, params);
  const std::vector<std::string> names{"a", "b", "c", "d"};
  FeatureVector zero;
  FeatureVector noise;
  for (std::size_t i = 0; i < kFeatureDim; ++i) noise[i] = 0.001 * static_cast<double>(i);
  const auto pred = predict_attributes(head, names, zero, noise, noise);
  CHECK(pred.attributes == std::vector<std::string>{"d", "a", "c"});
  CHECK(pred.probs[2] == 0.5);
  CHECK(pred.probs[0] == doctest::Approx(sigmoid(3.0)).epsilon(1e-15));
  CHECK_THROWS_AS(predict_attributes(head, std::vector<std::string>{"a"}, zero, zero, zero), DataError);
}

TEST_CASE("prior features are zero without priors and the mean over prior canvases otherwise") {
  const auto dir = icon::testing::fresh_dir("priors");
  auto write_flat = [&](const std::string& name, std::uint8_t v) {
    write_image(dir / name, ImageGray{1024, 1024, std::vector<std::uint8_t>(1024 * 1024, v)});
  };
  write_flat("p1.pgm", 51);
  write_flat("p2a.pgm", 102);
  write_flat("p2b.pgm", 204);
  auto p1 = make_study("p1", Split::Train, {}, {});
  auto p2 = make_study("p2", Split::Train, {}, {});
  p2.image_paths = {"p2a.pgm", "p2b.pgm"};
  auto cur = make_study("c", Split::Train, {}, {});
  cur.prior_study_ids = {"p1", "p2", "missing"};
  auto lone = make_study("l", Split::Train, {}, {});
  const Corpus corpus({p1, p2, cur, lone});
  const ImageStore store(dir);
  FeatureCache cache(store);

  CHECK(prior_features(*corpus.find("l"), corpus, cache) == FeatureVector{});
  const auto f = prior_features(*corpus.find("c"), corpus, cache);
  for (std::size_t i = 0; i < kFeatureDim; ++i) CHECK(f[i] == doctest::Approx((51.0 + 102.0 + 204.0) / 3.0 / 255.0));
}

namespace {

struct TrainedPipeline {
  Corpus corpus;
  std::vector<LesionRecord> lesions;
  std::vector<TrainingLesion> training;
  AttributeVocab vocab;
};

const TrainedPipeline& trained() {
  static const TrainedPipeline t = [] {
    const auto& dir = icon::testing::synthetic_200();
    TrainedPipeline p{Corpus(load_corpus(dir / "corpus.jsonl")), {}, {}, {}};
    const ImageStore store(dir / "images");
    FeatureCache cache(store);
    const auto zoomer = train_zoomer(p.corpus.split(Split::Train), cache, TrainOptions{});
    p.lesions = extract_corpus(p.corpus, zoomer.head, store);
    p.training = training_lesions(p.corpus, p.lesions, store);
    p.vocab = pmi_rank(p.corpus.split(Split::Train));
    return p;
  }();
  return t;
}

}  // namespace

TEST_CASE("inspector training on the synthetic corpus") {
  const auto& t = trained();
  const auto& dir = icon::testing::synthetic_200();
  const ImageStore store(dir / "images");
  FeatureCache cache(store);

  InspectorOptions opt;
  opt.epochs = 20;
  InspectorReport report;
  const auto a = train_inspector(t.corpus, t.training, t.vocab, cache, opt, &report);
  const auto b = train_inspector(t.corpus, t.training, t.vocab, cache, opt);
  CHECK(report.mixed > 0);
  CHECK(report.samples >= report.mixed);
  for (std::size_t j = 0; j < kNumObservations; ++j) {
    REQUIRE(a.heads[j].has_value() == b.heads[j].has_value());
    if (a.heads[j]) CHECK(*a.heads[j] == *b.heads[j]);
  }
  CHECK_FALSE(a.heads[index_of(O::NoFinding)]);

  SUBCASE("lambda 1 reproduces the unmixed run exactly") {
    InspectorOptions one = opt;
    one.lambda = 1.0;
    InspectorOptions none = opt;
    none.mixup = false;
    const auto x = train_inspector(t.corpus, t.training, t.vocab, cache, one);
    const auto y = train_inspector(t.corpus, t.training, t.vocab, cache, none);
    for (std::size_t j = 0; j < kNumObservations; ++j) {
      REQUIRE(x.heads[j].has_value() == y.heads[j].has_value());
      if (x.heads[j]) CHECK(*x.heads[j] == *y.heads[j]);
    }
  }

  SUBCASE("held-out attributes are recovered") {
    InspectorBundle bundle{train_inspector(t.corpus, t.training, t.vocab, cache, InspectorOptions{}), t.vocab};
    auto preds = predict_corpus_attributes(t.corpus, Split::Valid, t.lesions, bundle, store);
    const auto test = predict_corpus_attributes(t.corpus, Split::Test, t.lesions, bundle, store);
    preds.insert(preds.end(), test.begin(), test.end());
    CHECK(attribute_micro_f1(t.corpus, preds, t.vocab).f1() >= 0.8);

    // The severity term that generated each planted blob should come back.
    const auto plans = plan_corpus({200, 7, kCanvasSize});
    std::size_t planted = 0, recovered = 0;
    for (const auto& rec : preds) {
      for (const auto& plan : plans) {
        if (plan.study.study_id != rec.study_id) continue;
        for (const auto& blob : plan.blobs) {
          if (blob.observation != rec.observation) continue;
          const auto& terms = synthetic_terms(blob.observation);
          const std::string term(blob.severity == Severity::Mild ? terms.mild : terms.severe);
          ++planted;
          recovered += std::count(rec.attributes.begin(), rec.attributes.end(), term) > 0 ? 1 : 0;
        }
      }
    }
    REQUIRE(planted > 50);
    CHECK(static_cast<double>(recovered) / static_cast<double>(planted) >= 0.8);

    const auto save_dir = icon::testing::fresh_dir("inspector_bundle");
    save_inspector(save_dir, bundle);
    const auto loaded = load_inspector(save_dir);
    CHECK(loaded.vocab == bundle.vocab);
    for (std::size_t j = 0; j < kNumObservations; ++j) {
      REQUIRE(loaded.model.heads[j].has_value() == bundle.model.heads[j].has_value());
      if (loaded.model.heads[j]) CHECK(*loaded.model.heads[j] == *bundle.model.heads[j]);
    }
  }
}
