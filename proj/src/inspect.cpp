#include "icon/inspect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "icon/error.hpp"
#include "icon/rng.hpp"

namespace icon {

PixelBlock mixup(const PixelBlock& a, const PixelBlock& b, double lambda) {
  if (a.width != b.width || a.height != b.height || a.values.size() != b.values.size()) {
    throw DataError("mixup: blocks differ in shape");
  }
  if (!(lambda > 0.0 && lambda <= 1.0)) throw DataError("mixup: lambda must lie in (0, 1]");
  PixelBlock out;
  out.width = a.width;
  out.height = a.height;
  out.values.resize(a.values.size());
  const double r = 1.0 - lambda;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    // Equal inputs blend to themselves; the arithmetic form can be off by an ulp.
    out.values[i] = a.values[i] == b.values[i] ? a.values[i] : lambda * a.values[i] + r * b.values[i];
  }
  return out;
}

namespace {

void check_lengths(std::span<const double> p, std::span<const std::uint8_t> a,
                   std::span<const std::uint8_t> b) {
  if (p.size() != a.size() || p.size() != b.size()) throw DataError("mixup loss: length mismatch");
}

}  // namespace

double bce(std::span<const double> p, std::span<const std::uint8_t> labels) {
  if (p.empty()) return 0.0;
  const std::vector<double> ones(p.size(), 1.0);
  return wbce(p, labels, ones).loss;
}

double mixup_loss(std::span<const double> p, std::span<const std::uint8_t> a_j,
                  std::span<const std::uint8_t> a_k, double lambda) {
  check_lengths(p, a_j, a_k);
  return lambda * bce(p, a_j) + (1.0 - lambda) * bce(p, a_k);
}

std::vector<double> mixup_loss_grad(std::span<const double> p, std::span<const std::uint8_t> a_j,
                                    std::span<const std::uint8_t> a_k, double lambda) {
  check_lengths(p, a_j, a_k);
  if (p.empty()) return {};
  const std::vector<double> ones(p.size(), 1.0);
  const auto gj = wbce(p, a_j, ones).grad;
  const auto gk = wbce(p, a_k, ones).grad;
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = lambda * gj[i] + (1.0 - lambda) * gk[i];
  return g;
}

AttrHead::AttrHead(std::size_t n_in, std::size_t n_hidden, std::size_t n_out)
    : n_in_(n_in), n_hidden_(n_hidden), n_out_(n_out),
      params_(n_hidden * (n_in + 1) + n_out * (n_hidden + 1), 0.0) {}

AttrHead::AttrHead(std::size_t n_in, std::size_t n_hidden, std::size_t n_out, std::vector<double> params)
    : n_in_(n_in), n_hidden_(n_hidden), n_out_(n_out), params_(std::move(params)) {
  if (params_.size() != n_hidden * (n_in + 1) + n_out * (n_hidden + 1)) {
    throw DataError("attribute head parameter count does not match its shape");
  }
  if (!std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); })) {
    throw DataError("attribute head has non-finite parameters");
  }
}

AttrHead AttrHead::initialized(std::size_t n_out, std::uint64_t seed) {
  AttrHead head(kAttrInput, kAttrHidden, n_out);
  Rng rng(seed);
  const double r1 = std::sqrt(6.0 / static_cast<double>(kAttrInput + kAttrHidden));
  const double r2 = std::sqrt(6.0 / static_cast<double>(kAttrHidden + n_out));
  auto p = head.parameters();
  const std::size_t w1 = kAttrHidden * kAttrInput;
  const std::size_t w2_start = w1 + kAttrHidden;
  for (std::size_t i = 0; i < w1; ++i) p[i] = rng.uniform(-r1, r1);
  for (std::size_t i = 0; i < n_out * kAttrHidden; ++i) p[w2_start + i] = rng.uniform(-r2, r2);
  return head;
}

void AttrHead::forward(std::span<const double> x, std::vector<double>& pre_hidden,
                       std::vector<double>& z) const {
  if (x.size() != n_in_) throw DataError("attribute head input width mismatch");
  const auto W1 = w1();
  const auto B1 = b1();
  const auto W2 = w2();
  const auto B2 = b2();
  pre_hidden.assign(n_hidden_, 0.0);
  for (std::size_t h = 0; h < n_hidden_; ++h) {
    double s = B1[h];
    const double* row = W1.data() + h * n_in_;
    for (std::size_t i = 0; i < n_in_; ++i) s += row[i] * x[i];
    pre_hidden[h] = s;
  }
  z.assign(n_out_, 0.0);
  for (std::size_t k = 0; k < n_out_; ++k) {
    double s = B2[k];
    const double* row = W2.data() + k * n_hidden_;
    for (std::size_t h = 0; h < n_hidden_; ++h) s += row[h] * std::max(0.0, pre_hidden[h]);
    z[k] = s;
  }
}

std::vector<double> AttrHead::logits(std::span<const double> x) const {
  std::vector<double> pre;
  std::vector<double> z;
  forward(x, pre, z);
  return z;
}

std::vector<double> AttrHead::probabilities(std::span<const double> x) const {
  auto z = logits(x);
  for (auto& v : z) v = sigmoid(v);
  return z;
}

AttrHead::Gradient AttrHead::loss_and_grad(std::span<const double> x, std::span<const std::uint8_t> a_j,
                                           std::span<const std::uint8_t> a_k, double lambda) const {
  std::vector<double> pre;
  std::vector<double> z;
  forward(x, pre, z);
  std::vector<double> p(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) p[k] = sigmoid(z[k]);

  Gradient g;
  g.loss = mixup_loss(p, a_j, a_k, lambda);
  if (!std::isfinite(g.loss)) throw NumericError("attribute head: non-finite loss");
  const auto dz = mixup_loss_grad(p, a_j, a_k, lambda);

  g.params.assign(params_.size(), 0.0);
  const std::size_t w1_size = n_hidden_ * n_in_;
  const std::size_t b1_off = w1_size;
  const std::size_t w2_off = b1_off + n_hidden_;
  const std::size_t b2_off = w2_off + n_out_ * n_hidden_;
  const auto W2 = w2();

  std::vector<double> dh(n_hidden_, 0.0);
  for (std::size_t k = 0; k < n_out_; ++k) {
    g.params[b2_off + k] = dz[k];
    for (std::size_t h = 0; h < n_hidden_; ++h) {
      g.params[w2_off + k * n_hidden_ + h] = dz[k] * std::max(0.0, pre[h]);
      dh[h] += dz[k] * W2[k * n_hidden_ + h];
    }
  }
  for (std::size_t h = 0; h < n_hidden_; ++h) {
    if (pre[h] <= 0.0) continue;
    g.params[b1_off + h] = dh[h];
    double* row = g.params.data() + h * n_in_;
    for (std::size_t i = 0; i < n_in_; ++i) row[i] = dh[h] * x[i];
  }
  return g;
}

namespace {

double mean_loss(const AttrHead& head, std::span<const AttrSample> samples) {
  double total = 0.0;
  for (const auto& s : samples) {
    total += mixup_loss(head.probabilities(s.input), s.labels_j, s.labels_k, s.lambda);
  }
  const double mean = total / static_cast<double>(samples.size());
  if (!std::isfinite(mean)) throw NumericError("attribute head training diverged");
  return mean;
}

}  // namespace

AttrTrainResult train_attr_head(std::span<const AttrSample> samples, std::size_t n_out,
                                const InspectorOptions& options, std::uint64_t seed) {
  if (samples.empty()) throw DataError("attribute head needs at least one training sample");
  if (options.epochs < 0 || options.batch_size == 0 || !(options.lr > 0.0)) {
    throw ConfigError("epochs >= 0, batch_size >= 1 and lr > 0 are required");
  }
  Rng rng(seed);
  AttrTrainResult result;
  result.head = AttrHead::initialized(n_out, rng.next());
  result.initial_loss = mean_loss(result.head, samples);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> acc(result.head.parameters().size());
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const auto& s = samples[order[b]];
        const auto g = result.head.loss_and_grad(s.input, s.labels_j, s.labels_k, s.lambda);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g.params[i];
      }
      const double step = options.lr / static_cast<double>(end - start);
      auto params = result.head.parameters();
      for (std::size_t i = 0; i < acc.size(); ++i) params[i] -= step * acc[i];
    }
    const auto params = result.head.parameters();
    if (!std::all_of(params.begin(), params.end(), [](double v) { return std::isfinite(v); })) {
      throw NumericError("attribute head diverged: non-finite parameters after epoch " + std::to_string(epoch + 1));
    }
  }
  result.final_loss = mean_loss(result.head, samples);
  return result;
}

std::optional<PairMatch> retrieve_pair(const Study& query, Observation observation,
                                       std::span<const TrainingLesion> candidates) {
  const auto query_entities = query.entity_texts();
  std::optional<PairMatch> best;
  const std::string* best_id = nullptr;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.lesion.observation != observation || c.study->study_id == query.study_id) continue;
    const double sim = overlap(query_entities, c.study->entity_texts());
    if (!best || sim > best->similarity || (sim == best->similarity && c.study->study_id < *best_id)) {
      best = PairMatch{i, sim};
      best_id = &c.study->study_id;
    }
  }
  return best;
}

FeatureVector prior_features(const Study& study, const Corpus& corpus, FeatureCache& cache) {
  FeatureVector sum;
  std::size_t images = 0;
  for (const auto& id : study.prior_study_ids) {
    const Study* prior = corpus.find(id);
    if (!prior) continue;
    const auto n = prior->image_paths.size();
    sum = sum + static_cast<double>(n) * cache.get(*prior);
    images += n;
  }
  if (images == 0) return FeatureVector{};
  return (1.0 / static_cast<double>(images)) * sum;
}

std::vector<double> attr_input(const FeatureVector& prior, const FeatureVector& current,
                               const FeatureVector& lesion) {
  std::vector<double> x;
  x.reserve(kAttrInput);
  x.insert(x.end(), prior.values.begin(), prior.values.end());
  x.insert(x.end(), current.values.begin(), current.values.end());
  x.insert(x.end(), lesion.values.begin(), lesion.values.end());
  return x;
}

InspectorModel train_inspector(const Corpus& corpus, std::span<const TrainingLesion> lesions,
                               const AttributeVocab& vocab, FeatureCache& cache,
                               const InspectorOptions& options, InspectorReport* report) {
  if (!(options.lambda > 0.0 && options.lambda <= 1.0)) throw ConfigError("lambda must lie in (0, 1]");

  InspectorModel model;
  InspectorReport summary;
  std::size_t trained = 0;
  for (auto o : all_observations()) {
    const auto n_out = vocab.size(o);
    if (n_out == 0) continue;

    std::vector<TrainingLesion> pool;
    for (const auto& tl : lesions) {
      if (tl.lesion.observation == o && tl.study->positive_observations().count(o)) pool.push_back(tl);
    }
    if (pool.empty()) continue;
    std::sort(pool.begin(), pool.end(), [](const TrainingLesion& a, const TrainingLesion& b) {
      return a.study->study_id < b.study->study_id;
    });

    std::vector<AttrSample> samples;
    samples.reserve(pool.size());
    for (const auto& tl : pool) {
      AttrSample s;
      s.labels_j = vocab.label_bits(o, tl.study->entity_texts());
      FeatureVector lesion_feats = tl.lesion.features;
      s.labels_k = s.labels_j;
      s.lambda = 1.0;
      if (options.mixup) {
        if (const auto match = retrieve_pair(*tl.study, o, pool)) {
          const auto& partner = pool[match->index];
          lesion_feats = featurize_block(mixup(to_block(tl.pixels), to_block(partner.pixels), options.lambda));
          s.labels_k = vocab.label_bits(o, partner.study->entity_texts());
          s.lambda = options.lambda;
          ++summary.mixed;
        }
      }
      s.input = attr_input(prior_features(*tl.study, corpus, cache), cache.get(*tl.study), lesion_feats);
      samples.push_back(std::move(s));
    }
    summary.samples += samples.size();

    auto result = train_attr_head(samples, n_out, options, options.seed + index_of(o));
    summary.final_loss += result.final_loss;
    ++trained;
    model.heads[index_of(o)] = std::move(result.head);
  }
  if (trained > 0) summary.final_loss /= static_cast<double>(trained);
  if (report) *report = summary;
  return model;
}

AttributePrediction predict_attributes(const AttrHead& head, std::span<const std::string> names,
                                       const FeatureVector& prior, const FeatureVector& current,
                                       const FeatureVector& lesion, double threshold) {
  if (names.size() != head.n_out()) throw DataError("attribute names do not match the head");
  const auto p = head.probabilities(attr_input(prior, current, lesion));
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] >= threshold) keep.push_back(k);
  }
  std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  AttributePrediction out;
  for (auto k : keep) {
    out.attributes.push_back(names[k]);
    out.probs.push_back(p[k]);
  }
  return out;
}

}  // namespace icon
