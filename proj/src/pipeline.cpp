#include "icon/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "icon/checkpoint.hpp"
#include "icon/error.hpp"
#include "icon/parallel.hpp"

namespace icon {

namespace {

std::vector<const Study*> sorted_studies(const Corpus& corpus) {
  std::vector<const Study*> out;
  for (const auto& st : corpus.studies()) out.push_back(&st);
  std::sort(out.begin(), out.end(), [](const Study* a, const Study* b) { return a->study_id < b->study_id; });
  return out;
}

std::string head_file(std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "head_%02zu.bin", index);
  return name;
}

}  // namespace

std::vector<LesionRecord> extract_corpus(const Corpus& corpus, const LinearHead& head, const ImageStore& store,
                                         const GridSpec& grid, unsigned jobs) {
  window_grid(grid);  // validate geometry before any work starts
  const auto studies = sorted_studies(corpus);
  std::vector<std::vector<LesionRecord>> per_study(studies.size());
  parallel_for(studies.size(), jobs, [&](std::size_t i) {
    FeatureCache cache(store);
    for (const auto& l : extract_lesions(*studies[i], head, cache, grid)) {
      per_study[i].push_back({studies[i]->study_id, l.observation, l.region, l.score});
    }
  });
  std::vector<LesionRecord> out;
  for (auto& v : per_study) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<TrainingLesion> training_lesions(const Corpus& corpus, std::span<const LesionRecord> lesions,
                                             const ImageStore& store) {
  std::vector<TrainingLesion> out;
  for (const auto& rec : lesions) {
    const Study* st = corpus.find(rec.study_id);
    if (!st) throw DataError("lesion refers to unknown study " + rec.study_id);
    if (st->split != Split::Train) continue;
    const auto idx = static_cast<std::size_t>(rec.region.image_index);
    if (rec.region.image_index < 0 || idx >= st->image_paths.size()) {
      throw DataError("lesion image_index out of range for study " + rec.study_id);
    }
    const auto canvas = store.canvas(st->image_paths[idx]);
    TrainingLesion tl;
    tl.study = st;
    tl.lesion = {rec.observation, rec.region, rec.score, featurize(canvas, rec.region)};
    tl.pixels = crop_gray(canvas, rec.region);
    out.push_back(std::move(tl));
  }
  return out;
}

void save_inspector(const std::filesystem::path& dir, const InspectorBundle& bundle) {
  std::filesystem::create_directories(dir);
  write_vocab_tsv(dir / "vocab.tsv", bundle.vocab);
  for (std::size_t j = 0; j < kNumObservations; ++j) {
    if (bundle.model.heads[j]) save_head(dir / head_file(j), *bundle.model.heads[j]);
  }
}

InspectorBundle load_inspector(const std::filesystem::path& dir) {
  InspectorBundle bundle;
  bundle.vocab = read_vocab_tsv(dir / "vocab.tsv");
  for (std::size_t j = 0; j < kNumObservations; ++j) {
    const auto path = dir / head_file(j);
    if (!std::filesystem::exists(path)) continue;
    auto head = load_attr_head(path);
    if (head.n_out() != bundle.vocab.size(observation_at(j)) || head.n_in() != kAttrInput) {
      throw DataError(path.string() + ": head shape does not match the vocabulary");
    }
    bundle.model.heads[j] = std::move(head);
  }
  return bundle;
}

std::vector<AttributeRecord> predict_corpus_attributes(const Corpus& corpus, Split split,
                                                       std::span<const LesionRecord> lesions,
                                                       const InspectorBundle& bundle, const ImageStore& store) {
  FeatureCache cache(store);
  std::vector<AttributeRecord> out;
  for (const auto& rec : lesions) {
    const Study* st = corpus.find(rec.study_id);
    if (!st) throw DataError("lesion refers to unknown study " + rec.study_id);
    if (st->split != split) continue;
    const auto& head = bundle.model.heads[index_of(rec.observation)];
    if (!head) continue;
    const auto idx = static_cast<std::size_t>(rec.region.image_index);
    if (rec.region.image_index < 0 || idx >= st->image_paths.size()) {
      throw DataError("lesion image_index out of range for study " + rec.study_id);
    }
    const auto lesion_feats = featurize(store.canvas(st->image_paths[idx]), rec.region);
    const auto names = bundle.vocab.names(rec.observation);
    const auto pred = predict_attributes(*head, names, prior_features(*st, corpus, cache), cache.get(*st),
                                         lesion_feats);
    out.push_back({rec.study_id, rec.observation, pred.attributes, pred.probs});
  }
  return out;
}

ClassificationScore zoomer_f1(const LinearHead& head, std::span<const Study* const> studies, FeatureCache& cache,
                              double threshold) {
  std::array<std::size_t, kNumObservations> tp{}, fp{}, fn{};
  for (const Study* st : studies) {
    const auto p = head.probabilities(cache.get(*st).values);
    const auto gold = to_label(st->statuses);
    for (std::size_t j = 0; j < kNumObservations; ++j) {
      const bool pred = p[j] >= threshold;
      if (pred && gold.bits[j]) ++tp[j];
      if (pred && !gold.bits[j]) ++fp[j];
      if (!pred && gold.bits[j]) ++fn[j];
    }
  }
  ClassificationScore score;
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t j = 0; j < kNumObservations; ++j) {
    const auto denom = 2 * tp[j] + fp[j] + fn[j];
    if (denom == 0) continue;
    score.f1[j] = 2.0 * static_cast<double>(tp[j]) / static_cast<double>(denom);
    sum += *score.f1[j];
    ++defined;
  }
  score.macro_f1 = defined == 0 ? 0.0 : sum / static_cast<double>(defined);
  return score;
}

HitRate lesion_hit_rate(const Corpus& corpus, std::span<const Study* const> studies,
                        std::span<const LesionRecord> lesions, std::span<const PlantedBlob> truth) {
  std::map<std::pair<std::string, Observation>, std::vector<BBox>> blobs;
  for (const auto& b : truth) blobs[{b.study_id, b.observation}].push_back(b.bbox);
  std::map<std::pair<std::string, Observation>, const LesionRecord*> found;
  for (const auto& l : lesions) found[{l.study_id, l.observation}] = &l;

  HitRate rate;
  for (const Study* st : studies) {
    if (!corpus.find(st->study_id)) continue;
    for (auto o : st->positive_observations()) {
      const auto it = blobs.find({st->study_id, o});
      if (it == blobs.end()) continue;
      ++rate.positives;
      const auto l = found.find({st->study_id, o});
      if (l == found.end()) continue;
      const auto box = l->second->region.bbox();
      if (std::any_of(it->second.begin(), it->second.end(), [&](const BBox& b) { return iou(box, b) > 0.0; })) {
        ++rate.hits;
      }
    }
  }
  return rate;
}

MicroF1 attribute_micro_f1(const Corpus& corpus, std::span<const AttributeRecord> predicted,
                           const AttributeVocab& vocab) {
  MicroF1 score;
  for (const auto& rec : predicted) {
    const Study* st = corpus.find(rec.study_id);
    if (!st) throw DataError("attribute record refers to unknown study " + rec.study_id);
    if (!st->positive_observations().count(rec.observation)) continue;
    const auto gold = vocab.label_bits(rec.observation, st->entity_texts());
    const auto names = vocab.names(rec.observation);
    const std::set<std::string> pred(rec.attributes.begin(), rec.attributes.end());
    for (std::size_t k = 0; k < names.size(); ++k) {
      const bool p = pred.count(names[k]) > 0;
      if (p && gold[k]) ++score.tp;
      if (p && !gold[k]) ++score.fp;
      if (!p && gold[k]) ++score.fn;
    }
  }
  return score;
}

}  // namespace icon
