#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "icon/annotate.hpp"
#include "icon/compose.hpp"
#include "icon/corpus_io.hpp"
#include "icon/inspect.hpp"
#include "icon/lesion.hpp"

namespace icon {

/// Lesions for every study of the corpus, in study_id order, then in
/// observation order within a study.
std::vector<LesionRecord> extract_corpus(const Corpus& corpus, const LinearHead& head, const ImageStore& store,
                                         const GridSpec& grid = {}, unsigned jobs = 1);

/// Reloads the window crop and features of every train-split lesion.
std::vector<TrainingLesion> training_lesions(const Corpus& corpus, std::span<const LesionRecord> lesions,
                                             const ImageStore& store);

struct InspectorBundle {
  InspectorModel model;
  AttributeVocab vocab;
};

/// <dir>/vocab.tsv plus <dir>/head_NN.bin for each trained observation index.
void save_inspector(const std::filesystem::path& dir, const InspectorBundle& bundle);
InspectorBundle load_inspector(const std::filesystem::path& dir);

/// Predicted attributes for every lesion of a `split` study whose observation
/// has a trained head.
std::vector<AttributeRecord> predict_corpus_attributes(const Corpus& corpus, Split split,
                                                       std::span<const LesionRecord> lesions,
                                                       const InspectorBundle& bundle, const ImageStore& store);

struct ClassificationScore {
  std::array<std::optional<double>, kNumObservations> f1;  // nullopt when tp + fp + fn = 0
  double macro_f1 = 0.0;                                   // mean over defined classes
};

ClassificationScore zoomer_f1(const LinearHead& head, std::span<const Study* const> studies, FeatureCache& cache,
                              double threshold = kDecisionThreshold);

struct HitRate {
  std::size_t positives = 0;  // gold-positive observations with a planted blob
  std::size_t hits = 0;       // ... whose lesion overlaps the blob
  double rate() const { return positives == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(positives); }
};

HitRate lesion_hit_rate(const Corpus& corpus, std::span<const Study* const> studies,
                        std::span<const LesionRecord> lesions, std::span<const PlantedBlob> truth);

struct MicroF1 {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double f1() const {
    const auto denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
};

/// Predicted attribute sets against gold labels (gold entities within the
/// observation's vocabulary), over records whose observation is gold-positive.
MicroF1 attribute_micro_f1(const Corpus& corpus, std::span<const AttributeRecord> predicted,
                           const AttributeVocab& vocab);

}  // namespace icon
