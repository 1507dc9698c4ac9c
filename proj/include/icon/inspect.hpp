#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icon/annotate.hpp"
#include "icon/consistency.hpp"
#include "icon/lesion.hpp"
#include "icon/observation.hpp"

namespace icon {

inline constexpr double kMixupLambda = 0.75;
inline constexpr std::size_t kAttrHidden = 64;
inline constexpr std::size_t kAttrInput = 3 * kFeatureDim;

/// lambda * a + (1 - lambda) * b, elementwise, no rounding.
/// Throws DataError on shape mismatch or lambda outside (0, 1].
PixelBlock mixup(const PixelBlock& a, const PixelBlock& b, double lambda = kMixupLambda);

/// Unweighted BCE averaged over attributes (p clamped like wbce).
double bce(std::span<const double> p, std::span<const std::uint8_t> labels);

/// lambda * BCE(p, a_j) + (1 - lambda) * BCE(p, a_k).
double mixup_loss(std::span<const double> p, std::span<const std::uint8_t> a_j,
                  std::span<const std::uint8_t> a_k, double lambda);

/// Gradient of mixup_loss with respect to the logits.
std::vector<double> mixup_loss_grad(std::span<const double> p, std::span<const std::uint8_t> a_j,
                                    std::span<const std::uint8_t> a_k, double lambda);

/// Two-layer perceptron: concat(prior, current, lesion) -> ReLU(64) -> logits.
/// Parameters live in one contiguous buffer [w1 | b1 | w2 | b2].
class AttrHead {
 public:
  AttrHead() = default;
  AttrHead(std::size_t n_in, std::size_t n_hidden, std::size_t n_out);
  AttrHead(std::size_t n_in, std::size_t n_hidden, std::size_t n_out, std::vector<double> params);

  static AttrHead initialized(std::size_t n_out, std::uint64_t seed);

  std::size_t n_in() const { return n_in_; }
  std::size_t n_hidden() const { return n_hidden_; }
  std::size_t n_out() const { return n_out_; }

  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  std::span<const double> w1() const { return block(0, n_hidden_ * n_in_); }
  std::span<const double> b1() const { return block(n_hidden_ * n_in_, n_hidden_); }
  std::span<const double> w2() const { return block(n_hidden_ * (n_in_ + 1), n_out_ * n_hidden_); }
  std::span<const double> b2() const { return block(n_hidden_ * (n_in_ + 1) + n_out_ * n_hidden_, n_out_); }

  std::vector<double> logits(std::span<const double> x) const;
  std::vector<double> probabilities(std::span<const double> x) const;

  struct Gradient {
    double loss = 0.0;
    std::vector<double> params;  // same layout as parameters()
  };
  /// Loss and parameter gradient of mixup_loss for one sample.
  Gradient loss_and_grad(std::span<const double> x, std::span<const std::uint8_t> a_j,
                         std::span<const std::uint8_t> a_k, double lambda) const;

  bool operator==(const AttrHead&) const = default;

 private:
  std::span<const double> block(std::size_t offset, std::size_t n) const {
    return std::span<const double>(params_).subspan(offset, n);
  }
  void forward(std::span<const double> x, std::vector<double>& pre_hidden, std::vector<double>& z) const;

  std::size_t n_in_ = 0;
  std::size_t n_hidden_ = 0;
  std::size_t n_out_ = 0;
  std::vector<double> params_;
};

struct AttrSample {
  std::vector<double> input;  // kAttrInput wide
  std::vector<std::uint8_t> labels_j;
  std::vector<std::uint8_t> labels_k;
  double lambda = 1.0;
};

struct AttrTrainResult {
  AttrHead head;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct InspectorOptions {
  int epochs = 150;
  double lr = 0.5;
  std::uint64_t seed = 13;
  std::size_t batch_size = 8;
  double lambda = kMixupLambda;
  bool mixup = true;
};

AttrTrainResult train_attr_head(std::span<const AttrSample> samples, std::size_t n_out,
                                const InspectorOptions& options, std::uint64_t seed);

/// A training-split lesion with everything mixup and supervision need.
struct TrainingLesion {
  const Study* study = nullptr;
  Lesion lesion;
  ImageGray pixels;  // the lesion window crop
};

struct PairMatch {
  std::size_t index = 0;  // into the candidate list
  double similarity = 0.0;
};

/// Partner for `query` among same-observation candidates: the highest gold
/// entity overlap, ties to the smallest study_id, never the query's own
/// study. nullopt when no other candidate exists.
std::optional<PairMatch> retrieve_pair(const Study& query, Observation observation,
                                       std::span<const TrainingLesion> candidates);

/// Mean whole-canvas features over every image of every resolvable prior
/// study; the zero vector when there are none.
FeatureVector prior_features(const Study& study, const Corpus& corpus, FeatureCache& cache);

std::vector<double> attr_input(const FeatureVector& prior, const FeatureVector& current,
                               const FeatureVector& lesion);

struct InspectorModel {
  std::array<std::optional<AttrHead>, kNumObservations> heads;
};

struct InspectorReport {
  std::size_t samples = 0;
  std::size_t mixed = 0;
  double final_loss = 0.0;  // mean over trained heads
};

/// One head per observation with a nonempty vocabulary, seeded with
/// seed + observation index. Lesions whose observation is not gold-positive
/// for their study carry no supervision and are skipped.
InspectorModel train_inspector(const Corpus& corpus, std::span<const TrainingLesion> lesions,
                               const AttributeVocab& vocab, FeatureCache& cache,
                               const InspectorOptions& options, InspectorReport* report = nullptr);

struct AttributePrediction {
  std::vector<std::string> attributes;  // descending probability
  std::vector<double> probs;
};

AttributePrediction predict_attributes(const AttrHead& head, std::span<const std::string> names,
                                       const FeatureVector& prior, const FeatureVector& current,
                                       const FeatureVector& lesion, double threshold = kDecisionThreshold);

}  // namespace icon
