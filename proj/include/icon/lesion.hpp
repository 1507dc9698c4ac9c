#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "icon/annotate.hpp"
#include "icon/corpus_io.hpp"
#include "icon/image.hpp"
#include "icon/observation.hpp"

namespace icon {

inline constexpr int kWindowSize = 384;
inline constexpr int kWindowStep = 128;
inline constexpr int kPoolGrid = 16;
inline constexpr std::size_t kFeatureDim = static_cast<std::size_t>(kPoolGrid) * kPoolGrid;
inline constexpr double kProbabilityClamp = 1e-7;

struct Region {
  int image_index = 0;
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  BBox bbox() const { return {x, y, w, h}; }
  bool operator==(const Region&) const = default;
};

struct GridSpec {
  int canvas = kCanvasSize;
  int window = kWindowSize;
  int step = kWindowStep;
};

/// Row-major sliding-window positions on one image (image_index 0).
/// Throws ConfigError unless window <= canvas, step >= 1 and step divides
/// canvas - window.
std::vector<Region> window_grid(const GridSpec& spec = {});

/// 16x16 average-pooled intensities scaled to [0, 1].
struct FeatureVector {
  std::array<double, kFeatureDim> values{};

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  bool operator==(const FeatureVector&) const = default;
};

FeatureVector operator+(const FeatureVector& a, const FeatureVector& b);
FeatureVector operator*(double s, const FeatureVector& a);

/// Real-valued pixel block (row-major, intensities on the 0..255 scale).
struct PixelBlock {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  bool operator==(const PixelBlock&) const = default;
};

PixelBlock crop(const Canvas& canvas, const Region& region);
ImageGray crop_gray(const Canvas& canvas, const Region& region);
PixelBlock to_block(const ImageGray& image);

/// Average-pools a block onto a 16x16 grid; cell i spans
/// [floor(i*w/16), floor((i+1)*w/16)) on each axis.
FeatureVector featurize_block(const PixelBlock& block);
FeatureVector featurize(const Canvas& canvas, const Region& region);

/// Whole-canvas features averaged over every image of a study.
FeatureVector study_features(const Study& study, const ImageStore& store);

/// Summed-area table used to score many regions of one canvas.
class CanvasIntegral {
 public:
  explicit CanvasIntegral(const Canvas& canvas);

  std::uint64_t sum(int x0, int y0, int x1, int y1) const;  // half-open
  int size() const { return size_; }

 private:
  int size_;
  std::vector<std::uint64_t> table_;
};

/// Whole-canvas features of the canvas with every pixel outside `region`
/// set to zero. This keeps region evidence in the same coordinate frame the
/// study-level head was trained on.
FeatureVector region_evidence(const CanvasIntegral& integral, const Region& region);

class LinearHead {
 public:
  LinearHead() = default;
  LinearHead(std::size_t n_in, std::size_t n_out);
  LinearHead(std::size_t n_in, std::size_t n_out, std::vector<double> weights,
             std::vector<double> biases, std::vector<double> alpha);

  std::size_t n_in() const { return n_in_; }
  std::size_t n_out() const { return n_out_; }
  std::span<const double> weights() const { return weights_; }
  std::span<double> weights() { return weights_; }
  std::span<const double> biases() const { return biases_; }
  std::span<double> biases() { return biases_; }
  std::span<const double> alpha() const { return alpha_; }
  std::span<double> alpha() { return alpha_; }

  double logit(std::size_t out, std::span<const double> x) const;
  std::vector<double> logits(std::span<const double> x) const;
  std::vector<double> probabilities(std::span<const double> x) const;

  bool operator==(const LinearHead&) const = default;

 private:
  std::size_t n_in_ = 0;
  std::size_t n_out_ = 0;
  std::vector<double> weights_;  // n_out x n_in, row-major
  std::vector<double> biases_;
  std::vector<double> alpha_;
};

double sigmoid(double z);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // with respect to the logits
};

/// Class-weighted BCE averaged over outputs:
///   -(1/n) sum_j [alpha_j y_j ln p_j + (1 - y_j) ln(1 - p_j)]
/// with p clamped to [1e-7, 1 - 1e-7]. Throws NumericError on non-finite input.
LossAndGrad wbce(std::span<const double> p, std::span<const std::uint8_t> y,
                 std::span<const double> alpha);

struct TrainOptions {
  int epochs = 200;
  double lr = 2.0;
  std::uint64_t seed = 13;
  std::size_t batch_size = 16;
};

struct HeadTrainResult {
  LinearHead head;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Mini-batch gradient descent on wbce. Deterministic for a fixed seed.
HeadTrainResult train_linear_head(std::span<const FeatureVector> features,
                                  std::span<const LabelVector> labels,
                                  std::span<const double> alpha, const TrainOptions& options);

/// Memoizes whole-canvas study features; not thread-safe.
class FeatureCache {
 public:
  explicit FeatureCache(const ImageStore& store) : store_(store) {}
  const FeatureVector& get(const Study& study);
  const ImageStore& store() const { return store_; }

 private:
  const ImageStore& store_;
  std::unordered_map<std::string, FeatureVector> cache_;
};

/// Trains the 14-way observation head on study-level labels, weighting
/// positives by class_weights of the train split.
HeadTrainResult train_zoomer(std::span<const Study* const> train, FeatureCache& features,
                             const TrainOptions& options);

struct Lesion {
  Observation observation = Observation::NoFinding;
  Region region;
  double score = 0.0;
  FeatureVector features;
};

inline constexpr double kDecisionThreshold = 0.5;

/// Observations (No Finding excluded) the head calls positive for a study.
std::vector<Observation> predicted_positives(const LinearHead& head, const FeatureVector& study_feats,
                                             double threshold = kDecisionThreshold);

/// Index of the first maximum.
std::size_t first_argmax(std::span<const double> scores);

double score_region(const LinearHead& head, Observation o, const Canvas& canvas, const Region& region);

/// One lesion per predicted-positive observation: the highest-probability
/// window over every image of the study, ties to the lowest
/// (image_index, row-major window index).
std::vector<Lesion> extract_lesions(const Study& study, const LinearHead& head, FeatureCache& features,
                                    const GridSpec& grid = {});

struct LesionRecord {
  std::string study_id;
  Observation observation = Observation::NoFinding;
  Region region;
  double score = 0.0;

  bool operator==(const LesionRecord&) const = default;
};

void write_lesions(std::ostream& out, const std::vector<LesionRecord>& lesions);
void write_lesions(const std::filesystem::path& path, const std::vector<LesionRecord>& lesions);
std::vector<LesionRecord> load_lesions(const std::filesystem::path& path);

}  // namespace icon
