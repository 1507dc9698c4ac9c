#include "icon/lesion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "icon/error.hpp"
#include "icon/rng.hpp"

namespace icon {

using nlohmann::json;

std::vector<Region> window_grid(const GridSpec& spec) {
  if (spec.canvas < 1 || spec.window < 1 || spec.window > spec.canvas) {
    throw ConfigError("window " + std::to_string(spec.window) + " does not fit canvas " +
                      std::to_string(spec.canvas));
  }
  if (spec.step < 1) throw ConfigError("window step must be >= 1");
  if ((spec.canvas - spec.window) % spec.step != 0) {
    throw ConfigError("canvas - window (" + std::to_string(spec.canvas - spec.window) +
                      ") is not divisible by step " + std::to_string(spec.step));
  }
  const int per_axis = (spec.canvas - spec.window) / spec.step + 1;
  std::vector<Region> out;
  out.reserve(static_cast<std::size_t>(per_axis) * per_axis);
  for (int row = 0; row < per_axis; ++row) {
    for (int col = 0; col < per_axis; ++col) {
      out.push_back({0, col * spec.step, row * spec.step, spec.window, spec.window});
    }
  }
  return out;
}

FeatureVector operator+(const FeatureVector& a, const FeatureVector& b) {
  FeatureVector out;
  for (std::size_t i = 0; i < kFeatureDim; ++i) out[i] = a[i] + b[i];
  return out;
}

FeatureVector operator*(double s, const FeatureVector& a) {
  FeatureVector out;
  for (std::size_t i = 0; i < kFeatureDim; ++i) out[i] = s * a[i];
  return out;
}

namespace {

void check_region(const Region& r, int canvas_size) {
  if (r.w < 1 || r.h < 1 || r.x < 0 || r.y < 0 || r.x + r.w > canvas_size || r.y + r.h > canvas_size) {
    throw DataError("region out of canvas bounds");
  }
}

int cell_edge(int i, int extent) { return i * extent / kPoolGrid; }

}  // namespace

ImageGray crop_gray(const Canvas& canvas, const Region& region) {
  check_region(region, canvas.size);
  ImageGray out;
  out.width = region.w;
  out.height = region.h;
  out.pixels.resize(static_cast<std::size_t>(region.w) * region.h);
  for (int y = 0; y < region.h; ++y) {
    const auto* src = canvas.pixels.data() + static_cast<std::size_t>(region.y + y) * canvas.size + region.x;
    std::copy(src, src + region.w, out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * region.w);
  }
  return out;
}

PixelBlock to_block(const ImageGray& image) {
  PixelBlock block;
  block.width = image.width;
  block.height = image.height;
  block.values.assign(image.pixels.begin(), image.pixels.end());
  return block;
}

PixelBlock crop(const Canvas& canvas, const Region& region) { return to_block(crop_gray(canvas, region)); }

FeatureVector featurize_block(const PixelBlock& block) {
  if (block.width < kPoolGrid || block.height < kPoolGrid) {
    throw DataError("block smaller than the pooling grid");
  }
  FeatureVector out;
  for (int gy = 0; gy < kPoolGrid; ++gy) {
    const int y0 = cell_edge(gy, block.height);
    const int y1 = cell_edge(gy + 1, block.height);
    for (int gx = 0; gx < kPoolGrid; ++gx) {
      const int x0 = cell_edge(gx, block.width);
      const int x1 = cell_edge(gx + 1, block.width);
      double sum = 0.0;
      for (int y = y0; y < y1; ++y) {
        const double* row = block.values.data() + static_cast<std::size_t>(y) * block.width;
        for (int x = x0; x < x1; ++x) sum += row[x];
      }
      const double count = static_cast<double>(y1 - y0) * (x1 - x0);
      out[static_cast<std::size_t>(gy) * kPoolGrid + gx] = sum / (count * 255.0);
    }
  }
  return out;
}

FeatureVector featurize(const Canvas& canvas, const Region& region) {
  return featurize_block(crop(canvas, region));
}

FeatureVector study_features(const Study& study, const ImageStore& store) {
  FeatureVector mean;
  for (const auto& path : study.image_paths) {
    const auto canvas = store.canvas(path);
    CanvasIntegral integral(canvas);
    mean = mean + region_evidence(integral, {0, 0, 0, canvas.size, canvas.size});
  }
  return (1.0 / static_cast<double>(study.image_paths.size())) * mean;
}

CanvasIntegral::CanvasIntegral(const Canvas& canvas)
    : size_(canvas.size), table_(static_cast<std::size_t>(canvas.size + 1) * (canvas.size + 1), 0) {
  const auto stride = static_cast<std::size_t>(size_ + 1);
  for (int y = 0; y < size_; ++y) {
    std::uint64_t row = 0;
    for (int x = 0; x < size_; ++x) {
      row += canvas.at(x, y);
      table_[(y + 1) * stride + (x + 1)] = table_[y * stride + (x + 1)] + row;
    }
  }
}

std::uint64_t CanvasIntegral::sum(int x0, int y0, int x1, int y1) const {
  if (x1 <= x0 || y1 <= y0) return 0;
  const auto stride = static_cast<std::size_t>(size_ + 1);
  return table_[y1 * stride + x1] + table_[y0 * stride + x0] - table_[y0 * stride + x1] -
         table_[y1 * stride + x0];
}

FeatureVector region_evidence(const CanvasIntegral& integral, const Region& region) {
  const int n = integral.size();
  check_region(region, n);
  FeatureVector out;
  for (int gy = 0; gy < kPoolGrid; ++gy) {
    const int cy0 = cell_edge(gy, n);
    const int cy1 = cell_edge(gy + 1, n);
    for (int gx = 0; gx < kPoolGrid; ++gx) {
      const int cx0 = cell_edge(gx, n);
      const int cx1 = cell_edge(gx + 1, n);
      const auto s = integral.sum(std::max(cx0, region.x), std::max(cy0, region.y),
                                  std::min(cx1, region.x + region.w), std::min(cy1, region.y + region.h));
      const double count = static_cast<double>(cy1 - cy0) * (cx1 - cx0);
      out[static_cast<std::size_t>(gy) * kPoolGrid + gx] = static_cast<double>(s) / (count * 255.0);
    }
  }
  return out;
}

LinearHead::LinearHead(std::size_t n_in, std::size_t n_out)
    : n_in_(n_in), n_out_(n_out), weights_(n_in * n_out, 0.0), biases_(n_out, 0.0), alpha_(n_out, 1.0) {}

LinearHead::LinearHead(std::size_t n_in, std::size_t n_out, std::vector<double> weights,
                       std::vector<double> biases, std::vector<double> alpha)
    : n_in_(n_in), n_out_(n_out), weights_(std::move(weights)), biases_(std::move(biases)),
      alpha_(std::move(alpha)) {
  if (weights_.size() != n_in_ * n_out_ || biases_.size() != n_out_ || alpha_.size() != n_out_) {
    throw DataError("linear head parameter sizes do not match its shape");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(weights_.begin(), weights_.end(), finite) ||
      !std::all_of(biases_.begin(), biases_.end(), finite)) {
    throw DataError("linear head has non-finite parameters");
  }
  if (!std::all_of(alpha_.begin(), alpha_.end(), [](double a) { return std::isfinite(a) && a > 0.0; })) {
    throw DataError("linear head alpha must be positive");
  }
}

double LinearHead::logit(std::size_t out, std::span<const double> x) const {
  const double* w = weights_.data() + out * n_in_;
  double z = biases_[out];
  for (std::size_t i = 0; i < n_in_; ++i) z += w[i] * x[i];
  return z;
}

std::vector<double> LinearHead::logits(std::span<const double> x) const {
  if (x.size() != n_in_) throw DataError("input width does not match the head");
  std::vector<double> z(n_out_);
  for (std::size_t j = 0; j < n_out_; ++j) z[j] = logit(j, x);
  return z;
}

std::vector<double> LinearHead::probabilities(std::span<const double> x) const {
  auto z = logits(x);
  for (auto& v : z) v = sigmoid(v);
  return z;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

LossAndGrad wbce(std::span<const double> p, std::span<const std::uint8_t> y, std::span<const double> alpha) {
  if (p.size() != y.size() || p.size() != alpha.size() || p.empty()) {
    throw DataError("wbce: probabilities, labels and weights must have equal nonzero length");
  }
  const double n = static_cast<double>(p.size());
  LossAndGrad out;
  out.grad.resize(p.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (!std::isfinite(p[j]) || !std::isfinite(alpha[j])) throw NumericError("wbce: non-finite input");
    const double pj = std::clamp(p[j], kProbabilityClamp, 1.0 - kProbabilityClamp);
    if (y[j]) {
      sum += alpha[j] * std::log(pj);
      out.grad[j] = -alpha[j] * (1.0 - pj) / n;
    } else {
      sum += std::log(1.0 - pj);
      out.grad[j] = pj / n;
    }
  }
  out.loss = -sum / n;
  return out;
}

namespace {

std::vector<std::uint8_t> to_bytes(const LabelVector& labels) {
  return std::vector<std::uint8_t>(labels.bits.begin(), labels.bits.end());
}

double dataset_loss(const LinearHead& head, std::span<const FeatureVector> features,
                    std::span<const LabelVector> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto p = head.probabilities(features[i].values);
    total += wbce(p, to_bytes(labels[i]), head.alpha()).loss;
  }
  const double mean = total / static_cast<double>(features.size());
  if (!std::isfinite(mean)) throw NumericError("training diverged: non-finite loss");
  return mean;
}

}  // namespace

HeadTrainResult train_linear_head(std::span<const FeatureVector> features,
                                  std::span<const LabelVector> labels, std::span<const double> alpha,
                                  const TrainOptions& options) {
  if (features.empty() || features.size() != labels.size()) {
    throw DataError("training needs matching, nonempty features and labels");
  }
  if (alpha.size() != kNumObservations) throw DataError("alpha must have one entry per observation");
  if (options.epochs < 0 || options.batch_size == 0 || !(options.lr > 0.0)) {
    throw ConfigError("epochs >= 0, batch_size >= 1 and lr > 0 are required");
  }

  Rng rng(options.seed);
  LinearHead head(kFeatureDim, kNumObservations);
  for (auto& w : head.weights()) w = rng.uniform(-0.01, 0.01);
  std::copy(alpha.begin(), alpha.end(), head.alpha().begin());

  HeadTrainResult result;
  result.initial_loss = dataset_loss(head, features, labels);

  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad_w(head.weights().size());
  std::vector<double> grad_b(head.biases().size());

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const auto& x = features[order[b]].values;
        const auto p = head.probabilities(x);
        const auto lg = wbce(p, to_bytes(labels[order[b]]), head.alpha());
        for (std::size_t j = 0; j < kNumObservations; ++j) {
          const double g = lg.grad[j];
          grad_b[j] += g;
          double* gw = grad_w.data() + j * kFeatureDim;
          for (std::size_t i = 0; i < kFeatureDim; ++i) gw[i] += g * x[i];
        }
      }
      const double step = options.lr / static_cast<double>(end - start);
      auto w = head.weights();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * grad_w[i];
      auto bias = head.biases();
      for (std::size_t j = 0; j < bias.size(); ++j) bias[j] -= step * grad_b[j];
    }
    const auto w = head.weights();
    const auto bias = head.biases();
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(w.begin(), w.end(), finite) || !std::all_of(bias.begin(), bias.end(), finite)) {
      throw NumericError("training diverged: non-finite parameters after epoch " + std::to_string(epoch + 1));
    }
  }
  result.final_loss = dataset_loss(head, features, labels);
  result.head = std::move(head);
  return result;
}

const FeatureVector& FeatureCache::get(const Study& study) {
  auto it = cache_.find(study.study_id);
  if (it != cache_.end()) return it->second;
  return cache_.emplace(study.study_id, study_features(study, store_)).first->second;
}

HeadTrainResult train_zoomer(std::span<const Study* const> train, FeatureCache& features,
                             const TrainOptions& options) {
  const auto weights = class_weights(train);
  std::vector<FeatureVector> xs;
  std::vector<LabelVector> ys;
  xs.reserve(train.size());
  ys.reserve(train.size());
  for (const Study* st : train) {
    xs.push_back(features.get(*st));
    ys.push_back(to_label(st->statuses));
  }
  return train_linear_head(xs, ys, weights.alpha, options);
}

std::vector<Observation> predicted_positives(const LinearHead& head, const FeatureVector& study_feats,
                                             double threshold) {
  const auto p = head.probabilities(study_feats.values);
  std::vector<Observation> out;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (std::isnan(p[j])) throw NumericError("observation head produced a NaN probability");
    const auto o = observation_at(j);
    if (o != Observation::NoFinding && p[j] >= threshold) out.push_back(o);
  }
  return out;
}

std::size_t first_argmax(std::span<const double> scores) {
  if (scores.empty()) throw DataError("argmax of an empty score list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

double score_region(const LinearHead& head, Observation o, const Canvas& canvas, const Region& region) {
  CanvasIntegral integral(canvas);
  return sigmoid(head.logit(index_of(o), region_evidence(integral, region).values));
}

std::vector<Lesion> extract_lesions(const Study& study, const LinearHead& head, FeatureCache& features,
                                    const GridSpec& grid) {
  const auto positives = predicted_positives(head, features.get(study));
  if (positives.empty()) return {};
  const auto windows = window_grid(grid);
  const auto& store = features.store();

  // scores[o][image * |windows| + w]
  std::vector<std::vector<double>> scores(positives.size());
  std::vector<Canvas> canvases;
  canvases.reserve(study.image_paths.size());
  for (const auto& path : study.image_paths) {
    canvases.push_back(store.canvas(path));
    if (canvases.back().size != grid.canvas) throw ConfigError("canvas size does not match the window grid");
    const CanvasIntegral integral(canvases.back());
    for (const auto& w : windows) {
      const auto evidence = region_evidence(integral, w);
      for (std::size_t k = 0; k < positives.size(); ++k) {
        scores[k].push_back(sigmoid(head.logit(index_of(positives[k]), evidence.values)));
      }
    }
  }

  std::vector<Lesion> out;
  out.reserve(positives.size());
  for (std::size_t k = 0; k < positives.size(); ++k) {
    const auto best = first_argmax(scores[k]);
    Lesion lesion;
    lesion.observation = positives[k];
    lesion.region = windows[best % windows.size()];
    lesion.region.image_index = static_cast<int>(best / windows.size());
    lesion.score = scores[k][best];
    lesion.features = featurize(canvases[static_cast<std::size_t>(lesion.region.image_index)], lesion.region);
    out.push_back(std::move(lesion));
  }
  return out;
}

void write_lesions(std::ostream& out, const std::vector<LesionRecord>& lesions) {
  for (const auto& l : lesions) {
    json obj;
    obj["study_id"] = l.study_id;
    obj["observation"] = std::string(observation_name(l.observation));
    obj["image_index"] = l.region.image_index;
    obj["bbox"] = {l.region.x, l.region.y, l.region.w, l.region.h};
    obj["score"] = l.score;
    out << obj.dump() << '\n';
  }
}

void write_lesions(const std::filesystem::path& path, const std::vector<LesionRecord>& lesions) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write lesions: " + path.string());
  write_lesions(out, lesions);
}

std::vector<LesionRecord> load_lesions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lesions: " + path.string());
  std::vector<LesionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "lesions line " + std::to_string(line_no) + ": ";
    try {
      const auto obj = json::parse(line);
      LesionRecord rec;
      rec.study_id = obj.at("study_id").get<std::string>();
      const auto name = obj.at("observation").get<std::string>();
      const auto o = parse_observation(name);
      if (!o) throw DataError(where + "unknown observation \"" + name + "\"");
      rec.observation = *o;
      const auto& box = obj.at("bbox");
      if (!box.is_array() || box.size() != 4) throw DataError(where + "bbox must be [x, y, w, h]");
      rec.region = {obj.at("image_index").get<int>(), box[0].get<int>(), box[1].get<int>(),
                    box[2].get<int>(), box[3].get<int>()};
      rec.score = obj.at("score").get<double>();
      out.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw DataError(where + e.what());
    }
  }
  return out;
}

}  // namespace icon
