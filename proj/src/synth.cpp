#include "icon/synth.hpp"

#include <cstdio>
#include <string>

#include "icon/error.hpp"
#include "icon/rng.hpp"

namespace icon {

namespace {

constexpr std::array<SyntheticTerms, kNumObservations - 1> kLexicon = {{
    {Observation::Cardiomegaly, "cardiomegaly", "borderline", "massive", "cardiac"},
    {Observation::PleuralEffusion, "effusion", "trace", "large", "costophrenic"},
    {Observation::Pneumothorax, "pneumothorax", "tiny", "tension", "apical"},
    {Observation::EnlargedCardiomediastinum, "mediastinum", "prominent", "widened", "mediastinal"},
    {Observation::Consolidation, "consolidation", "patchy", "dense", "lobar"},
    {Observation::LungOpacity, "opacity", "faint", "confluent", "perihilar"},
    {Observation::Fracture, "fracture", "healed", "displaced", "rib"},
    {Observation::LungLesion, "nodule", "subcentimeter", "spiculated", "parenchymal"},
    {Observation::Edema, "edema", "interstitial", "alveolar", "bilateral"},
    {Observation::Atelectasis, "atelectasis", "linear", "complete", "basilar"},
    {Observation::SupportDevices, "tube", "satisfactory", "malpositioned", "tracheal"},
    {Observation::Pneumonia, "pneumonia", "early", "multifocal", "lingular"},
    {Observation::PleuralOther, "thickening", "minimal", "calcified", "pleural"},
}};

constexpr std::string_view kNormalReport = "the lungs are clear. no acute cardiopulmonary abnormality.";

struct Band {
  int intensity_lo, intensity_hi, diameter_lo, diameter_hi;
};
constexpr Band kMildBand{200, 215, 120, 150};
constexpr Band kSevereBand{235, 255, 170, 200};

std::string numbered(char prefix, int n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%04d", prefix, n);
  return buf;
}

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Finding {
  Observation observation;
  Status status;
  Severity severity;
};

std::string sentence_for(const Finding& f, std::string_view temporal) {
  const auto& t = synthetic_terms(f.observation);
  std::string s;
  if (f.status == Status::Uncertain) s += "possible ";
  s += f.severity == Severity::Mild ? t.mild : t.severe;
  s += ' ';
  s += t.noun;
  s += " in the ";
  s += t.location;
  s += " region, ";
  s += temporal;
  s += '.';
  return s;
}

void fill_normal(Study& st) {
  st.report = std::string(kNormalReport);
  st.entities = {
      make_entity("lungs", Relation::LocatedAt),
      make_entity("clear", Relation::Modify),
      make_entity("acute", Relation::Modify),
      make_entity("cardiopulmonary", Relation::LocatedAt),
      make_entity("abnormality", Relation::None),
  };
}

}  // namespace

const std::array<SyntheticTerms, kNumObservations - 1>& synthetic_lexicon() { return kLexicon; }

const SyntheticTerms& synthetic_terms(Observation o) {
  if (o == Observation::NoFinding) throw DataError("No Finding has no synthetic terms");
  return kLexicon[index_of(o) - 1];
}

std::vector<StudyPlan> plan_corpus(const SynthOptions& options) {
  if (options.n_studies < 1) throw ConfigError("n_studies must be >= 1");
  if (options.canvas_size < 4 * kAnchorCell) {
    throw ConfigError("synthetic layout needs a canvas of at least " + std::to_string(4 * kAnchorCell));
  }
  Rng rng(options.seed);

  // Slot permutation: observation i (1..13) anchors at slots[i - 1].
  std::vector<int> slots(16);
  for (int i = 0; i < 16; ++i) slots[static_cast<std::size_t>(i)] = i;
  rng.shuffle(slots);

  std::vector<StudyPlan> plans;
  std::vector<std::vector<Finding>> findings_of;
  plans.reserve(static_cast<std::size_t>(options.n_studies));
  int subjects = 0;

  for (int i = 0; i < options.n_studies; ++i) {
    StudyPlan plan;
    Study& st = plan.study;
    st.study_id = numbered('s', i);

    const double u = rng.uniform();
    st.split = u < 0.6 ? Split::Train : (u < 0.7 ? Split::Valid : Split::Test);

    const bool has_prior = i > 0 && rng.bernoulli(0.4);
    if (has_prior) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, i - 1));
      st.prior_study_ids.push_back(plans[j].study.study_id);
      st.subject_id = plans[j].study.subject_id;
    } else {
      st.subject_id = numbered('p', subjects++);
    }

    const int views = 1 + static_cast<int>(rng.uniform_int(0, 1));
    for (int v = 0; v < views; ++v) st.image_paths.push_back(st.study_id + "_v" + std::to_string(v) + ".pgm");

    std::vector<Finding> findings;
    StatusMap statuses{};
    const bool copy_template = i > 0 && rng.bernoulli(0.3);
    if (copy_template) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, i - 1));
      findings = findings_of[j];
      statuses = plans[j].study.statuses;
    } else if (!rng.bernoulli(0.15)) {
      const double k_draw = rng.uniform();
      const int k = k_draw < 0.6 ? 1 : (k_draw < 0.9 ? 2 : 3);
      std::vector<int> pool(kNumObservations - 1);
      for (std::size_t o = 0; o < pool.size(); ++o) pool[o] = static_cast<int>(o) + 1;
      rng.shuffle(pool);
      std::vector<int> chosen(pool.begin(), pool.begin() + k);
      std::sort(chosen.begin(), chosen.end());
      for (int o : chosen) {
        Finding f;
        f.observation = observation_at(static_cast<std::size_t>(o));
        f.status = rng.bernoulli(0.8) ? Status::Present : Status::Uncertain;
        f.severity = rng.bernoulli(0.5) ? Severity::Mild : Severity::Severe;
        findings.push_back(f);
      }
      statuses.fill(Status::Blank);
      for (std::size_t o = 1; o < kNumObservations; ++o) {
        statuses[o] = rng.bernoulli(0.3) ? Status::Absent : Status::Blank;
      }
      for (const auto& f : findings) statuses[index_of(f.observation)] = f.status;
      statuses[0] = findings.empty() ? Status::Present : Status::Absent;
    } else {
      statuses.fill(Status::Blank);
      for (std::size_t o = 1; o < kNumObservations; ++o) {
        statuses[o] = rng.bernoulli(0.3) ? Status::Absent : Status::Blank;
      }
      statuses[0] = Status::Present;
    }
    st.statuses = statuses;

    if (findings.empty()) {
      fill_normal(st);
    } else {
      const auto temporal = has_prior ? kTemporalUnchanged : kTemporalNew;
      for (const auto& f : findings) {
        if (!st.report.empty()) st.report += ' ';
        st.report += sentence_for(f, temporal);
        const auto& t = synthetic_terms(f.observation);
        st.entities.insert(make_entity(t.noun, Relation::None));
        st.entities.insert(make_entity(f.severity == Severity::Mild ? t.mild : t.severe, Relation::Modify));
        st.entities.insert(make_entity(t.location, Relation::LocatedAt));
        st.entities.insert(make_entity(temporal, Relation::Modify));
      }
    }

    for (const auto& f : findings) {
      const Band& band = f.severity == Severity::Mild ? kMildBand : kSevereBand;
      const int slot = slots[index_of(f.observation) - 1];
      const int anchor_x = (slot % 4) * kAnchorCell + kAnchorCell / 2;
      const int anchor_y = (slot / 4) * kAnchorCell + kAnchorCell / 2;
      const auto diameter = static_cast<int>(rng.uniform_int(band.diameter_lo, band.diameter_hi));
      const auto intensity = static_cast<int>(rng.uniform_int(band.intensity_lo, band.intensity_hi));
      const int cx = anchor_x + static_cast<int>(rng.uniform_int(-kAnchorJitter, kAnchorJitter));
      const int cy = anchor_y + static_cast<int>(rng.uniform_int(-kAnchorJitter, kAnchorJitter));
      BlobPlan blob;
      blob.observation = f.observation;
      blob.severity = f.severity;
      blob.intensity = static_cast<std::uint8_t>(intensity);
      blob.bbox = {cx - diameter / 2, cy - diameter / 2, diameter, diameter};
      plan.blobs.push_back(blob);
    }

    plan.noise_seed = mix(options.seed ^ mix(static_cast<std::uint64_t>(i) + 1));
    findings_of.push_back(std::move(findings));
    plans.push_back(std::move(plan));
  }
  return plans;
}

ImageGray render_view(const StudyPlan& plan, int view, int canvas_size) {
  ImageGray image;
  image.width = canvas_size;
  image.height = canvas_size;
  image.pixels.resize(static_cast<std::size_t>(canvas_size) * static_cast<std::size_t>(canvas_size));

  Rng noise(mix(plan.noise_seed + static_cast<std::uint64_t>(view)));
  std::size_t i = 0;
  while (i < image.pixels.size()) {
    std::uint64_t bits = noise.next();
    for (int b = 0; b < 8 && i < image.pixels.size(); ++b, bits >>= 8) {
      image.pixels[i++] = static_cast<std::uint8_t>(((bits & 0xFF) * (kBackgroundMax + 1)) >> 8);
    }
  }

  for (const auto& blob : plan.blobs) {
    const double c_x = blob.bbox.x + (blob.bbox.w - 1) / 2.0;
    const double c_y = blob.bbox.y + (blob.bbox.h - 1) / 2.0;
    const double r = blob.bbox.w / 2.0;
    for (int y = blob.bbox.y; y < blob.bbox.y + blob.bbox.h; ++y) {
      for (int x = blob.bbox.x; x < blob.bbox.x + blob.bbox.w; ++x) {
        const double dx = x - c_x;
        const double dy = y - c_y;
        if (dx * dx + dy * dy <= r * r) {
          image.pixels[static_cast<std::size_t>(y) * canvas_size + x] = blob.intensity;
        }
      }
    }
  }
  return image;
}

SynthOutput synth_corpus(const SynthOptions& options, const std::filesystem::path& out_dir) {
  const auto plans = plan_corpus(options);
  const auto image_dir = out_dir / "images";
  std::error_code ec;
  std::filesystem::create_directories(image_dir, ec);
  if (ec) throw IoError("cannot create " + image_dir.string() + ": " + ec.message());

  SynthOutput out;
  for (const auto& plan : plans) {
    for (std::size_t v = 0; v < plan.study.image_paths.size(); ++v) {
      write_image(image_dir / plan.study.image_paths[v],
                  render_view(plan, static_cast<int>(v), options.canvas_size));
    }
    for (const auto& blob : plan.blobs) {
      out.truth.push_back({plan.study.study_id, blob.observation, blob.bbox});
    }
    out.studies.push_back(plan.study);
  }
  write_corpus(out_dir / "corpus.jsonl", out.studies);
  write_truth(out_dir / "truth.jsonl", out.truth);
  return out;
}

}  // namespace icon
