#include "icon/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "icon/annotate.hpp"
#include "icon/checkpoint.hpp"
#include "icon/compose.hpp"
#include "icon/consistency.hpp"
#include "icon/corpus_io.hpp"
#include "icon/error.hpp"
#include "icon/inspect.hpp"
#include "icon/lesion.hpp"
#include "icon/pipeline.hpp"
#include "icon/synth.hpp"

namespace icon::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct RunConfig {
  std::string command;
  std::string corpus;
  std::string images;
  std::string out;
  std::uint64_t seed = 13;
  double theta_obs = kThetaObservation;
  double theta_ent = kThetaEntity;
  double lambda = kMixupLambda;
  int window = kWindowSize;
  int step = kWindowStep;
  int canvas = kCanvasSize;
  std::size_t top_k = kDefaultTopK;
  std::optional<int> epochs;
  std::optional<double> lr;
  unsigned jobs = 1;
  bool no_mixup = false;
  std::string split = "test";
  std::string hyp = "-";
  int n = 200;
  std::string zoomer;
  std::string lesions;
  std::string vocab;
  std::string inspector;
  bool random = false;
};

std::string format_version() {
  return std::string("icon ") + kToolkitVersion + " (corpus jsonl 1, lesion jsonl 1, linear head v" +
         std::to_string(kLinearHeadVersion) + ", attribute head v" + std::to_string(kAttrHeadVersion) +
         ", vocab tsv 1, scores tsv 1)";
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

json config_json(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  j["version"] = kToolkitVersion;
  j["corpus"] = c.corpus;
  j["images"] = c.images;
  j["out"] = c.out;
  j["seed"] = c.seed;
  j["theta_obs"] = c.theta_obs;
  j["theta_ent"] = c.theta_ent;
  j["lambda"] = c.lambda;
  j["mixup"] = !c.no_mixup;
  j["window"] = c.window;
  j["step"] = c.step;
  j["canvas"] = c.canvas;
  j["top_k"] = c.top_k;
  j["epochs"] = c.epochs ? json(*c.epochs) : json(nullptr);
  j["lr"] = c.lr ? json(*c.lr) : json(nullptr);
  j["jobs"] = c.jobs;
  j["split"] = c.split;
  j["hyp"] = c.hyp;
  j["n"] = c.n;
  j["zoomer"] = c.zoomer;
  j["lesions"] = c.lesions;
  j["vocab"] = c.vocab;
  j["inspector"] = c.inspector;
  j["random"] = c.random;
  return j;
}

void validate(const RunConfig& c) {
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  unit(c.theta_obs, "--theta-obs");
  unit(c.theta_ent, "--theta-ent");
  if (!(c.lambda > 0.0 && c.lambda <= 1.0)) throw ConfigError("--lambda must lie in (0, 1]");
  window_grid({c.canvas, c.window, c.step});
  if (c.top_k < 1) throw ConfigError("--top-k must be >= 1");
  if (c.epochs && *c.epochs < 0) throw ConfigError("--epochs must be >= 0");
  if (c.lr && !(*c.lr > 0.0 && std::isfinite(*c.lr))) throw ConfigError("--lr must be finite and > 0");
  if (c.jobs < 1) throw ConfigError("--jobs must be >= 1");
  if (c.n < 1) throw ConfigError("--n must be >= 1");
  if (!parse_split(c.split)) throw ConfigError("--split must be train, valid or test");
}

Split split_of(const RunConfig& c) { return *parse_split(c.split); }

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

fs::path out_dir(const RunConfig& c) {
  require(c.out, "--out");
  fs::create_directories(c.out);
  return c.out;
}

fs::path or_default(const std::string& value, const fs::path& fallback) {
  return value.empty() ? fallback : fs::path(value);
}

Corpus read_corpus(const RunConfig& c) {
  require(c.corpus, "--corpus");
  return Corpus(load_corpus(c.corpus));
}

ImageStore image_store(const RunConfig& c) {
  const fs::path root = c.images.empty() ? fs::path(c.corpus).parent_path() / "images" : fs::path(c.images);
  return ImageStore(root, c.canvas);
}

void write_run_json(const RunConfig& c) {
  if (c.out.empty()) return;
  std::ofstream f(fs::path(c.out) / "run.json", std::ios::trunc);
  if (!f) throw IoError("cannot write " + (fs::path(c.out) / "run.json").string());
  f << config_json(c).dump(2) << '\n';
}

AttributeVocab vocab_for_training(const RunConfig& c, const Corpus& corpus) {
  const fs::path path = c.vocab.empty() && !c.out.empty() ? fs::path(c.out) / "vocab.tsv" : fs::path(c.vocab);
  if (!c.vocab.empty() || fs::exists(path)) return read_vocab_tsv(path);
  return pmi_rank(corpus.split(Split::Train), c.top_k);
}

// Each command returns its one-line summary.

std::string cmd_synth(const RunConfig& c, std::istream&, std::ostream&) {
  const auto dir = out_dir(c);
  const auto result = synth_corpus({c.n, c.seed, c.canvas}, dir);
  return "synth: " + std::to_string(result.studies.size()) + " studies, " + std::to_string(result.truth.size()) +
         " planted lesions -> " + dir.string();
}

std::string cmd_annotate(const RunConfig& c, std::istream&, std::ostream&) {
  const auto corpus = read_corpus(c);
  const auto dir = out_dir(c);
  const auto train = corpus.split(Split::Train);
  const auto vocab = pmi_rank(train, c.top_k);
  write_vocab_tsv(dir / "vocab.tsv", vocab);
  const auto weights = class_weights(train);
  std::ofstream w(dir / "class_weights.tsv", std::ios::trunc);
  if (!w) throw IoError("cannot write " + (dir / "class_weights.tsv").string());
  for (auto o : all_observations()) {
    char line[128];
    std::snprintf(line, sizeof line, "\t%zu\t%.6f\n", weights.counts[index_of(o)], weights.alpha[index_of(o)]);
    w << observation_name(o) << line;
  }
  std::size_t total = 0;
  for (auto o : all_observations()) total += vocab.size(o);
  return "annotate: " + std::to_string(train.size()) + " train studies, " + std::to_string(total) +
         " ranked attributes -> " + (dir / "vocab.tsv").string();
}

std::string cmd_mine(const RunConfig& c, std::istream&, std::ostream&) {
  const auto corpus = read_corpus(c);
  const auto dir = out_dir(c);
  const auto sets = mine_neighbors(corpus, {c.theta_obs, c.theta_ent, split_of(c), c.jobs});
  std::ofstream f(dir / "neighbors.jsonl", std::ios::trunc);
  if (!f) throw IoError("cannot write " + (dir / "neighbors.jsonl").string());
  for (const auto& s : sets) f << json{{"study_id", s.query_id}, {"neighbors", s.neighbor_ids}}.dump() << '\n';
  return "mine: " + std::to_string(sets.size()) + " queries with neighbors -> " + (dir / "neighbors.jsonl").string();
}

std::string cmd_train_zoomer(const RunConfig& c, std::istream&, std::ostream&) {
  const auto corpus = read_corpus(c);
  const auto dir = out_dir(c);
  const auto store = image_store(c);
  FeatureCache cache(store);
  TrainOptions options;
  options.seed = c.seed;
  if (c.epochs) options.epochs = *c.epochs;
  if (c.lr) options.lr = *c.lr;
  const auto train = corpus.split(Split::Train);
  const auto result = train_zoomer(train, cache, options);
  save_head(dir / "zoomer.bin", result.head);

  auto held_out = corpus.split(Split::Valid);
  const auto test = corpus.split(Split::Test);
  held_out.insert(held_out.end(), test.begin(), test.end());
  std::string f1 = "n/a";
  if (!held_out.empty()) f1 = fixed4(zoomer_f1(result.head, held_out, cache).macro_f1);
  return "train-zoomer: " + std::to_string(train.size()) + " studies, loss " + fixed4(result.initial_loss) +
         " -> " + fixed4(result.final_loss) + ", held-out macro-F1 " + f1 + " -> " + (dir / "zoomer.bin").string();
}

std::string cmd_extract(const RunConfig& c, std::istream&, std::ostream&) {
  const auto corpus = read_corpus(c);
  const auto dir = out_dir(c);
  const auto head = load_linear_head(or_default(c.zoomer, dir / "zoomer.bin"));
  if (head.n_in() != kFeatureDim || head.n_out() != kNumObservations) {
    throw DataError("zoomer checkpoint has the wrong shape");
  }
  const auto records = extract_corpus(corpus, head, image_store(c), {c.canvas, c.window, c.step}, c.jobs);
  write_lesions(dir / "lesions.jsonl", records);
  return "extract: " + std::to_string(records.size()) + " lesions from " + std::to_string(corpus.size()) +
         " studies -> " + (dir / "lesions.jsonl").string();
}

std::string cmd_train_inspector(const RunConfig& c, std::istream&, std::ostream&) {
  const auto corpus = read_corpus(c);
  const auto dir = out_dir(c);
  const auto store = image_store(c);
  const auto records = load_lesions(or_default(c.lesions, dir / "lesions.jsonl"));
  InspectorBundle bundle;
  bundle.vocab = vocab_for_training(c, corpus);
  InspectorOptions options;
  options.seed = c.seed;
  options.lambda = c.lambda;
  options.mixup = !c.no_mixup && c.lambda < 1.0;
  if (c.epochs) options.epochs = *c.epochs;
  if (c.lr) options.lr = *c.lr;
  const auto lesions = training_lesions(corpus, records, store);
  FeatureCache cache(store);
  InspectorReport report;
  bundle.model = train_inspector(corpus, lesions, bundle.vocab, cache, options, &report);
  const auto target = or_default(c.inspector, dir / "inspector");
  save_inspector(target, bundle);
  std::size_t heads = 0;
  for (const auto& h : bundle.model.heads) heads += h ? 1 : 0;
  return "train-inspector: " + std::to_string(heads) + " heads, " + std::to_string(report.samples) + " samples (" +
         std::to_string(report.mixed) + " mixed), loss " + fixed4(report.final_loss) + " -> " + target.string();
}

std::string cmd_generate(const RunConfig& c, std::istream&, std::ostream&) {
  const auto corpus = read_corpus(c);
  const auto dir = out_dir(c);
  const auto split = split_of(c);
  HypothesisMap hyps;
  if (c.random) {
    hyps = random_baseline(corpus, split, c.seed);
  } else {
    const auto store = image_store(c);
    const auto records = load_lesions(or_default(c.lesions, dir / "lesions.jsonl"));
    const auto bundle = load_inspector(or_default(c.inspector, dir / "inspector"));
    const auto attrs = predict_corpus_attributes(corpus, split, records, bundle, store);
    write_attributes(dir / "attributes.jsonl", attrs);
    const auto index = build_report_index(corpus, bundle.vocab);
    hyps = compose_hypotheses(corpus, split, index, records, attrs);
  }
  write_hypotheses(dir / "hypotheses.jsonl", hyps);
  return std::string("generate: ") + (c.random ? "random " : "") + std::to_string(hyps.size()) +
         " hypotheses -> " + (dir / "hypotheses.jsonl").string();
}

std::string cmd_eval(const RunConfig& c, std::istream& in, std::ostream&) {
  const auto corpus = read_corpus(c);
  HypothesisMap hyps;
  if (c.hyp == "-") {
    hyps = parse_hypotheses(in);
  } else {
    hyps = load_hypotheses(c.hyp);
  }
  std::optional<AttributeVocab> vocab;
  if (!c.vocab.empty()) vocab = read_vocab_tsv(c.vocab);
  EvaluationOptions options;
  options.mining = {c.theta_obs, c.theta_ent, split_of(c), c.jobs};
  options.vocab = vocab ? &*vocab : nullptr;
  const auto report = evaluate(corpus, hyps, options);
  if (!c.out.empty()) {
    const auto dir = out_dir(c);
    std::ofstream f(dir / "scores.tsv", std::ios::trunc);
    if (!f) throw IoError("cannot write " + (dir / "scores.tsv").string());
    write_scores_tsv(f, report);
  }
  auto show = [](const std::optional<double>& v) { return v ? fixed4(*v) : std::string("n/a"); };
  return "eval: queries " + std::to_string(report.rows.size()) + " macro_con " + show(report.macro_con) +
         " macro_rcon " + show(report.macro_rcon);
}

std::string cmd_majority(const RunConfig& c, std::istream&, std::ostream& out) {
  const auto corpus = read_corpus(c);
  const auto hyps = majority_baseline(corpus, split_of(c));
  if (c.out.empty()) {
    write_hypotheses(out, hyps);
    return {};
  }
  const auto dir = out_dir(c);
  write_hypotheses(dir / "hypotheses.jsonl", hyps);
  return "majority: " + std::to_string(hyps.size()) + " hypotheses -> " + (dir / "hypotheses.jsonl").string();
}

using Command = std::function<std::string(const RunConfig&, std::istream&, std::ostream&)>;

struct Flags {
  bool corpus = true;
  bool images = false;
  bool out = true;
  bool geometry = false;
  bool thresholds = false;
  bool training = false;
  bool jobs = false;
  bool split = false;
};

CLI::App* add_command(CLI::App& app, RunConfig& c, const std::string& name, const std::string& help,
                      const Flags& f) {
  auto* sub = app.add_subcommand(name, help);
  if (f.corpus) sub->add_option("--corpus", c.corpus, "corpus JSONL");
  if (f.images) sub->add_option("--images", c.images, "image directory (default <corpus dir>/images)");
  if (f.out) sub->add_option("--out", c.out, "output directory");
  sub->add_option("--seed", c.seed, "random seed")->capture_default_str();
  if (f.geometry) {
    sub->add_option("--window", c.window, "window side in canvas pixels")->capture_default_str();
    sub->add_option("--step", c.step, "window stride")->capture_default_str();
    sub->add_option("--canvas", c.canvas, "canvas side")->capture_default_str();
  }
  if (f.thresholds) {
    sub->add_option("--theta-obs", c.theta_obs, "observation overlap threshold")->capture_default_str();
    sub->add_option("--theta-ent", c.theta_ent, "entity overlap threshold")->capture_default_str();
  }
  if (f.training) {
    sub->add_option("--epochs", c.epochs, "training epochs");
    sub->add_option("--lr", c.lr, "learning rate");
  }
  if (f.jobs) sub->add_option("--jobs", c.jobs, "worker threads")->capture_default_str();
  if (f.split) sub->add_option("--split", c.split, "train, valid or test")->capture_default_str();
  return sub;
}

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Consistency-oriented radiology report toolkit", "icon"};
  app.set_version_flag("--version", format_version());
  app.require_subcommand(1);

  std::map<CLI::App*, Command> commands;
  Flags io;
  Flags imaging = io;
  imaging.images = true;
  imaging.geometry = true;

  auto* synth = add_command(app, c, "synth", "write a synthetic corpus", {.corpus = false});
  synth->add_option("--n", c.n, "number of studies")->capture_default_str();
  synth->add_option("--canvas", c.canvas, "canvas side")->capture_default_str();
  commands[synth] = cmd_synth;

  auto* annotate = add_command(app, c, "annotate", "class weights and PMI attribute vocabulary", io);
  annotate->add_option("--top-k", c.top_k, "attributes per observation")->capture_default_str();
  commands[annotate] = cmd_annotate;

  commands[add_command(app, c, "mine", "mine semantically equivalent neighbors",
                       {.thresholds = true, .jobs = true, .split = true})] = cmd_mine;

  Flags zoomer_flags = imaging;
  zoomer_flags.training = true;
  commands[add_command(app, c, "train-zoomer", "train the observation head", zoomer_flags)] = cmd_train_zoomer;

  Flags extract_flags = imaging;
  extract_flags.jobs = true;
  auto* extract = add_command(app, c, "extract", "extract one lesion per predicted observation", extract_flags);
  extract->add_option("--zoomer", c.zoomer, "observation head (default <out>/zoomer.bin)");
  commands[extract] = cmd_extract;

  auto* inspector = add_command(app, c, "train-inspector", "train attribute heads", zoomer_flags);
  inspector->add_option("--lesions", c.lesions, "lesion JSONL (default <out>/lesions.jsonl)");
  inspector->add_option("--vocab", c.vocab, "vocabulary TSV (default <out>/vocab.tsv, else ranked from train)");
  inspector->add_option("--inspector", c.inspector, "model directory (default <out>/inspector)");
  inspector->add_option("--lambda", c.lambda, "mixup coefficient")->capture_default_str();
  inspector->add_option("--top-k", c.top_k, "attributes per observation")->capture_default_str();
  inspector->add_flag("--no-mixup", c.no_mixup, "train on unblended lesions");
  commands[inspector] = cmd_train_inspector;

  Flags generate_flags = imaging;
  generate_flags.split = true;
  auto* generate = add_command(app, c, "generate", "predict attributes and compose reports", generate_flags);
  generate->add_option("--lesions", c.lesions, "lesion JSONL (default <out>/lesions.jsonl)");
  generate->add_option("--inspector", c.inspector, "model directory (default <out>/inspector)");
  generate->add_flag("--random", c.random, "emit seeded random train reports instead");
  commands[generate] = cmd_generate;

  auto* eval = add_command(app, c, "eval", "score hypotheses with CON and R-CON",
                           {.thresholds = true, .jobs = true, .split = true});
  eval->add_option("--hyp", c.hyp, "hypotheses JSONL, - for stdin")->capture_default_str();
  eval->add_option("--vocab", c.vocab, "extra lexicon terms from a vocabulary TSV");
  commands[eval] = cmd_eval;

  commands[add_command(app, c, "majority", "emit the majority train report for every study",
                       {.split = true})] = cmd_majority;

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << format_version() << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "icon: usage: " << e.what() << '\n';
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  c.command = chosen->get_name();
  try {
    validate(c);
    const auto summary = commands.at(chosen)(c, in, out);
    write_run_json(c);
    if (!summary.empty()) out << summary << '\n';
    return 0;
  } catch (const ConfigError& e) {
    err << "icon " << c.command << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "icon " << c.command << ": numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "icon " << c.command << ": " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    err << "icon " << c.command << ": " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "icon " << c.command << ": " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "icon " << c.command << ": " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace

int dispatch(int argc, const char* const* argv) { return run(argc, argv, std::cin, std::cout, std::cerr); }

int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("icon");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), in, out, err);
}

}  // namespace icon::cli
