#include "icon/corpus_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "icon/error.hpp"

namespace icon {

using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(std::string("missing field \"") + key + "\"");
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_string()) throw DataError(std::string("field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

std::vector<std::string> optional_string_list(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) return {};
  if (!it->is_array()) throw DataError(std::string("field \"") + key + "\" must be an array");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw DataError(std::string("field \"") + key + "\" must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

Study study_from_json(const json& obj) {
  if (!obj.is_object()) throw DataError("line is not a JSON object");
  Study st;
  st.study_id = require_string(obj, "study_id");
  if (st.study_id.empty()) throw DataError("study_id is empty");
  st.subject_id = require_string(obj, "subject_id");
  const auto split = require_string(obj, "split");
  const auto parsed_split = parse_split(split);
  if (!parsed_split) throw DataError("unknown split \"" + split + "\"");
  st.split = *parsed_split;
  st.image_paths = optional_string_list(obj, "images");
  if (st.image_paths.empty()) throw DataError("study " + st.study_id + " has no images");
  st.prior_study_ids = optional_string_list(obj, "prior_studies");
  st.report = require_string(obj, "report");

  if (auto it = obj.find("entities"); it != obj.end()) {
    if (!it->is_array()) throw DataError("field \"entities\" must be an array");
    for (const auto& e : *it) {
      const auto text = require_string(e, "text");
      auto relation = Relation::None;
      if (auto r = e.find("relation"); r != e.end()) {
        if (!r->is_string()) throw DataError("entity relation must be a string");
        const auto parsed = parse_relation(r->get<std::string>());
        if (!parsed) throw DataError("unknown relation \"" + r->get<std::string>() + "\"");
        relation = *parsed;
      }
      st.entities.insert(make_entity(text, relation));
    }
  }

  st.statuses.fill(Status::Blank);
  if (auto it = obj.find("statuses"); it != obj.end()) {
    if (!it->is_object()) throw DataError("field \"statuses\" must be an object");
    for (const auto& [name, value] : it->items()) {
      const auto o = parse_observation(name);
      if (!o) throw DataError("unknown observation \"" + name + "\"");
      if (!value.is_string()) throw DataError("status of " + name + " must be a string");
      const auto s = parse_status(value.get<std::string>());
      if (!s) throw DataError("unknown status \"" + value.get<std::string>() + "\"");
      st.statuses[index_of(*o)] = *s;
    }
  }
  return st;
}

json study_to_json(const Study& st) {
  json entities = json::array();
  for (const auto& e : st.entities) {
    entities.push_back({{"text", e.text}, {"relation", relation_name(e.relation)}});
  }
  json statuses = json::object();
  for (std::size_t i = 0; i < kNumObservations; ++i) {
    if (st.statuses[i] != Status::Blank) {
      statuses[std::string(observation_name(observation_at(i)))] = status_name(st.statuses[i]);
    }
  }
  json obj;
  obj["study_id"] = st.study_id;
  obj["subject_id"] = st.subject_id;
  obj["split"] = split_name(st.split);
  obj["images"] = st.image_paths;
  obj["prior_studies"] = st.prior_study_ids;
  obj["report"] = st.report;
  obj["entities"] = std::move(entities);
  obj["statuses"] = std::move(statuses);
  return obj;
}

bool blank_line(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

double iou(const BBox& a, const BBox& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x + a.w, b.x + b.w);
  const int y1 = std::min(a.y + a.h, b.y + b.h);
  if (x1 <= x0 || y1 <= y0) return 0.0;
  const double inter = static_cast<double>(x1 - x0) * (y1 - y0);
  const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
  return inter / uni;
}

std::vector<Study> parse_corpus(std::istream& in) {
  std::vector<Study> studies;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank_line(line)) continue;
    Study st;
    try {
      st = study_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(st.study_id).second) {
      throw DataError("corpus line " + std::to_string(line_no) + ": duplicate study_id " +
                      st.study_id);
    }
    studies.push_back(std::move(st));
  }
  return studies;
}

std::vector<Study> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus: " + path.string());
  return parse_corpus(in);
}

std::string study_to_json_line(const Study& study) { return study_to_json(study).dump(); }

void write_corpus(std::ostream& out, const std::vector<Study>& studies) {
  for (const auto& st : studies) out << study_to_json_line(st) << '\n';
}

void write_corpus(const std::filesystem::path& path, const std::vector<Study>& studies) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write corpus: " + path.string());
  write_corpus(out, studies);
}

std::vector<PlantedBlob> load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open truth file: " + path.string());
  std::vector<PlantedBlob> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank_line(line)) continue;
    try {
      const auto obj = json::parse(line);
      PlantedBlob blob;
      blob.study_id = require_string(obj, "study_id");
      const auto name = require_string(obj, "observation");
      const auto o = parse_observation(name);
      if (!o) throw DataError("unknown observation \"" + name + "\"");
      blob.observation = *o;
      const auto& box = require(obj, "bbox");
      if (!box.is_array() || box.size() != 4) throw DataError("bbox must be [x, y, w, h]");
      blob.bbox = {box[0].get<int>(), box[1].get<int>(), box[2].get<int>(), box[3].get<int>()};
      out.push_back(std::move(blob));
    } catch (const json::exception& e) {
      throw DataError("truth line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("truth line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_truth(const std::filesystem::path& path, const std::vector<PlantedBlob>& blobs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write truth file: " + path.string());
  for (const auto& b : blobs) {
    json obj;
    obj["study_id"] = b.study_id;
    obj["observation"] = observation_name(b.observation);
    obj["bbox"] = {b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h};
    out << obj.dump() << '\n';
  }
}

}  // namespace icon
