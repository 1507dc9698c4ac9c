#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include <sys/wait.h>

#include "icon/observation.hpp"
#include "icon/rng.hpp"
#include "icon/synth.hpp"

namespace icon::testing {

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::path(ICON_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

struct CommandResult {
  int exit_code = 0;
  std::string out;
};

/// Runs a shell command through popen and captures its stdout.
inline CommandResult shell(const std::string& command) {
  CommandResult r;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return {-1, {}};
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::string icon_binary() { return ICON_BINARY; }

/// The 200-study, seed-7 synthetic corpus, generated once per test process.
inline const std::filesystem::path& synthetic_200() {
  static const std::filesystem::path dir = [] {
    const auto d = fresh_dir("synthetic_200");
    synth_corpus({200, 7, kCanvasSize}, d);
    return d;
  }();
  return dir;
}

inline Study make_study(std::string id, Split split, std::initializer_list<Observation> positives,
                        std::initializer_list<const char*> entities, std::string report = {}) {
  Study st;
  st.study_id = std::move(id);
  st.subject_id = "p" + st.study_id;
  st.split = split;
  st.image_paths = {st.study_id + ".pgm"};
  for (auto o : positives) st.statuses[index_of(o)] = Status::Present;
  for (const char* e : entities) st.entities.insert(make_entity(e, Relation::Modify));
  st.report = report.empty() ? st.study_id : std::move(report);
  return st;
}

}  // namespace icon::testing
