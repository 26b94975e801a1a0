#pragma once

#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

struct Invocation {
  int code = -1;
  std::string out;
  std::string err;
};

inline Invocation invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Invocation r;
  r.code = lmbrain::cli::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Relative path -> contents, for every regular file under dir.
inline std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[std::filesystem::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

// Small planted run that finishes in a couple of seconds.
inline std::string small_config_json(int seed = 0) {
  return R"({
  "seed": )" + std::to_string(seed) + R"(,
  "alpha_grid": [1, 100, 10000],
  "n_perm": 500,
  "n_shuffles": 4,
  "partition": "time",
  "synth": {"n_tr": 600, "n_voxels": 60, "n_rois": 12, "tokens_per_tr": 3},
  "toylm": {"seq_len": 300},
  "n_trials": 3
})";
}
