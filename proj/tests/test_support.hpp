#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "beamlat/beam.hpp"
#include "beamlat/error.hpp"
#include "beamlat/world.hpp"

namespace beamlat::testing {

// Sequence of `length` tokens drawn uniformly from the world's vocabulary.
inline SequenceSpec random_spec(const World& world, int length, Seed seed, const std::string& id = "seq") {
  Rng rng(seed);
  const auto& vocab = world.vocabulary();
  SequenceSpec spec;
  spec.id = id;
  spec.goal_text = "goal";
  for (int j = 0; j < length; ++j) {
    const auto& entry = vocab[rng() % vocab.size()];
    spec.steps.push_back(SequenceStep{entry.condition.token, entry.condition.token, entry.condition});
  }
  spec.goal_embedding = spec.steps.back().condition.embedding;
  return spec;
}

inline SequenceSpec spec_from_tokens(const World& world, const std::vector<std::string>& tokens,
                                     const std::string& id = "seq") {
  SequenceSpec spec;
  spec.id = id;
  spec.goal_text = "goal";
  for (const auto& t : tokens) spec.steps.push_back(SequenceStep{t, t, world.condition(t)});
  spec.goal_embedding = spec.steps.back().condition.embedding;
  return spec;
}

// Kind of the beamlat::Error thrown by f, or nullopt if it returns normally.
template <class F>
std::optional<ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("beamlat_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

}  // namespace beamlat::testing
