#pragma once

#include "gabor_adapt/benchmark.hpp"
#include "gabor_adapt/imageio.hpp"
#include "gabor_adapt/inference.hpp"
#include "gabor_adapt/learning.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gabor_adapt::cli {

inline constexpr const char* kArtifactVersion = "gabor_adapt 1.0.0";
inline constexpr const char* kManifestName = "manifest.json";

/// Every tunable of the pipeline, with embedded defaults.
struct RunConfig {
  PipelineConfig pipeline;
  int train_patches = 20000;
  int test_patches = 400;
  double scale = 0.25;
  InferenceConfig inference{0.03, 1e-4, 200};
  LearningConfig learning;
  bool swap_rates = false;
  NonparamConfig nonparam;
  SweepConfig sweep;
  int histogram_bins = 20;

  RunConfig();

  /// Applies one key=value assignment; throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// All keys in a fixed order, values printed round-trip exact.
  std::vector<std::pair<std::string, std::string>> entries() const;
  void validate() const;
};

/// Parses a key=value file; '#' starts a comment.
RunConfig load_config(const std::filesystem::path& path, RunConfig base = RunConfig{});
void write_config(const std::filesystem::path& path, const RunConfig& cfg);

/// 64-bit FNV-1a over the file bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

struct Invocation {
  std::string command;
  std::uint64_t seed = 1;
  RunConfig config;
  /// Command-specific arguments, e.g. "corpus", "patches", "basis", "variant".
  std::map<std::string, std::vector<std::string>> args;
  std::filesystem::path out;
};

struct OutputFile {
  std::string path;  ///< relative to the output directory
  std::string digest;
};

struct RunManifest {
  std::string command;
  std::uint64_t seed = 1;
  std::vector<std::pair<std::string, std::string>> config;
  std::map<std::string, std::vector<std::string>> args;
  std::vector<std::string> inputs;
  std::vector<OutputFile> outputs;
  std::string timestamp;
  std::string version;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

/// Runs one pipeline command, writes its outputs and manifest into inv.out
/// and returns the manifest.
RunManifest run(const Invocation& inv);

RunManifest cmd_preprocess(const Invocation& inv);
RunManifest cmd_learn(const Invocation& inv);
RunManifest cmd_bench(const Invocation& inv);
RunManifest cmd_generate(const Invocation& inv);
RunManifest cmd_fit(const Invocation& inv);
RunManifest cmd_probe(const Invocation& inv);

struct ReplayResult {
  RunManifest original;
  RunManifest replayed;
  std::vector<std::string> mismatched;  ///< outputs whose digests differ or are missing
  bool identical() const { return mismatched.empty(); }
};

/// Reruns the command recorded in a manifest into `out` and compares digests.
ReplayResult replay(const std::filesystem::path& manifest_path, const std::filesystem::path& out);

}  // namespace gabor_adapt::cli
