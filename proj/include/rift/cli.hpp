#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rift/dataio.hpp"
#include "rift/metrics.hpp"
#include "rift/networks.hpp"
#include "rift/training.hpp"

namespace rift::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

// Full command-line entry point; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// "desk" or "paper".
TrainConfig preset(const std::string& name);

// "all", or a comma list of region ids and/or names. Returns sorted unique ids.
std::vector<int> parse_regions(const std::string& list, const std::vector<std::string>& names, int num_regions);

struct TranslateRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path content, mask, style, style_mask;
  std::filesystem::path out;
  std::filesystem::path dataset;  // optional; supplies the raw-label remap
  std::optional<std::vector<int>> regions;  // unset = full translation
};

// Writes the translated PNG with the resolved request embedded as a text
// chunk. Region rows are replaced one at a time in list order.
nlohmann::json translate_files(const TranslateRequest& request);

// Trains the domain classifier on the train split and evaluates the
// checkpoint's generator on the test split.
nlohmann::json evaluate_checkpoint(const Checkpoint& ckpt, const DatasetManifest& manifest, const EvalConfig& eval,
                                   const ClassifierTrainConfig& classifier);

}  // namespace rift::cli
