#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "csmlgcn/params.hpp"
#include "csmlgcn/trainer.hpp"

namespace csmlgcn {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  TrainConfig config;
  Index feature_dim = 0;
  std::vector<std::string> node_labels;
  std::vector<std::string> layer_labels;
};

// Text container; every double is written in shortest round-trip form.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in, const std::string& source_name);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace csmlgcn
