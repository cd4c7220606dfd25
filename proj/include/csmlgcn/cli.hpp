#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace csmlgcn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `csmlgcn` tool: train, query, eval, synth, ablate.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

// 64-bit FNV-1a digest of a file, as 16 hex digits.
std::string file_digest(const std::string& path);

}  // namespace csmlgcn::cli
