#pragma once

// Subcommands of the fusestab tool. Each writes its outputs through an
// io::OutputStage and throws fusestab::Error on failure.

#include <cstdint>
#include <optional>
#include <string>

namespace fusestab::cli {

void simulate(const std::string& spec_path, const std::string& outdir);

struct StabilizeOverrides {
  std::optional<std::string> backend;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
};
void stabilize(const std::string& config_path, const StabilizeOverrides& o);

void train(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::string> output);

void evaluate(const std::string& in_dir, const std::string& out_dir);

/// Returns true when every tensor passes.
bool gradcheck(std::uint64_t seed, int instances);

}  // namespace fusestab::cli
