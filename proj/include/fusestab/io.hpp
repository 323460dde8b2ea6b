#pragma once

// Small text / file helpers shared by the log, path and report formats.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace fusestab::io {

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temporary and renames into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Shortest round-trippable decimal form.
std::string fmt(double v);

/// Calls `row(line_number, fields)` for every non-blank, non-'#' line of a
/// comma-separated file, with fields trimmed.
void for_each_csv_row(const std::string& source, std::string_view text,
                      const std::function<void(int, const std::vector<std::string>&)>& row);

double parse_double(const std::string& source, int line, const std::string& field);
std::int64_t parse_int(const std::string& source, int line, const std::string& field);

/// Collects a command's outputs in `<dir>.partial` and moves them into `dir`
/// on commit(). Destruction without commit() removes the staging directory, so
/// a failed command leaves no partial output files behind.
class OutputStage {
 public:
  explicit OutputStage(std::filesystem::path dir);
  ~OutputStage();
  OutputStage(const OutputStage&) = delete;
  OutputStage& operator=(const OutputStage&) = delete;

  /// Path inside the staging area for a file relative to the final directory.
  std::filesystem::path path(const std::filesystem::path& relative) const;
  void write(const std::filesystem::path& relative, std::string_view contents) const;
  void write_binary(const std::filesystem::path& relative, const std::vector<std::uint8_t>& bytes) const;

  void commit();

 private:
  std::filesystem::path final_;
  std::filesystem::path staging_;
  bool committed_ = false;
};

}  // namespace fusestab::io
