#include "fusestab/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fusestab/errors.hpp"

namespace fusestab::io {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

void for_each_csv_row(const std::string& source, std::string_view text,
                      const std::function<void(int, const std::vector<std::string>&)>& row) {
  int line_no = 0;
  std::vector<std::string> fields;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    fields.clear();
    while (true) {
      const auto comma = line.find(',');
      fields.emplace_back(trim(line.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    row(line_no, fields);
  }
  (void)source;
}

double parse_double(const std::string& source, int line, const std::string& field) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) throw FormatError(source, line, "expected a number, got '" + field + "'");
  return v;
}

std::int64_t parse_int(const std::string& source, int line, const std::string& field) {
  std::int64_t v = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) throw FormatError(source, line, "expected an integer, got '" + field + "'");
  return v;
}

OutputStage::OutputStage(fs::path dir) : final_(std::move(dir)) {
  staging_ = final_;
  staging_ += ".partial";
  fs::remove_all(staging_);
  fs::create_directories(staging_);
}

OutputStage::~OutputStage() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

fs::path OutputStage::path(const fs::path& relative) const { return staging_ / relative; }

void OutputStage::write(const fs::path& relative, std::string_view contents) const {
  const fs::path p = path(relative);
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("write failed: " + p.string());
}

void OutputStage::write_binary(const fs::path& relative, const std::vector<std::uint8_t>& bytes) const {
  write(relative, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void OutputStage::commit() {
  fs::create_directories(final_);
  for (const auto& entry : fs::recursive_directory_iterator(staging_)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), staging_);
    const fs::path dest = final_ / rel;
    fs::create_directories(dest.parent_path());
    fs::rename(entry.path(), dest);
  }
  fs::remove_all(staging_);
  committed_ = true;
}

}  // namespace fusestab::io
