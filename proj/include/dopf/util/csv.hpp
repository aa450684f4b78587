#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dopf/errors.hpp"

namespace dopf {

// Minimal CSV support for the text formats used by this toolkit: comma-split
// fields, no quoting, '#' lines and blank lines ignored, UTF-8 passthrough.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
  int require_col(const std::string& name, const std::string& file) const {
    int c = col(name);
    if (c < 0) throw Error(Err::ParseError, file + ": missing column '" + name + "'");
    return c;
  }
};

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Err::MissingStageInput, "cannot open " + path);
  CsvTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, ',');
    if (t.header.empty())
      t.header = std::move(fields);
    else
      t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw Error(Err::ParseError, path + ": empty file");
  return t;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw Error(Err::ParseError, "cannot write " + path);
  }
  void row(const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace dopf
