#ifndef TPR_UTIL_CSV_HPP
#define TPR_UTIL_CSV_HPP

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "tpr/core/errors.hpp"

namespace tpr {

// CSV writer with a leading comment row carrying provenance (config hash,
// seed) so every artifact can be traced to the run that produced it.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& provenance_comment,
            const std::vector<std::string>& columns)
      : out_(path, std::ios::trunc) {
    require(out_.good(), "cannot open for writing: " + path);
    if (!provenance_comment.empty()) out_ << "# " << provenance_comment << "\n";
    for (size_t i = 0; i < columns.size(); ++i) {
      if (i) out_ << ",";
      out_ << columns[i];
    }
    out_ << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ",";
      out_ << cells[i];
    }
    out_ << "\n";
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

inline std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

struct CsvTable {
  std::string comment;  // first '#' row, without the marker
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    throw FormatError("csv column missing: " + name);
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  require_format(in.good(), "cannot open csv: " + path);
  CsvTable table;
  std::string line;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (table.comment.empty()) table.comment = line.substr(line.find_first_not_of("# "));
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!header_done) {
      table.columns = std::move(cells);
      header_done = true;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  require_format(header_done, "csv has no header: " + path);
  return table;
}

}  // namespace tpr

#endif
