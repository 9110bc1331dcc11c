#pragma once

#include <string>
#include <vector>

#include "vbsgpr/base.hpp"

namespace vbsgpr {

// Raw CSV contents: a header row plus string cells. Numeric interpretation
// happens at the dataset layer so that rejection of bad rows can be reported
// with context.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  // -1 when the column is absent
  Index column_index(const std::string& name) const;
};

// RFC-4180-style reader: quoted fields, doubled-quote escapes, CR/LF and LF
// line endings. Throws ParseError with row/column location on malformed
// input.
CsvTable read_csv(const std::string& path);

void write_csv(const std::string& path, const CsvTable& table);

}  // namespace vbsgpr
