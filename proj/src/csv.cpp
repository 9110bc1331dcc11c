#include "vbsgpr/csv.hpp"

#include <fstream>
#include <sstream>

namespace vbsgpr {
namespace {

struct Cursor {
  std::istream& in;
  Index row = 1;
  Index col = 1;

  int peek() { return in.peek(); }
  int get() {
    int c = in.get();
    if (c == '\n') {
      ++row;
      col = 1;
    } else if (c != EOF) {
      ++col;
    }
    return c;
  }
};

[[noreturn]] void fail(const std::string& path, Index row, Index col, const std::string& what) {
  std::ostringstream msg;
  msg << path << ":" << row << ":" << col << ": " << what;
  throw ParseError(msg.str());
}

// Reads one field, leaving the cursor on the delimiter that ended it.
std::string read_field(Cursor& cur, const std::string& path) {
  std::string out;
  if (cur.peek() == '"') {
    Index open_row = cur.row;
    Index open_col = cur.col;
    cur.get();
    for (;;) {
      int c = cur.get();
      if (c == EOF) fail(path, open_row, open_col, "unterminated quoted field");
      if (c == '"') {
        if (cur.peek() == '"') {
          cur.get();
          out.push_back('"');
        } else {
          break;
        }
      } else {
        out.push_back(static_cast<char>(c));
      }
    }
    int c = cur.peek();
    if (c != EOF && c != ',' && c != '\n' && c != '\r')
      fail(path, cur.row, cur.col, "unexpected character after closing quote");
    return out;
  }
  for (;;) {
    int c = cur.peek();
    if (c == EOF || c == ',' || c == '\n' || c == '\r') return out;
    if (c == '"') fail(path, cur.row, cur.col, "quote inside unquoted field");
    out.push_back(static_cast<char>(cur.get()));
  }
}

// Returns false once the stream is exhausted.
bool read_record(Cursor& cur, const std::string& path, std::vector<std::string>& fields) {
  fields.clear();
  if (cur.peek() == EOF) return false;
  for (;;) {
    fields.push_back(read_field(cur, path));
    int c = cur.peek();
    if (c == ',') {
      cur.get();
      continue;
    }
    if (c == '\r') {
      cur.get();
      if (cur.peek() == '\n') cur.get();
      return true;
    }
    if (c == '\n') {
      cur.get();
      return true;
    }
    return true;  // EOF ends the last record
  }
}

bool needs_quoting(const std::string& s) {
  return s.find_first_of(",\"\r\n") != std::string::npos;
}

void write_field(std::ostream& out, const std::string& s) {
  if (!needs_quoting(s)) {
    out << s;
    return;
  }
  out << '"';
  for (char c : s) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

}  // namespace

Index CsvTable::column_index(const std::string& name) const {
  for (Index i = 0; i < static_cast<Index>(columns.size()); ++i)
    if (columns[static_cast<std::size_t>(i)] == name) return i;
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "' for reading");

  Cursor cur{in};
  CsvTable table;
  if (!read_record(cur, path, table.columns))
    throw ParseError(path + ": empty file, expected a header row");
  if (table.columns.size() == 1 && table.columns[0].empty())
    throw ParseError(path + ": empty header row");

  std::vector<std::string> fields;
  while (read_record(cur, path, fields)) {
    if (fields.size() == 1 && fields[0].empty() && cur.peek() == EOF) break;  // trailing newline
    if (fields.size() != table.columns.size()) {
      std::ostringstream msg;
      msg << "expected " << table.columns.size() << " fields, got " << fields.size();
      fail(path, cur.row - 1, 1, msg.str());
    }
    table.rows.push_back(fields);
  }
  return table;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (i) out << ',';
    write_field(out, table.columns[i]);
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      write_field(out, row[i]);
    }
    out << '\n';
  }
  if (!out) throw ParseError("write to '" + path + "' failed");
}

}  // namespace vbsgpr
