#pragma once

// Strict numeric CSV: comma separated, one header row, '.' decimal point.
// Lines starting with '#' are treated as comments. Row order defines the
// 0-based observation ids. Parse failures carry line and column positions.

#include "sparselts/core.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparselts {

struct CsvError : std::runtime_error {
  int line;
  int column;
  CsvError(const std::string& message, int line_in, int column_in)
      : std::runtime_error("line " + std::to_string(line_in) + ", column " +
                           std::to_string(column_in) + ": " + message),
        line(line_in),
        column(column_in) {}
};

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // row-major

  int n_rows() const { return static_cast<int>(rows.size()); }
  int n_cols() const { return static_cast<int>(columns.size()); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  fields.push_back(field);
  return fields;
}

inline double parse_number(const std::string& field, int line, int column) {
  if (field.empty()) throw CsvError("empty numeric field", line, column);
  errno = 0;
  char* end = nullptr;
  const double value = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size() || errno == ERANGE)
    throw CsvError("not a number: '" + field + "'", line, column);
  return value;
}

}  // namespace detail

inline CsvTable read_csv(std::istream& input) {
  CsvTable table;
  std::string line;
  int line_number = 0;
  bool have_header = false;
  while (std::getline(input, line)) {
    ++line_number;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields = detail::split_csv_line(line);
    if (!have_header) {
      for (std::size_t c = 0; c < fields.size(); ++c)
        if (fields[c].empty())
          throw CsvError("empty column name", line_number, static_cast<int>(c) + 1);
      table.columns = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.columns.size())
      throw CsvError("expected " + std::to_string(table.columns.size()) + " fields, got " +
                         std::to_string(fields.size()),
                     line_number, 1);
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c)
      row[c] = detail::parse_number(fields[c], line_number, static_cast<int>(c) + 1);
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw CsvError("missing header row", line_number == 0 ? 1 : line_number, 1);
  return table;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream input(path);
  if (!input) throw std::runtime_error("cannot open file: " + path);
  return read_csv(input);
}

struct LoadedDataset {
  Dataset data;
  std::vector<std::string> predictor_names;
  std::string response_name;
  int response_column = -1;
};

// Split a table into response and predictors by column name.
inline LoadedDataset dataset_from_csv(const CsvTable& table, const std::string& response) {
  int response_col = -1;
  for (int c = 0; c < table.n_cols(); ++c)
    if (table.columns[c] == response) response_col = c;
  if (response_col < 0)
    throw std::runtime_error("response column not found: " + response);
  if (table.n_cols() < 2)
    throw std::runtime_error("need at least one predictor column");
  if (table.n_rows() < 1) throw std::runtime_error("no data rows");

  const int n = table.n_rows();
  const int p = table.n_cols() - 1;
  MatrixXd X(n, p);
  VectorXd y(n);
  LoadedDataset out;
  out.response_name = response;
  out.response_column = response_col;
  for (int c = 0; c < table.n_cols(); ++c)
    if (c != response_col) out.predictor_names.push_back(table.columns[c]);
  for (int i = 0; i < n; ++i) {
    int k = 0;
    for (int c = 0; c < table.n_cols(); ++c) {
      if (c == response_col) {
        y[i] = table.rows[i][c];
      } else {
        X(i, k++) = table.rows[i][c];
      }
    }
  }
  out.data = Dataset(std::move(X), std::move(y));
  return out;
}

}  // namespace sparselts
