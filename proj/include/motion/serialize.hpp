#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "motion/errors.hpp"
#include "motion/tensor.hpp"

namespace motion {

inline nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < t.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < t.cols(); ++j) row.push_back(t(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ParseError("tensor: expected an array of rows");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Tensor t(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols)
      throw ParseError("tensor: ragged rows");
    for (int c = 0; c < cols; ++c) t(i, c) = j[i][c].get<double>();
  }
  return t;
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return j;
}

inline void save_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace motion
