#pragma once

// Internal helpers shared by the JSON serialization code. Not part of the
// public headers.

#include <fstream>
#include <sstream>
#include <string>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "formnet/errors.hpp"

namespace formnet::json_io {

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& arr,
                                        const char* what) {
  if (!arr.is_array())
    throw IoError(std::string("expected array for ") + what);
  Eigen::VectorXd out(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) out[i] = arr[i].get<double>();
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path,
                            const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

inline nlohmann::json parse_json(const std::string& text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& err) {
    throw IoError(std::string("malformed JSON in ") + what + ": " +
                  err.what());
  }
}

}  // namespace formnet::json_io
