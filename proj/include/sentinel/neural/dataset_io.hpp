#pragma once

// Training data as JSONL, one {"features": [...], "label": 0|1} per line.

#include <fstream>
#include <string>

#include "sentinel/core/error.hpp"
#include "sentinel/core/wire.hpp"
#include "sentinel/neural/train.hpp"

namespace sentinel::neural {

inline Dataset load_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SourceUnreadable("cannot open dataset " + path);
  Dataset data;
  std::string line;
  std::vector<double> x;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = Json::parse(line);
      x = j.at("features").get<std::vector<double>>();
      const int label = j.at("label").get<int>();
      if (label != 0 && label != 1) throw Error("label must be 0 or 1");
      data.add(x, label);
    } catch (const Json::exception& e) {
      throw Error("dataset line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return data;
}

inline void save_dataset_jsonl(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  for (std::size_t r = 0; r < data.size(); ++r) {
    auto row = data.row(r);
    Json j{{"features", std::vector<double>(row.begin(), row.end())}, {"label", static_cast<int>(data.labels[r])}};
    out << j.dump() << '\n';
  }
  if (!out) throw Error("write failed for " + path);
}

}  // namespace sentinel::neural
