#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ennal/csv.hpp"
#include "ennal/linalg.hpp"

namespace ennal {

/// One classification example. Labels are 0-based class ids.
struct Example {
  std::size_t index = 0;
  std::vector<double> x;
  int label = 0;
};

/// Train/test split of examples with uniform feature width.
struct Dataset {
  std::size_t feature_dim = 0;
  int class_count = 0;
  std::vector<Example> train;
  std::vector<Example> test;
};

/// Delimited dataset format, shared by the generator export and the
/// frozen-feature ingestion path:
///
///   line 1:  <feature_width>,<class_count>
///   rows:    <split>,<index>,<f0>,...,<fD-1>,<label>
///
/// split is "train" or "test"; labels are 0-based; features use shortest
/// round-trip decimal so export -> ingest is exact.
inline void write_dataset_csv(const Dataset& ds, const std::string& path) {
  CsvWriter w(path);
  w.raw_line(std::to_string(ds.feature_dim) + "," +
             std::to_string(ds.class_count));
  auto emit = [&](const char* split, const Example& e) {
    std::vector<std::string> fields;
    fields.reserve(ds.feature_dim + 3);
    fields.emplace_back(split);
    fields.push_back(std::to_string(e.index));
    for (double v : e.x) fields.push_back(format_double(v));
    fields.push_back(std::to_string(e.label));
    w.row(fields);
  };
  for (const Example& e : ds.train) emit("train", e);
  for (const Example& e : ds.test) emit("test", e);
}

inline Dataset read_dataset_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty() || (lines.size() == 1 && lines[0].empty())) {
    throw std::runtime_error(path + ": empty dataset file");
  }
  const auto header = split_fields(lines[0]);
  if (header.size() != 2) {
    throw std::runtime_error(path + ":1: header must be width,classes");
  }
  Dataset ds;
  ds.feature_dim = static_cast<std::size_t>(
      parse_int(header[0], path + ":1 width"));
  ds.class_count =
      static_cast<int>(parse_int(header[1], path + ":1 classes"));
  if (ds.feature_dim == 0 || ds.class_count < 2) {
    throw std::runtime_error(path + ":1: need width >= 1 and classes >= 2");
  }
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const std::string where = path + ":" + std::to_string(ln + 1);
    const auto f = split_fields(lines[ln]);
    if (f.size() != ds.feature_dim + 3) {
      throw std::runtime_error(where + ": expected " +
                               std::to_string(ds.feature_dim + 3) +
                               " fields, got " + std::to_string(f.size()));
    }
    Example e;
    e.index = static_cast<std::size_t>(parse_int(f[1], where + " index"));
    e.x.resize(ds.feature_dim);
    for (std::size_t j = 0; j < ds.feature_dim; ++j) {
      e.x[j] = parse_double(f[2 + j], where + " feature");
    }
    e.label = static_cast<int>(parse_int(f.back(), where + " label"));
    if (e.label < 0 || e.label >= ds.class_count) {
      throw std::runtime_error(where + ": label out of range [0," +
                               std::to_string(ds.class_count - 1) + "]");
    }
    if (f[0] == "train") {
      ds.train.push_back(std::move(e));
    } else if (f[0] == "test") {
      ds.test.push_back(std::move(e));
    } else {
      throw std::runtime_error(where + ": split must be train or test");
    }
  }
  if (ds.train.empty() && ds.test.empty()) {
    throw std::runtime_error(path + ": no examples");
  }
  return ds;
}

}  // namespace ennal
