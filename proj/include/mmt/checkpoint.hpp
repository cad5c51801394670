#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmt/params.hpp"
#include "mmt/types.hpp"

namespace mmt {

/// Ordered (name, matrix) records with a magic header and format version.
/// Payloads are little-endian 64-bit floats regardless of the build scalar.
struct NamedRecords {
  std::vector<std::pair<std::string, Mat>> items;

  void add(const std::string& name, Mat m) {
    items.emplace_back(name, std::move(m));
  }
  const Mat* find(const std::string& name) const;
};

void write_records(const std::string& path, const NamedRecords& recs);
NamedRecords read_records(const std::string& path);

/// Model checkpoint: meta.* scalars (dims, mode, learning rate) followed by
/// every parameter tensor under its symbol name.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::map<std::string, double>& meta);
ModelParams load_checkpoint(const std::string& path,
                            std::map<std::string, double>* meta = nullptr);

}  // namespace mmt
