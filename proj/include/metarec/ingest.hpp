// File ingestion and export for task collections.
//
// Delimited format: tab-separated, header row with the task-key columns,
// `timestamp`, `label`, then `mf_0..mf_{p-1}` and `of_0..of_{q-1}`.
// JSON-lines: one object per sample with the same field names.
// Both are UTF-8 with LF line endings.
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "metarec/data.hpp"

namespace metarec {

enum class FileFormat { kDelimited, kJsonLines };

FileFormat format_from_string(const std::string& s);

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Groups rows by the composite key (task_key_columns joined with "|"),
// sorted by timestamp. Malformed rows are rejected with their line number;
// key values containing "|" are rejected.
TaskCollection ingest(const std::filesystem::path& path, FileFormat format,
                      const std::vector<std::string>& task_key_columns);

// Writes a collection with a single `task_key` column; numbers are emitted
// so that ingest(export(c)) == c exactly.
void export_collection(const TaskCollection& tasks,
                       const std::filesystem::path& path, FileFormat format);

}  // namespace metarec
