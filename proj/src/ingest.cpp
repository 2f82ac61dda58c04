#include "metarec/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace metarec {

namespace {

constexpr char kDelimiter = '\t';

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line,
                       const std::string& what) {
  throw IngestError(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(kDelimiter, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::filesystem::path& path,
                    std::size_t line, const std::string& column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(path, line, "cannot parse '" + s + "' in column " + column);
  }
  if (!std::isfinite(v)) {
    fail(path, line, "non-finite value in column " + column);
  }
  return v;
}

std::int64_t parse_int(const std::string& s, const std::filesystem::path& path,
                       std::size_t line, const std::string& column) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(path, line, "cannot parse '" + s + "' in column " + column);
  }
  return v;
}

// Exact round-trip formatting for doubles.
std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Layout {
  std::vector<std::size_t> key_cols;
  std::size_t timestamp_col = 0;
  std::size_t label_col = 0;
  std::vector<std::size_t> mf_cols;
  std::vector<std::size_t> of_cols;
  std::size_t total = 0;
};

Layout resolve_layout(const std::vector<std::string>& header,
                      const std::vector<std::string>& key_columns,
                      const std::filesystem::path& path) {
  Layout out;
  out.total = header.size();
  auto find = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      fail(path, 1, "missing required column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  for (const std::string& k : key_columns) out.key_cols.push_back(find(k));
  out.timestamp_col = find("timestamp");
  out.label_col = find("label");
  for (std::size_t i = 0;; ++i) {
    const std::string name = "mf_" + std::to_string(i);
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) break;
    out.mf_cols.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  for (std::size_t i = 0;; ++i) {
    const std::string name = "of_" + std::to_string(i);
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) break;
    out.of_cols.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  return out;
}

std::string composite_key(const std::vector<std::string>& parts,
                          const std::filesystem::path& path, std::size_t line) {
  std::string key;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].find('|') != std::string::npos) {
      fail(path, line, "task key value '" + parts[i] + "' contains '|'");
    }
    if (i > 0) key += '|';
    key += parts[i];
  }
  return key;
}

void add_sample(TaskCollection& out, Sample sample,
                const std::filesystem::path& path, std::size_t line) {
  if (sample.label != 0 && sample.label != 1) {
    fail(path, line, "label must be 0 or 1");
  }
  if (out.tasks.empty() && out.meta_dim == 0 && out.other_dim == 0) {
    out.meta_dim = sample.meta_features.size();
    out.other_dim = sample.other_features.size();
  } else if (sample.meta_features.size() != out.meta_dim ||
             sample.other_features.size() != out.other_dim) {
    fail(path, line,
         "feature count differs from the first row (" +
             std::to_string(sample.meta_features.size()) + " meta, " +
             std::to_string(sample.other_features.size()) + " other)");
  }
  auto [it, inserted] = out.tasks.try_emplace(sample.task_key);
  if (inserted) it->second.task_key = sample.task_key;
  it->second.samples.push_back(std::move(sample));
}

TaskCollection ingest_delimited(const std::filesystem::path& path,
                                const std::vector<std::string>& key_columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IngestError("cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw IngestError(path.string() + ": empty file, header expected");
  }
  const Layout layout = resolve_layout(split_fields(line), key_columns, path);
  TaskCollection out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != layout.total) {
      fail(path, line_no,
           "expected " + std::to_string(layout.total) + " fields, got " +
               std::to_string(fields.size()));
    }
    Sample s;
    std::vector<std::string> key_parts;
    for (std::size_t c : layout.key_cols) key_parts.push_back(fields[c]);
    s.task_key = composite_key(key_parts, path, line_no);
    s.timestamp = parse_int(fields[layout.timestamp_col], path, line_no,
                            "timestamp");
    s.label = static_cast<int>(
        parse_int(fields[layout.label_col], path, line_no, "label"));
    for (std::size_t i = 0; i < layout.mf_cols.size(); ++i) {
      s.meta_features.push_back(parse_double(fields[layout.mf_cols[i]], path,
                                             line_no,
                                             "mf_" + std::to_string(i)));
    }
    for (std::size_t i = 0; i < layout.of_cols.size(); ++i) {
      s.other_features.push_back(parse_double(fields[layout.of_cols[i]], path,
                                              line_no,
                                              "of_" + std::to_string(i)));
    }
    add_sample(out, std::move(s), path, line_no);
  }
  return out;
}

TaskCollection ingest_jsonl(const std::filesystem::path& path,
                            const std::vector<std::string>& key_columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IngestError("cannot open " + path.string());
  }
  TaskCollection out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) fail(path, line_no, "expected a JSON object");
    Sample s;
    std::vector<std::string> key_parts;
    for (const std::string& k : key_columns) {
      if (!obj.contains(k) || !obj[k].is_string()) {
        fail(path, line_no, "missing string key column '" + k + "'");
      }
      key_parts.push_back(obj[k].get<std::string>());
    }
    s.task_key = composite_key(key_parts, path, line_no);
    if (!obj.contains("timestamp") || !obj["timestamp"].is_number_integer()) {
      fail(path, line_no, "missing integer 'timestamp'");
    }
    s.timestamp = obj["timestamp"].get<std::int64_t>();
    if (!obj.contains("label") || !obj["label"].is_number_integer()) {
      fail(path, line_no, "missing integer 'label'");
    }
    s.label = obj["label"].get<int>();
    for (std::size_t i = 0;; ++i) {
      const std::string name = "mf_" + std::to_string(i);
      if (!obj.contains(name)) break;
      if (!obj[name].is_number()) fail(path, line_no, name + " not numeric");
      const double v = obj[name].get<double>();
      if (!std::isfinite(v)) fail(path, line_no, name + " non-finite");
      s.meta_features.push_back(v);
    }
    for (std::size_t i = 0;; ++i) {
      const std::string name = "of_" + std::to_string(i);
      if (!obj.contains(name)) break;
      if (!obj[name].is_number()) fail(path, line_no, name + " not numeric");
      const double v = obj[name].get<double>();
      if (!std::isfinite(v)) fail(path, line_no, name + " non-finite");
      s.other_features.push_back(v);
    }
    add_sample(out, std::move(s), path, line_no);
  }
  return out;
}

}  // namespace

FileFormat format_from_string(const std::string& s) {
  if (s == "delimited" || s == "tsv") return FileFormat::kDelimited;
  if (s == "json-lines" || s == "jsonl") return FileFormat::kJsonLines;
  throw std::invalid_argument("unknown file format '" + s + "'");
}

TaskCollection ingest(const std::filesystem::path& path, FileFormat format,
                      const std::vector<std::string>& task_key_columns) {
  if (task_key_columns.empty()) {
    throw std::invalid_argument("ingest: need at least one task key column");
  }
  TaskCollection out = format == FileFormat::kDelimited
                           ? ingest_delimited(path, task_key_columns)
                           : ingest_jsonl(path, task_key_columns);
  for (auto& [key, task] : out.tasks) {
    std::stable_sort(task.samples.begin(), task.samples.end(),
                     [](const Sample& a, const Sample& b) {
                       return a.timestamp < b.timestamp;
                     });
  }
  return out;
}

void export_collection(const TaskCollection& tasks,
                       const std::filesystem::path& path, FileFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IngestError("cannot write " + path.string());
  }
  if (format == FileFormat::kDelimited) {
    out << "task_key" << kDelimiter << "timestamp" << kDelimiter << "label";
    for (std::size_t i = 0; i < tasks.meta_dim; ++i) {
      out << kDelimiter << "mf_" << i;
    }
    for (std::size_t i = 0; i < tasks.other_dim; ++i) {
      out << kDelimiter << "of_" << i;
    }
    out << '\n';
    for (const auto& [key, task] : tasks.tasks) {
      for (const Sample& s : task.samples) {
        out << key << kDelimiter << s.timestamp << kDelimiter << s.label;
        for (double v : s.meta_features) out << kDelimiter << format_double(v);
        for (double v : s.other_features) out << kDelimiter << format_double(v);
        out << '\n';
      }
    }
  } else {
    for (const auto& [key, task] : tasks.tasks) {
      for (const Sample& s : task.samples) {
        nlohmann::ordered_json obj;
        obj["task_key"] = key;
        obj["timestamp"] = s.timestamp;
        obj["label"] = s.label;
        for (std::size_t i = 0; i < s.meta_features.size(); ++i) {
          obj["mf_" + std::to_string(i)] = s.meta_features[i];
        }
        for (std::size_t i = 0; i < s.other_features.size(); ++i) {
          obj["of_" + std::to_string(i)] = s.other_features[i];
        }
        out << obj.dump() << '\n';
      }
    }
  }
  if (!out) {
    throw IngestError("write failed for " + path.string());
  }
}

}  // namespace metarec
