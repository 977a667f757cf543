#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "holonav/session.hpp"

namespace holonav {

/// Appends one JSON line per entry and flushes it to the OS before returning.
class JsonlFileSink : public LogSink {
 public:
  /// Opens for append; throws FormatError if the path is not writable.
  explicit JsonlFileSink(const std::string& path, bool sync_to_disk = false);
  ~JsonlFileSink() override;

  JsonlFileSink(const JsonlFileSink&) = delete;
  JsonlFileSink& operator=(const JsonlFileSink&) = delete;

  void append(const LogEntry& entry) override;

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  std::FILE* file_ = nullptr;
  bool sync_;
};

/// In-memory sink, handy for tests and embedding.
class MemorySink : public LogSink {
 public:
  void append(const LogEntry& entry) override { entries.push_back(entry); }
  std::vector<LogEntry> entries;
};

/// Parses a JSON-lines session log. Blank lines are skipped. A final line
/// without a terminating newline that fails to parse is treated as a torn
/// write and dropped; any other malformed line throws FormatError with its
/// line number.
std::vector<LogEntry> parse_log(const std::string& text);
std::vector<LogEntry> read_log(const std::string& path);

/// read_log + Session::replay. A missing file replays to Idle.
Session reload_session(const std::string& path);

}  // namespace holonav
