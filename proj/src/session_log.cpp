#include "holonav/session_log.hpp"

#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "holonav/errors.hpp"

namespace holonav {

JsonlFileSink::JsonlFileSink(const std::string& path, bool sync_to_disk)
    : path_(path), sync_(sync_to_disk) {
  file_ = std::fopen(path.c_str(), "a");
  if (file_ == nullptr) {
    throw FormatError(path, std::string("cannot open session log for append: ") +
                                std::strerror(errno));
  }
}

JsonlFileSink::~JsonlFileSink() {
  if (file_ != nullptr) {
    std::fclose(file_);
  }
}

void JsonlFileSink::append(const LogEntry& entry) {
  const std::string line = log_entry_to_json(entry).dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0) {
    throw FormatError(path_, "session log append failed");
  }
  if (sync_ && ::fsync(::fileno(file_)) != 0) {
    throw FormatError(path_, "session log fsync failed");
  }
}

std::vector<LogEntry> parse_log(const std::string& text) {
  std::vector<LogEntry> entries;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const std::string line = text.substr(pos, terminated ? nl - pos : std::string::npos);
    pos = terminated ? nl + 1 : text.size();
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      if (!terminated) {
        break;  // torn final write
      }
      throw FormatError("line " + std::to_string(line_no), std::string("bad JSON: ") + e.what());
    }
    try {
      entries.push_back(log_entry_from_json(j));
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no), e.what());
    }
  }
  return entries;
}

std::vector<LogEntry> read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError(path, "cannot open session log");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_log(buffer.str());
}

Session reload_session(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    return Session{};
  }
  return Session::replay(read_log(path));
}

}  // namespace holonav
