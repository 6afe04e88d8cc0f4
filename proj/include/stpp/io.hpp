#ifndef STPP_IO_HPP
#define STPP_IO_HPP

#include "stpp/core.hpp"

#include <filesystem>
#include <iosfwd>

namespace stpp::io {

// JSONL event files: optional first line {"t_end": T}, then one
// {"t": .., "x": .., "y": ..} object per line in ascending time.
EventSequence read_events_jsonl(std::istream& in, const std::string& source = "<stream>");
EventSequence read_events_jsonl(const std::filesystem::path& path);

void write_events_jsonl(std::ostream& out, const EventSequence& seq, bool header = true);
void write_events_jsonl(const std::filesystem::path& path, const EventSequence& seq, bool header = true);

// Writes `content` to `path` through a temporary sibling and a rename, so a
// failed command never leaves a half-written output behind.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace stpp::io

#endif  // STPP_IO_HPP
