#include "stpp/io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace stpp::io {

using nlohmann::json;

EventSequence read_events_jsonl(std::istream& in, const std::string& source) {
  std::vector<Event> events;
  std::optional<double> t_end;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(source + " line " + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw ValidationError(source + " line " + std::to_string(lineno) + ": expected an object");
    if (j.contains("t_end") && !j.contains("t")) {
      if (!events.empty() || t_end) {
        throw ValidationError(source + " line " + std::to_string(lineno) + ": t_end header must be the first line");
      }
      if (!j["t_end"].is_number()) throw ValidationError(source + ": t_end must be a number");
      t_end = j["t_end"].get<double>();
      continue;
    }
    for (const char* key : {"t", "x", "y"}) {
      if (!j.contains(key) || !j[key].is_number()) {
        throw ValidationError(source + " line " + std::to_string(lineno) + ": missing numeric field '" + key + "'");
      }
    }
    events.push_back({j["t"].get<double>(), Vec2(j["x"].get<double>(), j["y"].get<double>())});
  }
  try {
    return t_end ? EventSequence(std::move(events), *t_end) : EventSequence(std::move(events));
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what(), e.index());
  }
}

EventSequence read_events_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_events_jsonl(in, path.string());
}

void write_events_jsonl(std::ostream& out, const EventSequence& seq, bool header) {
  if (header) out << json{{"t_end", seq.t_end()}}.dump() << '\n';
  for (const auto& e : seq.events()) {
    json j = json::object();
    j["t"] = e.t;
    j["x"] = e.s.x();
    j["y"] = e.s.y();
    out << j.dump() << '\n';
  }
}

void write_events_jsonl(const std::filesystem::path& path, const EventSequence& seq, bool header) {
  std::ostringstream os;
  write_events_jsonl(os, seq, header);
  write_file_atomic(path, os.str());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out << content;
    if (!out) throw ValidationError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace stpp::io
