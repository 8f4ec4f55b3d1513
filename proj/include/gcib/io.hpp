#pragma once

#include <map>
#include <string>
#include <vector>

namespace gcib {

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

std::string read_file(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);

// Writes to <path>.tmp and renames, so a killed process never leaves a
// half-written artifact under the final name.
void atomic_write_file(const std::string& path, const std::string& bytes);

// key=value per line, '#' comments and blank lines ignored. Duplicate keys
// are an error.
std::map<std::string, std::string> parse_kv_text(const std::string& text, const std::string& origin);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

double parse_double(const std::string& v, const std::string& key);
long long parse_int(const std::string& v, const std::string& key);
uint64_t parse_u64(const std::string& v, const std::string& key);

}  // namespace gcib
