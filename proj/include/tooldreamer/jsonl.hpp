#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "tooldreamer/errors.hpp"

namespace tooldreamer {

using json = nlohmann::ordered_json;

struct JsonlRecord {
    std::size_t line_number; // 1-based
    json value;
};

/// Reads a JSONL file. Blank lines are skipped; any other unparseable line is
/// a data error reported with its line number.
inline std::vector<JsonlRecord> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open file: " + path.string());
    std::vector<JsonlRecord> records;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        bool blank = true;
        for (char c : line) {
            if (!std::isspace(static_cast<unsigned char>(c))) { blank = false; break; }
        }
        if (blank) continue;
        json value = json::parse(line, nullptr, false);
        if (value.is_discarded()) {
            throw data_error(path.string() + ":" + std::to_string(line_number) + ": malformed JSON line");
        }
        records.push_back({line_number, std::move(value)});
    }
    return records;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write file: " + path.string());
    for (const auto& record : records) out << record.dump() << '\n';
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write file: " + path.string());
    out << text;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open file: " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

} // namespace tooldreamer
