#include "pplx/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pplx {

std::string csv_num(Scalar v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("csv_num: to_chars failed");
    return std::string(buf, end);
}

std::string csv_num(int64_t v) {
    char buf[24];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("csv_num: to_chars failed");
    return std::string(buf, end);
}

void CsvTable::add_row(std::vector<std::string> cells) {
    if (cells.size() != header.size()) {
        throw std::invalid_argument("csv row has " + std::to_string(cells.size()) + " cells, header has " +
                                    std::to_string(header.size()));
    }
    rows.push_back(std::move(cells));
}

size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("csv: no column named '" + name + "'");
    return static_cast<size_t>(it - header.begin());
}

namespace {

void check_cell(const std::string& cell) {
    if (cell.find_first_of(",\n\r") != std::string::npos) {
        throw std::invalid_argument("csv cell contains a separator: '" + cell + "'");
    }
}

std::string join_row(const std::vector<std::string>& cells) {
    std::string line;
    for (size_t i = 0; i < cells.size(); ++i) {
        check_cell(cells[i]);
        if (i) line += ',';
        line += cells[i];
    }
    line += '\n';
    return line;
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    size_t start = 0;
    while (true) {
        const size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(start));
            return cells;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

} // namespace

void write_csv(const std::string& path, const CsvTable& table) {
    if (table.header.empty()) throw std::invalid_argument("write_csv: empty header");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_csv: cannot open " + path);
    f << join_row(table.header);
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw std::invalid_argument("write_csv: ragged row");
        f << join_row(row);
    }
    f.flush();
    if (!f) throw std::runtime_error("write_csv: write failed for " + path);
}

CsvTable read_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_csv: cannot open " + path);
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            table.header = split_row(line);
            first = false;
        } else {
            auto cells = split_row(line);
            if (cells.size() != table.header.size()) {
                throw std::runtime_error("read_csv: ragged row in " + path);
            }
            table.rows.push_back(std::move(cells));
        }
    }
    if (first) throw std::runtime_error("read_csv: " + path + " is empty");
    return table;
}

uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string digest_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("digest_file: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return std::string(buf);
}

void RunManifest::add_output(const std::string& run_dir, const std::string& rel_path) {
    const std::string full = run_dir + "/" + rel_path;
    std::ifstream f(full, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("manifest: missing output " + full);
    OutputDigest d;
    d.path = rel_path;
    d.bytes = static_cast<uint64_t>(f.tellg());
    d.fnv1a = digest_file(full);
    outputs.push_back(std::move(d));
}

std::string now_utc_iso8601() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
}

void write_manifest(const std::string& path, const RunManifest& m) {
    nlohmann::json j;
    j["command"] = m.command;
    j["config"] = m.config;
    j["seeds"] = m.seeds;
    j["tool_version"] = m.tool_version;
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at;
    j["metadata"] = m.metadata;
    auto& outs = j["outputs"] = nlohmann::json::array();
    for (const auto& o : m.outputs) {
        outs.push_back({{"path", o.path}, {"fnv1a64", o.fnv1a}, {"bytes", o.bytes}});
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_manifest: cannot open " + path);
    f << j.dump(2) << "\n";
    f.flush();
    if (!f) throw std::runtime_error("write_manifest: write failed for " + path);
}

RunManifest read_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_manifest: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(f);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config = j.at("config");
    m.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    if (j.contains("metadata")) m.metadata = j.at("metadata");
    for (const auto& o : j.at("outputs")) {
        m.outputs.push_back({o.at("path").get<std::string>(), o.at("fnv1a64").get<std::string>(),
                             o.at("bytes").get<uint64_t>()});
    }
    return m;
}

} // namespace pplx
