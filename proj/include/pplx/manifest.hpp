#pragma once

#include "pplx/common.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pplx {

// Numeric formatting for CSV cells: shortest decimal string that parses back
// to the same double (std::to_chars), '.' separator, locale-free.
std::string csv_num(Scalar v);
std::string csv_num(int64_t v);
inline std::string csv_bool(bool v) { return v ? "true" : "false"; }

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> cells);
    // index of a named column, or throws std::invalid_argument
    size_t column(const std::string& name) const;
};

// Single header row, LF line endings, no quoting (cells must not contain
// commas or newlines; ours never do). Byte-identical across re-runs by
// construction.
void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

// FNV-1a, 64-bit; digests are printed as 16 hex digits
uint64_t fnv1a64(std::string_view bytes);
std::string digest_file(const std::string& path);

struct OutputDigest {
    std::string path; // relative to the run directory
    std::string fnv1a; // hex
    uint64_t bytes = 0;
};

// Everything needed to reproduce a run bitwise: the exact command line, the
// config snapshot, the seeds, the tool version, and digests of every file the
// run wrote. Timestamps are informational and live only here, never in CSVs.
struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::vector<uint64_t> seeds;
    std::string tool_version = kToolVersion;
    std::string started_at;
    std::string finished_at;
    std::vector<OutputDigest> outputs;
    nlohmann::json metadata; // run-specific extras (convergence, summaries)

    void add_output(const std::string& run_dir, const std::string& rel_path);
};

std::string now_utc_iso8601();
void write_manifest(const std::string& path, const RunManifest& m);
RunManifest read_manifest(const std::string& path);

} // namespace pplx
