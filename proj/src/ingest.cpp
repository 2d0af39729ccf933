#include "pplx/ingest.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace pplx {

Scalar IngestedSequence::mean_neg_logprob() const {
    if (steps.empty()) return 0;
    Scalar sum = 0;
    for (const IngestStep& s : steps) sum += -s.logprob;
    return sum / static_cast<Scalar>(steps.size());
}

bool IngestedSequence::correct() const {
    for (const IngestStep& s : steps) {
        if (s.emitted != s.target) return false;
    }
    return true;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

[[noreturn]] void fail(size_t line_no, const std::string& why) {
    throw std::runtime_error("ingest: line " + std::to_string(line_no) + ": " + why);
}

} // namespace

std::vector<IngestedSequence> ingest_logprob_lines(const std::string& text) {
    std::vector<IngestedSequence> out;
    std::unordered_map<std::string, size_t> index_of;

    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;

        std::vector<std::string_view> fields;
        std::string_view rest = line;
        while (true) {
            const size_t comma = rest.find(',');
            if (comma == std::string_view::npos) {
                fields.push_back(trim(rest));
                break;
            }
            fields.push_back(trim(rest.substr(0, comma)));
            rest.remove_prefix(comma + 1);
        }
        if (fields.size() != 4) {
            fail(line_no, "expected 4 comma-separated fields, got " + std::to_string(fields.size()));
        }
        const auto [id, target, emitted, lp_text] = std::tuple(fields[0], fields[1], fields[2], fields[3]);
        if (id.empty()) fail(line_no, "empty sequence id");
        if (target.empty() || emitted.empty()) fail(line_no, "empty symbol");

        Scalar lp = 0;
        const auto [end, ec] = std::from_chars(lp_text.data(), lp_text.data() + lp_text.size(), lp);
        if (ec != std::errc() || end != lp_text.data() + lp_text.size()) {
            fail(line_no, "cannot parse log-prob '" + std::string(lp_text) + "'");
        }
        if (!std::isfinite(lp)) fail(line_no, "log-prob is not finite");
        if (lp > 0) fail(line_no, "log-prob " + std::string(lp_text) + " is positive");

        const std::string key(id);
        auto [it, fresh] = index_of.try_emplace(key, out.size());
        if (fresh) out.push_back(IngestedSequence{key, {}});
        out[it->second].steps.push_back(IngestStep{std::string(target), std::string(emitted), lp});
    }
    return out;
}

std::vector<IngestedSequence> ingest_logprobs(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("ingest: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return ingest_logprob_lines(text);
}

} // namespace pplx
