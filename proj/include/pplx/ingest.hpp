#pragma once

#include "pplx/common.hpp"

#include <string>
#include <vector>

namespace pplx {

// One decode step exported from an external model. Symbols stay opaque
// strings: correctness is plain equality, nothing assumes a binary alphabet.
struct IngestStep {
    std::string target;
    std::string emitted;
    Scalar logprob = 0; // log p(target), must be <= 0
};

struct IngestedSequence {
    std::string id;
    std::vector<IngestStep> steps;

    Scalar mean_neg_logprob() const;
    bool correct() const; // every emitted symbol equals its target
};

// Line format, one step per line, comma-separated:
//   sequence id, target symbol, emitted symbol, log-prob
// Whitespace around fields is trimmed; blank lines are skipped. Sequences
// keep first-appearance order; steps keep file order. Malformed lines and
// positive log-probs throw std::runtime_error naming the 1-based line.
std::vector<IngestedSequence> ingest_logprobs(const std::string& path);
std::vector<IngestedSequence> ingest_logprob_lines(const std::string& text);

} // namespace pplx
