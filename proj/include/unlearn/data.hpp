#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "unlearn/model.hpp"

namespace unlearn {

// Synthetic corpus layout. Each "fact" is a key->value token association
// embedded in filler; shared_grammar_fraction is the fraction of filler
// positions drawn from a vocabulary region common to both corpora, which is
// what induces gradient conflict between the forget and retain objectives.
struct CorpusSpec {
    std::uint64_t seed = 0;
    int vocab_size = 32;
    int n_forget_facts = 1;
    int n_retain_facts = 1;
    int sequences_per_fact = 1;
    int probes_per_fact = 4;
    int context_length = 2;  // probe prefixes have exactly this length
    double shared_grammar_fraction = 0.5;

    void validate() const;
};

struct Probe {
    TokenSequence prefix;
    Token answer;
};

struct ProbeSet {
    std::vector<Probe> probes;
};

// Key -> value associations backing a corpus; probe answers are exact lookups.
using FactTable = std::vector<std::pair<Token, Token>>;

struct GeneratedData {
    Corpus forget_corpus;
    Corpus retain_corpus;
    ProbeSet forget_probes;
    ProbeSet retain_probes;
    FactTable forget_facts;
    FactTable retain_facts;
};

// Deterministic given spec.seed. Forget and retain fact keys are disjoint;
// with shared_grammar_fraction == 0 the two corpora use entirely disjoint
// token id ranges.
GeneratedData generate(const CorpusSpec& spec);

// Line-delimited JSON integer arrays, one sequence per line.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

// Same format; each line is [prefix..., answer].
void save_probes(const ProbeSet& probes, const std::filesystem::path& path);
ProbeSet load_probes(const std::filesystem::path& path);

CorpusSpec parse_corpus_spec(const std::string& json_text);
std::string corpus_spec_to_json(const CorpusSpec& spec);

}  // namespace unlearn
