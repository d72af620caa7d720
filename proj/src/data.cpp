#include "unlearn/data.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "unlearn/io_util.hpp"

namespace unlearn {

namespace {

// Tokens per generated sequence; with context 2 this gives 5 loss positions.
constexpr int kSequenceLength = 6;

}  // namespace

void CorpusSpec::validate() const {
    if (vocab_size < 2) throw InputError("vocab_size must be >= 2");
    if (n_forget_facts < 1 || n_retain_facts < 1) throw InputError("fact counts must be >= 1");
    if (sequences_per_fact < 1) throw InputError("sequences_per_fact must be >= 1");
    if (probes_per_fact < 1) throw InputError("probes_per_fact must be >= 1");
    if (context_length < 1) throw InputError("context_length must be >= 1");
    if (!(shared_grammar_fraction >= 0.0 && shared_grammar_fraction <= 1.0)) {
        throw InputError("shared_grammar_fraction must be in [0, 1]");
    }
    // id 0 is the pad token; after keys we still need a value pool and a
    // filler pool per corpus plus the shared filler region.
    const int remaining = vocab_size - 1 - n_forget_facts - n_retain_facts;
    if (remaining < 5) {
        throw InputError("vocab too small for requested fact count: need at least " +
                         std::to_string(1 + n_forget_facts + n_retain_facts + 5) + " ids");
    }
}

namespace {

struct TokenPool {
    Token first = 0;
    int count = 0;

    Token pick(std::mt19937_64& rng) const {
        std::uniform_int_distribution<int> dist(0, count - 1);
        return first + dist(rng);
    }
};

struct VocabLayout {
    TokenPool forget_keys, retain_keys;
    TokenPool forget_values, retain_values;
    TokenPool shared_filler, forget_filler, retain_filler;
};

VocabLayout partition_vocab(const CorpusSpec& spec) {
    VocabLayout layout;
    Token next = 1;  // 0 is pad
    auto take = [&next](int count) {
        TokenPool pool{next, count};
        next += count;
        return pool;
    };
    layout.forget_keys = take(spec.n_forget_facts);
    layout.retain_keys = take(spec.n_retain_facts);
    const int remaining = spec.vocab_size - next;
    // Five pools share the rest; earlier pools absorb the remainder.
    const int base = remaining / 5;
    const int extra = remaining - base * 5;
    layout.forget_values = take(base + (extra > 0 ? 1 : 0));
    layout.retain_values = take(base + (extra > 1 ? 1 : 0));
    layout.shared_filler = take(base + (extra > 2 ? 1 : 0));
    layout.forget_filler = take(base + (extra > 3 ? 1 : 0));
    layout.retain_filler = take(base);
    return layout;
}

Token pick_filler(std::mt19937_64& rng, double shared_fraction, const TokenPool& shared,
                  const TokenPool& own) {
    std::bernoulli_distribution from_shared(shared_fraction);
    return from_shared(rng) ? shared.pick(rng) : own.pick(rng);
}

FactTable build_facts(std::mt19937_64& rng, const TokenPool& keys, const TokenPool& values) {
    FactTable facts;
    for (int i = 0; i < keys.count; ++i) {
        facts.emplace_back(keys.first + i, values.pick(rng));
    }
    return facts;
}

Corpus build_corpus(std::mt19937_64& rng, const CorpusSpec& spec, const FactTable& facts,
                    const TokenPool& shared, const TokenPool& own) {
    Corpus corpus;
    corpus.reserve(facts.size() * static_cast<std::size_t>(spec.sequences_per_fact));
    std::uniform_int_distribution<int> slot(1, kSequenceLength - 2);
    for (const auto& [key, value] : facts) {
        for (int s = 0; s < spec.sequences_per_fact; ++s) {
            TokenSequence seq(kSequenceLength);
            const int key_pos = slot(rng);
            for (int i = 0; i < kSequenceLength; ++i) {
                if (i == key_pos) {
                    seq[static_cast<std::size_t>(i)] = key;
                } else if (i == key_pos + 1) {
                    seq[static_cast<std::size_t>(i)] = value;
                } else {
                    seq[static_cast<std::size_t>(i)] =
                        pick_filler(rng, spec.shared_grammar_fraction, shared, own);
                }
            }
            corpus.push_back(std::move(seq));
        }
    }
    return corpus;
}

ProbeSet build_probes(std::mt19937_64& rng, const CorpusSpec& spec, const FactTable& facts,
                      const TokenPool& shared, const TokenPool& own) {
    ProbeSet probes;
    probes.probes.reserve(facts.size() * static_cast<std::size_t>(spec.probes_per_fact));
    for (const auto& [key, value] : facts) {
        for (int p = 0; p < spec.probes_per_fact; ++p) {
            Probe probe;
            probe.prefix.resize(static_cast<std::size_t>(spec.context_length));
            for (int i = 0; i + 1 < spec.context_length; ++i) {
                probe.prefix[static_cast<std::size_t>(i)] =
                    pick_filler(rng, spec.shared_grammar_fraction, shared, own);
            }
            probe.prefix.back() = key;
            probe.answer = value;
            probes.probes.push_back(std::move(probe));
        }
    }
    return probes;
}

}  // namespace

GeneratedData generate(const CorpusSpec& spec) {
    spec.validate();
    const VocabLayout layout = partition_vocab(spec);
    std::mt19937_64 rng(spec.seed);

    GeneratedData data;
    data.forget_facts = build_facts(rng, layout.forget_keys, layout.forget_values);
    data.retain_facts = build_facts(rng, layout.retain_keys, layout.retain_values);
    data.forget_corpus =
        build_corpus(rng, spec, data.forget_facts, layout.shared_filler, layout.forget_filler);
    data.retain_corpus =
        build_corpus(rng, spec, data.retain_facts, layout.shared_filler, layout.retain_filler);
    data.forget_probes =
        build_probes(rng, spec, data.forget_facts, layout.shared_filler, layout.forget_filler);
    data.retain_probes =
        build_probes(rng, spec, data.retain_facts, layout.shared_filler, layout.retain_filler);
    return data;
}

namespace {

std::string sequence_to_line(const TokenSequence& seq) {
    std::string line = "[";
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i > 0) line += ",";
        line += std::to_string(seq[i]);
    }
    line += "]";
    return line;
}

std::vector<TokenSequence> load_token_lines(const std::filesystem::path& path) {
    const std::string content = read_file(path);
    std::vector<TokenSequence> sequences;
    std::istringstream in(content);
    std::string line;
    long line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        nlohmann::json arr;
        try {
            arr = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string(), line_number, std::string("invalid JSON: ") + e.what());
        }
        if (!arr.is_array()) {
            throw ParseError(path.string(), line_number, "expected a JSON array of integers");
        }
        TokenSequence seq;
        for (const auto& item : arr) {
            if (!item.is_number_integer()) {
                throw ParseError(path.string(), line_number, "expected integer token ids");
            }
            seq.push_back(item.get<Token>());
        }
        sequences.push_back(std::move(seq));
    }
    return sequences;
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::string content;
    for (const auto& seq : corpus) {
        content += sequence_to_line(seq);
        content += "\n";
    }
    write_file_atomic(path, content);
}

Corpus load_corpus(const std::filesystem::path& path) { return load_token_lines(path); }

void save_probes(const ProbeSet& probes, const std::filesystem::path& path) {
    std::string content;
    for (const auto& probe : probes.probes) {
        TokenSequence row = probe.prefix;
        row.push_back(probe.answer);
        content += sequence_to_line(row);
        content += "\n";
    }
    write_file_atomic(path, content);
}

ProbeSet load_probes(const std::filesystem::path& path) {
    ProbeSet probes;
    for (auto& row : load_token_lines(path)) {
        if (row.size() < 2) {
            throw InputError("probe rows in " + path.string() +
                             " need at least a prefix token and an answer");
        }
        Probe probe;
        probe.answer = row.back();
        row.pop_back();
        probe.prefix = std::move(row);
        probes.probes.push_back(std::move(probe));
    }
    return probes;
}

CorpusSpec parse_corpus_spec(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("cannot parse corpus spec: ") + e.what());
    }
    CorpusSpec spec;
    try {
        spec.seed = doc.at("seed").get<std::uint64_t>();
        spec.vocab_size = doc.at("vocab_size").get<int>();
        spec.n_forget_facts = doc.at("n_forget_facts").get<int>();
        spec.n_retain_facts = doc.at("n_retain_facts").get<int>();
        spec.sequences_per_fact = doc.at("sequences_per_fact").get<int>();
        if (doc.contains("probes_per_fact")) {
            spec.probes_per_fact = doc.at("probes_per_fact").get<int>();
        }
        if (doc.contains("context_length")) {
            spec.context_length = doc.at("context_length").get<int>();
        }
        spec.shared_grammar_fraction = doc.at("shared_grammar_fraction").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed corpus spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

std::string corpus_spec_to_json(const CorpusSpec& spec) {
    nlohmann::json doc;
    doc["seed"] = spec.seed;
    doc["vocab_size"] = spec.vocab_size;
    doc["n_forget_facts"] = spec.n_forget_facts;
    doc["n_retain_facts"] = spec.n_retain_facts;
    doc["sequences_per_fact"] = spec.sequences_per_fact;
    doc["probes_per_fact"] = spec.probes_per_fact;
    doc["context_length"] = spec.context_length;
    doc["shared_grammar_fraction"] = spec.shared_grammar_fraction;
    return doc.dump(2) + "\n";
}

}  // namespace unlearn
