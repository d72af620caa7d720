#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>

#include "unlearn/data.hpp"
#include "unlearn/harness.hpp"

namespace testing_support {

// Shared generated corpus + pretrained target model; built once per binary.
struct SmallWorld {
    unlearn::CorpusSpec spec;
    unlearn::GeneratedData data;
    unlearn::Corpus combined;
    unlearn::TinyLM pretrained;
    double pretrain_forget_acc = 0.0;
    double pretrain_retain_acc = 0.0;
};

inline const SmallWorld& small_world() {
    static const SmallWorld world = [] {
        SmallWorld w;
        w.spec.seed = 7;
        w.spec.vocab_size = 32;
        w.spec.n_forget_facts = 5;
        w.spec.n_retain_facts = 5;
        w.spec.sequences_per_fact = 20;
        w.spec.probes_per_fact = 4;
        w.spec.context_length = 2;
        w.spec.shared_grammar_fraction = 0.5;
        w.data = unlearn::generate(w.spec);
        w.combined = w.data.forget_corpus;
        w.combined.insert(w.combined.end(), w.data.retain_corpus.begin(),
                          w.data.retain_corpus.end());
        unlearn::ModelDims dims;  // V=32 d=16 h=32 c=2
        w.pretrained = unlearn::pretrain(unlearn::TinyLM::init(1, dims), w.combined, 2000, 0.3,
                                         16, 1);
        w.pretrain_forget_acc = unlearn::evaluate(w.pretrained, w.data.forget_probes).accuracy;
        w.pretrain_retain_acc = unlearn::evaluate(w.pretrained, w.data.retain_probes).accuracy;
        return w;
    }();
    return world;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("unlearn_tests_" + tag + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// A model that deterministically maps every token i to next_of(i) = (i+1) % V,
// with near-certain probability. Context length 1, d = h = V.
inline unlearn::TinyLM lookup_model(int vocab) {
    unlearn::ModelDims dims;
    dims.vocab_size = vocab;
    dims.embed_dim = vocab;
    dims.hidden_dim = vocab;
    dims.context = 1;
    unlearn::TinyLM model = unlearn::TinyLM::init(0, dims);

    unlearn::GradVector embed(static_cast<std::size_t>(vocab) * vocab, 0.0);
    for (int i = 0; i < vocab; ++i) embed[static_cast<std::size_t>(i) * vocab + i] = 1.0;
    model.set_module("embed", embed);

    unlearn::GradVector hidden(static_cast<std::size_t>(vocab) * vocab + vocab, 0.0);
    for (int i = 0; i < vocab; ++i) hidden[static_cast<std::size_t>(i) * vocab + i] = 5.0;
    model.set_module("hidden", hidden);

    unlearn::GradVector out(static_cast<std::size_t>(vocab) * vocab + vocab, 0.0);
    const double act = std::tanh(5.0);
    for (int i = 0; i < vocab; ++i) {
        const int next = (i + 1) % vocab;
        out[static_cast<std::size_t>(i) * vocab + next] = 40.0 / act;
    }
    model.set_module("out", out);
    return model;
}

}  // namespace testing_support
