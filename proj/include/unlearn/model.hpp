#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "unlearn/gradcore.hpp"

namespace unlearn {

using Token = int;
using TokenSequence = std::vector<Token>;
using Batch = std::vector<TokenSequence>;
using Corpus = std::vector<TokenSequence>;

// Reserved padding id, used to left-fill contexts near the sequence start.
inline constexpr Token kPadToken = 0;

struct ModelDims {
    int vocab_size = 32;
    int embed_dim = 16;
    int hidden_dim = 32;
    int context = 2;
    long max_parameters = 100000;

    void validate() const;
    long parameter_count() const;
};

// Per-position next-token log-probabilities for one sequence.
// Row t (0-based) predicts tokens[t + 1]; there are tokens.size() - 1 rows.
struct ForwardResult {
    int positions = 0;
    int vocab = 0;
    std::vector<double> log_probs;  // positions x vocab, row-major
    double total_log_prob = 0.0;

    const double* row(int t) const { return log_probs.data() + static_cast<std::size_t>(t) * vocab; }
};

// Fixed-context feed-forward next-token model. Three named parameter modules:
//   embed  -- vocab_size x embed_dim token embeddings
//   hidden -- (context * embed_dim) x hidden_dim weights, then hidden_dim biases
//   out    -- hidden_dim x vocab_size weights, then vocab_size biases
// Forward: concatenate the embeddings of the previous `context` tokens, one
// tanh hidden layer, linear output, softmax.
class TinyLM {
public:
    TinyLM() = default;

    // Seeded scaled-uniform weights (scale 1/sqrt(fan_in)), zero biases.
    // Identical (seed, dims) give bit-identical parameters.
    static TinyLM init(std::uint64_t seed, const ModelDims& dims);

    const ModelDims& dims() const { return dims_; }
    const ModuleGradients& params() const { return params_; }
    std::size_t parameter_count() const { return params_.total_size(); }

    ForwardResult forward(const TokenSequence& x) const;

    // theta <- theta - eta * g_final, in place.
    void apply_update(const ModuleGradients& g_final, double eta);

    // Deep immutable copy of the current parameters.
    TinyLM snapshot() const { return *this; }

    // Adds coeff * d(log p(x)) / d(theta) into an aligned accumulator.
    void accumulate_log_prob_grad(const TokenSequence& x, double coeff,
                                  ModuleGradients& acc) const;

    ModuleGradients zero_grads() const { return params_.zeros_like(); }

    void set_module(std::string_view name, GradVector values);
    double get_coord(std::size_t flat_index) const { return params_.coord(flat_index); }
    void set_coord(std::size_t flat_index, double value) { params_.coord(flat_index) = value; }

    // JSON checkpoint with hex-encoded 64-bit floats; round-trips bit-exactly.
    void save(const std::filesystem::path& path) const;
    static TinyLM load(const std::filesystem::path& path);

private:
    TinyLM(ModelDims dims, ModuleGradients params);
    void validate_sequence(const TokenSequence& x) const;

    ModelDims dims_;
    ModuleGradients params_;
};

}  // namespace unlearn
