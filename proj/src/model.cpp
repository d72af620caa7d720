#include "unlearn/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include <json.hpp>

#include "unlearn/io_util.hpp"

namespace unlearn {

void ModelDims::validate() const {
    if (vocab_size < 2) throw InputError("vocab_size must be >= 2");
    if (embed_dim < 1) throw InputError("embed_dim must be >= 1");
    if (hidden_dim < 1) throw InputError("hidden_dim must be >= 1");
    if (context < 1) throw InputError("context must be >= 1");
    if (max_parameters < 1) throw InputError("max_parameters must be >= 1");
    if (parameter_count() > max_parameters) {
        throw InputError("parameter count " + std::to_string(parameter_count()) +
                         " exceeds cap " + std::to_string(max_parameters));
    }
}

long ModelDims::parameter_count() const {
    const long v = vocab_size, d = embed_dim, h = hidden_dim, c = context;
    return v * d + (c * d * h + h) + (h * v + v);
}

TinyLM::TinyLM(ModelDims dims, ModuleGradients params)
    : dims_(dims), params_(std::move(params)) {}

TinyLM TinyLM::init(std::uint64_t seed, const ModelDims& dims) {
    dims.validate();
    const int v = dims.vocab_size, d = dims.embed_dim, h = dims.hidden_dim, c = dims.context;
    std::mt19937_64 rng(seed);

    auto uniform_fill = [&rng](GradVector& dst, std::size_t count, double scale) {
        std::uniform_real_distribution<double> dist(-scale, scale);
        for (std::size_t i = 0; i < count; ++i) dst.push_back(dist(rng));
    };

    GradVector embed;
    embed.reserve(static_cast<std::size_t>(v) * d);
    uniform_fill(embed, static_cast<std::size_t>(v) * d, 1.0);

    GradVector hidden;
    hidden.reserve(static_cast<std::size_t>(c) * d * h + h);
    uniform_fill(hidden, static_cast<std::size_t>(c) * d * h, 1.0 / std::sqrt(double(c) * d));
    hidden.resize(hidden.size() + h, 0.0);  // biases

    GradVector out;
    out.reserve(static_cast<std::size_t>(h) * v + v);
    uniform_fill(out, static_cast<std::size_t>(h) * v, 1.0 / std::sqrt(double(h)));
    out.resize(out.size() + v, 0.0);  // biases

    ModuleGradients params;
    params.add("embed", std::move(embed));
    params.add("hidden", std::move(hidden));
    params.add("out", std::move(out));
    return TinyLM(dims, std::move(params));
}

void TinyLM::validate_sequence(const TokenSequence& x) const {
    if (x.size() < 2) throw InputError("sequence needs at least 2 tokens");
    for (Token t : x) {
        if (t < 0 || t >= dims_.vocab_size) {
            throw InputError("token id " + std::to_string(t) + " out of vocabulary [0, " +
                             std::to_string(dims_.vocab_size) + ")");
        }
    }
}

namespace {

// Hidden preactivation -> tanh activation -> logits -> log-softmax for one
// context window. Shared by forward and backprop.
struct PositionState {
    std::vector<double> input;     // concatenated context embeddings, c*d
    std::vector<double> act;       // tanh activations, h
    std::vector<double> log_prob;  // log-softmax over vocab, v
};

void eval_position(const ModelDims& dims, const double* embed, const double* hidden,
                   const double* out, const Token* ctx, PositionState& st) {
    const int v = dims.vocab_size, d = dims.embed_dim, h = dims.hidden_dim, c = dims.context;
    const int in_dim = c * d;

    st.input.assign(static_cast<std::size_t>(in_dim), 0.0);
    for (int slot = 0; slot < c; ++slot) {
        const double* row = embed + static_cast<std::size_t>(ctx[slot]) * d;
        for (int q = 0; q < d; ++q) st.input[static_cast<std::size_t>(slot) * d + q] = row[q];
    }

    st.act.assign(static_cast<std::size_t>(h), 0.0);
    const double* bias1 = hidden + static_cast<std::size_t>(in_dim) * h;
    for (int j = 0; j < h; ++j) {
        double z = bias1[j];
        for (int i = 0; i < in_dim; ++i) z += st.input[i] * hidden[static_cast<std::size_t>(i) * h + j];
        st.act[j] = std::tanh(z);
    }

    st.log_prob.assign(static_cast<std::size_t>(v), 0.0);
    const double* bias2 = out + static_cast<std::size_t>(h) * v;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < v; ++k) {
        double logit = bias2[k];
        for (int j = 0; j < h; ++j) logit += st.act[j] * out[static_cast<std::size_t>(j) * v + k];
        st.log_prob[k] = logit;
        max_logit = std::max(max_logit, logit);
    }
    double sum_exp = 0.0;
    for (int k = 0; k < v; ++k) sum_exp += std::exp(st.log_prob[k] - max_logit);
    const double log_z = max_logit + std::log(sum_exp);
    for (int k = 0; k < v; ++k) st.log_prob[k] -= log_z;
}

void fill_context(const TokenSequence& x, int t, int c, std::vector<Token>& ctx) {
    // ctx[0] is the oldest token; out-of-range positions use the pad id.
    for (int slot = 0; slot < c; ++slot) {
        const int src = t - c + slot;
        ctx[static_cast<std::size_t>(slot)] = src >= 0 ? x[static_cast<std::size_t>(src)] : kPadToken;
    }
}

}  // namespace

ForwardResult TinyLM::forward(const TokenSequence& x) const {
    validate_sequence(x);
    const int v = dims_.vocab_size, c = dims_.context;
    const double* embed = params_.at("embed").data();
    const double* hidden = params_.at("hidden").data();
    const double* out = params_.at("out").data();

    ForwardResult result;
    result.positions = static_cast<int>(x.size()) - 1;
    result.vocab = v;
    result.log_probs.resize(static_cast<std::size_t>(result.positions) * v);

    PositionState st;
    std::vector<Token> ctx(static_cast<std::size_t>(c));
    for (int t = 1; t < static_cast<int>(x.size()); ++t) {
        fill_context(x, t, c, ctx);
        eval_position(dims_, embed, hidden, out, ctx.data(), st);
        double* row = result.log_probs.data() + static_cast<std::size_t>(t - 1) * v;
        for (int k = 0; k < v; ++k) row[k] = st.log_prob[k];
        result.total_log_prob += st.log_prob[static_cast<std::size_t>(x[static_cast<std::size_t>(t)])];
    }
    return result;
}

void TinyLM::accumulate_log_prob_grad(const TokenSequence& x, double coeff,
                                      ModuleGradients& acc) const {
    validate_sequence(x);
    params_.require_aligned(acc, "accumulate_log_prob_grad");
    const int v = dims_.vocab_size, d = dims_.embed_dim, h = dims_.hidden_dim, c = dims_.context;
    const int in_dim = c * d;
    const double* embed = params_.at("embed").data();
    const double* hidden = params_.at("hidden").data();
    const double* out = params_.at("out").data();
    double* d_embed = acc.mutable_at("embed").data();
    double* d_hidden = acc.mutable_at("hidden").data();
    double* d_out = acc.mutable_at("out").data();

    PositionState st;
    std::vector<Token> ctx(static_cast<std::size_t>(c));
    std::vector<double> d_logits(static_cast<std::size_t>(v));
    std::vector<double> d_act(static_cast<std::size_t>(h));
    std::vector<double> d_input(static_cast<std::size_t>(in_dim));

    for (int t = 1; t < static_cast<int>(x.size()); ++t) {
        fill_context(x, t, c, ctx);
        eval_position(dims_, embed, hidden, out, ctx.data(), st);
        const Token target = x[static_cast<std::size_t>(t)];

        // d log p(target) / d logits = onehot(target) - softmax
        for (int k = 0; k < v; ++k) {
            const double p = std::exp(st.log_prob[static_cast<std::size_t>(k)]);
            d_logits[static_cast<std::size_t>(k)] = coeff * ((k == target ? 1.0 : 0.0) - p);
        }

        double* d_bias2 = d_out + static_cast<std::size_t>(h) * v;
        for (int j = 0; j < h; ++j) {
            double da = 0.0;
            const double* w2_row = out + static_cast<std::size_t>(j) * v;
            double* dw2_row = d_out + static_cast<std::size_t>(j) * v;
            const double a = st.act[static_cast<std::size_t>(j)];
            for (int k = 0; k < v; ++k) {
                dw2_row[k] += a * d_logits[static_cast<std::size_t>(k)];
                da += w2_row[k] * d_logits[static_cast<std::size_t>(k)];
            }
            d_act[static_cast<std::size_t>(j)] = da;
        }
        for (int k = 0; k < v; ++k) d_bias2[k] += d_logits[static_cast<std::size_t>(k)];

        double* d_bias1 = d_hidden + static_cast<std::size_t>(in_dim) * h;
        for (int j = 0; j < h; ++j) {
            const double a = st.act[static_cast<std::size_t>(j)];
            d_act[static_cast<std::size_t>(j)] *= (1.0 - a * a);  // through tanh
            d_bias1[j] += d_act[static_cast<std::size_t>(j)];
        }
        for (int i = 0; i < in_dim; ++i) {
            const double e = st.input[static_cast<std::size_t>(i)];
            const double* w1_row = hidden + static_cast<std::size_t>(i) * h;
            double* dw1_row = d_hidden + static_cast<std::size_t>(i) * h;
            double de = 0.0;
            for (int j = 0; j < h; ++j) {
                dw1_row[j] += e * d_act[static_cast<std::size_t>(j)];
                de += w1_row[j] * d_act[static_cast<std::size_t>(j)];
            }
            d_input[static_cast<std::size_t>(i)] = de;
        }
        for (int slot = 0; slot < c; ++slot) {
            double* row = d_embed + static_cast<std::size_t>(ctx[static_cast<std::size_t>(slot)]) * d;
            for (int q = 0; q < d; ++q) row[q] += d_input[static_cast<std::size_t>(slot) * d + q];
        }
    }
}

void TinyLM::apply_update(const ModuleGradients& g_final, double eta) {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw InputError("eta must be finite and > 0");
    params_.scale_add_in_place(-eta, g_final);
}

void TinyLM::set_module(std::string_view name, GradVector values) {
    params_.set_module(name, std::move(values));
}

namespace {

std::string double_to_hex(double x) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(x)));
    return std::string(buf);
}

double hex_to_double(const std::string& s) {
    if (s.size() != 16) throw InputError("bad hex float '" + s + "'");
    std::uint64_t bits = 0;
    for (char ch : s) {
        int digit;
        if (ch >= '0' && ch <= '9') digit = ch - '0';
        else if (ch >= 'a' && ch <= 'f') digit = ch - 'a' + 10;
        else throw InputError("bad hex float '" + s + "'");
        bits = (bits << 4) | static_cast<std::uint64_t>(digit);
    }
    return std::bit_cast<double>(bits);
}

constexpr const char* kCheckpointFormat = "tinylm-checkpoint-v1";

}  // namespace

void TinyLM::save(const std::filesystem::path& path) const {
    nlohmann::json doc;
    doc["format"] = kCheckpointFormat;
    doc["dims"] = {{"vocab_size", dims_.vocab_size},
                   {"embed_dim", dims_.embed_dim},
                   {"hidden_dim", dims_.hidden_dim},
                   {"context", dims_.context}};
    nlohmann::json modules = nlohmann::json::array();
    for (const auto& e : params_.entries()) {
        nlohmann::json values = nlohmann::json::array();
        for (double x : e.values) values.push_back(double_to_hex(x));
        modules.push_back({{"name", e.name}, {"values_hex", std::move(values)}});
    }
    doc["modules"] = std::move(modules);
    write_file_atomic(path, doc.dump(2) + "\n");
}

TinyLM TinyLM::load(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw InputError("cannot parse checkpoint " + path.string() + ": " + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != kCheckpointFormat) {
            throw InputError("unsupported checkpoint format in " + path.string());
        }
        ModelDims dims;
        dims.vocab_size = doc.at("dims").at("vocab_size").get<int>();
        dims.embed_dim = doc.at("dims").at("embed_dim").get<int>();
        dims.hidden_dim = doc.at("dims").at("hidden_dim").get<int>();
        dims.context = doc.at("dims").at("context").get<int>();
        dims.validate();

        TinyLM reference = TinyLM::init(0, dims);  // establishes the expected schema
        ModuleGradients params;
        for (const auto& mod : doc.at("modules")) {
            GradVector values;
            for (const auto& hex : mod.at("values_hex")) {
                values.push_back(hex_to_double(hex.get<std::string>()));
            }
            params.add(mod.at("name").get<std::string>(), std::move(values));
        }
        reference.params_.require_aligned(params, "checkpoint load");
        return TinyLM(dims, std::move(params));
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace unlearn
