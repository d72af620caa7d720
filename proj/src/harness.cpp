#include "unlearn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

#include "unlearn/io_util.hpp"

namespace unlearn {

void UnlearnConfig::validate() const {
    if (!std::isfinite(alpha) || alpha < 0.0) throw InputError("alpha must be finite and >= 0");
    if (!std::isfinite(gamma) || gamma < 0.0) throw InputError("gamma must be finite and >= 0");
    ObjectiveParams{beta, gamma_margin}.validate();
    if (!(eta > 0.0) || !std::isfinite(eta)) throw InputError("eta must be finite and > 0");
    if (steps < 1) throw InputError("steps >= 1 required");
    if (forget_batch < 1 || retain_batch < 1) throw InputError("batch sizes must be >= 1");
}

EvalResult evaluate(const TinyLM& model, const ProbeSet& probes) {
    if (probes.probes.empty()) throw InputError("empty probe set");
    const int context = model.dims().context;
    std::size_t hits = 0;
    double log_likelihood_sum = 0.0;
    for (const auto& probe : probes.probes) {
        if (static_cast<int>(probe.prefix.size()) != context) {
            throw InputError("probe prefix length " + std::to_string(probe.prefix.size()) +
                             " does not match model context " + std::to_string(context));
        }
        TokenSequence seq = probe.prefix;
        seq.push_back(probe.answer);
        const ForwardResult fwd = model.forward(seq);
        const double* row = fwd.row(fwd.positions - 1);
        int best = 0;
        for (int k = 1; k < fwd.vocab; ++k) {
            if (row[k] > row[best]) best = k;  // ties keep the lowest id
        }
        if (best == probe.answer) ++hits;
        log_likelihood_sum += row[probe.answer];
    }
    EvalResult result;
    result.accuracy = static_cast<double>(hits) / static_cast<double>(probes.probes.size());
    result.mean_log_likelihood = log_likelihood_sum / static_cast<double>(probes.probes.size());
    return result;
}

GradientGeometry gradient_geometry(const ModuleGradients& g_f, const ModuleGradients& g_r,
                                   const ModuleGradients& g_final) {
    g_f.require_aligned(g_r, "gradient_geometry");
    g_f.require_aligned(g_final, "gradient_geometry");
    const GradVector f = g_f.flattened();
    const GradVector r = g_r.flattened();
    const GradVector c = g_final.flattened();
    return GradientGeometry{cosine(f, r), cosine(c, f), cosine(c, r)};
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view stream) {
    std::uint64_t x = base ^ fnv1a64(std::string(stream));
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

BatchCycler::BatchCycler(const Corpus& corpus, int batch_size, std::uint64_t seed)
    : corpus_(&corpus), batch_size_(batch_size), rng_(seed) {
    if (corpus.empty()) throw InputError("empty corpus");
    if (batch_size < 1) throw InputError("batch size must be >= 1");
    reshuffle();
}

void BatchCycler::reshuffle() {
    order_.resize(corpus_->size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
}

Batch BatchCycler::next() {
    Batch batch;
    batch.reserve(static_cast<std::size_t>(batch_size_));
    for (int i = 0; i < batch_size_; ++i) {
        if (cursor_ >= order_.size()) reshuffle();
        batch.push_back((*corpus_)[order_[cursor_++]]);
    }
    return batch;
}

namespace {

// Re-checks the combiner guarantees on this step's gradients.
void enforce_step_invariants(CombinerKind kind, const ModuleGradients& g_f,
                             const ModuleGradients& g_r, const CombineOutcome& outcome, int step) {
    if (kind == CombinerKind::SAGO) {
        const GradVector final_flat = outcome.g_final.flattened();
        const GradVector r_flat = g_r.flattened();
        for (std::size_t i = 0; i < final_flat.size(); ++i) {
            if (final_flat[i] * r_flat[i] < -1e-15) {
                throw InvariantViolation("step " + std::to_string(step) +
                                         ": SAGO produced a coordinate opposing the retain "
                                         "gradient");
            }
        }
        return;
    }
    if (kind == CombinerKind::PCGradGlobal) {
        const GradVector f_flat = g_f.flattened();
        const GradVector r_flat = g_r.flattened();
        if (dot(f_flat, r_flat) < 0.0 && norm_sq(r_flat) >= kEpsZero) {
            const double residual = std::abs(dot(outcome.g_f_tilde.flattened(), r_flat));
            if (residual > 1e-9 * norm(f_flat) * norm(r_flat)) {
                throw InvariantViolation("step " + std::to_string(step) +
                                         ": global PCGrad projection not orthogonal");
            }
        }
        return;
    }
    if (kind == CombinerKind::PCGradModuleWise) {
        for (std::size_t m = 0; m < g_f.entries().size(); ++m) {
            const GradVector& f = g_f.entries()[m].values;
            const GradVector& r = g_r.entries()[m].values;
            if (dot(f, r) < 0.0 && norm_sq(r) >= kEpsZero) {
                const double residual = std::abs(dot(outcome.g_f_tilde.entries()[m].values, r));
                if (residual > 1e-9 * norm(f) * norm(r)) {
                    throw InvariantViolation("step " + std::to_string(step) + ": module '" +
                                             g_f.entries()[m].name +
                                             "' PCGrad projection not orthogonal");
                }
            }
        }
    }
}

}  // namespace

std::pair<TinyLM, std::vector<StepLog>> run_unlearn(const TinyLM& initial, const Corpus& forget_corpus,
                                                const Corpus& retain_corpus,
                                                const UnlearnConfig& cfg,
                                                const ProbeSet* forget_probes,
                                                const ProbeSet* retain_probes) {
    cfg.validate();
    if (forget_corpus.empty() || retain_corpus.empty()) throw InputError("empty corpus");

    TinyLM model = initial.snapshot();
    const ObjectiveParams obj_params{cfg.beta, cfg.gamma_margin};
    const LossKind forget_kind = forget_objective_loss_kind(cfg.forget_objective);
    const CombinerConfig combiner_cfg{cfg.alpha, cfg.gamma, PcgradScope::ModuleWise,
                                      cfg.zero_product_policy};

    // NPO compares against the pre-unlearning model, frozen here.
    std::optional<TinyLM> reference;
    if (cfg.forget_objective == ForgetObjective::NPO) reference = initial.snapshot();
    const TinyLM* ref_ptr = reference ? &*reference : nullptr;

    BatchCycler forget_cycler(forget_corpus, cfg.forget_batch, derive_seed(cfg.seed, "forget"));
    BatchCycler retain_cycler(retain_corpus, cfg.retain_batch, derive_seed(cfg.seed, "retain"));

    std::vector<StepLog> logs;
    logs.reserve(static_cast<std::size_t>(cfg.steps));
    for (int t = 1; t <= cfg.steps; ++t) {
        const Batch b_f = forget_cycler.next();
        const Batch b_r = retain_cycler.next();

        const LossReport forget_report = evaluate_loss(b_f, model, forget_kind, obj_params, ref_ptr);
        const LossReport retain_report = loss_gd(b_r, model);

        const CombineOutcome outcome =
            combine(cfg.combiner, retain_report.grads, forget_report.grads, combiner_cfg);
        enforce_step_invariants(cfg.combiner, forget_report.grads, retain_report.grads, outcome, t);

        const GradientGeometry geometry =
            gradient_geometry(forget_report.grads, retain_report.grads, outcome.g_final);

        model.apply_update(outcome.g_final, cfg.eta);

        StepLog log;
        log.step = t;
        log.forget_loss = forget_report.loss;
        log.retain_loss = retain_report.loss;
        log.cos_fr = geometry.cos_fr;
        log.cos_cf = geometry.cos_cf;
        log.cos_cr = geometry.cos_cr;
        log.conflict_fraction = outcome.conflict_fraction;
        if ((t % kEvalEvery == 0 || t == cfg.steps) && forget_probes && retain_probes) {
            log.forget_acc = evaluate(model, *forget_probes).accuracy;
            log.retain_acc = evaluate(model, *retain_probes).accuracy;
        }
        logs.push_back(std::move(log));
    }
    return {std::move(model), std::move(logs)};
}

TinyLM pretrain(const TinyLM& initial, const Corpus& corpus, int steps, double eta, int batch_size,
                std::uint64_t seed) {
    if (steps < 1) throw InputError("steps >= 1 required");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw InputError("eta must be finite and > 0");
    TinyLM model = initial.snapshot();
    BatchCycler cycler(corpus, batch_size, derive_seed(seed, "retain"));
    for (int t = 1; t <= steps; ++t) {
        const LossReport report = loss_gd(cycler.next(), model);
        model.apply_update(report.grads, eta);
    }
    return model;
}

std::string step_log_csv_header() {
    return "step,forget_loss,retain_loss,cos_fr,cos_cf,cos_cr,conflict_fraction,forget_acc,"
           "retain_acc";
}

std::string step_log_to_csv(const std::vector<StepLog>& logs) {
    std::string out = step_log_csv_header() + "\n";
    for (const auto& log : logs) {
        out += std::to_string(log.step);
        out += "," + format_g9(log.forget_loss);
        out += "," + format_g9(log.retain_loss);
        out += "," + format_g9(log.cos_fr);
        out += "," + format_g9(log.cos_cf);
        out += "," + format_g9(log.cos_cr);
        out += "," + format_g9(log.conflict_fraction);
        out += ",";
        if (log.forget_acc) out += format_g9(*log.forget_acc);
        out += ",";
        if (log.retain_acc) out += format_g9(*log.retain_acc);
        out += "\n";
    }
    return out;
}

void write_step_log_csv(const std::vector<StepLog>& logs, const std::filesystem::path& path) {
    write_file_atomic(path, step_log_to_csv(logs));
}

void mark_pareto(std::vector<SweepRow>& rows) {
    for (auto& row : rows) {
        bool dominated = false;
        for (const auto& other : rows) {
            const bool no_worse =
                other.forget_acc <= row.forget_acc && other.retain_acc >= row.retain_acc;
            const bool strictly_better =
                other.forget_acc < row.forget_acc || other.retain_acc > row.retain_acc;
            if (no_worse && strictly_better) {
                dominated = true;
                break;
            }
        }
        row.pareto = !dominated;
    }
}

std::vector<SweepRow> run_sweep(const TinyLM& initial, const Corpus& forget_corpus,
                                const Corpus& retain_corpus, const ProbeSet& forget_probes,
                                const ProbeSet& retain_probes, const UnlearnConfig& base,
                                const SweepGrid& grid) {
    if (grid.combiners.empty() || grid.alphas.empty() || grid.gammas.empty() ||
        grid.etas.empty()) {
        throw InputError("empty grid");
    }
    for (double a : grid.alphas) {
        if (!(a >= 0.1 && a <= 1.0)) throw InputError("sweep alpha out of range [0.1, 1.0]");
    }
    for (double g : grid.gammas) {
        if (!(g >= 0.1 && g <= 1.0)) throw InputError("sweep gamma out of range [0.1, 1.0]");
    }

    std::vector<SweepRow> rows;
    for (CombinerKind combiner : grid.combiners) {
        for (double alpha : grid.alphas) {
            for (double gamma : grid.gammas) {
                for (double eta : grid.etas) {
                    rows.push_back(SweepRow{combiner, alpha, gamma, eta, 0.0, 0.0, false});
                }
            }
        }
    }

    // Cells are independent: each owns a model copy and shares only const data.
    std::vector<std::future<std::pair<double, double>>> futures;
    futures.reserve(rows.size());
    for (const auto& row : rows) {
        futures.push_back(std::async(std::launch::async, [&, row]() {
            UnlearnConfig cfg = base;
            cfg.combiner = row.combiner;
            cfg.alpha = row.alpha;
            cfg.gamma = row.gamma;
            cfg.eta = row.eta;
            auto [model, logs] = run_unlearn(initial, forget_corpus, retain_corpus, cfg,
                                             &forget_probes, &retain_probes);
            const auto& last = logs.back();
            return std::pair<double, double>{last.forget_acc.value(), last.retain_acc.value()};
        }));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto [forget_acc, retain_acc] = futures[i].get();
        rows[i].forget_acc = forget_acc;
        rows[i].retain_acc = retain_acc;
    }

    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        const int name_cmp = std::string_view(combiner_name(a.combiner))
                                 .compare(combiner_name(b.combiner));
        if (name_cmp != 0) return name_cmp < 0;
        if (a.alpha != b.alpha) return a.alpha < b.alpha;
        if (a.gamma != b.gamma) return a.gamma < b.gamma;
        return a.eta < b.eta;
    });
    mark_pareto(rows);
    return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::string out = "combiner,alpha,gamma,eta,forget_acc,retain_acc,pareto\n";
    for (const auto& row : rows) {
        out += combiner_name(row.combiner);
        out += "," + format_g9(row.alpha);
        out += "," + format_g9(row.gamma);
        out += "," + format_g9(row.eta);
        out += "," + format_g9(row.forget_acc);
        out += "," + format_g9(row.retain_acc);
        out += row.pareto ? ",true" : ",false";
        out += "\n";
    }
    return out;
}

const char* forget_objective_name(ForgetObjective objective) {
    switch (objective) {
        case ForgetObjective::GA:
            return "ga";
        case ForgetObjective::NPO:
            return "npo";
        case ForgetObjective::SimNPO:
            return "simnpo";
    }
    return "unknown";
}

LossKind forget_objective_loss_kind(ForgetObjective objective) {
    switch (objective) {
        case ForgetObjective::GA:
            return LossKind::GA;
        case ForgetObjective::NPO:
            return LossKind::NPO;
        case ForgetObjective::SimNPO:
            return LossKind::SimNPO;
    }
    throw InputError("unknown forget objective");
}

}  // namespace unlearn
