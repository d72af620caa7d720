#pragma once

#include <optional>
#include <random>
#include <string_view>

#include "unlearn/combiners.hpp"
#include "unlearn/data.hpp"
#include "unlearn/objectives.hpp"

namespace unlearn {

enum class ForgetObjective { GA, NPO, SimNPO };

struct UnlearnConfig {
    ForgetObjective forget_objective = ForgetObjective::GA;
    CombinerKind combiner = CombinerKind::SAGO;
    double alpha = 1.0;  // retain weight
    double gamma = 1.0;  // forget weight
    double beta = 1.0;
    double gamma_margin = 0.0;
    double eta = 0.0;  // learning rate, required > 0
    int steps = 0;     // T, required >= 1
    int forget_batch = 8;
    int retain_batch = 8;
    std::uint64_t seed = 0;
    ZeroProductPolicy zero_product_policy = ZeroProductPolicy::ForgetWins;

    void validate() const;
};

// Probes are scored every kEvalEvery steps and at the final step.
inline constexpr int kEvalEvery = 10;

struct StepLog {
    int step = 0;
    double forget_loss = 0.0;
    double retain_loss = 0.0;
    double cos_fr = 0.0;  // forget vs retain
    double cos_cf = 0.0;  // combined vs forget
    double cos_cr = 0.0;  // combined vs retain
    double conflict_fraction = 0.0;
    std::optional<double> forget_acc;
    std::optional<double> retain_acc;
};

struct EvalResult {
    double accuracy = 0.0;
    double mean_log_likelihood = 0.0;
};

// Top-1 next-token accuracy at the answer position; argmax ties go to the
// lowest token id.
EvalResult evaluate(const TinyLM& model, const ProbeSet& probes);

struct GradientGeometry {
    double cos_fr = 0.0;
    double cos_cf = 0.0;
    double cos_cr = 0.0;
};

// The three pairwise cosines on flattened joint vectors.
GradientGeometry gradient_geometry(const ModuleGradients& g_f, const ModuleGradients& g_r,
                                   const ModuleGradients& g_final);

// Decorrelated per-purpose RNG seeds (splitmix64 over base ^ hash(stream)).
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);

// Seeded permutation per epoch, cycling; batches may straddle epoch borders.
class BatchCycler {
public:
    BatchCycler(const Corpus& corpus, int batch_size, std::uint64_t seed);
    Batch next();

private:
    void reshuffle();

    const Corpus* corpus_;
    int batch_size_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

// The unlearning loop: per step, sample forget/retain batches, compute both
// task gradients, synthesize with the configured combiner, apply the SGD
// update, and log losses, gradient geometry, and (on eval steps) probe
// accuracies. For NPO the reference snapshot is taken before step 1.
// Structural guarantees of the combiners are re-checked every step and
// violations raise InvariantViolation.
std::pair<TinyLM, std::vector<StepLog>> run_unlearn(const TinyLM& initial, const Corpus& forget_corpus,
                                                const Corpus& retain_corpus,
                                                const UnlearnConfig& cfg,
                                                const ProbeSet* forget_probes = nullptr,
                                                const ProbeSet* retain_probes = nullptr);

// Plain gradient descent on L_GD over one corpus; used for pretraining.
TinyLM pretrain(const TinyLM& initial, const Corpus& corpus, int steps, double eta,
                int batch_size, std::uint64_t seed);

std::string step_log_csv_header();
std::string step_log_to_csv(const std::vector<StepLog>& logs);
void write_step_log_csv(const std::vector<StepLog>& logs, const std::filesystem::path& path);

struct SweepGrid {
    std::vector<CombinerKind> combiners;
    std::vector<double> alphas;
    std::vector<double> gammas;
    std::vector<double> etas;
};

struct SweepRow {
    CombinerKind combiner = CombinerKind::Naive;
    double alpha = 1.0;
    double gamma = 1.0;
    double eta = 0.0;
    double forget_acc = 0.0;
    double retain_acc = 0.0;
    bool pareto = false;
};

// One unlearning run per grid cell (cells may run concurrently), rows sorted
// by (combiner, alpha, gamma, eta); the pareto flag marks rows not dominated
// in the lower-forget / higher-retain order. Alphas and gammas must lie in
// the sweep range [0.1, 1.0].
std::vector<SweepRow> run_sweep(const TinyLM& initial, const Corpus& forget_corpus,
                                const Corpus& retain_corpus, const ProbeSet& forget_probes,
                                const ProbeSet& retain_probes, const UnlearnConfig& base,
                                const SweepGrid& grid);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

// Flags rows not dominated in the lower-forget / higher-retain order.
void mark_pareto(std::vector<SweepRow>& rows);

const char* forget_objective_name(ForgetObjective objective);
LossKind forget_objective_loss_kind(ForgetObjective objective);

}  // namespace unlearn
