#pragma once

#include <utility>

#include "unlearn/gradcore.hpp"

namespace unlearn {

enum class PcgradScope { Global, ModuleWise };

// What happens to coordinates with g_f[i] * g_r[i] == 0 in the sign gate.
// ForgetWins routes them to the forget gate (indicator >= 0), which drops
// the retain signal where g_f[i] == 0 but g_r[i] != 0. RetainWins reroutes
// exactly those coordinates to the retain gate.
enum class ZeroProductPolicy { ForgetWins, RetainWins };

enum class CombinerKind { Naive, PCGradGlobal, PCGradModuleWise, SAGO };

struct CombinerConfig {
    double alpha = 1.0;  // retain weight
    double gamma = 1.0;  // forget weight
    PcgradScope scope = PcgradScope::ModuleWise;
    ZeroProductPolicy zero_product_policy = ZeroProductPolicy::ForgetWins;

    void validate() const;
};

struct CombineOutcome {
    ModuleGradients g_final;
    ModuleGradients g_f_tilde;  // forget gradient after projection / gating
    ModuleGradients g_r_tilde;  // retain gradient after gating (== g_r for naive/pcgrad)
    // Fraction of modules with a negative inner product (naive, module-wise
    // pcgrad), {0,1} for global pcgrad, fraction of coordinates for SAGO.
    double conflict_fraction = 0.0;
};

// Plain weighted sum: g_final = alpha * g_r + gamma * g_f (GradDiff).
CombineOutcome combine_naive(const ModuleGradients& g_r, const ModuleGradients& g_f,
                             const CombinerConfig& cfg);

// If dot(g_f, g_r) < 0 and |g_r|^2 >= kEpsZero, returns
// g_f - (dot / |g_r|^2) * g_r; otherwise g_f unchanged (dot == 0 passes through).
GradVector project_if_conflict(const GradVector& g_f, const GradVector& g_r);

// Conflict-projected combination, per module or on the joint flattened vector.
CombineOutcome combine_pcgrad(const ModuleGradients& g_r, const ModuleGradients& g_f,
                              const CombinerConfig& cfg);

// Element-wise sign gating:
//   g_f_tilde[i] = g_f[i] where g_f[i]*g_r[i] >= 0, else 0
//   g_r_tilde[i] = g_r[i] where g_f[i]*g_r[i] <  0, else 0
// The outputs have disjoint support in both policies.
std::pair<GradVector, GradVector> sign_gate(const GradVector& g_f, const GradVector& g_r,
                                            ZeroProductPolicy policy);

// Sign-gated synthesis over the full parameter set:
// g_final = alpha * g_r_tilde + gamma * g_f_tilde. For alpha, gamma >= 0 every
// coordinate satisfies g_final[i] * g_r[i] >= 0.
CombineOutcome combine_sago(const ModuleGradients& g_r, const ModuleGradients& g_f,
                            const CombinerConfig& cfg);

// Dispatch by kind; the kind overrides cfg.scope for the pcgrad variants.
CombineOutcome combine(CombinerKind kind, const ModuleGradients& g_r, const ModuleGradients& g_f,
                       const CombinerConfig& cfg);

const char* combiner_name(CombinerKind kind);

}  // namespace unlearn
