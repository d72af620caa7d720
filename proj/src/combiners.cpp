#include "unlearn/combiners.hpp"

#include <cmath>

namespace unlearn {

void CombinerConfig::validate() const {
    if (!std::isfinite(alpha) || alpha < 0.0) {
        throw InputError("combiner alpha must be finite and >= 0");
    }
    if (!std::isfinite(gamma) || gamma < 0.0) {
        throw InputError("combiner gamma must be finite and >= 0");
    }
}

namespace {

void require_combinable(const ModuleGradients& g_r, const ModuleGradients& g_f,
                        const CombinerConfig& cfg, const char* op) {
    cfg.validate();
    if (g_r.empty()) throw InputError(std::string(op) + ": empty module gradients");
    g_r.require_aligned(g_f, op);
}

double module_conflict_fraction(const ModuleGradients& g_r, const ModuleGradients& g_f) {
    std::size_t conflicted = 0;
    for (std::size_t i = 0; i < g_r.entries().size(); ++i) {
        if (dot(g_f.entries()[i].values, g_r.entries()[i].values) < 0.0) ++conflicted;
    }
    return static_cast<double>(conflicted) / static_cast<double>(g_r.module_count());
}

}  // namespace

CombineOutcome combine_naive(const ModuleGradients& g_r, const ModuleGradients& g_f,
                             const CombinerConfig& cfg) {
    require_combinable(g_r, g_f, cfg, "combine_naive");
    CombineOutcome out;
    out.g_final = weighted_sum(cfg.alpha, g_r, cfg.gamma, g_f);
    out.g_f_tilde = g_f;
    out.g_r_tilde = g_r;
    out.conflict_fraction = module_conflict_fraction(g_r, g_f);
    return out;
}

GradVector project_if_conflict(const GradVector& g_f, const GradVector& g_r) {
    const double d = dot(g_f, g_r);
    if (d >= 0.0) return g_f;
    const double nr_sq = norm_sq(g_r);
    if (nr_sq < kEpsZero) return g_f;
    const double coeff = d / nr_sq;
    GradVector out(g_f.size());
    for (std::size_t i = 0; i < g_f.size(); ++i) out[i] = g_f[i] - coeff * g_r[i];
    return out;
}

CombineOutcome combine_pcgrad(const ModuleGradients& g_r, const ModuleGradients& g_f,
                              const CombinerConfig& cfg) {
    require_combinable(g_r, g_f, cfg, "combine_pcgrad");
    CombineOutcome out;
    if (cfg.scope == PcgradScope::Global) {
        const GradVector flat_f = g_f.flattened();
        const GradVector flat_r = g_r.flattened();
        const ModuleSchema schema = g_f.schema();
        out.g_f_tilde = unflatten(project_if_conflict(flat_f, flat_r), schema);
        out.conflict_fraction = dot(flat_f, flat_r) < 0.0 ? 1.0 : 0.0;
    } else {
        ModuleGradients projected;
        for (std::size_t i = 0; i < g_f.entries().size(); ++i) {
            const auto& ef = g_f.entries()[i];
            const auto& er = g_r.entries()[i];
            projected.add(ef.name, project_if_conflict(ef.values, er.values));
        }
        out.g_f_tilde = std::move(projected);
        out.conflict_fraction = module_conflict_fraction(g_r, g_f);
    }
    out.g_r_tilde = g_r;
    out.g_final = weighted_sum(cfg.alpha, g_r, cfg.gamma, out.g_f_tilde);
    return out;
}

std::pair<GradVector, GradVector> sign_gate(const GradVector& g_f, const GradVector& g_r,
                                            ZeroProductPolicy policy) {
    if (g_f.size() != g_r.size()) {
        throw AlignmentError("sign_gate: vector lengths differ");
    }
    GradVector f_tilde(g_f.size(), 0.0);
    GradVector r_tilde(g_r.size(), 0.0);
    for (std::size_t i = 0; i < g_f.size(); ++i) {
        const double product = g_f[i] * g_r[i];
        bool to_forget = product >= 0.0;
        if (policy == ZeroProductPolicy::RetainWins && product == 0.0 && g_f[i] == 0.0) {
            to_forget = false;
        }
        if (to_forget) {
            f_tilde[i] = g_f[i];
        } else {
            r_tilde[i] = g_r[i];
        }
    }
    return {std::move(f_tilde), std::move(r_tilde)};
}

CombineOutcome combine_sago(const ModuleGradients& g_r, const ModuleGradients& g_f,
                            const CombinerConfig& cfg) {
    require_combinable(g_r, g_f, cfg, "combine_sago");
    const GradVector flat_f = g_f.flattened();
    const GradVector flat_r = g_r.flattened();
    auto [f_tilde, r_tilde] = sign_gate(flat_f, flat_r, cfg.zero_product_policy);

    std::size_t conflicted = 0;
    GradVector final_flat(flat_f.size());
    for (std::size_t i = 0; i < flat_f.size(); ++i) {
        final_flat[i] = cfg.alpha * r_tilde[i] + cfg.gamma * f_tilde[i];
        if (flat_f[i] * flat_r[i] < 0.0) ++conflicted;
    }

    const ModuleSchema schema = g_f.schema();
    CombineOutcome out;
    out.g_final = unflatten(final_flat, schema);
    out.g_f_tilde = unflatten(f_tilde, schema);
    out.g_r_tilde = unflatten(r_tilde, schema);
    out.conflict_fraction = static_cast<double>(conflicted) / static_cast<double>(flat_f.size());
    return out;
}

CombineOutcome combine(CombinerKind kind, const ModuleGradients& g_r, const ModuleGradients& g_f,
                       const CombinerConfig& cfg) {
    CombinerConfig local = cfg;
    switch (kind) {
        case CombinerKind::Naive:
            return combine_naive(g_r, g_f, local);
        case CombinerKind::PCGradGlobal:
            local.scope = PcgradScope::Global;
            return combine_pcgrad(g_r, g_f, local);
        case CombinerKind::PCGradModuleWise:
            local.scope = PcgradScope::ModuleWise;
            return combine_pcgrad(g_r, g_f, local);
        case CombinerKind::SAGO:
            return combine_sago(g_r, g_f, local);
    }
    throw InputError("unknown combiner kind");
}

const char* combiner_name(CombinerKind kind) {
    switch (kind) {
        case CombinerKind::Naive:
            return "naive";
        case CombinerKind::PCGradGlobal:
            return "pcgrad-global";
        case CombinerKind::PCGradModuleWise:
            return "pcgrad-module";
        case CombinerKind::SAGO:
            return "sago";
    }
    return "unknown";
}

}  // namespace unlearn
