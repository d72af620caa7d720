#include "unlearn/gradcore.hpp"

#include <algorithm>
#include <cmath>

namespace unlearn {

namespace {

void require_same_length(const GradVector& a, const GradVector& b, const char* op) {
    if (a.size() != b.size()) {
        throw AlignmentError(std::string(op) + ": vector lengths differ (" +
                             std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    }
}

void require_finite(const GradVector& v, std::string_view context) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw InputError("non-finite value in " + std::string(context));
        }
    }
}

}  // namespace

double dot(const GradVector& a, const GradVector& b) {
    require_same_length(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm_sq(const GradVector& a) {
    double acc = 0.0;
    for (double x : a) acc += x * x;
    return acc;
}

double norm(const GradVector& a) { return std::sqrt(norm_sq(a)); }

double cosine(const GradVector& a, const GradVector& b) {
    require_same_length(a, b, "cosine");
    const double na = norm(a);
    const double nb = norm(b);
    if (na < kEpsZero || nb < kEpsZero) return 0.0;
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

void ModuleGradients::add(std::string name, GradVector values) {
    if (values.empty()) {
        throw InputError("empty module vector for module '" + name + "'");
    }
    require_finite(values, "module '" + name + "'");
    if (has(name)) {
        throw InputError("duplicate module name '" + name + "'");
    }
    entries_.push_back(Entry{std::move(name), std::move(values)});
}

std::size_t ModuleGradients::total_size() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.values.size();
    return n;
}

const GradVector& ModuleGradients::at(std::string_view name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return e.values;
    }
    throw InputError("unknown module '" + std::string(name) + "'");
}

GradVector& ModuleGradients::mutable_at(std::string_view name) {
    for (auto& e : entries_) {
        if (e.name == name) return e.values;
    }
    throw InputError("unknown module '" + std::string(name) + "'");
}

bool ModuleGradients::has(std::string_view name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return true;
    }
    return false;
}

bool ModuleGradients::aligned_with(const ModuleGradients& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != other.entries_[i].name) return false;
        if (entries_[i].values.size() != other.entries_[i].values.size()) return false;
    }
    return true;
}

void ModuleGradients::require_aligned(const ModuleGradients& other, std::string_view op) const {
    if (!aligned_with(other)) {
        throw AlignmentError(std::string(op) + ": module gradients are not aligned");
    }
}

ModuleSchema ModuleGradients::schema() const {
    ModuleSchema s;
    s.reserve(entries_.size());
    for (const auto& e : entries_) s.emplace_back(e.name, e.values.size());
    return s;
}

GradVector ModuleGradients::flattened() const {
    GradVector out;
    out.reserve(total_size());
    for (const auto& e : entries_) {
        out.insert(out.end(), e.values.begin(), e.values.end());
    }
    return out;
}

void ModuleGradients::scale_add_in_place(double factor, const ModuleGradients& other) {
    require_aligned(other, "scale_add_in_place");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        auto& dst = entries_[i].values;
        const auto& src = other.entries_[i].values;
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += factor * src[j];
    }
}

void ModuleGradients::set_module(std::string_view name, GradVector values) {
    GradVector& dst = mutable_at(name);
    if (dst.size() != values.size()) {
        throw AlignmentError("set_module: length mismatch for '" + std::string(name) + "'");
    }
    require_finite(values, "module '" + std::string(name) + "'");
    dst = std::move(values);
}

ModuleGradients ModuleGradients::zeros_like() const {
    ModuleGradients z;
    for (const auto& e : entries_) z.add(e.name, GradVector(e.values.size(), 0.0));
    return z;
}

double& ModuleGradients::coord(std::size_t flat_index) {
    for (auto& e : entries_) {
        if (flat_index < e.values.size()) return e.values[flat_index];
        flat_index -= e.values.size();
    }
    throw InputError("coordinate index out of range");
}

double ModuleGradients::coord(std::size_t flat_index) const {
    return const_cast<ModuleGradients*>(this)->coord(flat_index);
}

GradVector flatten(const ModuleGradients& m) { return m.flattened(); }

ModuleGradients unflatten(const GradVector& flat, const ModuleSchema& schema) {
    std::size_t expected = 0;
    for (const auto& [name, len] : schema) expected += len;
    if (flat.size() != expected) {
        throw AlignmentError("unflatten: flat vector length " + std::to_string(flat.size()) +
                             " does not match schema total " + std::to_string(expected));
    }
    ModuleGradients out;
    std::size_t offset = 0;
    for (const auto& [name, len] : schema) {
        out.add(name, GradVector(flat.begin() + offset, flat.begin() + offset + len));
        offset += len;
    }
    return out;
}

ModuleGradients weighted_sum(double alpha, const ModuleGradients& a, double gamma,
                             const ModuleGradients& b) {
    a.require_aligned(b, "weighted_sum");
    ModuleGradients out;
    for (std::size_t i = 0; i < a.entries().size(); ++i) {
        const auto& ea = a.entries()[i];
        const auto& eb = b.entries()[i];
        GradVector v(ea.values.size());
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = alpha * ea.values[j] + gamma * eb.values[j];
        }
        out.add(ea.name, std::move(v));
    }
    return out;
}

}  // namespace unlearn
