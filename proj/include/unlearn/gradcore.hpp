#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "unlearn/errors.hpp"

namespace unlearn {

// Flat vector of gradient coordinates. Non-empty and fully finite once stored
// inside a ModuleGradients; free functions below tolerate empty vectors.
using GradVector = std::vector<double>;

// Norms below this are treated as zero: cosine returns 0, projection is skipped.
inline constexpr double kEpsZero = 1e-12;

// (name, length) pairs describing a module layout, in insertion order.
using ModuleSchema = std::vector<std::pair<std::string, std::size_t>>;

double dot(const GradVector& a, const GradVector& b);
double norm_sq(const GradVector& a);
double norm(const GradVector& a);

// dot / (|a| |b|), clamped to [-1, 1]. Returns 0 if either norm < kEpsZero.
double cosine(const GradVector& a, const GradVector& b);

// Ordered map from module name to gradient vector. Insertion order is the
// canonical flatten order. All binary operations require alignment: identical
// name sequences and per-name lengths.
class ModuleGradients {
public:
    struct Entry {
        std::string name;
        GradVector values;
    };

    ModuleGradients() = default;

    // Appends a module. Rejects duplicate names, empty vectors, non-finite values.
    void add(std::string name, GradVector values);

    std::size_t module_count() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t total_size() const;

    const std::vector<Entry>& entries() const { return entries_; }
    const GradVector& at(std::string_view name) const;
    bool has(std::string_view name) const;

    bool aligned_with(const ModuleGradients& other) const;
    // Throws AlignmentError (with context) unless aligned_with(other).
    void require_aligned(const ModuleGradients& other, std::string_view op) const;

    ModuleSchema schema() const;
    GradVector flattened() const;

    // this += factor * other, aligned. Used by the SGD update.
    void scale_add_in_place(double factor, const ModuleGradients& other);

    // Replaces one module's values; length must match, values must be finite.
    void set_module(std::string_view name, GradVector values);

    // Same schema, all coordinates zero.
    ModuleGradients zeros_like() const;

    // Direct coordinate access by flat index (flatten order).
    double& coord(std::size_t flat_index);
    double coord(std::size_t flat_index) const;

    // Mutable module access for gradient accumulation hot paths.
    GradVector& mutable_at(std::string_view name);

private:
    std::vector<Entry> entries_;
};

// Concatenation of module vectors in insertion order.
GradVector flatten(const ModuleGradients& m);

// Inverse of flatten for a given schema. Length mismatch -> AlignmentError.
ModuleGradients unflatten(const GradVector& flat, const ModuleSchema& schema);

// Per-coordinate alpha * a + gamma * b over aligned containers.
ModuleGradients weighted_sum(double alpha, const ModuleGradients& a, double gamma,
                             const ModuleGradients& b);

}  // namespace unlearn
