#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pltf/errors.hpp"

namespace pltf {

/// A symbolic tensor axis: a name and the number of settings it can take.
struct IndexDef {
    std::string name;
    std::size_t cardinality = 0;

    friend bool operator==(const IndexDef&, const IndexDef&) = default;
};

inline std::size_t shape_size(std::span<const IndexDef> indices) {
    std::size_t n = 1;
    for (const auto& ix : indices) n *= ix.cardinality;
    return n;
}

/// Dense multiway array whose axes are named indices.
///
/// Storage is row-major in declaration order: the last axis varies fastest.
/// Values are plain doubles; `nonneg()` marks tensors whose entries are
/// known to be non-negative (observations, masks, factors).
class NamedTensor {
  public:
    NamedTensor() = default;

    explicit NamedTensor(std::vector<IndexDef> indices, double fill = 0.0,
                         bool nonneg = false)
        : indices_(std::move(indices)), nonneg_(nonneg) {
        validate_indices();
        values_.assign(shape_size(indices_), fill);
        compute_strides();
    }

    static NamedTensor from_values(std::vector<IndexDef> indices,
                                   std::vector<double> values,
                                   bool nonneg = false) {
        NamedTensor t;
        t.indices_ = std::move(indices);
        t.validate_indices();
        if (values.size() != shape_size(t.indices_))
            throw ValidationError("NamedTensor: value count " +
                                  std::to_string(values.size()) +
                                  " does not match shape size " +
                                  std::to_string(shape_size(t.indices_)));
        t.values_ = std::move(values);
        t.nonneg_ = nonneg;
        t.compute_strides();
        t.check_values();
        return t;
    }

    static NamedTensor scalar(double v) {
        return from_values({}, {v}, v >= 0.0);
    }

    std::size_t order() const { return indices_.size(); }
    std::size_t size() const { return values_.size(); }
    const std::vector<IndexDef>& indices() const { return indices_; }
    const IndexDef& index(std::size_t axis) const { return indices_[axis]; }
    std::size_t stride(std::size_t axis) const { return strides_[axis]; }

    /// Axis position of `name`, or -1 when absent.
    std::ptrdiff_t axis_of(std::string_view name) const {
        for (std::size_t a = 0; a < indices_.size(); ++a)
            if (indices_[a].name == name) return static_cast<std::ptrdiff_t>(a);
        return -1;
    }

    bool same_shape(const NamedTensor& other) const {
        return indices_ == other.indices_;
    }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double operator[](std::size_t flat) const { return values_[flat]; }
    double& operator[](std::size_t flat) { return values_[flat]; }

    std::size_t offset(std::span<const std::size_t> multi) const {
        std::size_t off = 0;
        for (std::size_t a = 0; a < indices_.size(); ++a) {
            if (multi[a] >= indices_[a].cardinality)
                throw ValidationError("NamedTensor: index " +
                                      std::to_string(multi[a]) +
                                      " out of range for axis '" +
                                      indices_[a].name + "'");
            off += multi[a] * strides_[a];
        }
        return off;
    }

    double at(std::initializer_list<std::size_t> multi) const {
        std::vector<std::size_t> m(multi);
        return values_[offset(m)];
    }
    double& at(std::initializer_list<std::size_t> multi) {
        std::vector<std::size_t> m(multi);
        return values_[offset(m)];
    }

    std::vector<std::size_t> unravel(std::size_t flat) const {
        std::vector<std::size_t> multi(indices_.size());
        for (std::size_t a = indices_.size(); a-- > 0;) {
            multi[a] = flat % indices_[a].cardinality;
            flat /= indices_[a].cardinality;
        }
        return multi;
    }

    bool nonneg() const { return nonneg_; }
    void set_nonneg(bool v) { nonneg_ = v; }

    /// Throws unless every value is finite (and non-negative when flagged).
    void check_values() const {
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i]))
                throw ValidationError("NamedTensor: non-finite value at " +
                                      cell_name(i));
            if (nonneg_ && values_[i] < 0.0)
                throw ValidationError("NamedTensor: negative value " +
                                      std::to_string(values_[i]) + " at " +
                                      cell_name(i) + " in non-negative tensor");
        }
    }

    /// Human-readable cell label, e.g. "(i=2, j=0)".
    std::string cell_name(std::size_t flat) const {
        auto multi = unravel(flat);
        std::ostringstream os;
        os << "(";
        for (std::size_t a = 0; a < indices_.size(); ++a) {
            if (a) os << ", ";
            os << indices_[a].name << "=" << multi[a];
        }
        os << ")";
        return os.str();
    }

  private:
    void validate_indices() const {
        for (std::size_t a = 0; a < indices_.size(); ++a) {
            if (indices_[a].cardinality == 0)
                throw ValidationError("index '" + indices_[a].name +
                                      "' has zero cardinality");
            for (std::size_t b = a + 1; b < indices_.size(); ++b)
                if (indices_[a].name == indices_[b].name)
                    throw ValidationError("duplicate index name '" +
                                          indices_[a].name + "'");
        }
    }

    void compute_strides() {
        strides_.assign(indices_.size(), 1);
        for (std::size_t a = indices_.size(); a-- > 1;)
            strides_[a - 1] = strides_[a] * indices_[a].cardinality;
    }

    std::vector<IndexDef> indices_;
    std::vector<std::size_t> strides_;
    std::vector<double> values_;
    bool nonneg_ = false;
};

namespace detail {
inline void require_same_shape(const NamedTensor& a, const NamedTensor& b,
                               const char* op) {
    if (!a.same_shape(b))
        throw ValidationError(std::string(op) +
                              ": operands have different index lists");
}
} // namespace detail

/// Elementwise product. Operands must carry identical index lists.
inline NamedTensor hadamard(const NamedTensor& a, const NamedTensor& b) {
    detail::require_same_shape(a, b, "hadamard");
    NamedTensor r(a.indices(), 0.0, a.nonneg() && b.nonneg());
    const double* pa = a.data();
    const double* pb = b.data();
    double* pr = r.data();
    for (std::size_t i = 0; i < r.size(); ++i) pr[i] = pa[i] * pb[i];
    return r;
}

/// Elementwise quotient with the convention 0/0 = 0.
///
/// Masked cells reduce to exactly this pattern (M*X/X_hat with M=0), which
/// keeps the update equations well defined without branching on the mask.
/// A nonzero numerator over a zero denominator means the model assigns zero
/// intensity to an observed positive count and raises SingularModelError.
inline NamedTensor safe_div(const NamedTensor& num, const NamedTensor& den) {
    detail::require_same_shape(num, den, "safe_div");
    NamedTensor r(num.indices(), 0.0, num.nonneg() && den.nonneg());
    const double* pn = num.data();
    const double* pd = den.data();
    double* pr = r.data();
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (pd[i] == 0.0) {
            if (pn[i] != 0.0)
                throw SingularModelError(
                    "safe_div: nonzero value " + std::to_string(pn[i]) +
                    " divided by zero at cell " + num.cell_name(i));
            pr[i] = 0.0;
        } else {
            pr[i] = pn[i] / pd[i];
        }
    }
    return r;
}

} // namespace pltf
