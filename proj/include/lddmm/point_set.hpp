#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "errors.hpp"

namespace lddmm {

/// Column-major d x M storage: column i is landmark i. The flat view of the
/// same memory is therefore landmark-major, coordinate-minor (index i*d + c),
/// which is the vectorisation used everywhere covariances are formed.
using Coords = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct LandmarkTag {};
struct MomentumTag {};

/// A fixed-shape collection of M points in R^d. The tag separates landmark
/// positions from conjugate momenta so that they cannot be mixed up at call sites.
template <typename Tag>
class PointSet {
public:
    PointSet() = default;

    PointSet(Eigen::Index dim, Eigen::Index count) : data_(Coords::Zero(dim, count)) {}

    explicit PointSet(Coords data) : data_(std::move(data)) {}

    /// Rows are points, e.g. {{0, 0}, {1, 0}} is two points in the plane.
    PointSet(std::initializer_list<std::initializer_list<double>> points) {
        const auto count = static_cast<Eigen::Index>(points.size());
        const auto dim = count == 0 ? 0 : static_cast<Eigen::Index>(points.begin()->size());
        data_.resize(dim, count);
        Eigen::Index i = 0;
        for (const auto &pt : points) {
            if (static_cast<Eigen::Index>(pt.size()) != dim) { throw InvalidInput("ragged point list"); }
            Eigen::Index c = 0;
            for (double v : pt) { data_(c++, i) = v; }
            ++i;
        }
    }

    static PointSet zeros(Eigen::Index dim, Eigen::Index count) { return PointSet(dim, count); }

    /// Inverse of flat(): reshapes a landmark-major vector of length dim*count.
    static PointSet from_flat(const Eigen::Ref<const Vec> &flat, Eigen::Index dim) {
        if (dim <= 0 || flat.size() % dim != 0) { throw InvalidInput("flat vector length is not a multiple of d"); }
        return PointSet(Eigen::Map<const Coords>(flat.data(), dim, flat.size() / dim));
    }

    Eigen::Index dim() const noexcept { return data_.rows(); }
    Eigen::Index size() const noexcept { return data_.cols(); }
    bool empty() const noexcept { return data_.cols() == 0; }

    const Coords &coords() const noexcept { return data_; }
    Coords &coords() noexcept { return data_; }

    auto point(Eigen::Index i) const { return data_.col(i); }
    auto point(Eigen::Index i) { return data_.col(i); }

    double operator()(Eigen::Index coord, Eigen::Index i) const { return data_(coord, i); }
    double &operator()(Eigen::Index coord, Eigen::Index i) { return data_(coord, i); }

    Eigen::Map<const Vec> flat() const { return {data_.data(), data_.size()}; }
    Eigen::Map<Vec> flat() { return {data_.data(), data_.size()}; }

    bool all_finite() const { return data_.allFinite(); }

    template <typename Other>
    bool same_shape(const PointSet<Other> &other) const noexcept {
        return dim() == other.dim() && size() == other.size();
    }

    /// Squared Euclidean norm on R^{d x M}.
    double squared_norm() const { return data_.squaredNorm(); }

    PointSet &operator+=(const PointSet &rhs) {
        data_ += rhs.data_;
        return *this;
    }
    PointSet &operator-=(const PointSet &rhs) {
        data_ -= rhs.data_;
        return *this;
    }
    PointSet &operator*=(double s) {
        data_ *= s;
        return *this;
    }

    friend PointSet operator+(PointSet a, const PointSet &b) { return a += b; }
    friend PointSet operator-(PointSet a, const PointSet &b) { return a -= b; }
    friend PointSet operator*(double s, PointSet a) { return a *= s; }
    friend PointSet operator-(PointSet a) {
        a.data_ = -a.data_;
        return a;
    }

    friend bool operator==(const PointSet &a, const PointSet &b) {
        return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() && a.data_ == b.data_;
    }

private:
    Coords data_;
};

using LandmarkSet = PointSet<LandmarkTag>;
using MomentumSet = PointSet<MomentumTag>;

/// Reinterpret coordinates under another tag (e.g. q1 - q as a residual fed to the gain).
template <typename To, typename From>
PointSet<To> retag(const PointSet<From> &src) {
    return PointSet<To>(src.coords());
}

template <typename Tag>
void require_valid(const PointSet<Tag> &s, const char *name) {
    if (s.size() < 1 || s.dim() < 1) { throw InvalidInput(std::string(name) + ": need at least one point and d >= 1"); }
    if (!s.all_finite()) { throw InvalidInput(std::string(name) + ": non-finite coordinate"); }
}

template <typename A, typename B>
void require_same_shape(const PointSet<A> &a, const PointSet<B> &b, const char *what) {
    if (!a.same_shape(b)) {
        throw InvalidInput(std::string(what) + ": shape mismatch (" + std::to_string(a.dim()) + "x" +
                           std::to_string(a.size()) + " vs " + std::to_string(b.dim()) + "x" +
                           std::to_string(b.size()) + ")");
    }
}

}  // namespace lddmm
