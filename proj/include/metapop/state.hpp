/*
   Copyright 2026 The metapop Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "metapop/type_space.hpp"

namespace metapop {

using SpacePtr = std::shared_ptr<const TypeSpace>;

/// Densities x = X / N over the interior types and the occupied migrant
/// coordinates. Free migrant places are not part of the scaled state: they
/// never enter a rate and are excluded from every norm.
class ScaledState {
public:
    ScaledState() = default;
    explicit ScaledState(SpacePtr space) : space_(std::move(space)), values_(space_->size(), 0.0) {}
    ScaledState(SpacePtr space, std::vector<double> values) : space_(std::move(space)), values_(std::move(values)) {
        if (values_.size() != space_->size()) throw std::invalid_argument("ScaledState: size mismatch");
    }

    const TypeSpace& space() const { return *space_; }
    const SpacePtr& space_ptr() const { return space_; }

    double operator[](std::size_t k) const { return values_[k]; }
    double& operator[](std::size_t k) { return values_[k]; }
    std::size_t size() const { return values_.size(); }

    double migrant(int l) const { return values_[space_->migrant_coord(l)]; }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    std::vector<double>& raw() { return values_; }
    const std::vector<double>& raw() const { return values_; }

    /// Sum over all coordinates (interior and occupied migrants).
    double l1_norm() const {
        double s = 0.0;
        for (double v : values_) s += std::abs(v);
        return s;
    }

    /// Total patch density (interior coordinates only).
    double patch_mass() const {
        double s = 0.0;
        for (std::size_t k = 0; k < space_->interior_count(); ++k) s += values_[k];
        return s;
    }

private:
    SpacePtr space_;
    std::vector<double> values_;
};

/// Weighted l1 norm with weight animals + 1 per patch type and 1 per migrant.
inline double mu_norm(const ScaledState& x) {
    const auto& space = x.space();
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += space.weight(k) * std::abs(x[k]);
    return s;
}

/// mu-norm of a difference given as raw coordinates on `space`.
inline double mu_norm(const TypeSpace& space, std::span<const double> v) {
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) s += space.weight(k) * std::abs(v[k]);
    return s;
}

/// S_r(x) = sum_z nu(z)^r x_z.
inline double empirical_moment(const ScaledState& x, int r) {
    const auto& space = x.space();
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += std::pow(space.weight(k), r) * x[k];
    return s;
}

/// Integer counts at scale N: patches per interior type, occupied migrants
/// per variety, and the free migrant places per variety. Occupied plus free
/// places of each variety is conserved by every transition.
class PopulationState {
public:
    PopulationState() = default;
    PopulationState(SpacePtr space, std::int64_t scale)
        : space_(std::move(space)), scale_(scale), counts_(space_->size(), 0),
          free_slots_(static_cast<std::size_t>(space_->varieties()), 0) {
        if (scale < 1) throw std::invalid_argument("PopulationState: scale N must be >= 1");
    }

    /// Counts nearest to N * x, with ceil(N * h_l) free migrant places.
    static PopulationState from_scaled(const ScaledState& x, std::int64_t scale, std::span<const double> reserves) {
        PopulationState s(x.space_ptr(), scale);
        for (std::size_t k = 0; k < x.size(); ++k) {
            if (x[k] < 0) throw std::invalid_argument("PopulationState: negative density");
            s.counts_[k] = static_cast<std::int64_t>(std::llround(x[k] * static_cast<double>(scale)));
        }
        for (int l = 0; l < s.space_->varieties(); ++l) {
            const double h = l < static_cast<int>(reserves.size()) ? reserves[static_cast<std::size_t>(l)] : 0.0;
            s.free_slots_[static_cast<std::size_t>(l)] =
                static_cast<std::int64_t>(std::ceil(h * static_cast<double>(scale) - 1e-9));
        }
        return s;
    }

    const TypeSpace& space() const { return *space_; }
    const SpacePtr& space_ptr() const { return space_; }
    std::int64_t scale() const { return scale_; }

    std::int64_t count(std::size_t k) const { return counts_[k]; }
    std::int64_t& count(std::size_t k) { return counts_[k]; }
    std::int64_t migrants(int l) const { return counts_[space_->migrant_coord(l)]; }
    std::int64_t free_slots(int l) const { return free_slots_[static_cast<std::size_t>(l)]; }
    std::int64_t& free_slots(int l) { return free_slots_[static_cast<std::size_t>(l)]; }
    /// Occupied plus free places of variety l.
    std::int64_t slot_total(int l) const { return migrants(l) + free_slots(l); }

    const std::vector<std::int64_t>& counts() const { return counts_; }

    std::int64_t patch_count() const {
        std::int64_t s = 0;
        for (std::size_t k = 0; k < space_->interior_count(); ++k) s += counts_[k];
        return s;
    }

    ScaledState scaled() const {
        ScaledState x(space_);
        const double inv = 1.0 / static_cast<double>(scale_);
        for (std::size_t k = 0; k < counts_.size(); ++k) x[k] = static_cast<double>(counts_[k]) * inv;
        return x;
    }

    bool operator==(const PopulationState& o) const {
        return scale_ == o.scale_ && counts_ == o.counts_ && free_slots_ == o.free_slots_;
    }

private:
    SpacePtr space_;
    std::int64_t scale_ = 1;
    std::vector<std::int64_t> counts_;
    std::vector<std::int64_t> free_slots_;
};

}  // namespace metapop
