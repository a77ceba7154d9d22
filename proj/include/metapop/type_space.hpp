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

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace metapop {

/// Animal counts per variety inside one patch.
using Composition = std::vector<int>;

inline int total(const Composition& c) { return std::accumulate(c.begin(), c.end(), 0); }

/// A patch holding `composition[l]` animals of variety l.
struct Interior {
    Composition composition;
    bool operator==(const Interior&) const = default;
};

/// Bookkeeping type for migrants: occupied = an animal of variety `variety`
/// in transit, unoccupied = a free place for one.
struct MigrantSlot {
    int variety = 0;
    bool occupied = true;
    bool operator==(const MigrantSlot&) const = default;
};

using PatchType = std::variant<Interior, MigrantSlot>;

/// Size measure: one more than the number of animals for a patch, 1 for a slot.
inline double size_weight(const PatchType& z) {
    if (const auto* p = std::get_if<Interior>(&z)) return total(p->composition) + 1.0;
    return 1.0;
}

/// Norm weight. Coincides with the size measure for this family of models.
inline double mu_weight(const PatchType& z) { return size_weight(z); }

/// Sentinel for a transition whose target lies above the truncation level.
inline constexpr int kOverflow = -2;
/// Sentinel for "no such type" (e.g. removing an animal from i_l = 0).
inline constexpr int kNoType = -1;

/// Truncated type space: all compositions with at most `cap` animals, plus d
/// occupied-migrant coordinates. Interior types come first (graded by total),
/// then the migrant coordinates, so for d = 1 the interior index equals the
/// animal count.
class TypeSpace {
public:
    TypeSpace() = default;

    TypeSpace(int varieties, int cap) : d_(varieties), cap_(cap) {
        if (varieties < 1) throw std::invalid_argument("TypeSpace: need at least one variety");
        if (cap < 0) throw std::invalid_argument("TypeSpace: negative cap");
        radix_ = static_cast<std::size_t>(cap) + 1;
        std::size_t table = 1;
        for (int l = 0; l < d_; ++l) table *= radix_;
        lookup_.assign(table, kNoType);

        Composition c(static_cast<std::size_t>(d_), 0);
        enumerate(c, 0, cap_);
        std::stable_sort(compositions_.begin(), compositions_.end(),
                         [](const Composition& a, const Composition& b) { return total(a) < total(b); });
        for (std::size_t k = 0; k < compositions_.size(); ++k) {
            lookup_[code(compositions_[k])] = static_cast<int>(k);
            totals_.push_back(total(compositions_[k]));
        }

        const std::size_t n = compositions_.size();
        up_.assign(n * static_cast<std::size_t>(d_), kNoType);
        down_.assign(n * static_cast<std::size_t>(d_), kNoType);
        for (std::size_t k = 0; k < n; ++k) {
            for (int l = 0; l < d_; ++l) {
                Composition c2 = compositions_[k];
                c2[static_cast<std::size_t>(l)] += 1;
                up_[k * d_ + l] = totals_[k] + 1 > cap_ ? kOverflow : index_of_unchecked(c2);
                c2[static_cast<std::size_t>(l)] -= 2;
                down_[k * d_ + l] = c2[static_cast<std::size_t>(l)] < 0 ? kNoType : index_of_unchecked(c2);
            }
        }
    }

    int varieties() const { return d_; }
    int cap() const { return cap_; }
    std::size_t interior_count() const { return compositions_.size(); }
    /// Interior types plus one occupied-migrant coordinate per variety.
    std::size_t size() const { return compositions_.size() + static_cast<std::size_t>(d_); }

    std::size_t migrant_coord(int l) const { return compositions_.size() + static_cast<std::size_t>(l); }
    bool is_migrant_coord(std::size_t k) const { return k >= compositions_.size(); }

    const Composition& composition(std::size_t k) const { return compositions_[k]; }
    int animals(std::size_t k) const { return totals_[k]; }
    int count_of(std::size_t k, int l) const { return compositions_[k][static_cast<std::size_t>(l)]; }

    /// Index of a composition, or nullopt if it is above the cap or malformed.
    std::optional<std::size_t> index_of(const Composition& c) const {
        if (static_cast<int>(c.size()) != d_) return std::nullopt;
        for (int v : c)
            if (v < 0 || v > cap_) return std::nullopt;
        if (total(c) > cap_) return std::nullopt;
        return static_cast<std::size_t>(lookup_[code(c)]);
    }

    /// i + e_l: index, or kOverflow when above the cap.
    int up(std::size_t k, int l) const { return up_[k * d_ + l]; }
    /// i - e_l: index, or kNoType when i_l = 0.
    int down(std::size_t k, int l) const { return down_[k * d_ + l]; }

    /// mu(z) = nu(z) for coordinate k (interior: animals + 1; migrant: 1).
    double weight(std::size_t k) const {
        return is_migrant_coord(k) ? 1.0 : static_cast<double>(totals_[k]) + 1.0;
    }

    PatchType patch_type(std::size_t k) const {
        if (is_migrant_coord(k)) return MigrantSlot{static_cast<int>(k - compositions_.size()), true};
        return Interior{compositions_[k]};
    }

    std::string label(std::size_t k) const {
        if (is_migrant_coord(k)) return "M" + std::to_string(k - compositions_.size());
        std::string s = "(";
        for (int l = 0; l < d_; ++l) {
            if (l) s += ",";
            s += std::to_string(compositions_[k][static_cast<std::size_t>(l)]);
        }
        return s + ")";
    }

private:
    void enumerate(Composition& c, int l, int remaining) {
        if (l == d_) {
            compositions_.push_back(c);
            return;
        }
        for (int v = 0; v <= remaining; ++v) {
            c[static_cast<std::size_t>(l)] = v;
            enumerate(c, l + 1, remaining - v);
        }
        c[static_cast<std::size_t>(l)] = 0;
    }

    std::size_t code(const Composition& c) const {
        std::size_t x = 0;
        for (int l = d_ - 1; l >= 0; --l) x = x * radix_ + static_cast<std::size_t>(c[static_cast<std::size_t>(l)]);
        return x;
    }

    int index_of_unchecked(const Composition& c) const { return lookup_[code(c)]; }

    int d_ = 1;
    int cap_ = 0;
    std::size_t radix_ = 1;
    std::vector<Composition> compositions_;
    std::vector<int> totals_;
    std::vector<int> lookup_;
    std::vector<int> up_;
    std::vector<int> down_;
};

}  // namespace metapop
