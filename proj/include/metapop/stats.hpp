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
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

namespace metapop {

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;
    double variance = 0.0;  ///< sample variance
    std::size_t n = 0;
};

inline MeanSE mean_se(const std::vector<double>& v) {
    MeanSE m;
    m.n = v.size();
    if (v.empty()) return m;
    m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - m.mean) * (x - m.mean);
        m.variance = ss / static_cast<double>(v.size() - 1);
        m.se = std::sqrt(m.variance / static_cast<double>(v.size()));
    }
    return m;
}

/// Linear-interpolation quantile (type 7) of an unsorted sample.
inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw std::invalid_argument("quantile: empty sample");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(const std::vector<double>& v) { return quantile(v, 0.5); }

/// Upper tail of the chi-square distribution with k degrees of freedom.
inline double chi2_sf(double stat, double k) {
    if (k <= 0.0) return 1.0;
    if (stat <= 0.0) return 1.0;
    return boost::math::gamma_q(0.5 * k, 0.5 * stat);
}

struct GoodnessOfFit {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
    int cells = 0;
};

/// Pearson chi-square test of nonnegative integer counts against a Poisson
/// law with the sample mean. Tail cells are pooled until every expected
/// count is at least `min_expected`.
inline GoodnessOfFit poisson_gof(const std::vector<int>& counts, double min_expected = 5.0) {
    GoodnessOfFit g;
    if (counts.empty()) return g;
    const double n = static_cast<double>(counts.size());
    const double lambda = std::accumulate(counts.begin(), counts.end(), 0.0) / n;
    const int top = *std::max_element(counts.begin(), counts.end());
    std::vector<double> obs(static_cast<std::size_t>(top) + 1, 0.0);
    for (int c : counts) obs[static_cast<std::size_t>(c)] += 1.0;
    std::vector<double> prob(obs.size());
    double pk = std::exp(-lambda);
    for (std::size_t k = 0; k < prob.size(); ++k) {
        prob[k] = pk;
        pk *= lambda / static_cast<double>(k + 1);
    }
    // cells [k, k+1) for small k, last cell open to the right
    std::vector<double> o, e;
    double acc_o = 0.0, acc_p = 0.0, used_p = 0.0;
    for (std::size_t k = 0; k < obs.size(); ++k) {
        acc_o += obs[k];
        acc_p += prob[k];
        if (acc_p * n >= min_expected) {
            o.push_back(acc_o);
            e.push_back(acc_p * n);
            used_p += acc_p;
            acc_o = acc_p = 0.0;
        }
    }
    const double tail_p = std::max(0.0, 1.0 - used_p);
    if (!o.empty() && tail_p * n < min_expected) {
        o.back() += acc_o;
        e.back() += tail_p * n;
    } else {
        o.push_back(acc_o);
        e.push_back(tail_p * n);
    }
    for (std::size_t k = 0; k < o.size(); ++k)
        if (e[k] > 0.0) g.statistic += (o[k] - e[k]) * (o[k] - e[k]) / e[k];
    g.cells = static_cast<int>(o.size());
    g.dof = std::max(0, g.cells - 2);  // one estimated parameter
    g.p_value = g.dof > 0 ? chi2_sf(g.statistic, g.dof) : 1.0;
    return g;
}

/// Composite Simpson rule for f on [a, b] with an even number of panels.
template <class F>
double simpson(F&& f, double a, double b, int panels = 2000) {
    if (panels % 2) ++panels;
    const double h = (b - a) / panels;
    double s = f(a) + f(b);
    for (int k = 1; k < panels; ++k) s += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
    return s * h / 3.0;
}

}  // namespace metapop
