#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "radiomamba/errors.hpp"
#include "radiomamba/tensor.hpp"

namespace radiomamba {

// The independent oracle every backward rule is held against: central finite
// differences in 64-bit. Runs f once with the graph to collect analytic
// gradients, then re-evaluates f twice per parameter entry with the graph
// disabled. Error measure per entry: |analytic - numeric| / max(1, |numeric|).

struct GradcheckEntry {
    std::string param;
    std::size_t index = 0;
    double analytic = 0;
    double numeric = 0;
    double err = 0;
};

struct GradcheckReport {
    bool passed = false;
    double tol = 0;
    double eps = 0;
    double max_err = 0;
    std::size_t entries_checked = 0;
    std::vector<GradcheckEntry> worst;  // sorted, largest error first

    std::string summary() const {
        std::ostringstream os;
        os << (passed ? "PASS" : "FAIL") << " gradcheck: " << entries_checked
           << " entries, max err " << max_err << " (tol " << tol << ", eps " << eps << ")";
        if (!passed && !worst.empty()) {
            os << "\n  worst offenders:";
            const std::size_t n = std::min<std::size_t>(worst.size(), 10);
            for (std::size_t i = 0; i < n; ++i)
                os << "\n    " << worst[i].param << "[" << worst[i].index
                   << "] analytic=" << worst[i].analytic << " numeric=" << worst[i].numeric
                   << " err=" << worst[i].err;
        }
        return os.str();
    }
};

inline GradcheckReport gradcheck(const std::function<Tensor<double>()>& f,
                                 std::span<Parameter<double>> params, double eps = 1e-3,
                                 double tol = 1e-3) {
    GradcheckReport report;
    report.tol = tol;
    report.eps = eps;

    Tensor<double> loss = f();
    if (loss.size() != 1)
        throw DimensionError("gradcheck: objective must be scalar, got " +
                             shape_str(loss.shape()));
    if (!std::isfinite(loss.item()))
        throw NumericError("gradcheck: non-finite objective (op '" + loss.op_name() + "')");
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        auto g = p.tensor.grad();
        std::vector<double> ga(p.tensor.size(), 0.0);
        if (!g.empty()) std::copy(g.begin(), g.end(), ga.begin());
        for (std::size_t i = 0; i < ga.size(); ++i)
            if (!std::isfinite(ga[i]))
                throw NumericError("gradcheck: non-finite analytic gradient in '" + p.name +
                                   "' at entry " + std::to_string(i));
        analytic.push_back(std::move(ga));
        p.tensor.zero_grad();
    }

    auto eval = [&]() {
        NoGradGuard guard;
        const double v = f().item();
        if (!std::isfinite(v)) throw NumericError("gradcheck: non-finite objective during probe");
        return v;
    };

    std::vector<GradcheckEntry> entries;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto vals = params[pi].tensor.values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + eps;
            const double fp = eval();
            vals[i] = orig - eps;
            const double fm = eval();
            vals[i] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[pi][i];
            const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
            report.max_err = std::max(report.max_err, err);
            ++report.entries_checked;
            if (err > tol || entries.size() < 10)
                entries.push_back({params[pi].name, i, a, numeric, err});
        }
    }
    std::sort(entries.begin(), entries.end(),
              [](const GradcheckEntry& a, const GradcheckEntry& b) { return a.err > b.err; });
    if (entries.size() > 32) entries.resize(32);
    report.worst = std::move(entries);
    report.passed = report.max_err <= tol;
    return report;
}

}  // namespace radiomamba
