#include "kgcrs/checks/gradcheck.hpp"

#include "kgcrs/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kgcrs::checks {

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

GradCheckResult gradcheck(const std::function<ag::Var()>& loss, const std::vector<GradInput>& inputs, Rng& rng,
                          int per_input, double h) {
    for (const auto& in : inputs) {
        if (!in.var.requires_grad()) throw Error("gradcheck: " + in.name + " does not require grad");
    }
    for (const auto& in : inputs) {
        ag::Var v = in.var;
        v.zero_grad();
    }
    ag::backward(loss());
    std::vector<ag::Matrix> analytic;
    for (const auto& in : inputs) {
        analytic.push_back(in.var.has_grad() ? in.var.grad() : ag::Matrix::Zero(in.var.rows(), in.var.cols()));
    }

    GradCheckResult res;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
        ag::Var v = inputs[p].var;
        const auto size = static_cast<std::uint64_t>(v.rows() * v.cols());
        std::vector<std::uint64_t> coords;
        if (per_input <= 0 || size <= static_cast<std::uint64_t>(per_input)) {
            for (std::uint64_t i = 0; i < size; ++i) coords.push_back(i);
        } else {
            for (int i = 0; i < per_input; ++i) coords.push_back(rng.below(size));
        }
        for (auto flat : coords) {
            const auto r = static_cast<Eigen::Index>(flat) / v.cols();
            const auto c = static_cast<Eigen::Index>(flat) % v.cols();
            const double orig = v.value()(r, c);
            v.mutable_value()(r, c) = orig + h;
            const double up = loss().scalar();
            v.mutable_value()(r, c) = orig - h;
            const double down = loss().scalar();
            v.mutable_value()(r, c) = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[p](r, c);
            const double err = relative_error(a, numeric);
            ++res.checked;
            if (err > res.max_rel_error || res.worst.empty()) {
                res.max_rel_error = std::max(res.max_rel_error, err);
                if (err >= res.max_rel_error) {
                    std::ostringstream os;
                    os.precision(10);
                    os << inputs[p].name << "[" << r << "," << c << "] analytic=" << a << " numeric=" << numeric;
                    res.worst = os.str();
                }
            }
        }
    }
    return res;
}

}  // namespace kgcrs::checks
