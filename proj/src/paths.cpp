#include "har/paths.hpp"

#include <algorithm>
#include <cmath>

#include "har/errors.hpp"
#include "har/numeric.hpp"

namespace har {

ScalarPath::ScalarPath(double constant_value)
    : segments_{{0.0, 1.0, constant_value, constant_value}} {}

ScalarPath::ScalarPath(std::vector<Segment> segments) : segments_(std::move(segments)) {
    if (segments_.empty()) {
        throw Error(ErrorCode::InvalidSpec, "path needs at least one segment");
    }
    const double eps = 1e-12;
    if (std::abs(segments_.front().u_start) > eps ||
        std::abs(segments_.back().u_end - 1.0) > eps) {
        throw Error(ErrorCode::InvalidSpec, "path segments must cover [0,1]");
    }
    for (std::size_t i = 0; i + 1 < segments_.size(); ++i) {
        if (std::abs(segments_[i].u_end - segments_[i + 1].u_start) > eps) {
            throw Error(ErrorCode::InvalidSpec, "path segments must be contiguous");
        }
        if (segments_[i].u_end <= segments_[i].u_start) {
            throw Error(ErrorCode::InvalidSpec, "path segments must have positive width");
        }
    }
}

double ScalarPath::operator()(double u) const {
    if (u < 0.0 || u > 1.0) {
        throw Error(ErrorCode::OutOfRange, "path evaluated outside [0,1]");
    }
    // Right-continuous: the segment with u_start <= u < u_end; u = 1 falls
    // into the last segment.
    const Segment* seg = &segments_.back();
    for (const auto& s : segments_) {
        if (u >= s.u_start && u < s.u_end) {
            seg = &s;
            break;
        }
    }
    const double t = (u - seg->u_start) / (seg->u_end - seg->u_start);
    return seg->value_start + t * (seg->value_end - seg->value_start);
}

bool ScalarPath::at_break(double u) const {
    for (std::size_t i = 1; i < segments_.size(); ++i) {
        if (u == segments_[i].u_start &&
            segments_[i - 1].value_end != segments_[i].value_start) {
            return true;
        }
    }
    return false;
}

std::vector<double> ScalarPath::interior_breaks() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < segments_.size(); ++i) {
        out.push_back(segments_[i].u_start);
    }
    return out;
}

double ScalarPath::integral() const { return integral_to(1.0); }

double ScalarPath::integral_to(double u) const {
    double total = 0.0;
    for (const auto& s : segments_) {
        if (u <= s.u_start) break;
        const double hi = std::min(u, s.u_end);
        const double w = s.u_end - s.u_start;
        const double t0 = 0.0;
        const double t1 = (hi - s.u_start) / w;
        // trapezoid of the linear piece over [t0, t1]
        const double v0 = s.value_start;
        const double v1 = s.value_start + t1 * (s.value_end - s.value_start);
        total += 0.5 * (v0 + v1) * (t1 - t0) * w;
    }
    return total;
}

bool ScalarPath::constant_on(double a, double b) const {
    const double ref = (*this)(a);
    for (const auto& s : segments_) {
        if (s.u_end <= a || s.u_start >= b) continue;
        if (s.value_start != ref || s.value_end != ref) return false;
    }
    return true;
}

double ScalarPath::sup() const {
    double m = segments_.front().value_start;
    for (const auto& s : segments_) m = std::max({m, s.value_start, s.value_end});
    return m;
}

double ScalarPath::inf() const {
    double m = segments_.front().value_start;
    for (const auto& s : segments_) m = std::min({m, s.value_start, s.value_end});
    return m;
}

double ScalarPath::sup_abs() const { return std::max(std::abs(sup()), std::abs(inf())); }

Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m) {
    if (m.rows() == 1 && m.cols() == 1) {
        Eigen::MatrixXd r(1, 1);
        r(0, 0) = std::sqrt(std::max(0.0, m(0, 0)));
        return r;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) {
        return Eigen::MatrixXd(llt.matrixL());
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

MatrixPath MatrixPath::scalar(ScalarPath values) {
    MatrixPath p;
    p.dim_ = 1;
    p.scalar_set_ = true;
    p.breaks_ = values.interior_breaks();
    p.scalar_ = std::move(values);
    return p;
}

MatrixPath MatrixPath::constant(const Eigen::MatrixXd& value) {
    if (value.rows() == 1 && value.cols() == 1) {
        return scalar(ScalarPath(value(0, 0)));
    }
    MatrixPath p;
    p.dim_ = static_cast<int>(value.rows());
    Eigen::MatrixXd v = value;
    p.eval_ = [v](double) { return v; };
    return p;
}

MatrixPath MatrixPath::general(int dim, std::vector<double> breaks,
                               std::function<Eigen::MatrixXd(double)> eval) {
    MatrixPath p;
    p.dim_ = dim;
    p.breaks_ = std::move(breaks);
    p.eval_ = std::move(eval);
    return p;
}

Eigen::MatrixXd MatrixPath::value(double u) const {
    if (scalar_set_) {
        Eigen::MatrixXd m(1, 1);
        m(0, 0) = scalar_(u);
        return m;
    }
    return eval_(u);
}

double MatrixPath::scalar_value(double u) const {
    if (scalar_set_) return scalar_(u);
    return eval_(u)(0, 0);
}

Eigen::MatrixXd MatrixPath::sqrt_value(double u) const { return matrix_sqrt_psd(value(u)); }

double MatrixPath::scalar_sqrt(double u) const {
    return std::sqrt(std::max(0.0, scalar_value(u)));
}

Eigen::MatrixXd MatrixPath::integrated(double tol) const {
    if (scalar_set_) {
        Eigen::MatrixXd m(1, 1);
        m(0, 0) = scalar_.integral();
        return m;
    }
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(dim_, dim_);
    for (int i = 0; i < dim_; ++i) {
        for (int j = i; j < dim_; ++j) {
            const double v = integrate_piecewise(
                [&](double u) { return eval_(u)(i, j); }, 0.0, 1.0, breaks_, tol);
            total(i, j) = v;
            total(j, i) = v;
        }
    }
    return total;
}

double MatrixPath::scalar_integrated() const {
    if (scalar_set_) return scalar_.integral();
    return integrated()(0, 0);
}

double MatrixPath::scalar_sup() const {
    if (scalar_set_) return scalar_.sup();
    // sample finely between breaks; adequate for the smooth paths we build
    double m = 0.0;
    for (int i = 0; i <= 1000; ++i) {
        m = std::max(m, eval_(i / 1000.0)(0, 0));
    }
    return m;
}

}  // namespace har
