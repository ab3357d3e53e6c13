#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace har {

/// Piecewise-linear scalar function on [0,1]. Segments are contiguous and
/// right-continuous: a point sitting exactly on a break evaluates the segment
/// to its right. Constant paths are single segments with equal endpoints.
class ScalarPath {
  public:
    struct Segment {
        double u_start;
        double u_end;
        double value_start;
        double value_end;
    };

    ScalarPath() : ScalarPath(0.0) {}
    explicit ScalarPath(double constant_value);
    explicit ScalarPath(std::vector<Segment> segments);

    double operator()(double u) const;

    /// True when u coincides with an interior segment boundary at which the
    /// path value jumps.
    bool at_break(double u) const;
    std::vector<double> interior_breaks() const;

    double integral() const;               // over [0,1], closed form
    double integral_to(double u) const;    // over [0,u]
    bool constant_on(double a, double b) const;
    double sup() const;
    double inf() const;
    double sup_abs() const;

    const std::vector<Segment>& segments() const { return segments_; }

  private:
    std::vector<Segment> segments_;
};

/// PSD square root of a symmetric matrix: Cholesky when positive definite,
/// eigenvalue-clipped symmetric root otherwise.
Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m);

/// A p x p matrix-valued path on [0,1]. Used both for the local long-run
/// variance curve Omega(u) (with Sigma(u) its PSD square root) and for the
/// regressor second-moment curve Q(u). Scalar paths keep a closed-form
/// representation; general paths carry an evaluator plus their break points.
class MatrixPath {
  public:
    static MatrixPath scalar(ScalarPath values);
    static MatrixPath constant(const Eigen::MatrixXd& value);
    static MatrixPath general(int dim, std::vector<double> breaks,
                              std::function<Eigen::MatrixXd(double)> eval);

    int dim() const { return dim_; }
    bool is_scalar() const { return dim_ == 1 && scalar_set_; }

    Eigen::MatrixXd value(double u) const;
    double scalar_value(double u) const;

    /// PSD square root of value(u).
    Eigen::MatrixXd sqrt_value(double u) const;
    double scalar_sqrt(double u) const;

    Eigen::MatrixXd integrated(double tol = 1e-10) const;
    double scalar_integrated() const;

    double scalar_sup() const;
    const std::vector<double>& breaks() const { return breaks_; }

  private:
    MatrixPath() = default;

    int dim_ = 1;
    bool scalar_set_ = false;
    ScalarPath scalar_;
    std::vector<double> breaks_;
    std::function<Eigen::MatrixXd(double)> eval_;
};

using VariancePath = MatrixPath;         // Omega(u), PSD at every point
using RegressorMomentPath = MatrixPath;  // Q(u), positive definite

}  // namespace har
