#pragma once

#include <cstddef>
#include <vector>

namespace mergerlab {

using Vec = std::vector<double>;

// Dense row-major matrix. Markets hold at most a handful of products and the
// regression designs are narrow, so everything here is plain dense algebra.
class Mat {
public:
    Mat() : rows_(0), cols_(0) {}
    Mat(std::size_t r, std::size_t c, double fill = 0.0)
        : rows_(r), cols_(c), a_(r * c, fill) {}

    static Mat identity(std::size_t n);
    static Mat constant(std::size_t r, std::size_t c, double v) { return Mat(r, c, v); }

    double& operator()(std::size_t r, std::size_t c) { return a_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a_[r * cols_ + c]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    const std::vector<double>& data() const { return a_; }
    std::vector<double>& data() { return a_; }

    Mat transposed() const;
    Vec row(std::size_t r) const;

    bool operator==(const Mat& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && a_ == o.a_;
    }

private:
    std::size_t rows_, cols_;
    std::vector<double> a_;
};

Vec matvec(const Mat& m, const Vec& v);

// Solves A x = b by partial-pivoting LU. Throws InvalidInput on dimension
// mismatch. Returns false (instead of garbage) when the matrix is singular or
// the infinity-norm condition estimate exceeds cond_limit.
bool lu_solve(const Mat& a, const Vec& b, Vec& x, double cond_limit = 1e12);

// Least squares via Householder QR; throws RankDeficientDesign when a
// diagonal of R collapses relative to the largest one.
Vec qr_least_squares(const Mat& a, const Vec& b);

// Lower Cholesky factor of a symmetric positive definite matrix.
Mat cholesky_lower(const Mat& a);

double norm_inf(const Vec& v);
double dot(const Vec& a, const Vec& b);

}  // namespace mergerlab
