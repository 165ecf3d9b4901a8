#include "mergerlab/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "mergerlab/errors.hpp"

namespace mergerlab {

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Mat Mat::transposed() const {
    Mat t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Vec Mat::row(std::size_t r) const {
    return Vec(a_.begin() + static_cast<std::ptrdiff_t>(r * cols_),
               a_.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols_));
}

Vec matvec(const Mat& m, const Vec& v) {
    if (v.size() != m.cols()) throw InvalidInput("matvec: dimension mismatch");
    Vec out(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) s += m(r, c) * v[c];
        out[r] = s;
    }
    return out;
}

namespace {

// LU with partial pivoting; returns false on exact singularity.
bool lu_factor(Mat& a, std::vector<std::size_t>& piv) {
    const std::size_t n = a.rows();
    piv.resize(n);
    for (std::size_t i = 0; i < n; ++i) piv[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t imax = k;
        double vmax = std::abs(a(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(a(i, k)) > vmax) {
                vmax = std::abs(a(i, k));
                imax = i;
            }
        }
        if (vmax == 0.0) return false;
        if (imax != k) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(imax, c));
            std::swap(piv[k], piv[imax]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            a(i, k) /= a(k, k);
            const double f = a(i, k);
            for (std::size_t c = k + 1; c < n; ++c) a(i, c) -= f * a(k, c);
        }
    }
    return true;
}

void lu_backsolve(const Mat& lu, const std::vector<std::size_t>& piv,
                  const Vec& b, Vec& x) {
    const std::size_t n = lu.rows();
    x.resize(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[piv[i]];
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) x[i] -= lu(i, j) * x[j];
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = i + 1; j < n; ++j) x[i] -= lu(i, j) * x[j];
        x[i] /= lu(i, i);
    }
}

double row_sum_norm(const Mat& a) {
    double m = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) s += std::abs(a(r, c));
        m = std::max(m, s);
    }
    return m;
}

}  // namespace

bool lu_solve(const Mat& a, const Vec& b, Vec& x, double cond_limit) {
    if (a.rows() != a.cols() || b.size() != a.rows())
        throw InvalidInput("lu_solve: dimension mismatch");
    const std::size_t n = a.rows();
    Mat lu = a;
    std::vector<std::size_t> piv;
    if (!lu_factor(lu, piv)) return false;

    // cond_inf(A) = ||A||_inf * ||A^-1||_inf, exact inverse (n <= 5 here).
    Mat inv(n, n);
    Vec e(n, 0.0), col;
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        lu_backsolve(lu, piv, e, col);
        for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
        e[j] = 0.0;
    }
    if (row_sum_norm(a) * row_sum_norm(inv) > cond_limit) return false;
    lu_backsolve(lu, piv, b, x);
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

Vec qr_least_squares(const Mat& a, const Vec& b) {
    const std::size_t m = a.rows(), n = a.cols();
    if (b.size() != m || m < n) throw InvalidInput("qr_least_squares: bad dimensions");
    Mat r = a;
    Vec y = b;
    Vec v(m);
    for (std::size_t k = 0; k < n; ++k) {
        double norm = 0.0;
        for (std::size_t i = k; i < m; ++i) norm += r(i, k) * r(i, k);
        norm = std::sqrt(norm);
        if (norm == 0.0) throw RankDeficientDesign("qr: zero column");
        const double alpha = r(k, k) >= 0 ? -norm : norm;
        double vnorm2 = 0.0;
        for (std::size_t i = k; i < m; ++i) {
            v[i] = r(i, k) - (i == k ? alpha : 0.0);
            vnorm2 += v[i] * v[i];
        }
        if (vnorm2 == 0.0) continue;
        for (std::size_t c = k; c < n; ++c) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += v[i] * r(i, c);
            s *= 2.0 / vnorm2;
            for (std::size_t i = k; i < m; ++i) r(i, c) -= s * v[i];
        }
        double s = 0.0;
        for (std::size_t i = k; i < m; ++i) s += v[i] * y[i];
        s *= 2.0 / vnorm2;
        for (std::size_t i = k; i < m; ++i) y[i] -= s * v[i];
    }
    double rmax = 0.0;
    for (std::size_t k = 0; k < n; ++k) rmax = std::max(rmax, std::abs(r(k, k)));
    Vec x(n);
    for (std::size_t i = n; i-- > 0;) {
        if (std::abs(r(i, i)) < 1e-12 * rmax)
            throw RankDeficientDesign("qr: rank-deficient design matrix");
        double s = y[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= r(i, j) * x[j];
        x[i] = s / r(i, i);
    }
    return x;
}

Mat cholesky_lower(const Mat& a) {
    if (a.rows() != a.cols()) throw InvalidInput("cholesky: not square");
    const std::size_t n = a.rows();
    Mat l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0) throw InvalidInput("cholesky: matrix not positive definite");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

double norm_inf(const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace mergerlab
