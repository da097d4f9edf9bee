#pragma once

#include <array>
#include <cmath>
#include <type_traits>

namespace wlab {

// Truncated second-order polynomial in a scalar parameter t.
// Used to carry exact t-derivatives along straight variation paths.
struct TPoly {
    double a[3] = {0.0, 0.0, 0.0};

    TPoly() = default;
    TPoly(double v) { a[0] = v; }
    TPoly(double v0, double v1, double v2) { a[0] = v0; a[1] = v1; a[2] = v2; }

    double value() const { return a[0]; }
    double d1() const { return a[1]; }
    double d2() const { return 2.0 * a[2]; }

    TPoly& operator+=(const TPoly& o) { for (int i = 0; i < 3; ++i) a[i] += o.a[i]; return *this; }
    TPoly& operator-=(const TPoly& o) { for (int i = 0; i < 3; ++i) a[i] -= o.a[i]; return *this; }
    TPoly& operator*=(const TPoly& o) {
        TPoly r(a[0] * o.a[0], a[0] * o.a[1] + a[1] * o.a[0], a[0] * o.a[2] + a[1] * o.a[1] + a[2] * o.a[0]);
        *this = r;
        return *this;
    }
};

inline TPoly operator+(TPoly x, const TPoly& y) { return x += y; }
inline TPoly operator-(TPoly x, const TPoly& y) { return x -= y; }
inline TPoly operator*(TPoly x, const TPoly& y) { return x *= y; }
inline TPoly operator-(const TPoly& x) { return TPoly(-x.a[0], -x.a[1], -x.a[2]); }

// f(a0 + e) with e nilpotent of order 3, given f(a0), f'(a0), f''(a0)/2.
inline TPoly tcompose(const TPoly& x, double f0, double f1, double f2h) {
    double e1 = x.a[1], e2 = x.a[2];
    return TPoly(f0, f1 * e1, f1 * e2 + f2h * e1 * e1);
}
inline TPoly inv(const TPoly& x) {
    double v = x.a[0];
    return tcompose(x, 1.0 / v, -1.0 / (v * v), 1.0 / (v * v * v));
}
inline TPoly operator/(const TPoly& x, const TPoly& y) { return x * inv(y); }
inline TPoly sqrt(const TPoly& x) {
    double s = std::sqrt(x.a[0]);
    return tcompose(x, s, 0.5 / s, -0.125 / (s * x.a[0]));
}
inline TPoly log(const TPoly& x) {
    double v = x.a[0];
    return tcompose(x, std::log(v), 1.0 / v, -0.5 / (v * v));
}
inline TPoly exp(const TPoly& x) {
    double e = std::exp(x.a[0]);
    return tcompose(x, e, e, 0.5 * e);
}

inline double scalar_value(double x) { return x; }
inline double scalar_value(const TPoly& x) { return x.a[0]; }

template <class T>
T inv(const T& x) requires std::is_floating_point_v<T> { return T(1) / x; }

// Truncated bivariate Taylor jet. c[idx(i,j)] is the coefficient of dx^i dy^j.
template <int N, class T = double>
struct Jet {
    static constexpr int order = N;
    static constexpr int size = (N + 1) * (N + 2) / 2;
    std::array<T, size> c{};

    static constexpr int idx(int i, int j) { return (i + j) * (i + j + 1) / 2 + j; }

    Jet() { c.fill(T(0.0)); }
    Jet(const T& v) { c.fill(T(0.0)); c[0] = v; }

    static Jet variable(const T& v, int dir) {
        Jet r(v);
        if (N >= 1) r.c[dir == 0 ? idx(1, 0) : idx(0, 1)] = T(1.0);
        return r;
    }

    const T& value() const { return c[0]; }
    T coef(int i, int j) const { return (i + j <= N) ? c[idx(i, j)] : T(0.0); }

    // Partial derivative d^{i+j}/dx^i dy^j at the expansion point.
    T d(int i, int j) const {
        double f = 1.0;
        for (int k = 2; k <= i; ++k) f *= k;
        for (int k = 2; k <= j; ++k) f *= k;
        return coef(i, j) * T(f);
    }

    Jet& operator+=(const Jet& o) { for (int k = 0; k < size; ++k) c[k] += o.c[k]; return *this; }
    Jet& operator-=(const Jet& o) { for (int k = 0; k < size; ++k) c[k] -= o.c[k]; return *this; }
    Jet& operator*=(const T& s) { for (auto& x : c) x *= s; return *this; }
};

template <int N, class T>
Jet<N, T> operator+(Jet<N, T> a, const Jet<N, T>& b) { return a += b; }
template <int N, class T>
Jet<N, T> operator-(Jet<N, T> a, const Jet<N, T>& b) { return a -= b; }
template <int N, class T>
Jet<N, T> operator-(const Jet<N, T>& a) {
    Jet<N, T> r;
    for (int k = 0; k < Jet<N, T>::size; ++k) r.c[k] = -a.c[k];
    return r;
}
template <int N, class T>
Jet<N, T> operator*(Jet<N, T> a, const T& s) { return a *= s; }
template <int N, class T>
Jet<N, T> operator*(const T& s, Jet<N, T> a) { return a *= s; }
template <int N>
Jet<N, TPoly> operator*(Jet<N, TPoly> a, double s) { return a *= TPoly(s); }
template <int N>
Jet<N, TPoly> operator*(double s, Jet<N, TPoly> a) { return a *= TPoly(s); }
template <int N, class T>
Jet<N, T> operator+(Jet<N, T> a, const T& s) { a.c[0] += s; return a; }
template <int N, class T>
Jet<N, T> operator-(Jet<N, T> a, const T& s) { a.c[0] -= s; return a; }

template <int N, class T>
Jet<N, T> operator*(const Jet<N, T>& a, const Jet<N, T>& b) {
    using J = Jet<N, T>;
    J r;
    for (int da = 0; da <= N; ++da)
        for (int ja = 0; ja <= da; ++ja) {
            const T& ca = a.c[J::idx(da - ja, ja)];
            for (int db = 0; db + da <= N; ++db)
                for (int jb = 0; jb <= db; ++jb)
                    r.c[J::idx(da - ja + db - jb, ja + jb)] += ca * b.c[J::idx(db - jb, jb)];
        }
    return r;
}

// f(a + e) = sum_k f_k e^k where f_k = f^{(k)}(a)/k!
template <int N, class T>
Jet<N, T> compose(const Jet<N, T>& a, const std::array<T, N + 1>& f) {
    Jet<N, T> e = a;
    e.c[0] = T(0.0);
    Jet<N, T> r(f[N]);
    for (int k = N - 1; k >= 0; --k) {
        r = r * e;
        r.c[0] += f[k];
    }
    return r;
}

template <int N, class T>
Jet<N, T> inv(const Jet<N, T>& a) {
    std::array<T, N + 1> f;
    T iv = inv(a.c[0]);
    T p = iv;
    for (int k = 0; k <= N; ++k) {
        f[k] = (k % 2 == 0) ? p : -p;
        p = p * iv;
    }
    return compose(a, f);
}
template <int N, class T>
Jet<N, T> operator/(const Jet<N, T>& a, const Jet<N, T>& b) { return a * inv(b); }

template <int N, class T>
Jet<N, T> sqrt(const Jet<N, T>& a) {
    using std::sqrt;
    std::array<T, N + 1> f;
    T s = sqrt(a.c[0]);
    T iv = inv(a.c[0]);
    T p = s;
    double binom = 1.0;
    for (int k = 0; k <= N; ++k) {
        f[k] = p * T(binom);
        binom *= (0.5 - k) / (k + 1);
        p = p * iv;
    }
    return compose(a, f);
}

template <int N, class T>
Jet<N, T> log(const Jet<N, T>& a) {
    using std::log;
    std::array<T, N + 1> f;
    f[0] = log(a.c[0]);
    T iv = inv(a.c[0]);
    T p = iv;
    for (int k = 1; k <= N; ++k) {
        f[k] = p * T(((k % 2) ? 1.0 : -1.0) / k);
        p = p * iv;
    }
    return compose(a, f);
}

template <int N, class T>
Jet<N, T> exp(const Jet<N, T>& a) {
    using std::exp;
    std::array<T, N + 1> f;
    T e = exp(a.c[0]);
    double fact = 1.0;
    for (int k = 0; k <= N; ++k) {
        f[k] = e * T(1.0 / fact);
        fact *= (k + 1);
    }
    return compose(a, f);
}

// Exact partial derivative as a jet one order lower.
template <int N, class T>
Jet<N - 1, T> partial(const Jet<N, T>& a, int dir) {
    using J = Jet<N, T>;
    using R = Jet<N - 1, T>;
    R r;
    for (int d = 0; d <= N - 1; ++d)
        for (int j = 0; j <= d; ++j) {
            int i = d - j;
            if (dir == 0)
                r.c[R::idx(i, j)] = a.c[J::idx(i + 1, j)] * T(double(i + 1));
            else
                r.c[R::idx(i, j)] = a.c[J::idx(i, j + 1)] * T(double(j + 1));
        }
    return r;
}

// Drop terms above order M.
template <int M, int N, class T>
Jet<M, T> truncate(const Jet<N, T>& a) {
    static_assert(M <= N);
    Jet<M, T> r;
    for (int d = 0; d <= M; ++d)
        for (int j = 0; j <= d; ++j) r.c[Jet<M, T>::idx(d - j, j)] = a.c[Jet<N, T>::idx(d - j, j)];
    return r;
}

template <int N>
Jet<N, TPoly> lift_t(const Jet<N, double>& a, const Jet<N, double>& b) {
    Jet<N, TPoly> r;
    for (int k = 0; k < Jet<N>::size; ++k) r.c[k] = TPoly(a.c[k], b.c[k], 0.0);
    return r;
}

}  // namespace wlab
