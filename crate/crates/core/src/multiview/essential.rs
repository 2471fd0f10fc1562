//! Five-point relative pose: essential matrix estimation and decomposition.
//!
//! The solver follows the classic nullspace formulation. The four-dimensional nullspace
//! of the epipolar constraints gives `E = xX + yY + zZ + W`; the rank and trace
//! constraints produce ten cubics in `(x, y, z)`, which are reduced by Gauss-Jordan
//! elimination to a 3×3 polynomial matrix in `z` whose determinant is a degree-10
//! polynomial. Its real roots are found with companion-matrix eigenvalues, and every
//! root is polished by Gauss-Newton on the ten original cubics.

use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{skew, Pose};
use crate::poly;
use crate::scalar::Real;

/// A pair of unit bearing vectors observing the same point from views `a` and `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence<T: Real> {
    pub a: Vector3<T>,
    pub b: Vector3<T>,
}

impl<T: Real> Correspondence<T> {
    pub fn new(a: Vector3<T>, b: Vector3<T>) -> Self {
        Self {
            a: a.normalize(),
            b: b.normalize(),
        }
    }
}

/// Essential matrix with the epipolar constraint `bᵀ E a = 0`, `E = [t]× R` for
/// `x_b = R x_a + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix<T: Real> {
    e: Matrix3<T>,
}

impl<T: Real> EssentialMatrix<T> {
    /// Projects an arbitrary matrix onto the essential manifold (singular values
    /// `(σ, σ, 0)`, unit Frobenius norm).
    pub fn from_matrix(m: &Matrix3<T>) -> Option<Self> {
        let svd = m.svd(true, true);
        let (u, v_t) = (svd.u?, svd.v_t?);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| {
            svd.singular_values[j]
                .partial_cmp(&svd.singular_values[i])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let s = (svd.singular_values[order[0]] + svd.singular_values[order[1]]) / T::lit(2.0);
        if !(s > T::zero()) {
            return None;
        }
        let u0 = u.column(order[0]);
        let u1 = u.column(order[1]);
        let v0 = v_t.row(order[0]);
        let v1 = v_t.row(order[1]);
        let e = (u0 * v0 + u1 * v1) / T::lit(std::f64::consts::SQRT_2);
        Some(Self { e })
    }

    /// `[t]× R` for the relative pose taking view `a` coordinates to view `b`.
    pub fn from_pose(pose: &Pose<T>) -> Self {
        let e = skew(&pose.translation) * pose.rotation_matrix();
        let n = e.norm();
        Self { e: e / n }
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.e
    }

    /// Algebraic residual `bᵀ E a`.
    pub fn algebraic_residual(&self, c: &Correspondence<T>) -> T {
        c.b.dot(&(self.e * c.a))
    }

    /// Mean of the angles between each bearing and the epipolar plane induced by the other.
    pub fn angular_residual(&self, c: &Correspondence<T>) -> T {
        let ea = self.e * c.a;
        let etb = self.e.transpose() * c.b;
        let r = self.algebraic_residual(c).abs();
        let angle = |n: T| {
            if n > T::zero() {
                (r / n).min(T::one()).asin()
            } else {
                T::frac_pi_2()
            }
        };
        (angle(ea.norm()) + angle(etb.norm())) / T::lit(2.0)
    }

    /// `2 E Eᵀ E − tr(E Eᵀ) E`, zero for a valid essential matrix.
    pub fn trace_constraint(&self) -> Matrix3<T> {
        let eet = self.e * self.e.transpose();
        eet * self.e * T::lit(2.0) - self.e * eet.trace()
    }
}

// Monomials of degree <= 3 in (x, y, z), ordered so that Gauss-Jordan elimination on the
// first ten columns exposes the rows needed for the hidden-variable step.
const MONOMIALS: [(u8, u8, u8); 20] = [
    (3, 0, 0),
    (0, 3, 0),
    (2, 1, 0),
    (1, 2, 0),
    (2, 0, 1),
    (2, 0, 0),
    (0, 2, 1),
    (0, 2, 0),
    (1, 1, 1),
    (1, 1, 0),
    (1, 0, 2),
    (1, 0, 1),
    (1, 0, 0),
    (0, 1, 2),
    (0, 1, 1),
    (0, 1, 0),
    (0, 0, 3),
    (0, 0, 2),
    (0, 0, 1),
    (0, 0, 0),
];

const X: usize = 12;
const Y: usize = 15;
const Z: usize = 18;
const ONE: usize = 19;

fn monomial_index(e: (u8, u8, u8)) -> usize {
    MONOMIALS
        .iter()
        .position(|m| *m == e)
        .expect("monomial degree exceeds 3")
}

/// Polynomial of total degree <= 3 in (x, y, z).
type Poly<T> = SVector<T, 20>;

fn poly_mul<T: Real>(p: &Poly<T>, q: &Poly<T>) -> Poly<T> {
    let mut out = Poly::zeros();
    for (i, a) in p.iter().enumerate() {
        if *a == T::zero() {
            continue;
        }
        for (j, b) in q.iter().enumerate() {
            if *b == T::zero() {
                continue;
            }
            let (mi, mj) = (MONOMIALS[i], MONOMIALS[j]);
            let k = monomial_index((mi.0 + mj.0, mi.1 + mj.1, mi.2 + mj.2));
            out[k] += *a * *b;
        }
    }
    out
}

fn poly_eval_grad<T: Real>(p: &Poly<T>, v: &Vector3<T>) -> (T, Vector3<T>) {
    let pw = |b: T, e: u8| -> T {
        match e {
            0 => T::one(),
            1 => b,
            2 => b * b,
            _ => b * b * b,
        }
    };
    let mut val = T::zero();
    let mut grad = Vector3::zeros();
    for (c, &(a, b, d)) in p.iter().zip(MONOMIALS.iter()) {
        if *c == T::zero() {
            continue;
        }
        let (px, py, pz) = (pw(v.x, a), pw(v.y, b), pw(v.z, d));
        val += *c * px * py * pz;
        if a > 0 {
            grad.x += *c * T::lit(a as f64) * pw(v.x, a - 1) * py * pz;
        }
        if b > 0 {
            grad.y += *c * T::lit(b as f64) * px * pw(v.y, b - 1) * pz;
        }
        if d > 0 {
            grad.z += *c * T::lit(d as f64) * px * py * pw(v.z, d - 1);
        }
    }
    (val, grad)
}

fn upoly_mul<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += *x * *y;
        }
    }
    out
}

fn upoly_add<T: Real>(a: &[T], b: &[T], sign: T) -> Vec<T> {
    let mut out = vec![T::zero(); a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += *x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += sign * *y;
    }
    out
}

fn upoly_eval<T: Real>(a: &[T], z: T) -> T {
    poly::eval_with_derivative(a, z).0
}

/// All essential matrices consistent with five bearing correspondences.
pub fn essential_5pt<T: Real>(
    bearings_a: &[Vector3<T>],
    bearings_b: &[Vector3<T>],
) -> Result<Vec<EssentialMatrix<T>>> {
    if bearings_a.len() != 5 || bearings_b.len() != 5 {
        return Err(Error::InsufficientData {
            needed: 5,
            got: bearings_a.len().min(bearings_b.len()),
        });
    }
    // Epipolar constraints, E stored row-major.
    let mut q = SMatrix::<T, 9, 9>::zeros();
    for i in 0..5 {
        let a = bearings_a[i].normalize();
        let b = bearings_b[i].normalize();
        for r in 0..3 {
            for c in 0..3 {
                q[(i, 3 * r + c)] = b[r] * a[c];
            }
        }
    }
    let svd = q.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::NonFinite("five-point SVD"))?;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let s = &svd.singular_values;
    if !(s[order[4]] > T::lit(1e-9) * s[order[0]]) {
        return Err(Error::Degenerate("five-point constraints are rank deficient"));
    }
    let basis: Vec<Matrix3<T>> = order[5..]
        .iter()
        .map(|&k| {
            let row = v_t.row(k);
            Matrix3::from_fn(|r, c| row[3 * r + c])
        })
        .collect();

    // E as a matrix of linear polynomials.
    let e_poly: [[Poly<T>; 3]; 3] = std::array::from_fn(|r| {
        std::array::from_fn(|c| {
            let mut p = Poly::zeros();
            p[X] = basis[0][(r, c)];
            p[Y] = basis[1][(r, c)];
            p[Z] = basis[2][(r, c)];
            p[ONE] = basis[3][(r, c)];
            p
        })
    });
    let mut constraints = SMatrix::<T, 10, 20>::zeros();
    let e = &e_poly;
    let det = poly_mul(&e[0][0], &(poly_mul(&e[1][1], &e[2][2]) - poly_mul(&e[1][2], &e[2][1])))
        - poly_mul(&e[0][1], &(poly_mul(&e[1][0], &e[2][2]) - poly_mul(&e[1][2], &e[2][0])))
        + poly_mul(&e[0][2], &(poly_mul(&e[1][0], &e[2][1]) - poly_mul(&e[1][1], &e[2][0])));
    constraints.row_mut(0).copy_from(&det.transpose());
    let eet: [[Poly<T>; 3]; 3] = std::array::from_fn(|i| {
        std::array::from_fn(|j| (0..3).fold(Poly::zeros(), |acc, k| acc + poly_mul(&e[i][k], &e[j][k])))
    });
    let trace = eet[0][0] + eet[1][1] + eet[2][2];
    for i in 0..3 {
        for j in 0..3 {
            let eete = (0..3).fold(Poly::zeros(), |acc, k| acc + poly_mul(&eet[i][k], &e[k][j]));
            let row = eete * T::lit(2.0) - poly_mul(&trace, &e[i][j]);
            constraints.row_mut(1 + 3 * i + j).copy_from(&row.transpose());
        }
    }

    // Gauss-Jordan on the first ten columns.
    let lead: DMatrix<T> = DMatrix::from_fn(10, 10, |r, c| constraints[(r, c)]);
    let full: DMatrix<T> = DMatrix::from_fn(10, 20, |r, c| constraints[(r, c)]);
    let reduced = lead
        .lu()
        .solve(&full)
        .ok_or(Error::Degenerate("five-point elimination is singular"))?;

    // Row pairs (x²z, x²), (y²z, y²), (xyz, xy) give z-polynomial rows of B(z) [x y 1]ᵀ = 0.
    let hidden = |er: usize, fr: usize| -> [Vec<T>; 3] {
        let e = |c: usize| reduced[(er, c)];
        let f = |c: usize| reduced[(fr, c)];
        [
            vec![e(12), e(11) - f(12), e(10) - f(11), -f(10)],
            vec![e(15), e(14) - f(15), e(13) - f(14), -f(13)],
            vec![e(19), e(18) - f(19), e(17) - f(18), e(16) - f(17), -f(16)],
        ]
    };
    let b = [hidden(4, 5), hidden(6, 7), hidden(8, 9)];
    let m = |r: usize, c: usize| b[r][c].as_slice();
    let minor = |r1: usize, r2: usize, c1: usize, c2: usize| {
        upoly_add(
            &upoly_mul(m(r1, c1), m(r2, c2)),
            &upoly_mul(m(r1, c2), m(r2, c1)),
            -T::one(),
        )
    };
    let det_z = upoly_add(
        &upoly_add(
            &upoly_mul(m(0, 0), &minor(1, 2, 1, 2)),
            &upoly_mul(m(0, 1), &minor(1, 2, 0, 2)),
            -T::one(),
        ),
        &upoly_mul(m(0, 2), &minor(1, 2, 0, 1)),
        T::one(),
    );

    let mut solutions = Vec::new();
    for z in poly::real_roots(&det_z, T::lit(1e-8)) {
        let bz = Matrix3::from_fn(|r, c| upoly_eval(m(r, c), z));
        let candidates = [
            bz.row(0).transpose().cross(&bz.row(1).transpose()),
            bz.row(0).transpose().cross(&bz.row(2).transpose()),
            bz.row(1).transpose().cross(&bz.row(2).transpose()),
        ];
        let v = candidates
            .iter()
            .max_by(|a, b| {
                a.norm()
                    .partial_cmp(&b.norm())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .copied()
            .unwrap_or_else(Vector3::zeros);
        if v.z.abs() <= T::machine_eps() * v.norm() {
            continue;
        }
        let mut xyz = Vector3::new(v.x / v.z, v.y / v.z, z);
        polish_root(&constraints, &mut xyz);
        let em = basis[0] * xyz.x + basis[1] * xyz.y + basis[2] * xyz.z + basis[3];
        if let Some(ess) = EssentialMatrix::from_matrix(&em) {
            solutions.push(ess);
        }
    }
    Ok(solutions)
}

/// Gauss-Newton on the ten cubic constraints.
fn polish_root<T: Real>(constraints: &SMatrix<T, 10, 20>, xyz: &mut Vector3<T>) {
    let eval = |v: &Vector3<T>| -> (SVector<T, 10>, SMatrix<T, 10, 3>) {
        let mut f = SVector::<T, 10>::zeros();
        let mut j = SMatrix::<T, 10, 3>::zeros();
        for r in 0..10 {
            let p: Poly<T> = constraints.row(r).transpose();
            let (val, grad) = poly_eval_grad(&p, v);
            f[r] = val;
            j.row_mut(r).copy_from(&grad.transpose());
        }
        (f, j)
    };
    let (mut f, mut j) = eval(xyz);
    for _ in 0..6 {
        let jtj = j.transpose() * j;
        let Some(step) = jtj.try_inverse().map(|inv| inv * (j.transpose() * f)) else {
            return;
        };
        let next = *xyz - step;
        let (fn_, jn) = eval(&next);
        if !(fn_.norm() < f.norm()) {
            return;
        }
        *xyz = next;
        f = fn_;
        j = jn;
    }
}

/// Depths `(d_a, d_b)` along the two bearings of the least-squares ray intersection for
/// `x_b = R x_a + t`.
fn ray_depths<T: Real>(r: &Matrix3<T>, t: &Vector3<T>, c: &Correspondence<T>) -> Option<(T, T)> {
    let ra = r * c.a;
    // d_b b - d_a Ra = t
    let a11 = ra.dot(&ra);
    let a12 = -ra.dot(&c.b);
    let a22 = c.b.dot(&c.b);
    let det = a11 * a22 - a12 * a12;
    if det <= T::lit(1e-14) * a11 * a22 {
        return None;
    }
    let r1 = -ra.dot(t);
    let r2 = c.b.dot(t);
    let da = (a22 * r1 - a12 * r2) / det;
    let db = (a11 * r2 - a12 * r1) / det;
    Some((da, db))
}

fn count_in_front<T: Real>(r: &Matrix3<T>, t: &Vector3<T>, matches: &[Correspondence<T>]) -> usize {
    matches
        .iter()
        .filter(|c| matches!(ray_depths(r, t, c), Some((da, db)) if da > T::zero() && db > T::zero()))
        .count()
}

/// Picks the factorization of `E` placing most correspondences in front of both cameras.
///
/// View `a` is the reference frame; the returned pose maps `a` coordinates into view `b`
/// and has a unit-norm translation.
pub fn decompose_essential<T: Real>(
    e: &EssentialMatrix<T>,
    matches: &[Correspondence<T>],
) -> Result<(Pose<T>, usize)> {
    if matches.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let svd = e.matrix().svd(true, true);
    let (mut u, mut v_t) = (
        svd.u.ok_or(Error::NonFinite("essential SVD"))?,
        svd.v_t.ok_or(Error::NonFinite("essential SVD"))?,
    );
    // Order singular values descending so the null direction is the last column.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    u = Matrix3::from_columns(&[u.column(order[0]), u.column(order[1]), u.column(order[2])]);
    v_t = Matrix3::from_rows(&[v_t.row(order[0]), v_t.row(order[1]), v_t.row(order[2])]);
    if u.determinant() < T::zero() {
        u = -u;
    }
    if v_t.determinant() < T::zero() {
        v_t = -v_t;
    }
    let w = Matrix3::new(
        T::zero(),
        -T::one(),
        T::zero(),
        T::one(),
        T::zero(),
        T::zero(),
        T::zero(),
        T::zero(),
        T::one(),
    );
    let r1 = u * w * v_t;
    let r2 = u * w.transpose() * v_t;
    let t = u.column(2).normalize();
    let candidates = [(r1, t), (r1, -t), (r2, t), (r2, -t)];
    let (best, count) = candidates
        .iter()
        .map(|(r, t)| ((*r, *t), count_in_front(r, t, matches)))
        .max_by_key(|(_, c)| *c)
        .expect("four candidates");
    if 2 * count <= matches.len() {
        return Err(Error::AmbiguousDecomposition);
    }
    let mut pose = Pose::from_rotation_matrix(&best.0, best.1);
    pose.translation = pose.translation.normalize();
    Ok((pose, count))
}
