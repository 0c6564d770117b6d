//! Small fixed-size linear algebra for 4×4 symmetric tensors and 2-forms.

use nalgebra::{Matrix4, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

pub type Mat4 = [[f64; 4]; 4];

/// Packed order of the 10 independent components of a symmetric 4×4 tensor.
pub const SYM_PAIRS: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

/// Packed position of the symmetric pair `(i, j)`.
pub const SYM_INDEX: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 4, 5, 6], [2, 5, 7, 8], [3, 6, 8, 9]];

/// Ordered index pairs `i < j` spanning 2-forms in four dimensions.
pub const FORM_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// `FORM_INDEX[i][j]` is `Some((pair, sign))` with `e_i ∧ e_j = sign · e_pair`.
pub const FORM_INDEX: [[Option<(usize, f64)>; 4]; 4] = {
    let mut t = [[None; 4]; 4];
    let mut p = 0;
    while p < 6 {
        let (i, j) = FORM_PAIRS[p];
        t[i][j] = Some((p, 1.0));
        t[j][i] = Some((p, -1.0));
        p += 1;
    }
    t
};

/// Symmetric 4×4 tensor stored by its 10 independent components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sym4(pub [f64; 10]);

impl Sym4 {
    pub const ZERO: Sym4 = Sym4([0.0; 10]);

    pub fn identity() -> Self {
        let mut s = [0.0; 10];
        s[0] = 1.0;
        s[4] = 1.0;
        s[7] = 1.0;
        s[9] = 1.0;
        Sym4(s)
    }

    pub fn diagonal(d: [f64; 4]) -> Self {
        let mut s = Self::ZERO;
        for (k, v) in d.iter().enumerate() {
            s.0[SYM_INDEX[k][k]] = *v;
        }
        s
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[SYM_INDEX[i][j]]
    }

    #[inline]
    pub fn to_full(&self) -> Mat4 {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.0[SYM_INDEX[i][j]];
            }
        }
        m
    }

    /// Symmetrizes `m` while packing.
    #[inline]
    pub fn from_full(m: &Mat4) -> Self {
        let mut s = [0.0; 10];
        for (k, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            s[k] = 0.5 * (m[i][j] + m[j][i]);
        }
        Sym4(s)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut s = self.0;
        s.iter_mut().for_each(|v| *v *= c);
        Sym4(s)
    }

    pub fn add(&self, o: &Sym4) -> Self {
        let mut s = self.0;
        s.iter_mut().zip(o.0.iter()).for_each(|(a, b)| *a += b);
        Sym4(s)
    }

    pub fn sub(&self, o: &Sym4) -> Self {
        let mut s = self.0;
        s.iter_mut().zip(o.0.iter()).for_each(|(a, b)| *a -= b);
        Sym4(s)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Multiplicity of each packed component in a full double contraction.
    #[inline]
    pub fn multiplicity(k: usize) -> f64 {
        let (i, j) = SYM_PAIRS[k];
        if i == j {
            1.0
        } else {
            2.0
        }
    }
}

#[inline]
pub fn to_na(m: &Mat4) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| m[i][j])
}

#[inline]
pub fn from_na(m: &Matrix4<f64>) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

/// Lower Cholesky factor of a symmetric matrix, `None` unless strictly positive definite.
pub fn cholesky(m: &Mat4) -> Option<Mat4> {
    let mut l = [[0.0; 4]; 4];
    for j in 0..4 {
        let mut d = m[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[j][j] = ljj;
        for i in (j + 1)..4 {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / ljj;
        }
    }
    Some(l)
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(l: &Mat4) -> Mat4 {
    let mut inv = [[0.0; 4]; 4];
    for col in 0..4 {
        for i in col..4 {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                s -= l[i][k] * inv[k][col];
            }
            inv[i][col] = s / l[i][i];
        }
    }
    inv
}

/// Inverse and determinant of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse_det(m: &Mat4) -> Option<(Mat4, f64)> {
    let l = cholesky(m)?;
    let li = lower_inverse(&l);
    let mut inv = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in i..4 {
            let mut s = 0.0;
            for k in j..4 {
                s += li[k][i] * li[k][j];
            }
            inv[i][j] = s;
            inv[j][i] = s;
        }
    }
    let det = (l[0][0] * l[1][1] * l[2][2] * l[3][3]).powi(2);
    Some((inv, det))
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &Mat4) -> [f64; 4] {
    let e = SymmetricEigen::new(to_na(m));
    let mut v = [
        e.eigenvalues[0],
        e.eigenvalues[1],
        e.eigenvalues[2],
        e.eigenvalues[3],
    ];
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    v
}

#[inline]
pub fn matmul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            for j in 0..4 {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

#[inline]
pub fn transpose(a: &Mat4) -> Mat4 {
    let mut t = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            t[i][j] = a[j][i];
        }
    }
    t
}

/// Quadratic form `vᵀ m v`.
#[inline]
pub fn quad(m: &Mat4, v: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            s += m[i][j] * v[i] * v[j];
        }
    }
    s
}

#[inline]
pub fn bilinear(m: &Mat4, u: &[f64; 4], v: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            s += m[i][j] * u[i] * v[j];
        }
    }
    s
}

#[inline]
pub fn mat_vec(m: &Mat4, v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i] += m[i][j] * v[j];
        }
    }
    out
}

/// Action of a 4×4 matrix on 2-forms: `(Λ²F)_{(ab),(ij)} = F_ai F_bj − F_aj F_bi`.
pub fn wedge_square(f: &Mat4) -> [[f64; 6]; 6] {
    let mut w = [[0.0; 6]; 6];
    for (p, &(a, b)) in FORM_PAIRS.iter().enumerate() {
        for (q, &(i, j)) in FORM_PAIRS.iter().enumerate() {
            w[p][q] = f[a][i] * f[b][j] - f[a][j] * f[b][i];
        }
    }
    w
}

/// Gram–Schmidt orthonormalization of `vectors` with respect to the metric `g`.
/// Vectors that become numerically dependent are dropped.
pub fn gram_schmidt(g: &Mat4, vectors: &[[f64; 4]]) -> alloc::vec::Vec<[f64; 4]> {
    let mut basis: alloc::vec::Vec<[f64; 4]> = alloc::vec::Vec::new();
    for v in vectors {
        let mut w = *v;
        for _ in 0..2 {
            for b in &basis {
                let c = bilinear(g, &w, b);
                for k in 0..4 {
                    w[k] -= c * b[k];
                }
            }
        }
        let n = quad(g, &w).sqrt();
        if n > 1e-10 {
            for x in w.iter_mut() {
                *x /= n;
            }
            basis.push(w);
        }
    }
    basis
}

/// Solves the dense 4×4 system `a x = b` by partial-pivot elimination.
pub fn solve4(a: &Mat4, b: &[f64; 4]) -> Option<[f64; 4]> {
    let m = to_na(a);
    let rhs = nalgebra::Vector4::new(b[0], b[1], b[2], b[3]);
    let x = m.lu().solve(&rhs)?;
    Some([x[0], x[1], x[2], x[3]])
}

pub fn inverse4(a: &Mat4) -> Option<Mat4> {
    to_na(a).try_inverse().map(|m| from_na(&m))
}

pub fn det4(a: &Mat4) -> f64 {
    to_na(a).determinant()
}
