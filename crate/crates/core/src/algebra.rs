//! Small dense complex matrices, Pauli algebra, the walk coins and the
//! chiral-representation Dirac matrices.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Result, WalkError};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Tolerance for exact algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-13;

/// Row-major dense N×N complex matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix<const N: usize>(pub [[C64; N]; N]);

pub type Complex2Matrix = Matrix<2>;
pub type Complex4Matrix = Matrix<4>;

impl<const N: usize> Matrix<N> {
    pub fn zeros() -> Self {
        Matrix([[ZERO; N]; N])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = ONE;
        }
        m
    }

    pub fn diag(d: [C64; N]) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = d[i];
        }
        m
    }

    pub fn dagger(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..N).map(|i| self.0[i][i]).sum()
    }

    pub fn apply(&self, v: &[C64; N]) -> [C64; N] {
        let mut out = [ZERO; N];
        for i in 0..N {
            let mut acc = ZERO;
            for j in 0..N {
                acc += self.0[i][j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..N {
            for j in 0..N {
                d = d.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        d
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    /// ‖U·U† − I‖_max.
    pub fn unitarity_defect(&self) -> f64 {
        (*self * self.dagger()).max_abs_diff(&Self::identity())
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.dagger()) <= tol
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut out = Self::identity();
        for _ in 0..n {
            out = out * *self;
        }
        out
    }

    pub fn determinant(&self) -> C64 {
        // Gaussian elimination with partial pivoting.
        let mut a = self.0;
        let mut det = ONE;
        for col in 0..N {
            let pivot = (col..N)
                .max_by(|&r, &s| a[r][col].norm().total_cmp(&a[s][col].norm()))
                .unwrap();
            if a[pivot][col].norm() == 0.0 {
                return ZERO;
            }
            if pivot != col {
                a.swap(pivot, col);
                det = -det;
            }
            det *= a[col][col];
            for r in col + 1..N {
                let f = a[r][col] / a[col][col];
                for c in col..N {
                    let v = a[col][c];
                    a[r][c] -= f * v;
                }
            }
        }
        det
    }
}

impl<const N: usize> Mul for Matrix<N> {
    type Output = Matrix<N>;
    fn mul(self, rhs: Matrix<N>) -> Matrix<N> {
        let mut m = Matrix::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.0[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..N {
                    m.0[i][j] += a * rhs.0[k][j];
                }
            }
        }
        m
    }
}

impl<const N: usize> Add for Matrix<N> {
    type Output = Matrix<N>;
    fn add(self, rhs: Matrix<N>) -> Matrix<N> {
        let mut m = self;
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] += rhs.0[i][j];
            }
        }
        m
    }
}

impl<const N: usize> Sub for Matrix<N> {
    type Output = Matrix<N>;
    fn sub(self, rhs: Matrix<N>) -> Matrix<N> {
        let mut m = self;
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] -= rhs.0[i][j];
            }
        }
        m
    }
}

/// Kronecker product a ⊗ b.
pub fn kron(a: &Complex2Matrix, b: &Complex2Matrix) -> Complex4Matrix {
    let mut m = Complex4Matrix::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m.0[2 * i + k][2 * j + l] = a.0[i][j] * b.0[k][l];
                }
            }
        }
    }
    m
}

/// Block-diagonal diag(a, b).
pub fn block_diag(a: &Complex2Matrix, b: &Complex2Matrix) -> Complex4Matrix {
    let mut m = Complex4Matrix::zeros();
    for i in 0..2 {
        for j in 0..2 {
            m.0[i][j] = a.0[i][j];
            m.0[i + 2][j + 2] = b.0[i][j];
        }
    }
    m
}

pub fn anticommutator<const N: usize>(a: &Matrix<N>, b: &Matrix<N>) -> Matrix<N> {
    *a * *b + *b * *a
}

/// σ_μ for μ ∈ {0,1,2,3}; σ_0 is the identity.
pub fn pauli(mu: usize) -> Result<Complex2Matrix> {
    let m = match mu {
        0 => [[ONE, ZERO], [ZERO, ONE]],
        1 => [[ZERO, ONE], [ONE, ZERO]],
        2 => [[ZERO, -I], [I, ZERO]],
        3 => [[ONE, ZERO], [ZERO, -ONE]],
        _ => {
            return Err(WalkError::InvalidArgument(format!(
                "pauli index {mu} outside 0..=3"
            )))
        }
    };
    Ok(Matrix(m))
}

fn sigma(mu: usize) -> Complex2Matrix {
    pauli(mu).expect("index in range")
}

/// R_n(θ) = exp(−iθσ_n/2) = cos(θ/2)·I − i·sin(θ/2)·σ_n.
pub fn rotation(axis: usize, theta: f64) -> Result<Complex2Matrix> {
    if !(1..=3).contains(&axis) {
        return Err(WalkError::InvalidArgument(format!(
            "rotation axis {axis} outside 1..=3"
        )));
    }
    if !theta.is_finite() {
        return Err(WalkError::InvalidArgument("rotation angle not finite".into()));
    }
    let (s, c) = (theta / 2.0).sin_cos();
    Ok(Complex2Matrix::identity().scale(C64::from(c)) - sigma(axis).scale(I * s))
}

/// C = e^{iπ/3} R_z(π/2) R_x(π/2). Cycles the Pauli axes z → x → y → z
/// under conjugation and satisfies C³ = I.
pub fn coin_c() -> Complex2Matrix {
    let rz = rotation(3, PI / 2.0).unwrap();
    let rx = rotation(1, PI / 2.0).unwrap();
    (rz * rx).scale(C64::from_polar(1.0, PI / 3.0))
}

/// Ĉ = σ_0 ⊗ C.
pub fn coin_c_hat() -> Complex4Matrix {
    kron(&sigma(0), &coin_c())
}

/// γ⁰ = σ_1 ⊗ σ_0.
pub fn gamma0() -> Complex4Matrix {
    kron(&sigma(1), &sigma(0))
}

/// α^j = σ_3 ⊗ σ_j for j = 1,2,3 (index 0 of the result is α¹).
pub fn alphas() -> [Complex4Matrix; 3] {
    [1, 2, 3].map(|j| kron(&sigma(3), &sigma(j)))
}

pub fn dirac_matrices() -> (Complex4Matrix, [Complex4Matrix; 3]) {
    (gamma0(), alphas())
}

/// M = exp(−iεmγ⁰) = cos(mε)·I − i·sin(mε)·γ⁰.
pub fn mass_coin(m: f64, eps: f64) -> Result<Complex4Matrix> {
    check_mass_eps(m, eps)?;
    let (s, c) = (m * eps).sin_cos();
    Ok(Complex4Matrix::identity().scale(C64::from(c)) - gamma0().scale(I * s))
}

fn check_mass_eps(m: f64, eps: f64) -> Result<()> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(WalkError::InvalidArgument(format!("mass {m} must be finite and >= 0")));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(WalkError::InvalidArgument(format!("eps {eps} must be finite and > 0")));
    }
    Ok(())
}

/// The full coin set for given mass and step.
#[derive(Clone, Debug)]
pub struct CoinSet {
    pub mass: f64,
    pub eps: f64,
    pub c: Complex2Matrix,
    pub c_hat: Complex4Matrix,
    pub m: Complex4Matrix,
    pub gamma0: Complex4Matrix,
    pub alpha: [Complex4Matrix; 3],
}

impl CoinSet {
    pub fn new(mass: f64, eps: f64) -> Result<CoinSet> {
        let (gamma0, alpha) = dirac_matrices();
        Ok(CoinSet {
            mass,
            eps,
            c: coin_c(),
            c_hat: coin_c_hat(),
            m: mass_coin(mass, eps)?,
            gamma0,
            alpha,
        })
    }

    /// Largest violation among the coin-set identities.
    pub fn identity_defect(&self) -> f64 {
        let i2 = Complex2Matrix::identity();
        let i4 = Complex4Matrix::identity();
        let mut d = self.c.pow(3).max_abs_diff(&i2);
        d = d.max(self.c_hat.pow(3).max_abs_diff(&i4));
        d = d.max((self.c_hat * self.m * self.c_hat.dagger()).max_abs_diff(&self.m));
        d = d.max((self.m * self.c_hat * self.m.dagger()).max_abs_diff(&self.c_hat));
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { i4.scale(C64::from(2.0)) } else { Complex4Matrix::zeros() };
                d = d.max(anticommutator(&self.alpha[i], &self.alpha[j]).max_abs_diff(&expect));
            }
            d = d.max(anticommutator(&self.alpha[i], &self.gamma0).max_abs_diff(&Complex4Matrix::zeros()));
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn pauli_basics() {
        assert_eq!(pauli(0).unwrap(), Complex2Matrix::identity());
        assert_eq!(pauli(3).unwrap(), Matrix::diag([ONE, -ONE]));
        let p12 = pauli(1).unwrap() * pauli(2).unwrap();
        assert!(p12.approx_eq(&pauli(3).unwrap().scale(I), 0.0));
        assert!(matches!(pauli(4), Err(WalkError::InvalidArgument(_))));
        for mu in 1..4 {
            let s = pauli(mu).unwrap();
            assert!(s.is_hermitian(0.0) && s.is_unitary(0.0));
            assert_eq!(s.trace(), ZERO);
        }
    }

    #[test]
    fn rotation_examples() {
        assert!(rotation(3, 0.0).unwrap().approx_eq(&Matrix::identity(), 0.0));
        let full = rotation(1, 2.0 * PI).unwrap();
        assert!(full.approx_eq(&Complex2Matrix::identity().scale(-ONE), 1e-15));
        let rr = rotation(3, PI / 2.0).unwrap() * rotation(1, PI / 2.0).unwrap();
        assert!(rr.pow(3).approx_eq(&Complex2Matrix::identity().scale(-ONE), IDENTITY_TOL));
        assert!(rotation(0, 1.0).is_err());
        assert!(rotation(2, f64::NAN).is_err());
    }

    // Entries of e^{iπ/3}·exp(−iπσ_z/4)·exp(−iπσ_x/4), evaluated by hand:
    // exp(−iπσ_z/4) = diag(e^{−iπ/4}, e^{iπ/4}), exp(−iπσ_x/4) = (I − iσ_x)/√2.
    #[test]
    fn coin_c_entries() {
        let a = 0.683_012_701_892_219_3; // (1+√3)/4
        let b = 0.183_012_701_892_219_3; // (√3−1)/4
        let expected = Matrix([[c(a, b), c(b, -a)], [c(a, b), c(-b, a)]]);
        assert!(coin_c().approx_eq(&expected, 1e-15));
    }

    #[test]
    fn coin_c_cycles_pauli_axes() {
        let cc = coin_c();
        assert!(cc.is_unitary(IDENTITY_TOL));
        assert!(cc.pow(3).approx_eq(&Matrix::identity(), IDENTITY_TOL));
        let conj = |s: Complex2Matrix| cc * s * cc.dagger();
        assert!(conj(sigma(3)).approx_eq(&sigma(1), IDENTITY_TOL));
        assert!(conj(sigma(1)).approx_eq(&sigma(2), IDENTITY_TOL));
        assert!(conj(sigma(2)).approx_eq(&sigma(3), IDENTITY_TOL));
    }

    #[test]
    fn c_hat_cycles_alphas() {
        let ch = coin_c_hat();
        let a = alphas();
        let conj = |m: Complex4Matrix| ch * m * ch.dagger();
        assert!(conj(a[2]).approx_eq(&a[0], IDENTITY_TOL));
        assert!(conj(a[0]).approx_eq(&a[1], IDENTITY_TOL));
        assert!(conj(a[1]).approx_eq(&a[2], IDENTITY_TOL));
        assert!(ch.pow(3).approx_eq(&Matrix::identity(), IDENTITY_TOL));
        let s30 = kron(&sigma(3), &sigma(0));
        assert!(conj(s30).approx_eq(&s30, IDENTITY_TOL));
    }

    #[test]
    fn dirac_matrix_examples() {
        let (g0, a) = dirac_matrices();
        assert_eq!(a[2], Matrix::diag([ONE, -ONE, -ONE, ONE]));
        assert!(anticommutator(&a[0], &a[1]).approx_eq(&Matrix::zeros(), 0.0));
        for aj in &a {
            assert!(anticommutator(aj, &g0).approx_eq(&Matrix::zeros(), 0.0));
            assert!(aj.is_hermitian(0.0) && aj.is_unitary(0.0));
        }
        assert!(g0.is_hermitian(0.0) && g0.is_unitary(0.0));
    }

    #[test]
    fn mass_coin_examples() {
        assert!(mass_coin(0.0, 0.3).unwrap().approx_eq(&Matrix::identity(), 0.0));
        let quarter = mass_coin(PI / 2.0, 1.0).unwrap();
        assert!(quarter.approx_eq(&gamma0().scale(-I), 1e-15));
        assert!(mass_coin(-1.0, 0.1).is_err());
        assert!(mass_coin(1.0, 0.0).is_err());
    }

    fn taylor_exp(a: &Complex4Matrix, terms: usize) -> Complex4Matrix {
        let mut sum = Complex4Matrix::identity();
        let mut term = Complex4Matrix::identity();
        for k in 1..terms {
            term = (term * *a).scale(C64::from(1.0 / k as f64));
            sum = sum + term;
        }
        sum
    }

    #[test]
    fn mass_coin_matches_taylor_series() {
        for &(m, eps) in &[(0.0, 1.0), (0.1, 1.0), (1.0, 1.0), (0.5, 0.7), (3.0, 0.2), (10.0, 0.01)] {
            let series = taylor_exp(&gamma0().scale(-I * (eps * m)), 20);
            assert!(mass_coin(m, eps).unwrap().approx_eq(&series, 1e-12), "m={m} eps={eps}");
        }
    }

    #[test]
    fn coin_set_identities_on_grid() {
        for &m in &[0.0, 0.1, 1.0] {
            for &eps in &[1.0, 0.1, 0.01] {
                let cs = CoinSet::new(m, eps).unwrap();
                assert!(cs.identity_defect() <= IDENTITY_TOL, "m={m} eps={eps}");
                assert!(cs.m.is_unitary(IDENTITY_TOL));
            }
        }
    }

    #[test]
    fn determinant_of_known_matrices() {
        assert!((sigma(1).determinant() + ONE).norm() < 1e-15);
        assert!((coin_c_hat().determinant() - C64::from_polar(1.0, 4.0 * PI / 3.0)).norm() < 1e-14);
    }
}
