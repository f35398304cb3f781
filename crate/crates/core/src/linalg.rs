//! Complex-Hermitian linear-algebra primitives.
//!
//! Everything downstream works with small dense Hermitian matrices (transmit
//! covariances, interference covariances, channel Grams), so this module
//! centralizes the few factorizations and projections they need:
//!
//! - eigendecomposition of Hermitian matrices (descending eigenvalues),
//! - `log2 det` evaluations routed through eigenvalues for stability,
//! - Euclidean projections onto the PSD cone and onto the trace-capped PSD
//!   cone `{X ⪰ 0, tr X ≤ P}`,
//! - the exact water-level projection of a real vector onto a capped simplex,
//!   shared by the matrix projection and the cloud-budget projection.
//!
//! The eigensolver wraps `nalgebra::SymmetricEigen`; no other module touches
//! raw factorizations.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{CoreError, Result};

/// Dense complex matrix used throughout the solver stack.
pub type CMat = DMatrix<Complex<f64>>;

/// Relative threshold below which an eigenvalue is treated as zero when
/// detecting rank (scaled by the largest |eigenvalue|).
pub const EIG_ZERO_REL_TOL: f64 = 1e-10;

/// Absolute floor of the PSD tolerance; scaled up with the eigenvalue
/// magnitude for matrices far from unit scale.
pub const PSD_TOL: f64 = 1e-10;

pub(crate) fn c64(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}

/// `(m + m^H)/2`; absorbs the anti-Hermitian part accumulated by arithmetic.
pub fn symmetrize(m: &CMat) -> CMat {
    let mut out = m.clone();
    out += m.adjoint();
    out *= c64(0.5, 0.0);
    out
}

pub(crate) fn mat_is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Real inner product `Re tr(A^H B)` on the space of complex matrices.
///
/// On Hermitian arguments this is the Euclidean inner product under which all
/// gradients in this crate are expressed: a first-order expansion of a real
/// scalar field h reads `h(Q + Δ) ≈ h(Q) + inner_re(grad, Δ)`.
pub fn inner_re(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum::<Complex<f64>>().re
}

/// Frobenius norm.
pub fn fro_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Real part of the trace.
pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

/// Square complex matrix constrained to be Hermitian.
///
/// Construction symmetrizes the input, so the invariant
/// `entries[i][j] = conj(entries[j][i])` holds exactly afterwards; inputs
/// whose anti-Hermitian part exceeds 1e-12 (relative) are rejected as a
/// probable logic error rather than silently repaired.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    m: CMat,
}

impl HermitianMatrix {
    /// Symmetrizes and validates `m`.
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(CoreError::DimensionMismatch(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !mat_is_finite(&m) {
            return Err(CoreError::InvalidInput("non-finite matrix entry".into()));
        }
        let sym = symmetrize(&m);
        let skew = fro_norm(&(&m - &sym));
        let scale = fro_norm(&m).max(1.0);
        if skew > 1e-12 * scale {
            return Err(CoreError::InvalidInput(format!(
                "matrix is not Hermitian (anti-Hermitian part {:.3e} vs scale {:.3e})",
                skew, scale
            )));
        }
        Ok(Self { m: sym })
    }

    /// Symmetrizes without the Hermitian-distance check. For solver-internal
    /// matrices whose drift from Hermitian is pure rounding noise.
    pub fn symmetrized(m: &CMat) -> Self {
        Self { m: symmetrize(m) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { m: CMat::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: CMat::identity(dim, dim) }
    }

    /// Real diagonal matrix.
    pub fn from_real_diag(d: &[f64]) -> Self {
        let v = DVector::from_iterator(d.len(), d.iter().map(|&x| c64(x, 0.0)));
        Self { m: CMat::from_diagonal(&v) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn trace(&self) -> f64 {
        trace_re(&self.m)
    }
}

/// Hermitian matrix that is numerically positive semidefinite
/// (minimum eigenvalue ≥ −tolerance).
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix {
    base: HermitianMatrix,
}

impl PsdMatrix {
    /// Validates semidefiniteness of `base`.
    pub fn new(base: HermitianMatrix) -> Result<Self> {
        let eig = eig_hermitian(&base)?;
        let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &d| a.max(d.abs())).max(1.0);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let min = if min.is_finite() { min } else { 0.0 };
        if min < -PSD_TOL * scale {
            return Err(CoreError::NotPositiveDefinite { min_eig: min });
        }
        Ok(Self { base })
    }

    /// Zero covariance.
    pub fn zeros(dim: usize) -> Self {
        Self { base: HermitianMatrix::zeros(dim) }
    }

    pub fn from_real_diag(d: &[f64]) -> Result<Self> {
        Self::new(HermitianMatrix::from_real_diag(d))
    }

    /// Scaled identity `s·I` with `s ≥ 0`.
    pub fn scaled_identity(dim: usize, s: f64) -> Result<Self> {
        if !(s >= 0.0) {
            return Err(CoreError::InvalidInput(format!("negative scale {s}")));
        }
        Self::from_real_diag(&vec![s; dim])
    }

    pub fn hermitian(&self) -> &HermitianMatrix {
        &self.base
    }

    pub fn as_matrix(&self) -> &CMat {
        self.base.as_matrix()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn trace(&self) -> f64 {
        self.base.trace()
    }
}

/// Eigendecomposition `m = U diag(d) U^H` with `d` sorted descending and `U`
/// column-unitary.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, same order as `eigenvalues`.
    pub eigenvectors: CMat,
}

impl EigenDecomposition {
    /// `U diag(d) U^H`.
    pub fn reconstruct(&self) -> CMat {
        let n = self.eigenvectors.nrows();
        let d = DVector::from_iterator(self.eigenvalues.len(), self.eigenvalues.iter().map(|&x| c64(x, 0.0)));
        let ud = &self.eigenvectors * CMat::from_diagonal(&d);
        let mut out = ud * self.eigenvectors.adjoint();
        debug_assert_eq!(out.nrows(), n);
        out = symmetrize(&out);
        out
    }

    /// Number of eigenvalues exceeding the relative zero threshold.
    pub fn rank(&self) -> usize {
        let scale = self.eigenvalues.iter().fold(0.0f64, |a, &d| a.max(d.abs()));
        if scale == 0.0 {
            return 0;
        }
        self.eigenvalues.iter().filter(|&&d| d > EIG_ZERO_REL_TOL * scale).count()
    }
}

/// Eigendecomposition of a Hermitian matrix with descending eigenvalues.
pub fn eig_hermitian(m: &HermitianMatrix) -> Result<EigenDecomposition> {
    if !mat_is_finite(m.as_matrix()) {
        return Err(CoreError::InvalidInput("non-finite matrix entry".into()));
    }
    let eig = m.as_matrix().clone().symmetric_eigen();
    let n = m.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

/// `log2 det(I + m)` for PSD `m`, in bits.
///
/// Computed as `Σ log2(1 + d_i)` over eigenvalues; tiny negative eigenvalues
/// within the PSD tolerance are clipped at zero.
pub fn log_det_capacity(m: &PsdMatrix) -> f64 {
    log_det_capacity_clipped(m.hermitian())
}

/// `log2 det(I + m)` with negative eigenvalues of `m` clipped at zero;
/// tolerant form of [`log_det_capacity`] for matrices that are PSD only up to
/// projection rounding.
pub fn log_det_capacity_clipped(m: &HermitianMatrix) -> f64 {
    let eig = eig_hermitian(m).expect("HermitianMatrix entries are finite");
    eig.eigenvalues.iter().map(|&d| (1.0 + d.max(0.0)).log2()).sum()
}

/// `log2 det(m)` for Hermitian positive definite `m`, via eigenvalues.
pub fn log_det_pd(m: &HermitianMatrix) -> Result<f64> {
    let eig = eig_hermitian(m)?;
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &d| a.max(d.abs()));
    let mut acc = 0.0;
    for &d in &eig.eigenvalues {
        if d <= EIG_ZERO_REL_TOL * scale.max(1e-300) {
            return Err(CoreError::NotPositiveDefinite { min_eig: d });
        }
        acc += d.log2();
    }
    Ok(acc)
}

/// Euclidean projection onto the PSD cone: eigenvalues clipped at zero,
/// eigenvectors preserved.
pub fn project_psd(m: &HermitianMatrix) -> PsdMatrix {
    let eig = eig_hermitian(m).expect("HermitianMatrix entries are finite");
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&d| d.max(0.0)).collect();
    psd_from_modes(&eig.eigenvectors, &clipped)
}

/// Euclidean projection onto `{X ⪰ 0, tr X ≤ power}`.
///
/// Diagonalize, then project the eigenvalue vector onto the capped simplex
/// `{p ≥ 0, Σp ≤ power}`: clip at zero and, if the clipped sum still exceeds
/// the budget, subtract the unique water level μ ≥ 0 with
/// `Σ max(0, d_i − μ) = power`.
pub fn project_power_psd(m: &HermitianMatrix, power: f64) -> Result<PsdMatrix> {
    if !(power > 0.0) {
        return Err(CoreError::InvalidInput(format!("power budget must be positive, got {power}")));
    }
    let eig = eig_hermitian(m)?;
    let p = project_nonneg_capped(&eig.eigenvalues, power);
    Ok(psd_from_modes(&eig.eigenvectors, &p))
}

/// `U diag(d) U^H` with `d ≥ 0` elementwise; no re-validation eig pass.
pub(crate) fn psd_from_modes(u: &CMat, d: &[f64]) -> PsdMatrix {
    debug_assert!(d.iter().all(|&x| x >= 0.0));
    let dv = DVector::from_iterator(d.len(), d.iter().map(|&x| c64(x, 0.0)));
    let m = u * CMat::from_diagonal(&dv) * u.adjoint();
    PsdMatrix { base: HermitianMatrix::symmetrized(&m) }
}

/// Euclidean projection of `d` onto `{p ≥ 0, Σ p ≤ budget}`.
pub fn project_nonneg_capped(d: &[f64], budget: f64) -> Vec<f64> {
    let clipped_sum: f64 = d.iter().map(|&x| x.max(0.0)).sum();
    if clipped_sum <= budget {
        return d.iter().map(|&x| x.max(0.0)).collect();
    }
    let lo = vec![0.0; d.len()];
    project_floor_capped(d, &lo, budget)
}

/// Euclidean projection of `x` onto `{f : f_i ≥ lo_i, Σ f_i ≤ budget}`.
///
/// Requires `Σ lo ≤ budget` (the set must be nonempty). The projection is
/// `f_i = max(lo_i, x_i − μ)` with the water level μ ≥ 0 chosen as the
/// smallest value meeting the budget; μ is found exactly by scanning the
/// sorted kinks of the piecewise-linear budget residual.
pub fn project_floor_capped(x: &[f64], lo: &[f64], budget: f64) -> Vec<f64> {
    assert_eq!(x.len(), lo.len());
    let floor_sum: f64 = lo.iter().sum();
    debug_assert!(
        floor_sum <= budget * (1.0 + 1e-12) + 1e-300,
        "empty projection target: Σlo = {floor_sum} > budget = {budget}"
    );
    let at = |mu: f64| -> f64 { x.iter().zip(lo).map(|(&xi, &li)| (xi - mu).max(li)).sum() };
    if at(0.0) <= budget {
        return x.iter().zip(lo).map(|(&xi, &li)| xi.max(li)).collect();
    }
    // Kink k_i = x_i − lo_i: above it coordinate i sits at its floor.
    let mut kinks: Vec<f64> = x.iter().zip(lo).map(|(&xi, &li)| xi - li).collect();
    kinks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Walk kinks from below; between consecutive kinks the residual is linear
    // in μ with slope −(number of non-floored coordinates).
    let mut mu = 0.0f64;
    for &k in kinks.iter() {
        if k <= mu {
            continue;
        }
        let active: usize = x.iter().zip(lo).filter(|(&xi, &li)| xi - li > mu).count();
        let value = at(mu);
        if active == 0 {
            break;
        }
        let candidate = mu + (value - budget) / active as f64;
        if candidate <= k {
            mu = candidate;
            break;
        }
        mu = k;
    }
    // One final linear solve in case the budget level lies above every kink
    // (all coordinates floored except none; numerically mu is already right).
    let value = at(mu);
    if value > budget {
        let active: usize = x.iter().zip(lo).filter(|(&xi, &li)| xi - li > mu).count();
        if active > 0 {
            mu += (value - budget) / active as f64;
        }
    }
    x.iter().zip(lo).map(|(&xi, &li)| (xi - mu).max(li)).collect()
}

/// `m^{-1/2}` for Hermitian positive definite `m`.
pub fn inv_sqrt_pd(m: &HermitianMatrix) -> Result<CMat> {
    let eig = eig_hermitian(m)?;
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &d| a.max(d.abs()));
    let mut inv: Vec<f64> = Vec::with_capacity(eig.eigenvalues.len());
    for &d in &eig.eigenvalues {
        if d <= EIG_ZERO_REL_TOL * scale.max(1e-300) {
            return Err(CoreError::NotPositiveDefinite { min_eig: d });
        }
        inv.push(1.0 / d.sqrt());
    }
    let dv = DVector::from_iterator(inv.len(), inv.iter().map(|&x| c64(x, 0.0)));
    Ok(symmetrize(&(&eig.eigenvectors * CMat::from_diagonal(&dv) * eig.eigenvectors.adjoint())))
}

/// Hermitian inverse via eigendecomposition; errors on singular input.
pub fn inv_pd(m: &HermitianMatrix) -> Result<CMat> {
    let eig = eig_hermitian(m)?;
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &d| a.max(d.abs()));
    let mut inv: Vec<f64> = Vec::with_capacity(eig.eigenvalues.len());
    for &d in &eig.eigenvalues {
        if d <= EIG_ZERO_REL_TOL * scale.max(1e-300) {
            return Err(CoreError::NotPositiveDefinite { min_eig: d });
        }
        inv.push(1.0 / d);
    }
    let dv = DVector::from_iterator(inv.len(), inv.iter().map(|&x| c64(x, 0.0)));
    Ok(symmetrize(&(&eig.eigenvectors * CMat::from_diagonal(&dv) * eig.eigenvectors.adjoint())))
}

/// Largest eigenvalue of `a^H a` (squared spectral norm of `a`).
pub fn spectral_norm_sq(a: &CMat) -> f64 {
    let gram = HermitianMatrix::symmetrized(&(a.adjoint() * a));
    let eig = eig_hermitian(&gram).expect("finite");
    eig.eigenvalues.first().copied().unwrap_or(0.0).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: usize, cols: usize, entries: &[(f64, f64)]) -> CMat {
        CMat::from_iterator(rows, cols, entries.iter().map(|&(re, im)| c64(re, im)))
    }

    /// Independent 2x2 real-symmetric eigenvalue oracle: roots of the
    /// characteristic polynomial λ² − (a+c)λ + (ac − b²).
    fn eig2x2_sym_oracle(a: f64, b: f64, c: f64) -> (f64, f64) {
        let mean = 0.5 * (a + c);
        let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        (mean + disc, mean - disc)
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let id = HermitianMatrix::identity(2);
        let e = eig_hermitian(&id).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0]);

        let d = HermitianMatrix::from_real_diag(&[3.0, 1.0]);
        let e = eig_hermitian(&d).unwrap();
        assert_eq!(e.eigenvalues, vec![3.0, 1.0]);
        let recon = e.reconstruct();
        assert!(fro_norm(&(recon - d.as_matrix())) < 1e-12);
    }

    #[test]
    fn eig_2x2_matches_characteristic_polynomial() {
        // Hand result for [[2,1],[1,2]] is (3, 1); the characteristic
        // polynomial oracle reproduces it and pins the frozen values.
        let (hi, lo) = eig2x2_sym_oracle(2.0, 1.0, 2.0);
        assert!((hi - 3.0).abs() < 1e-15 && (lo - 1.0).abs() < 1e-15);

        let m = HermitianMatrix::new(cm(2, 2, &[(2.0, 0.0), (1.0, 0.0), (1.0, 0.0), (2.0, 0.0)])).unwrap();
        let e = eig_hermitian(&m).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_non_finite() {
        let m = HermitianMatrix { m: cm(1, 1, &[(f64::NAN, 0.0)]) };
        assert!(matches!(eig_hermitian(&m), Err(CoreError::InvalidInput(_))));
    }

    #[test]
    fn eig_reconstruction_and_unitarity_random() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for dim in 1..=4usize {
            for _ in 0..50 {
                let raw = CMat::from_fn(dim, dim, |_, _| c64(next(), next()));
                let h = HermitianMatrix::symmetrized(&raw);
                let e = eig_hermitian(&h).unwrap();
                let scale = fro_norm(h.as_matrix()).max(1e-12);
                assert!(fro_norm(&(e.reconstruct() - h.as_matrix())) / scale <= 1e-9);
                let gram = e.eigenvectors.adjoint() * &e.eigenvectors;
                assert!(fro_norm(&(gram - CMat::identity(dim, dim))) <= 1e-10);
                for w in e.eigenvalues.windows(2) {
                    assert!(w[0] >= w[1]);
                }
            }
        }
    }

    #[test]
    fn log_det_capacity_basics() {
        let id = PsdMatrix::from_real_diag(&[1.0, 1.0]).unwrap();
        assert!((log_det_capacity(&id) - 2.0).abs() < 1e-12);
        let zero = PsdMatrix::zeros(3);
        assert_eq!(log_det_capacity(&zero), 0.0);
        let three = PsdMatrix::from_real_diag(&[3.0]).unwrap();
        assert!((log_det_capacity(&three) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn log_det_capacity_matches_direct_determinant() {
        // Dual route: eigenvalue sum vs the raw complex determinant of I + m.
        let mut state = 0xdeadbeefdeadbeefu64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for dim in 1..=4usize {
            for _ in 0..40 {
                let a = CMat::from_fn(dim, dim, |_, _| c64(next(), next()));
                let psd = HermitianMatrix::symmetrized(&(&a * a.adjoint()));
                let psd = PsdMatrix::new(psd).unwrap();
                let via_eig = log_det_capacity(&psd);
                let direct = (CMat::identity(dim, dim) + psd.as_matrix()).determinant();
                let via_det = direct.re.log2();
                assert!(direct.im.abs() <= 1e-9 * direct.re.abs().max(1.0));
                assert!(
                    (via_eig - via_det).abs() <= 1e-9 * via_det.abs().max(1.0),
                    "eig route {via_eig} vs det route {via_det}"
                );
            }
        }
    }

    #[test]
    fn project_psd_examples() {
        let m = HermitianMatrix::from_real_diag(&[1.0, -2.0]);
        let p = project_psd(&m);
        assert!(fro_norm(&(p.as_matrix() - HermitianMatrix::from_real_diag(&[1.0, 0.0]).as_matrix())) < 1e-12);

        // PSD input is a fixed point.
        let q = PsdMatrix::from_real_diag(&[0.5, 0.25]).unwrap();
        let pq = project_psd(q.hermitian());
        assert!(fro_norm(&(pq.as_matrix() - q.as_matrix())) < 1e-10);

        // Hand eigendecomposition: [[0,1],[1,0]] has eigenpairs
        // (+1, [1,1]/√2) and (−1, [1,−1]/√2); clipping leaves ½[[1,1],[1,1]].
        let m = HermitianMatrix::new(cm(2, 2, &[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 0.0)])).unwrap();
        let p = project_psd(&m);
        let expect = cm(2, 2, &[(0.5, 0.0), (0.5, 0.0), (0.5, 0.0), (0.5, 0.0)]);
        assert!(fro_norm(&(p.as_matrix() - expect)) < 1e-12);
    }

    #[test]
    fn project_power_psd_examples() {
        // Interior points are untouched.
        let m = HermitianMatrix::from_real_diag(&[0.2, 0.3]);
        let p = project_power_psd(&m, 1.0).unwrap();
        assert!(fro_norm(&(p.as_matrix() - m.as_matrix())) < 1e-12);

        let m = HermitianMatrix::from_real_diag(&[0.5]);
        let p = project_power_psd(&m, 1.0).unwrap();
        assert!((p.trace() - 0.5).abs() < 1e-12);

        // Water level μ = 1: eigenvalues (2, −1) -> (1, 0).
        let m = HermitianMatrix::from_real_diag(&[2.0, -1.0]);
        let p = project_power_psd(&m, 1.0).unwrap();
        assert!(fro_norm(&(p.as_matrix() - HermitianMatrix::from_real_diag(&[1.0, 0.0]).as_matrix())) < 1e-12);
    }

    #[test]
    fn project_power_psd_idempotent_and_optimal() {
        let mut state = 0x1234_5678_9abc_def0u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let budget = 1.0;
        for _ in 0..200 {
            let raw = CMat::from_fn(2, 2, |_, _| c64(4.0 * next(), 4.0 * next()));
            let h = HermitianMatrix::symmetrized(&raw);
            let p = project_power_psd(&h, budget).unwrap();
            assert!(p.trace() <= budget + 1e-9);
            let twice = project_power_psd(p.hermitian(), budget).unwrap();
            assert!(fro_norm(&(twice.as_matrix() - p.as_matrix())) <= 1e-10);

            // Optimality against random feasible points: no feasible X may be
            // closer to the input than the projection.
            let dist_p = fro_norm(&(p.as_matrix() - h.as_matrix()));
            for _ in 0..5 {
                let raw_x = CMat::from_fn(2, 2, |_, _| c64(next(), next()));
                let x = project_power_psd(&HermitianMatrix::symmetrized(&raw_x), budget).unwrap();
                let dist_x = fro_norm(&(x.as_matrix() - h.as_matrix()));
                assert!(dist_p <= dist_x + 1e-9);
            }
        }
    }

    #[test]
    fn floor_capped_projection_water_level() {
        // Budget forces a uniform subtraction down to the floors.
        let x = vec![5.0, 3.0, 1.0];
        let lo = vec![0.5, 0.5, 0.5];
        let f = project_floor_capped(&x, &lo, 4.0);
        let total: f64 = f.iter().sum();
        assert!((total - 4.0).abs() < 1e-12);
        assert!(f.iter().zip(&lo).all(|(fi, li)| fi >= li));
        // KKT: non-floored coordinates share a common water level x_i − μ.
        let mu0 = x[0] - f[0];
        let mu1 = x[1] - f[1];
        assert!((mu0 - mu1).abs() < 1e-12);
        assert!((f[2] - 0.5).abs() < 1e-12);

        // Slack budget: clipping to the floor is enough.
        let g = project_floor_capped(&[0.2, 0.9], &[0.5, 0.5], 10.0);
        assert_eq!(g, vec![0.5, 0.9]);
    }

    #[test]
    fn psd_matrix_rejects_indefinite() {
        let m = HermitianMatrix::from_real_diag(&[1.0, -0.5]);
        assert!(matches!(PsdMatrix::new(m), Err(CoreError::NotPositiveDefinite { .. })));
    }
}
