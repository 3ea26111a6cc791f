//! Eigendecomposition of generic complex Hamiltonians and the proper
//! inner products built from the diagonalizer.
//!
//! For a diagonalizable non-Hermitian H = P D P^{-1} the physically
//! meaningful inner product is I_Q(u, v) = u^dag Q v with
//! Q = (P^dag)^{-1} P^{-1}: the eigenstates of H are Q-orthonormal and H is
//! Q-normal. The conjugate Hamiltonian H_B = H^dag gets the inverse metric
//! Q_B = Q^{-1}, with diagonalizer P_B = Q P = (P^dag)^{-1}.
//!
//! Everything here is a pure function of its inputs; structs are immutable
//! after construction.

use crate::error::{Error, Result};
use crate::linalg::{
    c, check_same_dim, check_square_finite, cond2, cr, frob, identity, inverse, norm2, CMatrix,
    CVector, C64, ONE, ZERO,
};
use crate::params::Params;

/// Eigendecomposition bundle of a generic complex matrix.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// Eigenvalues sorted by descending Im, ties broken by descending Re.
    pub eigenvalues: Vec<C64>,
    /// Columns are the (unit 2-norm) eigenvectors, in eigenvalue order.
    pub p: CMatrix,
    pub p_inverse: CMatrix,
    /// 2-norm condition number of P.
    pub cond_p: f64,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn d_matrix(&self) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().copied(),
        ))
    }

    /// Reassemble P f(D) P^{-1} for a diagonal function of the eigenvalues.
    pub fn apply_diagonal<F: Fn(C64) -> C64>(&self, f: F) -> CMatrix {
        let n = self.dim();
        let mut fd = CMatrix::zeros(n, n);
        for (i, &lam) in self.eigenvalues.iter().enumerate() {
            fd[(i, i)] = f(lam);
        }
        &self.p * fd * &self.p_inverse
    }

    /// Maximal imaginary part B of the spectrum.
    pub fn max_im(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.im).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices attaining max Im(lambda) within `eta_a`. Eigenvalues are
    /// Im-sorted, so this is always a prefix `0..k`.
    pub fn subset_a(&self, eta_a: f64) -> Vec<usize> {
        let b = self.max_im();
        (0..self.dim()).filter(|&i| self.eigenvalues[i].im >= b - eta_a).collect()
    }

    /// Im-gap between subset A and the rest (infinite when A is everything).
    pub fn im_gap(&self, eta_a: f64) -> f64 {
        let a = self.subset_a(eta_a);
        let b = self.max_im();
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(i, _)| !a.contains(i))
            .map(|(_, l)| b - l.im)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Hermitian positive-definite inner-product matrix together with a
/// triangular factor q = factor^dag factor.
#[derive(Debug, Clone)]
pub struct Metric {
    pub q_matrix: CMatrix,
    pub factor: CMatrix,
}

impl Metric {
    /// Build from an (approximately) Hermitian positive-definite matrix.
    /// The input is symmetrized; positive definiteness is established by a
    /// Cholesky factorization attempt.
    pub fn from_hermitian(q: CMatrix, what: &str) -> Result<Metric> {
        check_square_finite(&q, what)?;
        let herm_defect = frob(&(&q - q.adjoint()));
        if herm_defect > 1e-12 * frob(&q) {
            return Err(Error::IllConditioned(format!(
                "{what}: Hermiticity defect {:.3e}",
                herm_defect / frob(&q)
            )));
        }
        let q_sym = (&q + q.adjoint()) * cr(0.5);
        let chol = q_sym
            .clone()
            .cholesky()
            .ok_or_else(|| Error::IllConditioned(format!("{what}: Cholesky failed")))?;
        let l = chol.l();
        // nalgebra's complex Cholesky happily takes complex square roots of
        // negative pivots; definiteness is certified by real positive
        // pivots plus reconstruction.
        for i in 0..l.nrows() {
            let d = l[(i, i)];
            if !(d.re > 0.0) || d.im.abs() > 1e-12 * d.re {
                return Err(Error::IllConditioned(format!(
                    "{what}: non-positive pivot {d} at {i}"
                )));
            }
        }
        let recon = frob(&(&l * l.adjoint() - &q_sym));
        if recon > 1e-10 * frob(&q_sym) {
            return Err(Error::IllConditioned(format!(
                "{what}: factor reconstruction defect {:.3e}",
                recon / frob(&q_sym)
            )));
        }
        let factor = l.adjoint();
        Ok(Metric { q_matrix: q_sym, factor })
    }

    pub fn dim(&self) -> usize {
        self.q_matrix.nrows()
    }

    pub fn inverse(&self) -> Result<CMatrix> {
        // Q^{-1} = L^{-dag} L^{-1} from the stored factor (factor = L^dag).
        let linv = inverse(&self.factor.adjoint(), "metric factor")?;
        Ok(linv.adjoint() * linv)
    }

    /// <u|_Q v> = u^dag Q v.
    pub fn pair(&self, u: &CVector, v: &CVector) -> C64 {
        (u.adjoint() * &self.q_matrix * v)[(0, 0)]
    }

    pub fn norm_sq(&self, v: &CVector) -> f64 {
        self.pair(v, v).re
    }
}

/// Q-Hermitian / anti-Q-Hermitian split of H, with the diagonal data
/// D = D_R + i D_I backing it.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub h_qh: CMatrix,
    pub h_qa: CMatrix,
    pub d_r: Vec<f64>,
    pub d_i: Vec<f64>,
}

/// Eigenvectors of an upper-triangular matrix by guarded back-substitution.
fn triangular_eigenvectors(t: &CMatrix) -> CMatrix {
    let n = t.nrows();
    let scale = t.iter().map(|z| z.norm()).fold(f64::MIN_POSITIVE, f64::max);
    let guard = scale * f64::EPSILON * n as f64;
    let mut v = CMatrix::zeros(n, n);
    for i in 0..n {
        let lam = t[(i, i)];
        v[(i, i)] = ONE;
        for j in (0..i).rev() {
            let mut s = ZERO;
            for k in j + 1..=i {
                s += t[(j, k)] * v[(k, i)];
            }
            let mut d = lam - t[(j, j)];
            if d.norm() < guard {
                d = c(guard, 0.0);
            }
            v[(j, i)] = s / d;
        }
        // Unit 2-norm, deterministic phase: largest component real positive.
        let norm = v.column(i).norm();
        let mut pivot = ZERO;
        let mut best = -1.0;
        for j in 0..=i {
            if v[(j, i)].norm() > best {
                best = v[(j, i)].norm();
                pivot = v[(j, i)];
            }
        }
        let phase = pivot / pivot.norm();
        let rescale = phase.conj() / norm;
        for j in 0..=i {
            v[(j, i)] *= rescale;
        }
    }
    v
}

/// Diagonalize a generic complex matrix.
///
/// Eigenvalues come back sorted by descending Im (ties: descending Re) so
/// the maximal-Im subset A is a prefix. Rejects spectra with pairwise
/// separation below `sep_min_factor * ||h||_2` and diagonalizers with
/// cond_2(P) above `cond_max`: both signal a matrix outside the
/// "diagonalizable, well-conditioned" domain this machinery assumes.
pub fn decompose(h: &CMatrix, params: &Params) -> Result<SpectralData> {
    check_square_finite(h, "decompose input")?;
    let n = h.nrows();
    let h2 = norm2(h)?;
    let schur = h
        .clone()
        .try_schur(1e-14, 200_000)
        .ok_or_else(|| Error::DefectiveMatrix("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();

    let mut order: Vec<usize> = (0..n).collect();
    let lams: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    order.sort_by(|&a, &b| {
        (lams[b].im, lams[b].re)
            .partial_cmp(&(lams[a].im, lams[a].re))
            .expect("finite eigenvalues")
    });

    let sep_min = params.sep_min_factor * h2;
    for i in 0..n {
        for j in i + 1..n {
            let sep = (lams[i] - lams[j]).norm();
            if sep < sep_min {
                return Err(Error::DefectiveMatrix(format!(
                    "eigenvalue separation {:.3e} below {:.3e}",
                    sep, sep_min
                )));
            }
        }
    }

    let y = triangular_eigenvectors(&t);
    let p_unsorted = q * y;
    let mut p = CMatrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        p.set_column(dst, &p_unsorted.column(src));
        eigenvalues.push(lams[src]);
    }

    let cond_p = cond2(&p)?;
    if cond_p > params.cond_max {
        return Err(Error::DefectiveMatrix(format!(
            "cond(P) = {:.3e} above cond_max = {:.3e}",
            cond_p, params.cond_max
        )));
    }
    let p_inverse = inverse(&p, "diagonalizer")?;

    let data = SpectralData { eigenvalues, p, p_inverse, cond_p };

    // Enforce the residual contracts before handing the bundle out.
    let resid = frob(&(h * &data.p - &data.p * data.d_matrix()));
    if resid > 1e-10 * data.cond_p * frob(h).max(f64::MIN_POSITIVE) {
        return Err(Error::DefectiveMatrix(format!(
            "eigen residual {:.3e} exceeds budget",
            resid
        )));
    }
    let inv_resid = frob(&(&data.p * &data.p_inverse - identity(n)));
    if inv_resid > 1e-10 * data.cond_p {
        return Err(Error::DefectiveMatrix(format!(
            "P inverse residual {:.3e} exceeds budget",
            inv_resid
        )));
    }
    Ok(data)
}

/// Eigenvalues alone (sorted by descending Im, ties by descending Re),
/// without the diagonalizer conditioning gates. This is the right tool for
/// spectrum-convergence diagnostics of truncated operators whose
/// eigenvector matrix is legitimately ill-conditioned near the truncation
/// edge.
pub fn eigenvalues_only(h: &CMatrix) -> Result<Vec<C64>> {
    check_square_finite(h, "eigenvalues_only input")?;
    let schur = h
        .clone()
        .try_schur(1e-14, 200_000)
        .ok_or_else(|| Error::DefectiveMatrix("Schur iteration did not converge".into()))?;
    let t = schur.unpack().1;
    let mut lams: Vec<C64> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    lams.sort_by(|a, b| (b.im, b.re).partial_cmp(&(a.im, a.re)).expect("finite eigenvalues"));
    Ok(lams)
}

/// Q = (P^dag)^{-1} P^{-1}: the proper inner product for H.
pub fn build_q_metric(s: &SpectralData) -> Result<Metric> {
    let q = s.p_inverse.adjoint() * &s.p_inverse;
    Metric::from_hermitian(q, "Q metric")
}

/// Q_B = Q^{-1}: the proper inner product for H_B = H^dag.
pub fn build_qb_metric(q: &Metric) -> Result<Metric> {
    Metric::from_hermitian(q.inverse()?, "Q_B metric")
}

/// A^{dag_Q} = Q^{-1} A^dag Q.
pub fn q_dagger(a: &CMatrix, q: &Metric) -> Result<CMatrix> {
    check_same_dim(a, &q.q_matrix, "q_dagger")?;
    Ok(q.inverse()? * a.adjoint() * &q.q_matrix)
}

/// Split H into Q-Hermitian and anti-Q-Hermitian parts,
/// H_Qh = (H + H^{dag_Q})/2 and H_Qa = (H - H^{dag_Q})/2,
/// carrying along the diagonal data D_R = Re(D), D_I = Im(D).
pub fn split_q_parts(
    h: &CMatrix,
    s: &SpectralData,
    q: &Metric,
) -> Result<SpectralDecomposition> {
    check_same_dim(h, &q.q_matrix, "split_q_parts")?;
    let hdq = q_dagger(h, q)?;
    let h_qh = (h + &hdq) * cr(0.5);
    let h_qa = (h - &hdq) * cr(0.5);
    let d_r = s.eigenvalues.iter().map(|l| l.re).collect();
    let d_i = s.eigenvalues.iter().map(|l| l.im).collect();
    Ok(SpectralDecomposition { h_qh, h_qa, d_r, d_i })
}

/// ||[H, H^{dag_Q}]||_F / ||H||_F^2. Zero (up to conditioning) when Q is
/// built from H's own diagonalizer.
pub fn q_normality_residual(h: &CMatrix, q: &Metric) -> Result<f64> {
    check_same_dim(h, &q.q_matrix, "q_normality_residual")?;
    let hdq = q_dagger(h, q)?;
    let comm = h * &hdq - &hdq * h;
    let denom = frob(h).powi(2);
    Ok(frob(&comm) / denom.max(f64::MIN_POSITIVE))
}

/// H_eff = P D~_R P^{-1}: keeps Re(lambda_i) on `subset_a`, zero elsewhere.
/// The result is Q-Hermitian under H's own metric.
pub fn build_h_eff(s: &SpectralData, subset_a: &[usize], _q: &Metric) -> Result<CMatrix> {
    if subset_a.is_empty() {
        return Err(Error::EmptySubset);
    }
    let n = s.dim();
    let mut dr = CMatrix::zeros(n, n);
    for &i in subset_a {
        if i >= n {
            return Err(Error::DimensionMismatch(format!("subset index {i} out of range")));
        }
        dr[(i, i)] = cr(s.eigenvalues[i].re);
    }
    Ok(&s.p * dr * &s.p_inverse)
}

/// Residuals of the H_B eigenpair route: H^dag (Q |lambda_j>) should equal
/// lambda_j^* (Q |lambda_j>) for every j. Returns per-column residual norms
/// (relative to the transformed column norm).
pub fn b_route_residuals(h: &CMatrix, s: &SpectralData, q: &Metric) -> Result<Vec<f64>> {
    check_same_dim(h, &q.q_matrix, "b_route_residuals")?;
    let hd = h.adjoint();
    let mut out = Vec::with_capacity(s.dim());
    for j in 0..s.dim() {
        let col = s.p.column(j).clone_owned();
        let b_col = &q.q_matrix * col;
        let resid = &hd * &b_col - &b_col * s.eigenvalues[j].conj();
        out.push(resid.norm() / b_col.norm().max(f64::MIN_POSITIVE));
    }
    Ok(out)
}

/// Completeness defect || sum_i |lambda_i><lambda_i| Q - I ||_F.
pub fn completeness_defect(s: &SpectralData, q: &Metric) -> f64 {
    let n = s.dim();
    let mut acc = CMatrix::zeros(n, n);
    for i in 0..n {
        let col = s.p.column(i);
        let row = (&q.q_matrix * col).adjoint();
        acc += col * row;
    }
    frob(&(acc - identity(n)))
}

/// Smallest eigenvalue sign proxy used by tests: Cholesky success implies
/// positive definiteness; this reports the smallest diagonal of the factor.
pub fn metric_floor(metric: &Metric) -> f64 {
    (0..metric.dim())
        .map(|i| metric.factor[(i, i)].norm())
        .fold(f64::INFINITY, f64::min)
        .powi(2)
}
