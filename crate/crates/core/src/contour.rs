//! Complex contours, Gauss-Legendre quadrature along them, and the smeared
//! delta function delta_c^eps(q) = sqrt(1/(4 pi eps)) exp(-q^2 / (4 eps)).
//!
//! A contour is a chain of smooth segments running left to right in the
//! complex plane. Convergence of the Gaussian delta between two points of a
//! path is guaranteed when every tangent stays within pi/4 of the real
//! axis, which is exactly what `validate` enforces (minus a small safety
//! margin). Such paths can be deformed freely for analytic decaying
//! integrands, and the quadrature is expected to be contour-independent to
//! within its own tolerance.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, cr, C64};
use crate::params::Params;

/// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence. Machine-precision for the modest orders used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..(n + 1) / 2 {
        // Tricomi initial guess.
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// One smooth straight piece of a contour.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Segment {
    pub from: [f64; 2],
    pub to: [f64; 2],
    /// Base quadrature nodes for this piece.
    pub nodes: usize,
}

impl Segment {
    pub fn start(&self) -> C64 {
        c(self.from[0], self.from[1])
    }
    pub fn end(&self) -> C64 {
        c(self.to[0], self.to[1])
    }
}

/// Piecewise-linear compliant path, realized on a finite window.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Contour {
    pub segments: Vec<Segment>,
}

/// A constraint violation found by `validate`.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// |tangent angle| at a segment is not strictly inside pi/4 - margin.
    TangentAngle { segment: usize, angle: f64 },
    /// Re(q) fails to increase along the path.
    NonMonotone { segment: usize },
    /// Segment endpoints do not chain continuously.
    Discontinuous { segment: usize, gap: f64 },
}

impl Contour {
    /// Straight path along the real axis over [-w, w].
    pub fn real_axis(w: f64, nodes: usize) -> Contour {
        Contour { segments: vec![Segment { from: [-w, 0.0], to: [w, 0.0], nodes }] }
    }

    /// Straight path through the origin at angle `theta` to the real axis.
    pub fn tilted(theta: f64, w: f64, nodes: usize) -> Contour {
        let (s, co) = theta.sin_cos();
        Contour {
            segments: vec![Segment {
                from: [-w * co, -w * s],
                to: [w * co, w * s],
                nodes,
            }],
        }
    }

    /// Three-piece zig-zag with |angle| = pi/5 on the outer pieces.
    pub fn zigzag(w: f64, nodes: usize) -> Contour {
        let theta = PI / 5.0;
        let rise = (w / 2.0) * theta.tan();
        Contour {
            segments: vec![
                Segment { from: [-w, 0.0], to: [-w / 2.0, -rise], nodes },
                Segment { from: [-w / 2.0, -rise], to: [w / 2.0, rise], nodes: 2 * nodes },
                Segment { from: [w / 2.0, rise], to: [w, 0.0], nodes },
            ],
        }
    }

    pub fn window(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| [s.from[0].abs(), s.to[0].abs()])
            .fold(0.0, f64::max)
    }

    /// Report every tangent-angle, monotonicity, or continuity violation.
    pub fn validate(&self, params: &Params) -> Vec<Violation> {
        let mut out = Vec::new();
        let limit = PI / 4.0 - params.theta_margin;
        for (k, seg) in self.segments.iter().enumerate() {
            let d = seg.end() - seg.start();
            if d.re <= 0.0 {
                out.push(Violation::NonMonotone { segment: k });
            }
            let angle = d.im.atan2(d.re);
            if angle.abs() >= limit {
                out.push(Violation::TangentAngle { segment: k, angle });
            }
            if k + 1 < self.segments.len() {
                let gap = (self.segments[k + 1].start() - seg.end()).norm();
                if gap > 1e-12 {
                    out.push(Violation::Discontinuous { segment: k, gap });
                }
            }
        }
        out
    }

    /// Composite quadrature nodes (position, weight): each segment is split
    /// into panels carrying a fixed 16-point Gauss-Legendre rule, with
    /// `factor` scaling the panel count. Refinement therefore doubles
    /// panels, never the rule order, which stays numerically robust at any
    /// node count.
    pub fn nodes(&self, factor: usize) -> Vec<(C64, C64)> {
        let (xs, ws) = gauss_legendre(16);
        let mut out = Vec::new();
        for seg in &self.segments {
            let panels = ((seg.nodes * factor).div_ceil(16)).max(1);
            let a = seg.start();
            let b = seg.end();
            let step = (b - a) * cr(1.0 / panels as f64);
            for p in 0..panels {
                let lo = a + step * cr(p as f64);
                let half = step * cr(0.5);
                let mid = lo + half;
                for (x, w) in xs.iter().zip(&ws) {
                    out.push((mid + half * cr(*x), half * cr(*w)));
                }
            }
        }
        out
    }

    /// Integrate an analytic integrand along the contour with node-doubling
    /// refinement until two successive levels differ by less than
    /// `params.quad_tol` relative to the result magnitude.
    pub fn integrate<F: Fn(C64) -> C64>(&self, f: F, params: &Params) -> Result<C64> {
        let violations = self.validate(params);
        if !violations.is_empty() {
            return Err(Error::Config(format!("non-compliant contour: {violations:?}")));
        }
        let (mut prev, _) = self.eval(&f, 1);
        let mut factor = 2;
        let mut agreements = 0usize;
        for _ in 0..params.max_refine {
            let (cur, l1) = self.eval(&f, factor);
            // Cancellation-heavy integrals (odd integrands) converge to
            // values far below their L1 mass; grant a machine-level
            // absolute budget scaled by that mass. Two consecutive
            // agreements are required so a spike missed by the first
            // coarse levels cannot fake convergence.
            let scale = cur.norm().max(prev.norm()).max(1e-300);
            let floor = 64.0 * f64::EPSILON * l1;
            if (cur - prev).norm() <= params.quad_tol * scale + floor {
                agreements += 1;
                if agreements >= 2 {
                    return Ok(cur);
                }
            } else {
                agreements = 0;
            }
            prev = cur;
            factor *= 2;
        }
        Err(Error::NoConvergence(format!(
            "quadrature not converged after {} refinements",
            params.max_refine
        )))
    }

    fn eval<F: Fn(C64) -> C64>(&self, f: &F, factor: usize) -> (C64, f64) {
        let mut acc = c(0.0, 0.0);
        let mut l1 = 0.0;
        for (q, w) in self.nodes(factor) {
            let term = f(q) * w;
            l1 += term.norm();
            acc += term;
        }
        (acc, l1)
    }
}

/// Gaussian smeared delta centered at `center`.
#[derive(Debug, Clone, Copy)]
pub struct SmearedDelta {
    pub epsilon: C64,
    pub center: C64,
}

impl SmearedDelta {
    pub fn real(eps: f64, center: f64) -> Self {
        SmearedDelta { epsilon: cr(eps), center: cr(center) }
    }

    /// sqrt(1/(4 pi eps)) exp(-(q - q0)^2 / (4 eps)), principal square root.
    pub fn value(&self, q: C64) -> C64 {
        let d = q - self.center;
        let pref = (cr(4.0 * PI) * self.epsilon).sqrt().inv();
        pref * (-(d * d) / (cr(4.0) * self.epsilon)).exp()
    }
}

/// L(q) = Re(q)^2 - Im(q)^2 > 0: the convergence domain of delta_c^eps for
/// real positive eps.
pub fn domain_ok(q: C64) -> bool {
    q.re * q.re - q.im * q.im > 0.0
}

/// Convergence of delta_c^eps(a q): Re(a^2 q^2 / eps) > 0, equivalently the
/// two angular windows
/// (-pi/4 + (th_eps - 2 th_a)/2, pi/4 + (th_eps - 2 th_a)/2) and its
/// opposite, mod 2 pi. Both formulations are computed; they always agree
/// away from the boundary, and the Re form is returned.
pub fn scaled_domain_ok(q: C64, a: C64, eps: C64) -> bool {
    let re_form = (a * a * q * q / eps).re > 0.0;
    debug_assert!({
        let shift = 0.5 * (eps.arg() - 2.0 * a.arg());
        let theta = q.arg();
        let in_window = |center: f64| {
            let mut d = theta - center - shift;
            while d > PI {
                d -= 2.0 * PI;
            }
            while d < -PI {
                d += 2.0 * PI;
            }
            d.abs() < PI / 4.0
        };
        let window_form = in_window(0.0) || in_window(PI);
        // On the open domain the two forms agree; near the boundary the
        // cos(2x) zero crossing makes them float-sensitive, so only assert
        // when safely inside.
        let margin = (a * a * q * q / eps).re.abs()
            > 1e-9 * (a * a * q * q / eps).norm().max(1e-300);
        !margin || window_form == re_form
    });
    re_form
}

/// Angular-window formulation of `scaled_domain_ok`, exposed for
/// cross-validation tests.
pub fn scaled_domain_window_form(q: C64, a: C64, eps: C64) -> bool {
    let shift = 0.5 * (eps.arg() - 2.0 * a.arg());
    let theta = q.arg();
    let mut in_any = false;
    for center in [0.0, PI] {
        let mut d = theta - center - shift;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        if d.abs() < PI / 4.0 {
            in_any = true;
        }
    }
    in_any
}

/// sign(Re a) as the scaling law defines it; Re(a) = 0 is a branch
/// ambiguity.
pub fn sign_re(a: C64) -> Result<f64> {
    if a.re > 0.0 {
        Ok(1.0)
    } else if a.re < 0.0 {
        Ok(-1.0)
    } else {
        Err(Error::BranchAmbiguity)
    }
}

/// Max pointwise residual of the scaling law
/// delta_c^eps(a q) = (sign(Re a)/a) delta_c^{eps/a^2}(q)
/// over the supplied samples, normalized by the peak of the right side.
pub fn scaling_identity_residual(a: C64, eps: C64, q_samples: &[C64]) -> Result<f64> {
    let sign = sign_re(a)?;
    let left = SmearedDelta { epsilon: eps, center: c(0.0, 0.0) };
    let right = SmearedDelta { epsilon: eps / (a * a), center: c(0.0, 0.0) };
    let peak = right.value(c(0.0, 0.0)).norm() / a.norm();
    let mut worst: f64 = 0.0;
    for &q in q_samples {
        if !scaled_domain_ok(q, a, eps) {
            continue;
        }
        let lhs = left.value(a * q);
        let rhs = right.value(q) * cr(sign) / a;
        worst = worst.max((lhs - rhs).norm() / peak);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> Params {
        Params::default()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (xs, ws) = gauss_legendre(8);
        // degree 15 is exact for 8 nodes
        let val: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(14)).sum();
        assert_relative_eq!(val, 2.0 / 15.0, epsilon = 1e-14);
        let odd: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(7)).sum();
        assert!(odd.abs() < 1e-15);
    }

    #[test]
    fn delta_peak_value() {
        // eps = 0.01: peak = 1/sqrt(0.04 pi) = 2.820947917738781.
        let d = SmearedDelta::real(0.01, 0.3);
        assert_relative_eq!(d.value(cr(0.3)).re, 2.820947917738781, epsilon = 1e-9);
        // One-sigma-analog point: q - q0 = 2 sqrt(eps) gives peak / e.
        let q = cr(0.3 + 2.0 * 0.1);
        assert_relative_eq!(d.value(q).re, 2.820947917738781 / std::f64::consts::E, epsilon = 1e-9);
        // Even function.
        let z = c(0.05, 0.01);
        let lhs = d.value(d.center + z);
        let rhs = d.value(d.center - z);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn domain_condition() {
        assert!(domain_ok(c(1.0, 0.5)));
        assert!(!domain_ok(c(0.5, 1.0)));
        assert!(!domain_ok(c(1.0, 1.0))); // boundary excluded
    }

    #[test]
    fn scaled_domain_reduces_and_cross_validates() {
        // a = 1, real eps: reduces to L(q) > 0.
        for &q in &[c(1.0, 0.5), c(0.5, 1.0), c(-2.0, 1.0), c(0.3, -0.2)] {
            assert_eq!(scaled_domain_ok(q, cr(1.0), cr(0.02)), domain_ok(q));
        }
        // a = e^{i pi/8}, eps = 1, q = 1: Re(e^{i pi/4}) > 0.
        let a = C64::from_polar(1.0, PI / 8.0);
        assert!(scaled_domain_ok(cr(1.0), a, cr(1.0)));
        // Window form vs Re form on a deterministic sample sweep.
        let mut rng = crate::rng::DeterministicRng::new(77);
        let mut checked = 0usize;
        for _ in 0..100_000 {
            let q = rng.complex_normal() * cr(2.0);
            let a = rng.complex_normal();
            let eps = rng.complex_normal();
            if a.norm() < 1e-3 || eps.norm() < 1e-3 || q.norm() < 1e-3 {
                continue;
            }
            let margin = (a * a * q * q / eps).re.abs() / (a * a * q * q / eps).norm();
            if margin < 1e-9 {
                continue; // boundary
            }
            assert_eq!(
                scaled_domain_ok(q, a, eps),
                scaled_domain_window_form(q, a, eps),
                "q={q} a={a} eps={eps}"
            );
            checked += 1;
        }
        assert!(checked > 90_000);
    }

    #[test]
    fn scaling_identity_cases() {
        let samples: Vec<C64> = (0..100)
            .map(|k| {
                let x = -2.0 + 4.0 * (k as f64) / 99.0;
                c(x, 0.2 * x)
            })
            .collect();
        // a = 1: exact identity.
        assert!(scaling_identity_residual(cr(1.0), cr(0.05), &samples).unwrap() < 1e-15);
        // a = -1: sign factor repairs the odd branch.
        assert!(scaling_identity_residual(cr(-1.0), cr(0.05), &samples).unwrap() < 1e-15);
        // Generic complex a and eps.
        let a = C64::from_polar(2.0, PI / 6.0);
        let eps = C64::from_polar(0.05, PI / 12.0);
        let r = scaling_identity_residual(a, eps, &samples).unwrap();
        assert!(r < 1e-13, "residual {r}");
        // Re(a) = 0 is ambiguous.
        assert!(matches!(
            scaling_identity_residual(c(0.0, 2.0), cr(0.05), &samples),
            Err(Error::BranchAmbiguity)
        ));
    }

    #[test]
    fn contour_validation() {
        let p = params();
        assert!(Contour::real_axis(5.0, 16).validate(&p).is_empty());
        assert!(Contour::zigzag(5.0, 16).validate(&p).is_empty());
        let steep = Contour::tilted(PI / 3.0, 5.0, 16);
        let v = steep.validate(&p);
        assert!(matches!(v.as_slice(), [Violation::TangentAngle { .. }]));
    }

    #[test]
    fn delta_normalization_and_sifting() {
        let p = params();
        let contour = Contour::real_axis(6.0, 24);
        let d = SmearedDelta::real(0.01, 0.3);
        let one = contour.integrate(|q| d.value(q), &p).unwrap();
        assert!((one - cr(1.0)).norm() < 1e-10, "normalization {one}");

        // Odd integrand.
        let d0 = SmearedDelta::real(0.01, 0.0);
        let zero = contour.integrate(|q| q * d0.value(q), &p).unwrap();
        assert!(zero.norm() < 1e-10);

        // Sifting of cos on a tilted path: exact value is cos(q0) e^{-eps},
        // so the defect is (1 - e^{-eps}) cos(q0) = O(eps).
        let tilted = Contour::tilted(PI / 8.0, 6.0, 24);
        for &eps in &[0.01, 0.0025] {
            let d = SmearedDelta::real(eps, 0.5);
            let got = tilted.integrate(|q| q.cos() * d.value(q), &p).unwrap();
            let defect = (got - cr(0.5f64.cos())).norm();
            let exact_defect = (1.0 - (-eps).exp()) * 0.5f64.cos();
            assert!(defect <= 1.05 * exact_defect + 1e-10, "eps={eps} defect={defect}");
            assert!(defect <= if eps > 0.005 { 0.01 } else { 0.0025 });
        }
    }

    #[test]
    fn contour_independence() {
        let p = params();
        let d = SmearedDelta { epsilon: cr(0.02), center: c(0.4, 0.05) };
        let f = |q: C64| (q * q).cos() * d.value(q) + q.sin() * d.value(q) * cr(0.3);
        let real = Contour::real_axis(6.0, 24).integrate(f, &p).unwrap();
        let zig = Contour::zigzag(6.0, 24).integrate(f, &p).unwrap();
        assert!((real - zig).norm() <= 10.0 * p.quad_tol * real.norm().max(1.0));
    }

    #[test]
    fn sifting_error_first_order_in_eps() {
        // log-log slope of |I(eps) - f(q0)| vs eps in [0.9, 1.1] for a
        // test function with f''(q0) != 0.
        let p = params();
        let contour = Contour::real_axis(6.0, 24);
        let q0 = 0.7;
        let f = |q: C64| q.cos();
        let mut log_es = Vec::new();
        let mut errs = Vec::new();
        for k in 0..6 {
            let eps = 0.02 / (2.0f64.powi(k));
            let d = SmearedDelta::real(eps, q0);
            let got = contour.integrate(|q| f(q) * d.value(q), &p).unwrap();
            log_es.push(eps.ln());
            errs.push((got - f(cr(q0))).norm());
        }
        // log-log fit: first-order sifting error means slope 1 in eps.
        let (slope, _) = crate::fitting::log_slope(&log_es, &errs);
        assert!((0.9..=1.1).contains(&slope), "slope {slope}");
    }
}
