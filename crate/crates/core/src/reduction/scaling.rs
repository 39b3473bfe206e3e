//! Norm surrogates of the remainder terms `I₁, I₂, I₃` on the model half-space
//! and their scaling in `ε`.

use std::cell::RefCell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bubble::CorrectorField;
use crate::error::{domain, Error, Result};
use crate::fit::linear_fit;
use crate::quadrature::{gauss_legendre, integrate_breaks, integrate_to_infinity, QuadOptions};
use crate::special::{alpha, require_reduced_dimension, sphere_area};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorTerm {
    /// `‖U^{p+ε} − U^p‖`
    I1,
    /// `‖U^{p−1} δ^{(4−n)/2} φ₀(x/δ)‖`
    I2,
    /// `‖(∇a/a)·∇U‖` with `a = 1 + x_n`
    I3,
}

impl ErrorTerm {
    pub const ALL: [ErrorTerm; 3] = [ErrorTerm::I1, ErrorTerm::I2, ErrorTerm::I3];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingOptions {
    pub n: usize,
    /// `δ = |ε| d`
    pub d: f64,
    /// umbilic curvature of the model boundary in `I₂`
    pub curvature: f64,
    /// refinement factor: tolerances shrink by 4 and grids double per step
    pub resolution: u32,
    pub r_squared_threshold: f64,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            n: 5,
            d: 1.0,
            curvature: 1.0,
            resolution: 1,
            r_squared_threshold: 0.99,
        }
    }
}

impl ScalingOptions {
    fn validate(&self) -> Result<()> {
        require_reduced_dimension(self.n)?;
        if !(self.d > 0.0) {
            return domain(format!("d must be positive, got {}", self.d));
        }
        if self.resolution == 0 || self.resolution > 4 {
            return domain(format!("resolution must be in 1..=4, got {}", self.resolution));
        }
        if !(self.r_squared_threshold > 0.0 && self.r_squared_threshold <= 1.0) {
            return domain("r-squared threshold must lie in (0, 1]");
        }
        Ok(())
    }

    fn rel_tol(&self) -> f64 {
        1e-9 / 4f64.powi(self.resolution as i32 - 1)
    }
}

/// Exponent of the `L^{2n/(n+2)}` norm.
fn dual_exponent(n: usize) -> f64 {
    2.0 * n as f64 / (n as f64 + 2.0)
}

fn i1_norm(eps: f64, o: &ScalingOptions) -> Result<f64> {
    let n = o.n;
    let nf = n as f64;
    let s = dual_exponent(n);
    let delta = eps.abs() * o.d;
    let half = 0.5 * (nf - 2.0);
    let log_alpha = alpha(n).ln();
    // ln U at radius δρ
    let log_u = move |rho: f64| log_alpha - half * delta.ln() - half * (rho * rho).ln_1p();
    let f = |rho: f64| {
        let u1 = alpha(n) * (1.0 + rho * rho).powf(-half);
        let change = (eps * log_u(rho)).exp_m1().abs();
        (u1.powf(2.0 * nf / (nf - 2.0)) * change.powf(s)) * rho.powi(n as i32 - 1)
    };
    // U = 1 on ln(1+ρ²) = 2 ln α/(n−2) − ln δ
    let level = 2.0 * log_alpha / (nf - 2.0) - delta.ln();
    let mut breaks = vec![0.0, 1.0];
    if level > 0.0 {
        breaks.push(level.exp_m1().sqrt());
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let cut = *breaks.last().unwrap() * 4.0 + 4.0;
    breaks.push(cut);
    let opts = QuadOptions::relative(o.rel_tol()).with_max_subdivisions(4000);
    let head = integrate_breaks(f, &breaks, opts)?.value;
    let tail = integrate_to_infinity(f, cut, opts)?.value;
    Ok((0.5 * sphere_area(n - 1) * (head + tail)).powf(1.0 / s))
}

/// Log-spaced Gauss–Legendre nodes `(R, weight in dR)` covering `[lo, hi]`.
fn log_radial_grid(lo: f64, hi: f64, panels_per_unit: usize, order: usize) -> Vec<(f64, f64)> {
    let (a, b) = (lo.ln(), hi.ln());
    let panels = ((b - a) * panels_per_unit as f64).ceil() as usize;
    let width = (b - a) / panels as f64;
    let (x, w) = gauss_legendre(order);
    let mut out = Vec::with_capacity(panels * order);
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * width;
        for (xi, wi) in x.iter().zip(&w) {
            let r = (mid + 0.5 * width * xi).exp();
            out.push((r, 0.5 * width * wi * r));
        }
    }
    out
}

// Fixed radial window of the I₂ grid; δ must stay well inside it.
const I2_GRID: (f64, f64) = (1e-11, 1e3);
// Only ρ = R/δ in this window contributes above 1e−7 of the total.
const I2_WINDOW: (f64, f64) = (1e-2, 1e2);

fn i2_norm(eps: f64, o: &ScalingOptions) -> Result<f64> {
    let n = o.n;
    let nf = n as f64;
    let s = dual_exponent(n);
    let delta = eps.abs() * o.d;
    if delta < I2_GRID.0 / I2_WINDOW.0 || delta > I2_GRID.1 / I2_WINDOW.1 {
        return domain(format!("delta = {delta} lies outside the I2 grid"));
    }
    let phi = CorrectorField::new(vec![o.curvature; n - 1])?.with_tolerance(1e-9);
    let res = o.resolution as usize;
    let radial = log_radial_grid(I2_GRID.0, I2_GRID.1, res, 6);
    let (px, pw) = gauss_legendre(8 * res);
    let quarter = std::f64::consts::FRAC_PI_4;
    let angles: Vec<(f64, f64)> = px.iter().zip(&pw).map(|(x, w)| (quarter * (x + 1.0), quarter * w)).collect();
    let a_pow = alpha(n).powf(4.0 / (nf - 2.0));
    let scale = delta.powf(0.5 * (4.0 - nf));
    let nodes: Vec<(f64, f64)> = radial
        .into_iter()
        .filter(|(r, _)| {
            let rho = r / delta;
            rho >= I2_WINDOW.0 && rho <= I2_WINDOW.1
        })
        .collect();
    let total: f64 = nodes
        .par_iter()
        .map(|&(r, wr)| -> Result<f64> {
            let u_pow = a_pow * delta * delta / (delta * delta + r * r).powi(2);
            let mut acc = 0.0;
            for &(psi, wp) in &angles {
                let mut y = vec![0.0; n];
                y[0] = r * psi.sin() / delta;
                y[n - 1] = r * psi.cos() / delta;
                let v = u_pow * scale * phi.eval(&y)?.abs();
                acc += wp * psi.sin().powi(n as i32 - 2) * v.powf(s);
            }
            Ok(wr * r.powi(n as i32 - 1) * acc)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum();
    Ok((sphere_area(n - 2) * total).powf(1.0 / s))
}

fn i3_norm(eps: f64, o: &ScalingOptions) -> Result<f64> {
    let n = o.n;
    let nf = n as f64;
    let s = dual_exponent(n);
    let delta = eps.abs() * o.d;
    let a = alpha(n);
    let tol = o.rel_tol();
    let inner_opts = QuadOptions::relative(0.1 * tol).with_max_subdivisions(4000);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let err = RefCell::new(None);
    // ρ = R/δ; |∇U|(δρ) = δ^{−n/2} α(n−2) ρ (1+ρ²)^{−n/2}
    let f = |rho: f64| {
        let grad = a * (nf - 2.0) * rho * (1.0 + rho * rho).powf(-0.5 * nf);
        let r = delta * rho;
        let width = (1.0 / r).min(1.0);
        let mut breaks = vec![0.0, half_pi];
        let mut w = width;
        while w < half_pi {
            breaks.push(half_pi - w);
            w *= 4.0;
        }
        breaks.sort_by(f64::total_cmp);
        let angular = integrate_breaks(
            |psi: f64| psi.sin().powi(n as i32 - 2) * (1.0 + r * psi.cos()).powf(-s),
            &breaks,
            inner_opts,
        );
        match angular {
            Ok(v) => grad.powf(s) * rho.powi(n as i32 - 1) * v.value,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let opts = QuadOptions::relative(tol).with_max_subdivisions(4000);
    let mut breaks = vec![0.0, 1.0, 1.0 / delta];
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let cut = 4.0 / delta + 4.0;
    breaks.push(cut);
    let head = integrate_breaks(f, &breaks, opts);
    let tail = integrate_to_infinity(f, cut, opts);
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    // δ^{−ns/2} from |∇U|^s and δ^n from dx
    let total = (head?.value + tail?.value) * delta.powf(nf - 0.5 * nf * s);
    Ok((sphere_area(n - 2) * total).powf(1.0 / s))
}

/// Norm surrogate of one error term at one `ε`.
pub fn error_term_norm(term: ErrorTerm, epsilon: f64, opts: &ScalingOptions) -> Result<f64> {
    opts.validate()?;
    if !(epsilon != 0.0 && epsilon.abs() <= 1.0) {
        return domain(format!("epsilon must be nonzero with |epsilon| <= 1, got {epsilon}"));
    }
    match term {
        ErrorTerm::I1 => i1_norm(epsilon, opts),
        ErrorTerm::I2 => i2_norm(epsilon, opts),
        ErrorTerm::I3 => i3_norm(epsilon, opts),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub term: Option<ErrorTerm>,
    /// slope of `ln(norm)` against `ln ε`
    pub exponent: f64,
    /// whether `ε(c₀ + c₁|ln ε|)` fits better than a pure power of `ε`
    pub log_coefficient_flag: bool,
    pub r_squared: f64,
    pub coefficient: f64,
    pub power_rss: f64,
    pub log_model_rss: f64,
    pub epsilons: Vec<f64>,
    pub norms: Vec<f64>,
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 6 {
        return domain(format!("epsilon grid needs at least 6 points, got {}", grid.len()));
    }
    if grid.iter().any(|e| !(*e > 0.0 && *e <= 0.1)) {
        return domain("epsilon grid must lie in (0, 0.1]");
    }
    let ratio = grid[1] / grid[0];
    if (ratio - 1.0).abs() < 1e-12 {
        return domain("epsilon grid must not repeat values");
    }
    if grid.windows(2).any(|w| ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-9) {
        return domain("epsilon grid must be geometric");
    }
    Ok(())
}

fn log_space_rss(y: &[f64], model: &[f64]) -> f64 {
    y.iter()
        .zip(model)
        .map(|(a, b)| if *b > 0.0 { (a.ln() - b.ln()).powi(2) } else { f64::INFINITY })
        .sum()
}

fn fit_norms(term: Option<ErrorTerm>, eps: &[f64], norms: &[f64], threshold: f64) -> Result<ScalingFit> {
    let lx: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let power = linear_fit(&lx, &ly);
    // N/ε = c₀ + c₁|ln ε|
    let abs_log: Vec<f64> = eps.iter().map(|e| e.ln().abs()).collect();
    let per_eps: Vec<f64> = norms.iter().zip(eps).map(|(v, e)| v / e).collect();
    let log_model = linear_fit(&abs_log, &per_eps);
    let predicted: Vec<f64> = eps
        .iter()
        .zip(&abs_log)
        .map(|(e, l)| e * (log_model.intercept + log_model.slope * l))
        .collect();
    let log_model_rss = log_space_rss(norms, &predicted);
    // the extra log factor must at least halve the residual
    let flag = log_model_rss < 0.5 * power.rss;
    let r_squared = if flag && term.is_some() {
        let mean = ly.iter().sum::<f64>() / ly.len() as f64;
        let syy: f64 = ly.iter().map(|v| (v - mean).powi(2)).sum();
        (1.0 - log_model_rss / syy).clamp(0.0, 1.0)
    } else {
        power.r_squared
    };
    if r_squared < threshold {
        return Err(Error::FitRejected { r_squared, threshold });
    }
    Ok(ScalingFit {
        term,
        exponent: power.slope,
        log_coefficient_flag: flag,
        r_squared,
        coefficient: power.intercept.exp(),
        power_rss: power.rss,
        log_model_rss,
        epsilons: eps.to_vec(),
        norms: norms.to_vec(),
    })
}

fn norms_on_grid(term: ErrorTerm, grid: &[f64], opts: &ScalingOptions) -> Result<Vec<f64>> {
    grid.par_iter().map(|&e| error_term_norm(term, e, opts)).collect()
}

/// Fits `ln ‖term‖` against `ln ε` and compares with `ε(c₀ + c₁|ln ε|)`.
pub fn error_scaling_fit(term: ErrorTerm, grid: &[f64], opts: &ScalingOptions) -> Result<ScalingFit> {
    opts.validate()?;
    validate_grid(grid)?;
    let norms = norms_on_grid(term, grid, opts)?;
    fit_norms(Some(term), grid, &norms, opts.r_squared_threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderFit {
    /// least-squares `c` in `total ≈ c|ε||ln ε|`
    pub constant: f64,
    /// slope of `ln(total)` against `ln(ε|ln ε|)`
    pub exponent: f64,
    pub r_squared: f64,
    /// largest `total / (ε|ln ε|)` on the grid
    pub max_ratio: f64,
    pub epsilons: Vec<f64>,
    pub totals: Vec<f64>,
    pub terms: [Vec<f64>; 3],
}

/// Fits `I₁ + I₂ + I₃` against `c|ε||ln ε|`.
pub fn remainder_bound_check(grid: &[f64], opts: &ScalingOptions) -> Result<RemainderFit> {
    opts.validate()?;
    validate_grid(grid)?;
    let i1 = norms_on_grid(ErrorTerm::I1, grid, opts)?;
    let i2 = norms_on_grid(ErrorTerm::I2, grid, opts)?;
    let i3 = norms_on_grid(ErrorTerm::I3, grid, opts)?;
    let totals: Vec<f64> = (0..grid.len()).map(|k| i1[k] + i2[k] + i3[k]).collect();
    let model: Vec<f64> = grid.iter().map(|e| e * e.ln().abs()).collect();
    let lx: Vec<f64> = model.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = totals.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&lx, &ly);
    if fit.r_squared < opts.r_squared_threshold {
        return Err(Error::FitRejected {
            r_squared: fit.r_squared,
            threshold: opts.r_squared_threshold,
        });
    }
    let constant = totals.iter().zip(&model).map(|(t, m)| t * m).sum::<f64>()
        / model.iter().map(|m| m * m).sum::<f64>();
    let max_ratio = totals.iter().zip(&model).map(|(t, m)| t / m).fold(0.0, f64::max);
    Ok(RemainderFit {
        constant,
        exponent: fit.slope,
        r_squared: fit.r_squared,
        max_ratio,
        epsilons: grid.to_vec(),
        totals,
        terms: [i1, i2, i3],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..6).map(|k| 0.1 * 0.5f64.powi(k)).collect()
    }

    #[test]
    fn grid_validation() {
        let o = ScalingOptions::default();
        assert!(error_scaling_fit(ErrorTerm::I1, &[], &o).is_err());
        assert!(error_scaling_fit(ErrorTerm::I1, &grid()[..5], &o).is_err());
        let mut g = grid();
        g[3] *= 1.1;
        assert!(error_scaling_fit(ErrorTerm::I1, &g, &o).is_err());
        let g: Vec<f64> = grid().iter().map(|e| e * 2.0).collect();
        assert!(error_scaling_fit(ErrorTerm::I1, &g, &o).is_err());
    }

    fn small_grid() -> Vec<f64> {
        (0..6).map(|k| 1e-3 * 0.1f64.powi(k)).collect()
    }

    #[test]
    fn i1_prefers_log_model() {
        let fit = error_scaling_fit(ErrorTerm::I1, &small_grid(), &ScalingOptions::default()).unwrap();
        assert!(fit.log_coefficient_flag, "{fit:?}");
        assert!(fit.log_model_rss < fit.power_rss);
    }

    #[test]
    fn i1_small_epsilon_limit() {
        let o = ScalingOptions::default();
        let a = error_term_norm(ErrorTerm::I1, 1e-6, &o).unwrap();
        let b = error_term_norm(ErrorTerm::I1, 1e-3, &o).unwrap();
        assert!(a < 1e-2 * b);
    }

    #[test]
    fn i2_doubles_with_d() {
        let o = ScalingOptions::default();
        let o2 = ScalingOptions { d: 2.0, ..o };
        let ratio = error_term_norm(ErrorTerm::I2, 1e-3, &o2).unwrap() / error_term_norm(ErrorTerm::I2, 1e-3, &o).unwrap();
        assert!((ratio - 2.0).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn i3_is_linear_in_delta() {
        let fit = error_scaling_fit(ErrorTerm::I3, &grid(), &ScalingOptions::default()).unwrap();
        assert!((fit.exponent - 1.0).abs() <= 0.1, "{fit:?}");
        let o = ScalingOptions::default();
        let o2 = ScalingOptions { d: 2.0, ..o };
        let ratio = error_term_norm(ErrorTerm::I3, 1e-3, &o2).unwrap() / error_term_norm(ErrorTerm::I3, 1e-3, &o).unwrap();
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn exponents_stable_under_refinement() {
        let coarse = ScalingOptions::default();
        let fine = ScalingOptions { resolution: 2, ..coarse };
        for term in [ErrorTerm::I1, ErrorTerm::I3] {
            let a = error_scaling_fit(term, &grid(), &coarse).unwrap();
            let b = error_scaling_fit(term, &grid(), &fine).unwrap();
            assert!((a.exponent - b.exponent).abs() <= 0.02, "{term:?}");
        }
    }
}
