//! Kernel-weighted polynomial least squares on one side of the threshold.
//!
//! Fits `y` on `{1, (x-c), ..., (x-c)^p}` with kernel weights (local scope)
//! or unit weights (global scope), and returns the boundary value at the
//! threshold together with the effective linear weights of the intercept
//! estimator, `boundary_value = Σ wᵢ yᵢ`. The effective weights carry the
//! moment conditions the honest worst-case-bias bound needs: `Σ wᵢ = 1` and
//! `Σ wᵢ (xᵢ-c)^k = 0` for `1 <= k <= p`.

use nalgebra::{DMatrix, DVector};

use crate::error::{ErrorSide, RdError, Result};
use crate::spec::{Kernel, RdSpec, Scope};

/// Which side of the threshold a fit covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

impl From<Side> for ErrorSide {
    fn from(side: Side) -> ErrorSide {
        match side {
            Side::Below => ErrorSide::Below,
            Side::Above => ErrorSide::Above,
        }
    }
}

/// Effective linear weight of one observation in the intercept estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveWeight {
    /// Position in the side data passed to the fit.
    pub index: usize,
    pub centered_age: f64,
    pub weight: f64,
}

/// A one-sided boundary fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SideFit {
    /// Estimated outcome level as the threshold is approached from this side.
    pub boundary_value: f64,
    /// Polynomial coefficients in centered age `(x - c)`, intercept first.
    pub coefficients: Vec<f64>,
    /// Linear weights with `boundary_value = Σ wᵢ yᵢ`; zero-weight rows
    /// (outside the kernel window) are omitted.
    pub effective_weights: Vec<EffectiveWeight>,
    /// Heteroskedasticity-robust standard error of the boundary value.
    pub se: f64,
    pub n_used: usize,
}

/// Kernel weight at the scaled distance `u = (age - c) / h`.
pub fn kernel_weight(u: f64, kernel: Kernel) -> f64 {
    match kernel {
        Kernel::Triangular => (1.0 - u.abs()).max(0.0),
        Kernel::Uniform => {
            if u.abs() <= 1.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Intercept-extraction weights for a weighted polynomial design.
///
/// Returns the first row of `(XᵀWX)⁻¹XᵀW` where `X` has rows
/// `[1, x, ..., x^order]` over the centered ages, i.e. the linear weights
/// representing the intercept estimator.
pub fn effective_weights(
    centered_ages: &[f64],
    kernel_weights: &[f64],
    order: usize,
    side: Side,
) -> Result<Vec<f64>> {
    assert_eq!(centered_ages.len(), kernel_weights.len());
    let solve = wls_solve(centered_ages, kernel_weights, None, order, side)?;
    Ok(solve.effective)
}

/// Fit one side and extract the boundary value, effective weights, and a
/// robust ("sandwich") standard error `sqrt(Σ wᵢ² ε̂ᵢ²)`.
pub fn fit_boundary(side_data: &[(i64, f64)], spec: &RdSpec, side: Side) -> Result<SideFit> {
    spec.validate()?;
    if side_data.is_empty() {
        return Err(RdError::EmptySide {
            side: side.into(),
            threshold: spec.threshold,
        });
    }

    let mut centered = Vec::with_capacity(side_data.len());
    let mut weights = Vec::with_capacity(side_data.len());
    let mut ys = Vec::with_capacity(side_data.len());
    let mut indices = Vec::with_capacity(side_data.len());
    for (i, &(age, y)) in side_data.iter().enumerate() {
        let x = (age - spec.threshold) as f64;
        let w = match spec.scope {
            Scope::Local => kernel_weight(x / spec.bandwidth, spec.kernel),
            Scope::Global => 1.0,
        };
        if w > 0.0 {
            centered.push(x);
            weights.push(w);
            ys.push(y);
            indices.push(i);
        }
    }
    if centered.is_empty() {
        return Err(RdError::EmptyKernelWindow { side: side.into() });
    }

    let solve = wls_solve(&centered, &weights, Some(&ys), spec.order, side)?;
    let coefficients = solve.coefficients.expect("ys were provided");

    // Residuals from the side's own fit, then the sandwich form over the
    // effective weights.
    let mut var = 0.0;
    let mut y_scale = 0.0f64;
    for (i, (&x, &y)) in centered.iter().zip(&ys).enumerate() {
        let mut fitted = 0.0;
        let mut pow = 1.0;
        for &coef in &coefficients {
            fitted += coef * pow;
            pow *= x;
        }
        let resid = y - fitted;
        var += (solve.effective[i] * resid).powi(2);
        y_scale = y_scale.max(y.abs());
    }
    // Exact-fit data leaves residuals at solver noise; report them as zero
    // so downstream inference sees a genuinely degenerate se.
    let se = var.sqrt();
    let se = if se <= 1e-10 * y_scale { 0.0 } else { se };

    let effective_weights = indices
        .iter()
        .zip(&centered)
        .zip(&solve.effective)
        .map(|((&index, &centered_age), &weight)| EffectiveWeight {
            index,
            centered_age,
            weight,
        })
        .collect();

    Ok(SideFit {
        boundary_value: coefficients[0],
        coefficients,
        effective_weights,
        se,
        n_used: centered.len(),
    })
}

/// Unweighted polynomial least squares; returns coefficients in centered age.
/// Used by the smoothness-bound and trend fits.
pub fn polyfit(side_data: &[(i64, f64)], threshold: i64, order: usize, side: Side) -> Result<Vec<f64>> {
    let centered: Vec<f64> = side_data
        .iter()
        .map(|&(age, _)| (age - threshold) as f64)
        .collect();
    let weights = vec![1.0; centered.len()];
    let ys: Vec<f64> = side_data.iter().map(|&(_, y)| y).collect();
    let solve = wls_solve(&centered, &weights, Some(&ys), order, side)?;
    Ok(solve.coefficients.expect("ys were provided"))
}

struct WlsSolve {
    coefficients: Option<Vec<f64>>,
    effective: Vec<f64>,
}

/// Weighted least squares on the centered polynomial design via QR of
/// `sqrt(W)X`. Also solves `(XᵀWX) z = e₁` through the triangular factors to
/// obtain the intercept's effective weights `wᵢ (xᵢᵀ z)`. The basis is built
/// in `x / max|x|` to keep the Vandermonde columns conditioned; coefficients
/// are unscaled on the way out and the intercept weights are unaffected.
fn wls_solve(
    centered: &[f64],
    weights: &[f64],
    ys: Option<&[f64]>,
    order: usize,
    side: Side,
) -> Result<WlsSolve> {
    let n = centered.len();
    let p = order + 1;

    let mut distinct: Vec<f64> = centered.to_vec();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if distinct.len() < p {
        return Err(RdError::Identifiability {
            side: side.into(),
            distinct: distinct.len(),
            order,
        });
    }
    if n < p {
        return Err(RdError::Identifiability {
            side: side.into(),
            distinct: n,
            order,
        });
    }

    let basis_scale = centered.iter().fold(0.0f64, |acc, &x| acc.max(x.abs())).max(1.0);
    let mut design = DMatrix::zeros(n, p);
    for (i, &x) in centered.iter().enumerate() {
        let sw = weights[i].sqrt();
        let u = x / basis_scale;
        let mut pow = 1.0;
        for j in 0..p {
            design[(i, j)] = sw * pow;
            pow *= u;
        }
    }

    let qr = design.clone().qr();
    let r = qr.r();
    // Guard against numerically rank-deficient designs the distinct-age
    // check cannot catch (e.g. vanishing weights on all but `order` ages).
    let scale = (0..p).map(|j| r[(j, j)].abs()).fold(0.0f64, f64::max);
    if (0..p).any(|j| r[(j, j)].abs() <= scale * 1e-12) || scale == 0.0 {
        return Err(RdError::Identifiability {
            side: side.into(),
            distinct: distinct.len(),
            order,
        });
    }

    let coefficients = match ys {
        Some(ys) => {
            let b = DVector::from_iterator(n, ys.iter().zip(weights).map(|(&y, &w)| w.sqrt() * y));
            let qtb = qr.q().transpose() * b;
            let beta = r
                .solve_upper_triangular(&qtb)
                .ok_or(RdError::Identifiability {
                    side: side.into(),
                    distinct: distinct.len(),
                    order,
                })?;
            // back to coefficients of x^j from the scaled basis (x/s)^j
            Some(
                beta.iter()
                    .enumerate()
                    .map(|(j, &b)| b / basis_scale.powi(j as i32))
                    .collect(),
            )
        }
        None => None,
    };

    // XᵀWX = RᵀR, so z = R⁻¹ R⁻ᵀ e₁.
    let mut e1 = DVector::zeros(p);
    e1[0] = 1.0;
    let u = r
        .transpose()
        .solve_lower_triangular(&e1)
        .ok_or(RdError::Identifiability {
            side: side.into(),
            distinct: distinct.len(),
            order,
        })?;
    let z = r
        .solve_upper_triangular(&u)
        .ok_or(RdError::Identifiability {
            side: side.into(),
            distinct: distinct.len(),
            order,
        })?;

    let effective = centered
        .iter()
        .zip(weights)
        .map(|(&x, &w)| {
            let mut dot = 0.0;
            let mut pow = 1.0;
            let u = x / basis_scale;
            for j in 0..p {
                dot += z[j] * pow;
                pow *= u;
            }
            w * dot
        })
        .collect();

    Ok(WlsSolve {
        coefficients,
        effective,
    })
}
