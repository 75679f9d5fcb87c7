//! CBFeD drift operators realized pseudo-spectrally: the convective term
//! `B(u) = P[(u.grad)u]`, the power nonlinearities `C_s(u) = P(|u|^{s-1} u)`
//! (damping for `s = r`, pumping/damping for `s = q`), the full drift, and
//! the explicit constants attached to the energy and regularity estimates.
//!
//! Quadrature policy. Pointwise power kernels are evaluated on a physical
//! grid oversampled by `DEFAULT_KERNEL_OVERSAMPLE` before transforming back
//! and truncating to the dealias mask; the quadratic convective product is
//! exactly dealiased on the collocation grid by the 2/3 rule. Pairings of
//! the form `<C_s(u), u>` computed here agree with `lp_pow(s + 1)` on the
//! same oversampled grid to rounding, by discrete Parseval; diagnostics that
//! verify those identities must therefore quadrature their Lp norms on the
//! kernel grid.

use std::sync::Arc;

use crate::error::{CbfedError, Result};
use crate::spectral::{oversampled_modes, Grid, SpectralField, TorusConfig};

/// Oversampling factor for non-quadratic pointwise kernels. 3/2 removes the
/// aliasing of cubic products entirely; higher powers are best-effort.
pub const DEFAULT_KERNEL_OVERSAMPLE: f64 = 1.5;

/// Physical parameters of the CBFeD system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysParams {
    /// Brinkman (effective viscosity) coefficient, positive in the validated
    /// regime.
    pub mu: f64,
    /// Darcy-type coefficient; negative values model pumping.
    pub alpha: f64,
    /// Forchheimer coefficient, positive in the validated regime.
    pub beta: f64,
    /// Absorption exponent, >= 1; r = 3 is critical.
    pub r: f64,
    /// Secondary exponent, 1 <= q < r.
    pub q: f64,
}

impl PhysParams {
    /// Solvability regime gates. Enforced at configuration time, not inside
    /// the operators, so that individual terms can be exercised with
    /// degenerate coefficients in tests.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(CbfedError::Regime(format!(
                "viscosity mu must be positive, got {}",
                self.mu
            )));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(CbfedError::Regime(format!(
                "Forchheimer coefficient beta must be positive, got {}",
                self.beta
            )));
        }
        if !self.alpha.is_finite() {
            return Err(CbfedError::Regime("alpha must be finite".into()));
        }
        if !(self.r >= 1.0) || !self.r.is_finite() {
            return Err(CbfedError::Regime(format!(
                "absorption exponent r must satisfy r >= 1, got {}",
                self.r
            )));
        }
        if !(self.q >= 1.0) || !(self.q < self.r) {
            return Err(CbfedError::Regime(format!(
                "secondary exponent must satisfy 1 <= q < r, got q = {}, r = {}",
                self.q, self.r
            )));
        }
        match dim {
            2 => {}
            3 => {
                if self.r < 3.0 {
                    return Err(CbfedError::Regime(format!(
                        "d=3 requires r >= 3, got r = {}",
                        self.r
                    )));
                }
                if self.r == 3.0 {
                    let prod = 2.0 * self.beta * self.mu;
                    if prod <= 1.0 {
                        let note = if prod >= 1.0 {
                            " (2*beta*mu = 1 is a paper-ambiguous regime; \
                             the V-regularity estimate closes only for the strict inequality)"
                        } else {
                            ""
                        };
                        return Err(CbfedError::Regime(format!(
                            "d=3, r=3 requires 2*beta*mu > 1, got 2*beta*mu = {}{}",
                            prod, note
                        )));
                    }
                }
            }
            other => {
                return Err(CbfedError::Regime(format!(
                    "dimension must be 2 or 3, got {}",
                    other
                )))
            }
        }
        Ok(())
    }
}

fn quadrature_weight(grid: &Grid, m: usize) -> f64 {
    (grid.cfg().period / m as f64).powi(grid.dim() as i32)
}

/// Trilinear form `b(u, v, w) = int (u.grad) v . w dx`, evaluated by
/// spectral differentiation of `v` and physical-space quadrature on the
/// collocation grid.
pub fn trilinear(u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<f64> {
    if !u.same_grid(v) || !u.same_grid(w) {
        return Err(CbfedError::GridMismatch);
    }
    let grid = u.grid();
    let d = grid.dim();
    let n = grid.modes();
    let np = grid.npoints();
    let phys_u = u.to_physical();
    let phys_w = w.to_physical();
    let mut acc = 0.0;
    for j in 0..d {
        for i in 0..d {
            let dv = v.derivative_physical(j, i, n);
            let ui = &phys_u[i * np..(i + 1) * np];
            let wj = &phys_w[j * np..(j + 1) * np];
            for x in 0..np {
                acc += ui[x] * dv[x] * wj[x];
            }
        }
    }
    Ok(acc * quadrature_weight(grid, n))
}

/// Convective operator `B(u) = P[(u.grad) u]`, dealiased by the 2/3 rule.
pub fn convective(u: &SpectralField) -> SpectralField {
    let grid = u.grid();
    let d = grid.dim();
    let n = grid.modes();
    let np = grid.npoints();
    let phys_u = u.to_physical();
    let mut product = vec![0.0; d * np];
    for j in 0..d {
        for i in 0..d {
            let du = u.derivative_physical(j, i, n);
            let ui = &phys_u[i * np..(i + 1) * np];
            let out = &mut product[j * np..(j + 1) * np];
            for x in 0..np {
                out[x] += ui[x] * du[x];
            }
        }
    }
    let mut field = SpectralField::from_physical_dealiased(grid, &product, n);
    field.leray_project_in_place();
    field
}

/// Pointwise power kernel `v -> |v|^{s-1} v` at a single sample.
pub fn power_kernel(sample: &[f64], s: f64) -> Vec<f64> {
    let mag_sq: f64 = sample.iter().map(|x| x * x).sum();
    let factor = if mag_sq == 0.0 {
        0.0
    } else if s == 1.0 {
        1.0
    } else if s == 3.0 {
        mag_sq
    } else {
        mag_sq.sqrt().powf(s - 1.0)
    };
    sample.iter().map(|x| factor * x).collect()
}

/// Power nonlinearity `C_s(u) = P(|u|^{s-1} u)`. The kernel is evaluated on
/// an oversampled physical grid (default factor 3/2), transformed back,
/// truncated to the dealias mask and Leray-projected. `s = r` realizes the
/// damping operator, `s = q` the pumping/damping operator; both share every
/// property used here.
pub fn damping(u: &SpectralField, s: f64, oversample: Option<f64>) -> SpectralField {
    assert!(s >= 1.0, "power exponent must satisfy s >= 1, got {}", s);
    if s == 1.0 {
        // |u|^0 u = u; the projection of u is u on divergence-free input.
        let mut out = u.clone();
        out.dealias();
        out.leray_project_in_place();
        return out;
    }
    let grid = u.grid();
    let d = grid.dim();
    let factor = oversample.unwrap_or(DEFAULT_KERNEL_OVERSAMPLE);
    let m = oversampled_modes(grid.modes(), factor);
    let mp = m.pow(d as u32);
    let mut phys = u.to_physical_grid(m);
    for x in 0..mp {
        let mut mag_sq = 0.0;
        for c in 0..d {
            let v = phys[c * mp + x];
            mag_sq += v * v;
        }
        let f = if mag_sq == 0.0 {
            0.0
        } else if s == 3.0 {
            mag_sq
        } else {
            mag_sq.sqrt().powf(s - 1.0)
        };
        for c in 0..d {
            phys[c * mp + x] *= f;
        }
    }
    let mut field = SpectralField::from_physical_dealiased(grid, &phys, m);
    field.leray_project_in_place();
    field
}

/// Full drift `-mu A u - B(u) - alpha C_q(u) - beta C_r(u) + P F(u)`.
pub fn drift<F>(u: &SpectralField, p: &PhysParams, forcing: Option<&F>) -> SpectralField
where
    F: Fn(&SpectralField) -> SpectralField,
{
    let mut out = u.stokes_apply(1.0);
    out.scale(-p.mu);
    out.axpy(-1.0, &convective(u));
    if p.alpha != 0.0 {
        out.axpy(-p.alpha, &damping(u, p.q, None));
    }
    if p.beta != 0.0 {
        out.axpy(-p.beta, &damping(u, p.r, None));
    }
    if let Some(f) = forcing {
        let mut g = f(u);
        g.leray_project_in_place();
        out.axpy(1.0, &g);
    }
    out.leray_project_in_place();
    out
}

/// The three integrals of the commutator sandwich:
/// `I0 = int |grad u|^2 |u|^{r-1}`, `I1 = int |u|^{r-1} u . A u`,
/// `I2 = r I0`, satisfying `0 <= I0 <= I1 <= I2`.
pub fn sandwich_check(u: &SpectralField, r: f64, oversample: Option<f64>) -> (f64, f64, f64) {
    let grid = u.grid();
    let d = grid.dim();
    let factor = oversample.unwrap_or(DEFAULT_KERNEL_OVERSAMPLE);
    let m = oversampled_modes(grid.modes(), factor);
    let mp = m.pow(d as u32);
    let weight = quadrature_weight(grid, m);

    let phys_u = u.to_physical_grid(m);
    let mut grad_sq = vec![0.0; mp];
    for j in 0..d {
        for i in 0..d {
            let du = u.derivative_physical(j, i, m);
            for x in 0..mp {
                grad_sq[x] += du[x] * du[x];
            }
        }
    }
    let au = u.stokes_apply(1.0);
    let phys_au = au.to_physical_grid(m);

    let mut i0 = 0.0;
    let mut i1 = 0.0;
    for x in 0..mp {
        let mut mag_sq = 0.0;
        let mut u_dot_au = 0.0;
        for c in 0..d {
            let uc = phys_u[c * mp + x];
            mag_sq += uc * uc;
            u_dot_au += uc * phys_au[c * mp + x];
        }
        let pw = if r == 1.0 {
            1.0
        } else if r == 3.0 {
            mag_sq
        } else {
            mag_sq.sqrt().powf(r - 1.0)
        };
        i0 += pw * grad_sq[x];
        i1 += pw * u_dot_au;
    }
    i0 *= weight;
    i1 *= weight;
    let i2 = r * i0;
    debug_assert!(
        -1e-8 * i2.abs() <= i0
            && i0 <= i1 * (1.0 + 1e-8) + 1e-300
            && i1 <= i2 * (1.0 + 1e-8) + 1e-300,
        "sandwich ordering violated: I0 = {}, I1 = {}, I2 = {}",
        i0,
        i1,
        i2
    );
    (i0, i1, i2)
}

/// The explicit constants of the energy and regularity estimates.
///
/// `vartheta` and `eta` share the formula
/// `(r-3)/(r-1) * (8/(beta mu (r-1)))^{2/(r-3)}` and vanish at r = 3 (the
/// leading factor is zero); they are undefined for r < 3. `chi` is only
/// derived for q in [3, r) and is reported as undefined below that.
/// `zeta_tilde` and `theta` belong to the d = r = 3 branch.
#[derive(Clone, Debug)]
pub struct ConstantsReport {
    pub lambda_1: f64,
    pub c_alpha_beta: f64,
    pub zeta: f64,
    pub vartheta: Option<f64>,
    pub eta: Option<f64>,
    pub chi: Option<f64>,
    /// Coefficient of the strong monotonicity bound, `2^{1-r}`.
    pub monotonicity_coeff: f64,
    pub theta: Option<f64>,
    pub zeta_tilde: Option<f64>,
}

/// Power with the `x^0 = 1` convention used by the estimates at their
/// boundary exponents.
#[inline]
fn xpow(base: f64, expo: f64) -> f64 {
    if expo == 0.0 {
        1.0
    } else {
        base.powf(expo)
    }
}

/// Evaluate the explicit constants for the given parameters. `theta` is
/// consulted only on the d = r = 3 branch; when absent it defaults to the
/// midpoint of the admissible window `(1/(2 beta mu), 1)`.
pub fn constants(p: &PhysParams, cfg: &TorusConfig, theta: Option<f64>) -> Result<ConstantsReport> {
    p.validate(cfg.dim)?;
    if p.alpha < 0.0 {
        return Err(CbfedError::OutOfRegime(format!(
            "constants are derived for alpha >= 0, got alpha = {}",
            p.alpha
        )));
    }
    let (r, q, alpha, beta, mu) = (p.r, p.q, p.alpha, p.beta, p.mu);
    let vol = cfg.volume();

    let c_alpha_beta = xpow(2.0 * alpha, (r + 1.0) / (r - q))
        * ((r - q) / (r + 1.0))
        * xpow((q + 1.0) / (beta * (r + 1.0)), (q + 1.0) / (r - q))
        * vol;

    let zeta = xpow(2.0 * alpha * q, (r - 1.0) / (r - q))
        * ((r - q) / (r - 1.0))
        * xpow(2.0 * (q - 1.0) / (beta * (r - 1.0)), (q - 1.0) / (r - q));

    let vartheta = if r > 3.0 {
        Some(((r - 3.0) / (r - 1.0)) * xpow(8.0 / (beta * mu * (r - 1.0)), 2.0 / (r - 3.0)))
    } else if r == 3.0 {
        Some(0.0)
    } else {
        None
    };
    let eta = vartheta;

    let chi = if q >= 3.0 {
        let e1 = (q - 1.0) / (r - q);
        let e2 = (r - 1.0) / (r - q);
        let inner = if q == 2.0 {
            0.0
        } else {
            ((q - 2.0) / xpow(q - 1.0, (q - 1.0) / (q - 2.0)))
                * xpow(2.0, (q - 3.0) * (q - 3.0) / (q - 2.0))
        };
        Some(
            ((r - q) / (r - 1.0))
                * xpow(4.0 * alpha * (q - 1.0) / (beta * (r - 1.0)), e1)
                * (xpow(1.0 + xpow(2.0, q - 2.0), e2) + xpow(2.0, e1) * xpow(inner, e2)),
        )
    } else {
        None
    };

    let (theta_used, zeta_tilde) = if cfg.dim == 3 && r == 3.0 {
        let lower = 1.0 / (2.0 * beta * mu);
        let th = theta.unwrap_or(lower + (1.0 - lower) / 2.0);
        if !(th > 0.0 && th < 1.0) {
            return Err(CbfedError::OutOfRegime(format!(
                "theta must lie in (0, 1), got {}",
                th
            )));
        }
        let zt = ((r - q) / (r - 1.0))
            * xpow(
                alpha * (q - 1.0) / ((1.0 - th) * beta * (r - 1.0)),
                (q - 1.0) / (r - q),
            );
        (Some(th), Some(zt))
    } else {
        (None, None)
    };

    Ok(ConstantsReport {
        lambda_1: cfg.lambda_1(),
        c_alpha_beta,
        zeta,
        vartheta,
        eta,
        chi,
        monotonicity_coeff: xpow(2.0, 1.0 - r),
        theta: theta_used,
        zeta_tilde,
    })
}
