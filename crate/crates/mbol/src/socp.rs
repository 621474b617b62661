//! Projection of the auxiliary SINR variables onto their per-user
//! second-order cones.
//!
//! Row `m` of the auxiliary matrix collects `zeta_{m,n} = h_m^H rf bb_n` for
//! every stream `n`; the SINR requirement of user `m` becomes
//! `sqrt(1 + 1/gamma_m) * |zeta_{m,m}| >= || [row; sigma_m] ||_2`, a cone in
//! the row's magnitudes once the diagonal's phase is rotated out. Each row
//! projects independently, so the auxiliary update is row-by-row nearest-point
//! projection.
//!
//! The projector itself is closed-form up to one scalar root: at the optimum
//! every entry keeps its phase, off-diagonal magnitudes shrink by a common
//! factor `1/(1+mu)` and the diagonal grows by `1/(1-mu/gamma)`, where the
//! KKT multiplier `mu` solves the active-constraint equation. That equation
//! is monotone, so a bracketing bisection is exact and dependency-free.

use nalgebra::Complex;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::metrics::HybridPrecoder;
use crate::{CMat, CVec};

/// Auxiliary SINR variables with their per-row cone data.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxMatrix {
    /// `n_cu x n_streams`; entry `(m, n)` stands in for `h_m^H rf bb_n`.
    pub z: CMat,
    /// Per-row noise standard deviation `sigma_m`.
    pub noise_std: Vec<f64>,
    /// Per-row SINR thresholds `gamma_m`, linear scale.
    pub thresholds: Vec<f64>,
}

/// Slack allowed when checking row feasibility.
pub const FEASIBILITY_TOL: f64 = 1e-7;

impl AuxMatrix {
    /// Whether row `m` satisfies its cone constraint within `tol`.
    pub fn row_feasible(&self, m: usize, tol: f64) -> bool {
        row_violation(
            &self.z.row(m).transpose(),
            m,
            self.thresholds[m],
            self.noise_std[m],
        ) <= tol
    }

    /// Largest cone violation over all rows (0 when every row is feasible).
    pub fn max_violation(&self) -> f64 {
        (0..self.z.nrows())
            .map(|m| {
                row_violation(
                    &self.z.row(m).transpose(),
                    m,
                    self.thresholds[m],
                    self.noise_std[m],
                )
            })
            .fold(0.0, f64::max)
    }
}

/// `||[row; sigma]|| - sqrt(1 + 1/gamma) |z_m|`, positive when infeasible.
fn row_violation(z: &CVec, m: usize, gamma: f64, sigma: f64) -> f64 {
    let total: f64 = z.iter().map(|e| e.norm_sqr()).sum::<f64>() + sigma * sigma;
    total.sqrt() - (1.0 + 1.0 / gamma).sqrt() * z[m].norm()
}

/// Nearest point to `b` in the cone of row `m`:
/// minimize `||z - b||` subject to `(1/gamma)|z_m|^2 >= sum_{n != m} |z_n|^2 + sigma^2`.
///
/// Every output entry keeps the phase of the corresponding input entry (a
/// phase change can only increase the distance while feasibility depends on
/// magnitudes alone), so the problem reduces to magnitudes, solved through
/// the KKT multiplier of the active cone constraint.
pub fn project_row(b: &CVec, m: usize, gamma: f64, sigma: f64) -> Result<CVec> {
    assert!(gamma > 0.0, "SINR threshold must be positive");
    assert!(sigma >= 0.0, "noise std must be nonnegative");
    assert!(m < b.len());

    // Interior (or boundary) points project to themselves.
    let off_sq: f64 = b
        .iter()
        .enumerate()
        .filter(|(n, _)| *n != m)
        .map(|(_, e)| e.norm_sqr())
        .sum();
    let beta_m = b[m].norm();
    if beta_m * beta_m / gamma >= off_sq + sigma * sigma {
        return Ok(b.clone());
    }

    // The cone is homogeneous in (z, sigma) jointly; normalize for conditioning.
    let scale = b
        .iter()
        .map(|e| e.norm())
        .fold(sigma, f64::max)
        .max(f64::MIN_POSITIVE);
    let betas: Vec<f64> = b.iter().map(|e| e.norm() / scale).collect();
    let sig = sigma / scale;
    let off_sq = off_sq / (scale * scale);
    let bm = betas[m];

    // Magnitudes after projection: rho_n = beta_n / (1 + mu) off the
    // diagonal, rho_m = beta_m / (1 - mu/gamma) = beta_m * nu with
    // nu = 1/(1 - mu/gamma) in (1, inf). The active constraint
    //   g(nu) = sum_off beta_n^2/(1+mu)^2 + sigma^2 - beta_m^2 nu^2 / gamma
    // decreases monotonically in nu, so bisection on a bracket is reliable.
    let shrink = |nu: f64| 1.0 + gamma * (1.0 - 1.0 / nu);
    let g = |nu: f64| {
        let s = shrink(nu);
        off_sq / (s * s) + sig * sig - bm * bm * nu * nu / gamma
    };

    let rho = if bm < 1e-14 {
        // Degenerate diagonal: off-diagonals shrink by the full 1/(1+gamma)
        // and the diagonal rises to exactly meet the cone.
        let mut rho: Vec<f64> = betas.iter().map(|beta| beta / (1.0 + gamma)).collect();
        let off: f64 = rho
            .iter()
            .enumerate()
            .filter(|(n, _)| *n != m)
            .map(|(_, r)| r * r)
            .sum();
        rho[m] = (gamma * (off + sig * sig)).sqrt();
        rho
    } else {
        let mut lo = 1.0;
        // At nu_hi the diagonal term alone exceeds any feasible right side.
        let mut hi = (2.0 * (gamma * (off_sq + sig * sig)).sqrt() / bm).max(2.0);
        let mut iterations = 0usize;
        while g(hi) > 0.0 {
            hi *= 2.0;
            iterations += 1;
            if iterations > 200 {
                return Err(Error::SocProjection {
                    row: m,
                    residual: g(hi),
                    iterations,
                });
            }
        }
        while hi - lo > 1e-15 * hi {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
            if iterations > 200 {
                break;
            }
        }
        let nu = 0.5 * (lo + hi);
        let s = shrink(nu);
        let mut rho: Vec<f64> = betas.iter().map(|beta| beta / s).collect();
        // Recompute the diagonal from the constraint so the output is
        // feasible to machine precision rather than bisection precision.
        let off: f64 = rho
            .iter()
            .enumerate()
            .filter(|(n, _)| *n != m)
            .map(|(_, r)| r * r)
            .sum();
        rho[m] = (gamma * (off + sig * sig)).sqrt();
        rho
    };

    Ok(CVec::from_iterator(
        b.len(),
        rho.iter().enumerate().map(|(n, r)| {
            // Scalar component division: complex division by a real would
            // square the norm and underflow for subnormal-scale entries.
            let norm = b[n].norm();
            let phase = if norm > 0.0 {
                b[n].unscale(norm)
            } else {
                Complex::new(1.0, 0.0)
            };
            phase * Complex::from(r * scale)
        }),
    ))
}

/// Rebuilds the auxiliary matrix for the current precoder: row `m` holds the
/// responses `h_m^H rf bb_n`, projected onto user `m`'s cone. Rows are
/// independent, so the result minimizes the total mismatch against the
/// responses over the feasible set.
pub fn update_aux(
    p: &HybridPrecoder,
    ch: &ChannelSet,
    thresholds: &[f64],
    prev: &AuxMatrix,
) -> Result<AuxMatrix> {
    assert_eq!(thresholds.len(), ch.cus.len());
    let effective = p.effective();
    let responses = CMat::from_fn(ch.cus.len(), p.n_streams(), |m, n| {
        (ch.cus[m].h.adjoint() * effective.column(n))[(0, 0)]
    });
    let noise_std: Vec<f64> = ch.cus.iter().map(|cu| cu.noise_power_mw.sqrt()).collect();
    let z = project_rows(&responses, thresholds, &noise_std)?;
    debug_assert_eq!(prev.z.nrows(), z.nrows());
    Ok(AuxMatrix {
        z,
        noise_std,
        thresholds: thresholds.to_vec(),
    })
}

/// Row-wise projection of a response matrix; shared by the optimizer, which
/// carries noise-normalized channels.
pub fn project_rows(responses: &CMat, thresholds: &[f64], noise_std: &[f64]) -> Result<CMat> {
    let mut z = responses.clone();
    for m in 0..responses.nrows() {
        let row = project_row(&responses.row(m).transpose(), m, thresholds[m], noise_std[m])?;
        z.row_mut(m).copy_from(&row.transpose());
    }
    Ok(z)
}
