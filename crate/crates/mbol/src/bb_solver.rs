//! Baseband precoder updates.
//!
//! With the RF phases and auxiliaries held fixed, the subproblem objective is
//! quadratic per baseband column, so the stationary point solves
//!
//! ```text
//! A f_k = alpha * sum_m h_eff_m * zeta_{m,k},
//! A = alpha * sum_m h_eff_m h_eff_m^H - 2 * sum_l w_l a_eff_l a_eff_l^H,
//! ```
//!
//! with the effective channels `h_eff = rf^H h` and beams `a_eff = rf^H a`.
//! [`update_bb`] solves exactly that system; since the beampattern term is
//! concave, `A` may be indefinite at small penalty factors, in which case a
//! recorded ridge restores solvability and columns whose right-hand side
//! vanishes (no user couples into them) fall back to the unit-norm dominant
//! direction of the beam form.
//!
//! [`update_bb_power_bounded`] instead minimizes the same objective subject
//! to the transmit power bound `||rf * bb||_F^2 <= budget`. That is a
//! trust-region-style problem: one Lagrange multiplier `mu` shifts the
//! stationarity system to `(A + mu G) f_k = rhs_k` with `G = rf^H rf`, and
//! the secular equation `power(mu) = budget` pins `mu` by bisection. The
//! multiplier handles indefinite `A` natively (it shifts past the most
//! negative eigenvalue), degrades to plain stationarity when the
//! unconstrained optimum already fits the budget, and in the fully
//! degenerate no-user case returns the power-metric dominant beam direction
//! at full power.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::{CMat, CVec};

/// Data of one baseband update.
#[derive(Debug, Clone)]
pub struct BbSystem {
    /// Effective CU channels `rf^H h_m` as columns, `n_rf x n_cu`.
    pub eff_channels: CMat,
    /// Effective beam vectors `rf^H a(theta_l)` as columns, `n_rf x n_beams`.
    pub eff_beams: CMat,
    /// Beam weights, one per beam column.
    pub beam_weights: Vec<f64>,
    /// Penalty factor; must be positive.
    pub alpha: f64,
    /// Auxiliary variables, `n_cu x n_streams`.
    pub aux: CMat,
}

/// Which stationarity matrix to invert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BbMode {
    /// The matrix obtained by differentiating the subproblem objective;
    /// the gradient at the returned precoder is zero.
    #[default]
    Derived,
    /// The printed closed form `alpha * sum h h^H - 2 I`; kept as a
    /// compatibility reference, not a stationary point of the objective.
    Identity,
}

/// Result of a baseband update.
#[derive(Debug, Clone)]
pub struct BbUpdate {
    pub bb: CMat,
    /// Ridge added to the stationarity matrix; zero when none was needed.
    pub ridge: f64,
    /// Smallest eigenvalue of the unridged matrix.
    pub min_eig: f64,
}

/// Relative eigenvalue floor below which the ridge engages.
const RIDGE_DELTA: f64 = 1e-6;

impl BbSystem {
    pub fn n_rf(&self) -> usize {
        self.aux_checked();
        self.eff_channels.nrows().max(self.eff_beams.nrows())
    }

    pub fn n_streams(&self) -> usize {
        self.aux.ncols()
    }

    fn aux_checked(&self) {
        assert_eq!(self.aux.nrows(), self.eff_channels.ncols());
        assert_eq!(self.eff_beams.ncols(), self.beam_weights.len());
        assert!(self.alpha > 0.0, "penalty factor must be positive");
    }

    /// Beam columns scaled by their weights.
    fn weighted_beams(&self) -> CMat {
        let mut scaled = self.eff_beams.clone();
        for (l, wl) in self.beam_weights.iter().enumerate() {
            for e in scaled.column_mut(l).iter_mut() {
                *e *= Complex::from(*wl);
            }
        }
        scaled
    }

    /// The stationarity matrix of [`BbMode::Derived`], before any ridge.
    pub fn stationarity_matrix(&self) -> CMat {
        let a = &self.eff_channels * self.eff_channels.adjoint() * Complex::from(self.alpha)
            - self.weighted_beams() * self.eff_beams.adjoint() * Complex::from(2.0);
        // Hermitize away accumulation dust before eigendecomposition.
        (&a + a.adjoint()) * Complex::from(0.5)
    }

    /// Right-hand sides, one column per stream: `alpha * sum_m h_eff_m zeta_{m,k}`.
    pub fn right_hand_sides(&self) -> CMat {
        &self.eff_channels * &self.aux * Complex::from(self.alpha)
    }

    /// Weighted beampattern quadratic form `sum_l w_l a_eff_l a_eff_l^H`.
    fn beam_form(&self) -> CMat {
        let b = self.weighted_beams() * self.eff_beams.adjoint();
        (&b + b.adjoint()) * Complex::from(0.5)
    }

    /// Objective of the baseband subproblem at `bb`.
    pub fn objective(&self, bb: &CMat) -> f64 {
        let beam_resp = self.eff_beams.adjoint() * bb;
        let mismatch = self.eff_channels.adjoint() * bb - &self.aux;
        let sbp: f64 = self
            .beam_weights
            .iter()
            .enumerate()
            .map(|(l, wl)| wl * beam_resp.row(l).norm_squared())
            .sum();
        -sbp + 0.5 * self.alpha * mismatch.norm_squared()
    }

    /// Gradient of [`BbSystem::objective`] in conjugate coordinates, one
    /// column per stream.
    pub fn objective_gradient(&self, bb: &CMat) -> CMat {
        let beam_resp = self.eff_beams.adjoint() * bb;
        let mismatch = self.eff_channels.adjoint() * bb - &self.aux;
        &self.eff_channels * (mismatch * Complex::from(self.alpha))
            - self.weighted_beams() * (beam_resp * Complex::from(2.0))
    }
}

/// Solves the stationarity system for every stream column.
pub fn update_bb(sys: &BbSystem) -> Result<BbUpdate> {
    update_bb_with_mode(sys, BbMode::Derived)
}

/// As [`update_bb`], selecting the stationarity matrix.
pub fn update_bb_with_mode(sys: &BbSystem, mode: BbMode) -> Result<BbUpdate> {
    sys.aux_checked();
    let n = sys.n_rf();
    let a = match mode {
        BbMode::Derived => sys.stationarity_matrix(),
        BbMode::Identity => {
            let y = &sys.eff_channels * sys.eff_channels.adjoint() * Complex::from(sys.alpha)
                - CMat::identity(n, n) * Complex::from(2.0);
            (&y + y.adjoint()) * Complex::from(0.5)
        }
    };

    let eigen = a.symmetric_eigen();
    let min_eig = eigen.eigenvalues.min();
    let scale = eigen.eigenvalues.iter().fold(0.0f64, |s, e| s.max(e.abs()));
    if scale == 0.0 {
        return Err(Error::SingularBbSystem { min_eig });
    }
    // The identity form is invertible wherever its eigenvalues clear the
    // floor, sign regardless; the derived form must be positive definite.
    let ridge = match mode {
        BbMode::Derived => (RIDGE_DELTA * scale - min_eig).max(0.0),
        BbMode::Identity => {
            let min_abs = eigen.eigenvalues.iter().fold(f64::MAX, |s, e| s.min(e.abs()));
            if min_abs < RIDGE_DELTA * scale {
                return Err(Error::SingularBbSystem { min_eig });
            }
            0.0
        }
    };

    let rhs = sys.right_hand_sides();
    let beam_form = sys.beam_form();
    let dominant = dominant_eigenvector(&beam_form);

    let mut bb = CMat::zeros(n, sys.n_streams());
    let rhs_floor = 1e-300;
    for k in 0..sys.n_streams() {
        let b = rhs.column(k);
        if b.norm() <= rhs_floor {
            // No user couples into this stream; point it at the beams.
            if let Some(v) = &dominant {
                bb.column_mut(k).copy_from(v);
            }
            continue;
        }
        // Solve via the eigendecomposition, shifting by the ridge.
        let projected = eigen.eigenvectors.adjoint() * b;
        let scaled = CVec::from_iterator(
            n,
            projected
                .iter()
                .zip(eigen.eigenvalues.iter())
                .map(|(p, lambda)| p.unscale(lambda + ridge)),
        );
        bb.column_mut(k).copy_from(&(&eigen.eigenvectors * scaled));
    }

    Ok(BbUpdate { bb, ridge, min_eig })
}

/// Result of [`update_bb_power_bounded`].
#[derive(Debug, Clone)]
pub struct BoundedBbUpdate {
    pub bb: CMat,
    /// Lagrange multiplier of the power bound; zero when the bound is slack.
    pub mu: f64,
    /// Whether the power bound is active at the solution.
    pub boundary: bool,
    /// Smallest eigenvalue of the stationarity matrix in the power metric.
    pub min_eig: f64,
}

/// Minimizes the baseband subproblem objective subject to
/// `sum_k f_k^H gram f_k <= budget`, where `gram = rf^H rf`.
///
/// In the metric of the power bound the problem separates into modes of the
/// whitened stationarity matrix; the shared multiplier `mu` solves the
/// secular equation `power(mu) = budget` and also absorbs any indefiniteness
/// (the admissible range starts past the most negative eigenvalue). When the
/// unconstrained stationary point is interior the multiplier is zero and the
/// result coincides with [`update_bb`] on a definite system.
pub fn update_bb_power_bounded(
    sys: &BbSystem,
    gram: &CMat,
    budget: f64,
) -> Result<BoundedBbUpdate> {
    sys.aux_checked();
    assert!(budget > 0.0, "power budget must be positive");
    let n = sys.n_rf();
    assert_eq!(gram.nrows(), n);
    assert_eq!(gram.ncols(), n);

    assert!(sys.n_streams() >= 1, "need at least one stream");
    let a = sys.stationarity_matrix();
    let rhs = sys.right_hand_sides();

    // Whiten by the power metric: gram = L L^H, t = L^H f, so the bound is a
    // plain ball in t and the quadratic becomes L^{-1} A L^{-H}. The RF
    // columns can align almost perfectly while the beampattern term leads,
    // leaving the metric rank-deficient; directions in its null space
    // radiate nothing and carry no objective, so a vanishing relative ridge
    // keeps the factorization alive without changing the solution.
    let metric_ridge = 1e-12 * gram.trace().re.max(1e-300) / n as f64;
    let gram_reg = gram + CMat::identity(n, n) * Complex::from(metric_ridge);
    let chol = gram_reg
        .cholesky()
        .ok_or(Error::SingularBbSystem { min_eig: 0.0 })?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&a)
        .ok_or(Error::SingularBbSystem { min_eig: 0.0 })?;
    let whitened = l
        .solve_lower_triangular(&y.adjoint())
        .ok_or(Error::SingularBbSystem { min_eig: 0.0 })?;
    let whitened = (&whitened + whitened.adjoint()) * Complex::from(0.5);
    let g = l
        .solve_lower_triangular(&rhs)
        .ok_or(Error::SingularBbSystem { min_eig: 0.0 })?;

    let eigen = whitened.symmetric_eigen();
    let lambdas = &eigen.eigenvalues;
    let min_eig = lambdas.min();
    let scale = lambdas.iter().fold(1.0f64, |s, e| s.max(e.abs()));
    let modes = eigen.eigenvectors.adjoint() * &g;

    let power_at = |mu: f64| -> f64 {
        modes
            .row_iter()
            .enumerate()
            .map(|(i, row)| row.iter().map(|e| e.norm_sqr()).sum::<f64>() / {
                let d = lambdas[i] + mu;
                d * d
            })
            .sum()
    };

    // Interior solution: definite system whose stationary point fits.
    let mut mu = 0.0;
    let mut boundary = false;
    let mut hard_case_budget = 0.0;
    if min_eig > 0.0 && power_at(0.0) <= budget {
        // mu stays zero.
    } else {
        boundary = true;
        let mu_floor = (-min_eig).max(0.0) + 1e-14 * scale;
        let p_floor = power_at(mu_floor);
        if p_floor <= budget {
            // Hard case: the right-hand side barely excites the bottom mode;
            // spend the remaining budget on it directly.
            mu = mu_floor;
            hard_case_budget = budget - p_floor;
        } else {
            let mut lo = mu_floor;
            let mut hi = mu_floor.max(scale);
            while power_at(hi) > budget {
                hi *= 2.0;
            }
            for _ in 0..200 {
                if hi - lo <= 1e-14 * hi {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if power_at(mid) > budget {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            mu = 0.5 * (lo + hi);
        }
    }

    let mut coords = CMat::zeros(n, sys.n_streams());
    for i in 0..n {
        for k in 0..sys.n_streams() {
            coords[(i, k)] = modes[(i, k)].unscale(lambdas[i] + mu);
        }
    }
    if hard_case_budget > 0.0 {
        let bottom = lambdas
            .iter()
            .enumerate()
            .fold((0usize, f64::MAX), |best, (i, e)| {
                if *e < best.1 {
                    (i, *e)
                } else {
                    best
                }
            })
            .0;
        coords[(bottom, 0)] += Complex::from(hard_case_budget.sqrt());
    }

    let t = &eigen.eigenvectors * coords;
    let bb = l
        .adjoint()
        .solve_upper_triangular(&t)
        .ok_or(Error::SingularBbSystem { min_eig })?;
    Ok(BoundedBbUpdate {
        bb,
        mu,
        boundary,
        min_eig,
    })
}

/// Unit-norm eigenvector of the largest eigenvalue, or `None` for a zero form.
fn dominant_eigenvector(form: &CMat) -> Option<CVec> {
    let eigen = form.clone().symmetric_eigen();
    let (index, max_eig) = eigen
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, e)| {
            if *e > best.1 {
                (i, *e)
            } else {
                best
            }
        });
    if max_eig <= 0.0 {
        return None;
    }
    Some(eigen.eigenvectors.column(index).into())
}
