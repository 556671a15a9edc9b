//! Ordinary least squares by Householder QR, with a minimum-norm SVD
//! fallback for rank-deficient designs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on the QR diagonal below which a design is treated as
/// rank deficient.
pub(crate) const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coeffs: Vec<f64>,
    pub rss: f64,
    pub n_obs: usize,
    pub n_params: usize,
    pub rank_deficient: bool,
}

impl OlsFit {
    pub fn dof(&self) -> usize {
        self.n_obs - self.n_params
    }
}

/// Least-squares fit of `target` on the columns of `design`. The design must
/// already contain an intercept column if one is wanted.
pub fn fit_ols(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = design.shape();
    if target.len() != n {
        return Err(Error::Shape(format!("design has {n} rows, target has {}", target.len())));
    }
    if k == 0 {
        return Err(Error::Shape("design has no columns".into()));
    }
    if n <= k {
        return Err(Error::Insufficient(format!("{n} observations for {k} parameters")));
    }
    if design.iter().chain(target.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("design or target contains non-finite values".into()));
    }

    let qr = design.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let full_rank = diag_max > 0.0 && r.diagonal().iter().all(|v| v.abs() > RANK_TOL * diag_max);

    let (coeffs, rank_deficient) = if full_rank {
        let mut qty = target.clone();
        qr.q_tr_mul(&mut qty);
        let head = qty.rows(0, k).into_owned();
        let beta = r
            .solve_upper_triangular(&head)
            .ok_or_else(|| Error::Invalid("singular triangular factor".into()))?;
        (beta, false)
    } else {
        (min_norm_solve(design, target)?, true)
    };

    let resid = target - design * &coeffs;
    Ok(OlsFit {
        coeffs: coeffs.iter().copied().collect(),
        rss: resid.norm_squared(),
        n_obs: n,
        n_params: k,
        rank_deficient,
    })
}

pub(crate) fn min_norm_solve(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    let eps = (RANK_TOL * smax).max(f64::MIN_POSITIVE);
    svd.solve(target, eps)
        .map_err(|e| Error::Invalid(format!("least-squares solve failed: {e}")))
}
