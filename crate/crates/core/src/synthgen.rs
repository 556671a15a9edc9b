//! Synthetic multivariate series with injected lagged linear structure.
//!
//! A [`CausalSpec`] lists lagged linear edges `cause --(lag, coeff)--> effect`;
//! every variable also carries a lag-1 autoregressive self-edge. [`generate`]
//! simulates the recursion
//!
//! ```text
//! x_t[i] = sum over edges e into i of coeff_e * x_{t - lag_e}[cause_e] + noise_t[i]
//! ```
//!
//! with independent Gaussian innovations, after a burn-in that flushes the
//! initial conditions past the longest lag.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::series::TimeSeriesMatrix;

/// Largest absolute value tolerated before the simulation is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Upper bound on the summed absolute incoming coefficients after [`stabilize`].
pub const STABLE_ROW_SUM: f64 = 0.9;

/// Extra burn-in steps beyond the longest lag.
pub const BURN_IN_EXTRA: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalEdge {
    pub cause: usize,
    pub effect: usize,
    pub lag: usize,
    pub coeff: f64,
}

impl CausalEdge {
    pub fn is_autoregressive(&self) -> bool {
        self.cause == self.effect
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalSpec {
    pub n_vars: usize,
    pub max_lag: usize,
    pub noise_std: Vec<f64>,
    pub edges: Vec<CausalEdge>,
}

impl CausalSpec {
    /// Builds and validates a spec; `max_lag` is derived from the edges.
    pub fn new(n_vars: usize, noise_std: Vec<f64>, edges: Vec<CausalEdge>) -> Result<Self> {
        let max_lag = edges.iter().map(|e| e.lag).max().unwrap_or(0);
        let spec = Self {
            n_vars,
            max_lag,
            noise_std,
            edges,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vars == 0 {
            return Err(Error::schema("n_vars", "must be positive"));
        }
        if self.noise_std.len() != self.n_vars {
            return Err(Error::schema(
                "noise_std",
                format!("expected {} entries, found {}", self.n_vars, self.noise_std.len()),
            ));
        }
        for (k, s) in self.noise_std.iter().enumerate() {
            if !(s.is_finite() && *s >= 0.0) {
                return Err(Error::schema(format!("noise_std[{k}]"), "must be finite and >= 0"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (k, e) in self.edges.iter().enumerate() {
            let at = |field: &str| format!("edges[{k}].{field}");
            if e.cause >= self.n_vars {
                return Err(Error::schema(at("cause"), format!("index {} >= n_vars", e.cause)));
            }
            if e.effect >= self.n_vars {
                return Err(Error::schema(at("effect"), format!("index {} >= n_vars", e.effect)));
            }
            if e.lag == 0 {
                return Err(Error::schema(at("lag"), "must be >= 1"));
            }
            if !e.coeff.is_finite() {
                return Err(Error::schema(at("coeff"), "must be finite"));
            }
            if !seen.insert((e.cause, e.effect, e.lag)) {
                return Err(Error::schema(at("lag"), "duplicate (cause, effect, lag) edge"));
            }
        }
        let derived = self.edges.iter().map(|e| e.lag).max().unwrap_or(0);
        if derived != self.max_lag {
            return Err(Error::schema(
                "max_lag",
                format!("{} disagrees with the edges' maximum lag {derived}", self.max_lag),
            ));
        }
        Ok(())
    }

    pub fn cross_edges(&self) -> impl Iterator<Item = &CausalEdge> {
        self.edges.iter().filter(|e| !e.is_autoregressive())
    }

    /// Sum of absolute incoming coefficients per effect.
    pub fn incoming_abs_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_vars];
        for e in &self.edges {
            sums[e.effect] += e.coeff.abs();
        }
        sums
    }

    pub fn label(&self) -> String {
        let cross: Vec<String> = self
            .cross_edges()
            .map(|e| format!("{}->{}@{}", e.cause, e.effect, e.lag))
            .collect();
        format!("n_vars={} [{}]", self.n_vars, cross.join(", "))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: CausalSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Knobs for [`sample_spec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecParams {
    pub n_vars: usize,
    pub max_lag: usize,
    pub cross_edges: usize,
    /// Magnitude range for every coefficient; signs are drawn separately.
    pub coeff_range: (f64, f64),
    /// Magnitude range for the autoregressive self-edges when it should
    /// differ from `coeff_range`.
    pub self_coeff_range: Option<(f64, f64)>,
    pub noise_std: f64,
}

impl Default for SpecParams {
    fn default() -> Self {
        Self {
            n_vars: 5,
            max_lag: 200,
            cross_edges: 4,
            coeff_range: (0.3, 0.9),
            self_coeff_range: None,
            noise_std: 1.0,
        }
    }
}

/// Draws a random structure: one lag-1 autoregressive edge per variable plus
/// `cross_edges` distinct ordered cross pairs with lags uniform in
/// `[1, max_lag]`. Deterministic in `seed`.
pub fn sample_spec(params: &SpecParams, seed: Seed) -> Result<CausalSpec> {
    let SpecParams {
        n_vars,
        max_lag,
        cross_edges,
        coeff_range: (lo, hi),
        self_coeff_range,
        noise_std,
    } = *params;
    let (self_lo, self_hi) = self_coeff_range.unwrap_or((lo, hi));
    if n_vars < 2 {
        return Err(Error::Invalid(format!("need at least 2 variables for cross edges, got {n_vars}")));
    }
    if max_lag == 0 {
        return Err(Error::Invalid("max_lag must be >= 1".into()));
    }
    let max_pairs = n_vars * (n_vars - 1);
    if cross_edges > max_pairs {
        return Err(Error::Invalid(format!(
            "{cross_edges} cross edges requested but only {max_pairs} distinct ordered pairs exist for {n_vars} variables"
        )));
    }
    for (lo, hi) in [(lo, hi), (self_lo, self_hi)] {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Invalid(format!("coefficient range ({lo}, {hi}) must satisfy 0 < lo <= hi")));
        }
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::Invalid(format!("noise_std {noise_std} must be finite and >= 0")));
    }

    let mut rng = seed.rng();
    let draw_coeff = |rng: &mut rand_chacha::ChaCha8Rng, (lo, hi): (f64, f64)| {
        let mag = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        if rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    };
    let mut edges = Vec::with_capacity(n_vars + cross_edges);
    for i in 0..n_vars {
        let coeff = draw_coeff(&mut rng, (self_lo, self_hi));
        edges.push(CausalEdge {
            cause: i,
            effect: i,
            lag: 1,
            coeff,
        });
    }
    let mut pairs: Vec<(usize, usize)> = (0..n_vars)
        .flat_map(|j| (0..n_vars).filter(move |&i| i != j).map(move |i| (j, i)))
        .collect();
    pairs.shuffle(&mut rng);
    for &(cause, effect) in pairs.iter().take(cross_edges) {
        let lag = rng.random_range(1..=max_lag);
        let coeff = draw_coeff(&mut rng, (lo, hi));
        edges.push(CausalEdge {
            cause,
            effect,
            lag,
            coeff,
        });
    }
    CausalSpec::new(n_vars, vec![noise_std; n_vars], edges)
}

/// Scales every coefficient by one common factor in `(0, 1]` so that no
/// effect's summed absolute incoming coefficients exceeds [`STABLE_ROW_SUM`].
/// With bounded innovations that keeps the recursion bounded.
pub fn stabilize(spec: &CausalSpec) -> CausalSpec {
    let worst = spec.incoming_abs_sums().into_iter().fold(0.0, f64::max);
    let gamma = if worst > STABLE_ROW_SUM {
        STABLE_ROW_SUM / worst
    } else {
        1.0
    };
    let mut out = spec.clone();
    if gamma < 1.0 {
        for e in &mut out.edges {
            e.coeff *= gamma;
        }
    }
    out
}

/// Simulates `steps` observations of `spec`. The first `max_lag` pre-sample
/// steps are pure noise, then `max_lag + BURN_IN_EXTRA` steps of the
/// recursion are discarded before the returned span.
pub fn generate(spec: &CausalSpec, steps: usize, seed: Seed) -> Result<TimeSeriesMatrix> {
    spec.validate()?;
    if steps == 0 {
        return Err(Error::Invalid("need at least one step".into()));
    }
    let n = spec.n_vars;
    let warm = spec.max_lag;
    let burn = spec.max_lag + BURN_IN_EXTRA;
    let total = warm + burn + steps;

    let mut incoming: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
    for e in &spec.edges {
        incoming[e.effect].push((e.cause, e.lag, e.coeff));
    }

    let mut rng = seed.rng();
    // row-major scratch, one row per step
    let mut x = vec![0.0; total * n];
    for t in 0..total {
        for i in 0..n {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let mut v = spec.noise_std[i] * eps;
            if t >= warm {
                for &(j, lag, a) in &incoming[i] {
                    v += a * x[(t - lag) * n + j];
                }
            }
            if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
                return Err(Error::Diverged {
                    spec: spec.label(),
                    step: t,
                    limit: DIVERGENCE_LIMIT,
                });
            }
            x[t * n + i] = v;
        }
    }

    let start = warm + burn;
    let columns = (0..n)
        .map(|i| (start..total).map(|t| x[t * n + i]).collect())
        .collect();
    TimeSeriesMatrix::from_columns(TimeSeriesMatrix::default_names(n), columns)
}
