//! The 1-d reference process: an ordered grid, precomputed piecewise-linear
//! interpolation with linear extrapolation, and the monotone transform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of reference nodes.
pub const DEFAULT_GRID_SIZE: usize = 50;

const LINEAR_DEGENERACY_EPS: f64 = 1e-12;

/// Strictly increasing reference locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefGrid {
    nodes: Vec<f64>,
}

impl RefGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::EmptyGrid);
        }
        Ok(RefGrid { nodes })
    }

    /// `n_g` evenly spaced nodes on [0, 1], endpoints included.
    pub fn uniform(n_g: usize) -> Result<Self> {
        if n_g < 2 {
            return Err(Error::EmptyGrid);
        }
        let last = (n_g - 1) as f64;
        Self::new((0..n_g).map(|i| i as f64 / last).collect())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Which transform turns a latent grid vector into a monotone image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Exp,
    Linear,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(Variant::Exp),
            "linear" => Ok(Variant::Linear),
            other => Err(Error::Config(format!("unknown transform variant '{other}'"))),
        }
    }
}

/// Precomputed query-to-segment mapping. Query `i` evaluates to
/// `(1 - w_i) f[s_i] + w_i f[s_i + 1]`; `w_i` leaves [0, 1] when extrapolating
/// along a boundary segment.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpPlan {
    grid_len: usize,
    segment: Vec<usize>,
    weight: Vec<f64>,
}

impl InterpPlan {
    pub fn query_count(&self) -> usize {
        self.segment.len()
    }

    pub fn segment_index(&self) -> &[usize] {
        &self.segment
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }
}

/// Locates each query's grid segment once, so that repeated interpolation of
/// new ordinates costs O(queries) with no searching.
pub fn fo_approx_init(grid: &RefGrid, queries: &[f64]) -> Result<InterpPlan> {
    let x = grid.nodes();
    if x.len() < 2 {
        return Err(Error::EmptyGrid);
    }
    let last_segment = x.len() - 2;
    let mut segment = Vec::with_capacity(queries.len());
    let mut weight = Vec::with_capacity(queries.len());
    for &q in queries {
        // index of the first node strictly greater than q, minus one
        let s = x.partition_point(|&node| node <= q).saturating_sub(1).min(last_segment);
        segment.push(s);
        weight.push((q - x[s]) / (x[s + 1] - x[s]));
    }
    Ok(InterpPlan { grid_len: x.len(), segment, weight })
}

/// Applies a plan to grid ordinates.
pub fn fo_approx(plan: &InterpPlan, f_g: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; plan.query_count()];
    fo_approx_into(plan, f_g, &mut out)?;
    Ok(out)
}

/// As [`fo_approx`], writing into `out`.
pub fn fo_approx_into(plan: &InterpPlan, f_g: &[f64], out: &mut [f64]) -> Result<()> {
    if f_g.len() != plan.grid_len {
        return Err(Error::LengthMismatch { expected: plan.grid_len, got: f_g.len() });
    }
    if out.len() != plan.query_count() {
        return Err(Error::LengthMismatch { expected: plan.query_count(), got: out.len() });
    }
    for ((o, &s), &w) in out.iter_mut().zip(&plan.segment).zip(&plan.weight) {
        *o = segment_value(f_g[s], f_g[s + 1], w);
    }
    Ok(())
}

// Written so that rounding never breaks monotonicity in `w` when `a <= b`:
// node hits are exact and interior values stay within [a, b].
#[inline]
fn segment_value(a: f64, b: f64, w: f64) -> f64 {
    let d = b - a;
    if w < 0.0 {
        a + w * d
    } else if w == 0.0 {
        a
    } else if w < 1.0 {
        let v = a + w * d;
        if a <= b {
            v.clamp(a, b)
        } else {
            v.clamp(b, a)
        }
    } else if w == 1.0 {
        b
    } else {
        b + (w - 1.0) * d
    }
}

/// A nondecreasing vector running from exactly 0 to exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneImage(Vec<f64>);

impl MonotoneImage {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

fn cumsum_normalize(mut v: Vec<f64>) -> (Vec<f64>, f64) {
    let mut acc = 0.0;
    for x in v.iter_mut() {
        acc += *x;
        *x = acc;
    }
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    for x in v.iter_mut() {
        *x = (*x - lo) / range;
    }
    (v, range)
}

/// Exponentiate, cumulatively sum, then rescale to [0, 1].
pub fn mono_transform(z_g: &[f64]) -> Result<MonotoneImage> {
    if z_g.len() < 2 {
        return Err(Error::EmptyGrid);
    }
    let (f, _) = cumsum_normalize(z_g.iter().map(|z| z.exp()).collect());
    Ok(MonotoneImage(f))
}

/// Shift by the minimum instead of exponentiating, then cumulatively sum and rescale.
pub fn mono_transform_linear(z_g: &[f64]) -> Result<MonotoneImage> {
    if z_g.len() < 2 {
        return Err(Error::EmptyGrid);
    }
    let min = z_g.iter().copied().fold(f64::INFINITY, f64::min);
    let (f, range) = cumsum_normalize(z_g.iter().map(|z| z - min).collect());
    if !(range >= LINEAR_DEGENERACY_EPS) {
        return Err(Error::DegenerateInput);
    }
    Ok(MonotoneImage(f))
}

pub fn transform(z_g: &[f64], variant: Variant) -> Result<MonotoneImage> {
    match variant {
        Variant::Exp => mono_transform(z_g),
        Variant::Linear => mono_transform_linear(z_g),
    }
}

/// Monotone latent values at arbitrary queries: transform the grid vector,
/// then interpolate.
pub fn monoref(queries: &[f64], grid: &RefGrid, z_g: &[f64], variant: Variant) -> Result<Vec<f64>> {
    let plan = fo_approx_init(grid, queries)?;
    monoref_planned(&plan, z_g, variant)
}

/// [`monoref`] with a precomputed plan.
pub fn monoref_planned(plan: &InterpPlan, z_g: &[f64], variant: Variant) -> Result<Vec<f64>> {
    let image = transform(z_g, variant)?;
    fo_approx(plan, image.values())
}
