use serde::Serialize;

use super::FunceqError;
use crate::exprlang::Expression;
use crate::gds::StateSpace;

/// Four-point Lagrange weights for the point k + w (0 ≤ w < 1) on a grid of
/// M intervals, with the stencil shifted inward at the ends.
pub(crate) fn cubic_weights(k: usize, w: f64, m: usize) -> Vec<(usize, f64)> {
    if w == 0.0 {
        return vec![(k, 1.0)];
    }
    let first = k.saturating_sub(1).min(m - 3);
    let s = (k - first) as f64 + w;
    (0..4)
        .map(|a| {
            let weight = (0..4)
                .filter(|&b| b != a)
                .map(|b| (s - b as f64) / (a as f64 - b as f64))
                .product::<f64>();
            (first + a, weight)
        })
        .collect()
}

/// Piecewise-linear function sampled on a uniform grid.
///
/// An interval grid has nodes a + j·(b−a)/M, j = 0..=M. A circle grid has the
/// same M+1 nodes over one period with the last value equal to the first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    pub space: StateSpace,
    pub values: Vec<f64>,
    /// Queries this far outside an interval are clamped; farther ones fail.
    pub clamp_tol: f64,
}

impl GridFunction {
    pub fn new(space: StateSpace, values: Vec<f64>) -> Result<Self, FunceqError> {
        if matches!(space, StateSpace::Graph { .. }) {
            return Err(FunceqError::Shape("grid functions live on intervals or circles".into()));
        }
        if values.len() < 2 {
            return Err(FunceqError::Shape("a grid needs at least two nodes".into()));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(FunceqError::Shape(format!("non-finite value at node {j}")));
        }
        Ok(GridFunction {
            space,
            values,
            clamp_tol: 1e-9,
        })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(space: StateSpace, m: usize, f: F) -> Result<Self, FunceqError> {
        let (lo, len) = space.extent();
        let mut values: Vec<f64> = (0..=m).map(|j| f(lo + len * j as f64 / m as f64)).collect();
        if space.is_circle() {
            values[m] = values[0];
        }
        Self::new(space, values)
    }

    pub fn from_expr(space: StateSpace, m: usize, e: &Expression) -> Result<Self, FunceqError> {
        let (lo, len) = space.extent();
        let mut values = Vec::with_capacity(m + 1);
        for j in 0..=m {
            values.push(e.eval(lo + len * j as f64 / m as f64)?);
        }
        if space.is_circle() {
            values[m] = values[0];
        }
        Self::new(space, values)
    }

    pub fn constant(space: StateSpace, m: usize, c: f64) -> Result<Self, FunceqError> {
        Self::new(space, vec![c; m + 1])
    }

    /// Number of intervals M.
    pub fn m(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.space.extent().1 / self.m() as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        let (lo, len) = self.space.extent();
        if j == self.m() {
            lo + len
        } else {
            lo + len * j as f64 / self.m() as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.m()).map(|j| self.node(j)).collect()
    }

    /// Left node index and weight of the right node for a query point.
    pub fn locate(&self, x: f64) -> Result<(usize, f64), FunceqError> {
        let (lo, len) = self.space.extent();
        let x = match self.space {
            StateSpace::Circle { .. } => self.space.normalize(x),
            _ => {
                if !(x >= lo - self.clamp_tol && x <= lo + len + self.clamp_tol) {
                    return Err(FunceqError::OutOfDomain(x));
                }
                x.clamp(lo, lo + len)
            }
        };
        let m = self.m();
        let s = (x - lo) / len * m as f64;
        let k = (s.floor() as usize).min(m - 1);
        Ok((k, (s - k as f64).clamp(0.0, 1.0)))
    }

    pub fn eval(&self, x: f64) -> Result<f64, FunceqError> {
        let (k, w) = self.locate(x)?;
        Ok(if w == 0.0 {
            self.values[k]
        } else {
            (1.0 - w) * self.values[k] + w * self.values[k + 1]
        })
    }

    /// Four-point Lagrange interpolation (interval grids with M ≥ 3).
    pub fn eval_cubic(&self, x: f64) -> Result<f64, FunceqError> {
        if self.space.is_circle() || self.m() < 3 {
            return self.eval(x);
        }
        let (k, w) = self.locate(x)?;
        Ok(cubic_weights(k, w, self.m()).iter().map(|&(j, c)| c * self.values[j]).sum())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// sup over nodes of |self − other|; grids must match.
    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// sup over nodes of |self − f|.
    pub fn sup_error<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        (0..=self.m()).fold(0.0, |m, j| m.max((self.values[j] - f(self.node(j))).abs()))
    }

    pub fn map_values<F: Fn(f64) -> f64>(&self, f: F) -> GridFunction {
        GridFunction {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// CSV with header `t,value`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,value\n");
        for (j, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{:.16e},{:.16e}\n", self.node(j), v));
        }
        s
    }

    /// Reads `t,value` rows written by [`GridFunction::to_csv`] (uniform nodes).
    pub fn from_csv(space: StateSpace, text: &str) -> Result<Self, FunceqError> {
        let mut ts = Vec::new();
        let mut values = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (line_no == 0 && line.starts_with('t')) {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |p: Option<&str>| -> Result<f64, FunceqError> {
                p.and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| FunceqError::Shape(format!("bad CSV row {}: {line}", line_no + 1)))
            };
            ts.push(parse(parts.next())?);
            values.push(parse(parts.next())?);
        }
        let g = Self::new(space, values)?;
        let h = g.step();
        for (j, &t) in ts.iter().enumerate() {
            if (t - g.node(j)).abs() > 1e-9 * (1.0 + h) {
                return Err(FunceqError::Shape(format!("CSV row {} is not on the uniform grid", j + 1)));
            }
        }
        Ok(g)
    }
}
