use serde::{Deserialize, Serialize};

use crate::{cast, to_f64, Error, Real, Result};

pub const DEFAULT_SCAD_A: f64 = 3.7;
pub const DEFAULT_MCP_GAMMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Lasso,
    Scad,
    Mcp,
}

impl PenaltyKind {
    pub fn default_shape(self) -> f64 {
        match self {
            PenaltyKind::Lasso => 0.0,
            PenaltyKind::Scad => DEFAULT_SCAD_A,
            PenaltyKind::Mcp => DEFAULT_MCP_GAMMA,
        }
    }

    pub fn is_convex(self) -> bool {
        self == PenaltyKind::Lasso
    }
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lasso" => Ok(PenaltyKind::Lasso),
            "scad" => Ok(PenaltyKind::Scad),
            "mcp" => Ok(PenaltyKind::Mcp),
            other => Err(Error::InvalidInput(format!("unknown penalty `{other}`"))),
        }
    }
}

/// Separable penalty on the covariate coefficients.
///
/// `mask[j]` is `true` when `β_j` is penalized. Factor coefficients are never
/// penalized and are not part of the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty<T> {
    pub kind: PenaltyKind,
    pub lambda: T,
    /// SCAD `a` or MCP `γ`; unused by the Lasso.
    pub shape: T,
    pub mask: Vec<bool>,
}

impl<T: Real> Penalty<T> {
    /// All `p` coordinates penalized, default shape.
    pub fn new(kind: PenaltyKind, lambda: T, p: usize) -> Result<Self> {
        Self::with_mask(kind, lambda, cast(kind.default_shape()), vec![true; p])
    }

    pub fn with_mask(kind: PenaltyKind, lambda: T, shape: T, mask: Vec<bool>) -> Result<Self> {
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "λ must be finite and nonnegative, got {}",
                to_f64(lambda)
            )));
        }
        match kind {
            PenaltyKind::Scad if !(shape > cast(2.0)) => {
                return Err(Error::InvalidInput(format!(
                    "SCAD needs a > 2, got {}",
                    to_f64(shape)
                )));
            }
            PenaltyKind::Mcp if !(shape > T::one()) => {
                return Err(Error::InvalidInput(format!(
                    "MCP needs γ > 1, got {}",
                    to_f64(shape)
                )));
            }
            _ => {}
        }
        Ok(Penalty {
            kind,
            lambda,
            shape,
            mask,
        })
    }

    /// Marks the given coordinates as free.
    pub fn free(mut self, coords: &[usize]) -> Result<Self> {
        for &j in coords {
            let p = self.mask.len();
            *self.mask.get_mut(j).ok_or_else(|| {
                Error::InvalidInput(format!("free coordinate {j} out of range for p = {p}"))
            })? = false;
        }
        Ok(self)
    }

    pub fn with_lambda(&self, lambda: T) -> Self {
        Penalty {
            lambda,
            ..self.clone()
        }
    }

    pub fn with_kind(&self, kind: PenaltyKind) -> Self {
        let shape = if kind == self.kind {
            self.shape
        } else {
            cast(kind.default_shape())
        };
        Penalty {
            kind,
            shape,
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn is_penalized(&self, j: usize) -> bool {
        self.mask[j]
    }

    /// `p_λ(t)` for `t ≥ 0`.
    pub fn value(&self, t: T) -> T {
        let t = t.abs();
        let l = self.lambda;
        let half = cast::<T>(0.5);
        match self.kind {
            PenaltyKind::Lasso => l * t,
            PenaltyKind::Scad => {
                let a = self.shape;
                if t <= l {
                    l * t
                } else if t <= a * l {
                    (cast::<T>(2.0) * a * l * t - t * t - l * l) / (cast::<T>(2.0) * (a - T::one()))
                } else {
                    l * l * (a + T::one()) * half
                }
            }
            PenaltyKind::Mcp => {
                let g = self.shape;
                if t <= g * l {
                    l * t - t * t / (cast::<T>(2.0) * g)
                } else {
                    g * l * l * half
                }
            }
        }
    }

    /// Right derivative `p'_λ(t)` for `t ≥ 0`.
    pub fn derivative(&self, t: T) -> T {
        let t = t.abs();
        let l = self.lambda;
        match self.kind {
            PenaltyKind::Lasso => l,
            PenaltyKind::Scad => {
                let a = self.shape;
                if t <= l {
                    l
                } else {
                    ((a * l - t) / (a - T::one())).max(T::zero())
                }
            }
            PenaltyKind::Mcp => (l - t / self.shape).max(T::zero()),
        }
    }

    /// Total penalty over the masked coordinates of `beta`.
    pub fn total(&self, beta: &[T]) -> T {
        beta.iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&b, _)| self.value(b))
            .sum()
    }

    /// Global minimizer over `b` of `½(b − z)² + step·p_λ(|b|)`.
    ///
    /// Each smooth piece of the penalty is minimized in closed form; the
    /// candidates (piece minimizers and breakpoints) are compared directly,
    /// so nonconvex pieces are handled without case analysis on `step`.
    /// Exact ties go to the candidate of smaller magnitude.
    pub fn prox(&self, z: T, step: T) -> Result<T> {
        if !z.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite prox argument {}",
                to_f64(z)
            )));
        }
        Ok(self.prox_unchecked(z, step))
    }

    pub(crate) fn prox_unchecked(&self, z: T, step: T) -> T {
        let u = z.abs();
        let l = self.lambda;
        let s = step;
        let zero = T::zero();
        let t = match self.kind {
            PenaltyKind::Lasso => (u - s * l).max(zero),
            _ if l == zero => u,
            PenaltyKind::Scad => {
                let a = self.shape;
                let am1 = a - T::one();
                let mut cands = [zero; 6];
                cands[0] = zero;
                cands[1] = (u - s * l).max(zero).min(l);
                cands[2] = l;
                cands[3] = if am1 > s {
                    ((am1 * u - s * a * l) / (am1 - s)).max(l).min(a * l)
                } else {
                    l
                };
                cands[4] = a * l;
                cands[5] = u.max(a * l);
                self.best_candidate(&cands, u, s)
            }
            PenaltyKind::Mcp => {
                let g = self.shape;
                let mut cands = [zero; 4];
                cands[0] = zero;
                cands[1] = if g > s {
                    ((u - s * l).max(zero) / (T::one() - s / g)).min(g * l)
                } else {
                    zero
                };
                cands[2] = g * l;
                cands[3] = u.max(g * l);
                self.best_candidate(&cands, u, s)
            }
        };
        if z < zero {
            -t
        } else {
            t
        }
    }

    fn best_candidate(&self, cands: &[T], u: T, s: T) -> T {
        let half = cast::<T>(0.5);
        let obj = |t: T| half * (t - u) * (t - u) + s * self.value(t);
        let mut best = cands[0];
        let mut best_obj = obj(best);
        for &t in &cands[1..] {
            let o = obj(t);
            if o < best_obj || (o == best_obj && t < best) {
                best = t;
                best_obj = o;
            }
        }
        best
    }
}
