//! Strictly convex power functions `f` with `f(0) = 0`, their inverses, and
//! their Legendre-Fenchel conjugates.
//!
//! Two kinds are supported. `Polynomial` is `s^gamma` with closed forms
//! everywhere. `Table` interpolates user breakpoints with a piecewise quadratic
//! that passes through every point, is strictly convex across the knots, and
//! continues past the last point with a quadratic tail. Every piece is a
//! quadratic, so inverse, conjugate and conjugate inverse are all solved in
//! closed form per piece.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{pow, sqrt};

/// Fraction of the neighbouring slope gap each piece may bend by.
const BEND: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Repr", into = "Repr"))]
pub enum PowerFunction {
    Polynomial { gamma: f64 },
    Table(Table),
}

/// Wire form: `{"kind": "polynomial", "gamma": ..}` or `{"kind": "table", "points": [..]}`.
#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Repr {
    Polynomial { gamma: f64 },
    Table { points: Vec<[f64; 2]> },
}

#[cfg(feature = "serde")]
impl TryFrom<Repr> for PowerFunction {
    type Error = Error;

    fn try_from(repr: Repr) -> Result<Self> {
        match repr {
            Repr::Polynomial { gamma } => PowerFunction::polynomial(gamma),
            Repr::Table { points } => PowerFunction::table(&points),
        }
    }
}

#[cfg(feature = "serde")]
impl From<PowerFunction> for Repr {
    fn from(pf: PowerFunction) -> Self {
        match pf {
            PowerFunction::Polynomial { gamma } => Repr::Polynomial { gamma },
            PowerFunction::Table(t) => Repr::Table { points: t.points },
        }
    }
}

/// `f(s0 + u) = f0 + b*u + c*u^2` for `u` in `[0, width]`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    s0: f64,
    f0: f64,
    b: f64,
    c: f64,
    width: f64,
}

impl Piece {
    fn value(&self, u: f64) -> f64 {
        self.f0 + u * (self.b + self.c * u)
    }

    fn right_slope(&self) -> f64 {
        self.b + 2.0 * self.c * self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    points: Vec<[f64; 2]>,
    pieces: Vec<Piece>,
}

impl Table {
    /// Breakpoints as supplied, without the implicit origin.
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }
}

impl PowerFunction {
    pub fn polynomial(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("polynomial exponent {gamma} must be > 1")));
        }
        Ok(PowerFunction::Polynomial { gamma })
    }

    /// Builds the convex interpolant through `points` (`[s, f(s)]` pairs).
    ///
    /// A leading `[0, 0]` is accepted and implied otherwise. Both coordinates
    /// and the chord slopes must be strictly increasing.
    pub fn table(points: &[[f64; 2]]) -> Result<Self> {
        let given: Vec<[f64; 2]> = points.to_vec();
        let mut knots: Vec<[f64; 2]> = Vec::with_capacity(points.len() + 1);
        knots.push([0.0, 0.0]);
        for (i, p) in points.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::Config(format!("table point {i} is not finite")));
            }
            if i == 0 && p[0] == 0.0 {
                if p[1] != 0.0 {
                    return Err(Error::Config("table must satisfy f(0) = 0".into()));
                }
                continue;
            }
            let last = knots[knots.len() - 1];
            if !(p[0] > last[0] && p[1] > last[1]) {
                return Err(Error::Config(format!("table point {i} is not strictly increasing in both coordinates")));
            }
            knots.push(*p);
        }
        if knots.len() < 2 {
            return Err(Error::Config("table needs at least one point beyond the origin".into()));
        }

        let slopes: Vec<f64> = knots.windows(2).map(|w| (w[1][1] - w[0][1]) / (w[1][0] - w[0][0])).collect();
        for (i, pair) in slopes.windows(2).enumerate() {
            if !(pair[1] > pair[0]) {
                return Err(Error::Config(format!("table slopes must be strictly increasing (segment {})", i + 1)));
            }
        }

        let n = slopes.len();
        let mut pieces = Vec::with_capacity(n + 1);
        for k in 0..n {
            let gap_left = if k == 0 { slopes[0] } else { slopes[k] - slopes[k - 1] };
            let gap = if k + 1 < n { gap_left.min(slopes[k + 1] - slopes[k]) } else { gap_left };
            let width = knots[k + 1][0] - knots[k][0];
            let bend = BEND * gap;
            let c = bend / width;
            pieces.push(Piece { s0: knots[k][0], f0: knots[k][1], b: slopes[k] - bend, c, width });
        }
        let last = pieces[n - 1];
        pieces.push(Piece { s0: knots[n][0], f0: knots[n][1], b: last.right_slope(), c: last.c, width: f64::INFINITY });
        Ok(PowerFunction::Table(Table { points: given, pieces }))
    }

    /// `f(s)`.
    pub fn eval_f(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::NegativeArgument(s));
        }
        Ok(match self {
            PowerFunction::Polynomial { gamma } => pow(s, *gamma),
            PowerFunction::Table(t) => {
                let piece = piece_by(&t.pieces, |p| p.s0 <= s);
                piece.value(s - piece.s0)
            }
        })
    }

    /// `g(w) = f^{-1}(w)`, the speed whose power is `w`.
    pub fn eval_g(&self, w: f64) -> Result<f64> {
        if !(w >= 0.0) {
            return Err(Error::NegativeArgument(w));
        }
        if !w.is_finite() {
            return Err(Error::Inversion(w));
        }
        Ok(match self {
            PowerFunction::Polynomial { gamma } => pow(w, 1.0 / gamma),
            PowerFunction::Table(t) => {
                let piece = piece_by(&t.pieces, |p| p.f0 <= w);
                piece.s0 + solve_quadratic_increment(piece.c, piece.b, w - piece.f0)
            }
        })
    }

    /// `f*(beta) = sup_{s >= 0} (s*beta - f(s))`. Zero for `beta <= 0`.
    pub fn eval_conjugate(&self, beta: f64) -> f64 {
        if !(beta > 0.0) {
            return 0.0;
        }
        match self {
            PowerFunction::Polynomial { gamma } => (gamma - 1.0) * pow(beta / gamma, gamma / (gamma - 1.0)),
            PowerFunction::Table(t) => {
                if beta <= t.pieces[0].b {
                    return 0.0;
                }
                for p in &t.pieces {
                    if beta <= p.b {
                        // Kink at the start of this piece.
                        return p.s0 * beta - p.f0;
                    }
                    if beta <= p.right_slope() {
                        let u = (beta - p.b) / (2.0 * p.c);
                        return (p.s0 + u) * beta - p.value(u);
                    }
                }
                unreachable!("tail piece has unbounded slope")
            }
        }
    }

    /// `(f*)^{-1}(w)` for `w > 0`.
    pub fn eval_conjugate_inverse(&self, w: f64) -> Result<f64> {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Inversion(w));
        }
        Ok(match self {
            PowerFunction::Polynomial { gamma } => gamma * pow(w / (gamma - 1.0), (gamma - 1.0) / gamma),
            PowerFunction::Table(t) => {
                // On a piece, s*f'(s) - f(s) = h0 + 2*c*s0*u + c*u^2 with
                // h0 = s0*b - f0; it equals f*(f'(s)) and increases with u.
                for p in &t.pieces {
                    let h0 = p.s0 * p.b - p.f0;
                    if w < h0 {
                        return Ok((w + p.f0) / p.s0);
                    }
                    let u_end = p.width;
                    let h_end = h0 + p.c * u_end * (2.0 * p.s0 + u_end);
                    if w <= h_end {
                        let d = (w - h0) / p.c;
                        let u = d / (p.s0 + sqrt(p.s0 * p.s0 + d));
                        return Ok(p.b + 2.0 * p.c * u);
                    }
                }
                return Err(Error::Inversion(w));
            }
        })
    }

    /// Whether `f*(w / g(w)) <= w` holds at `w`, up to `1e-9` absolute.
    pub fn check_conjugate_lemma(&self, w: f64) -> bool {
        if w == 0.0 {
            return true;
        }
        match self.eval_g(w) {
            Ok(g) if g > 0.0 => self.eval_conjugate(w / g) <= w + 1e-9,
            _ => false,
        }
    }
}

/// Last piece satisfying `pred`; pieces are sorted so `pred` is a prefix.
fn piece_by(pieces: &[Piece], pred: impl Fn(&Piece) -> bool) -> &Piece {
    let idx = pieces.partition_point(pred);
    &pieces[idx.saturating_sub(1)]
}

/// Non-negative root `u` of `c*u^2 + b*u = delta`.
fn solve_quadratic_increment(c: f64, b: f64, delta: f64) -> f64 {
    if delta <= 0.0 {
        return 0.0;
    }
    2.0 * delta / (b + sqrt(b * b + 4.0 * c * delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_table() -> PowerFunction {
        PowerFunction::table(&[[1.0, 1.0], [2.0, 3.0], [4.0, 10.0], [8.0, 40.0]]).unwrap()
    }

    #[test]
    fn polynomial_values() {
        let sq = PowerFunction::polynomial(2.0).unwrap();
        assert_eq!(sq.eval_f(3.0).unwrap(), 9.0);
        assert_eq!(sq.eval_f(0.0).unwrap(), 0.0);
        assert_eq!(PowerFunction::polynomial(3.0).unwrap().eval_f(2.0).unwrap(), 8.0);
        assert_eq!(sq.eval_g(4.0).unwrap(), 2.0);
        assert_eq!(sq.eval_g(0.0).unwrap(), 0.0);
        assert_relative_eq!(sq.eval_conjugate(2.0), 1.0, max_relative = 1e-15);
        assert_eq!(sq.eval_conjugate(0.0), 0.0);
        assert_relative_eq!(sq.eval_conjugate_inverse(1.0).unwrap(), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn conjugate_lemma_closed_chain() {
        // g(4) = 2, 4/2 = 2, f*(2) = 1 <= 4.
        let sq = PowerFunction::polynomial(2.0).unwrap();
        assert!(sq.check_conjugate_lemma(4.0));
        assert!(sq.check_conjugate_lemma(1e-300));
        assert!(sq.check_conjugate_lemma(0.0));
    }

    #[test]
    fn negative_arguments_rejected() {
        let sq = PowerFunction::polynomial(2.0).unwrap();
        assert_eq!(sq.eval_f(-1.0), Err(Error::NegativeArgument(-1.0)));
        assert!(sq.eval_g(-0.5).is_err());
        assert!(sq.eval_conjugate_inverse(0.0).is_err());
        assert!(sample_table().eval_g(f64::INFINITY).is_err());
    }

    #[test]
    fn invalid_definitions_rejected() {
        assert!(PowerFunction::polynomial(1.0).is_err());
        assert!(PowerFunction::table(&[]).is_err());
        assert!(PowerFunction::table(&[[0.0, 1.0], [1.0, 2.0]]).is_err());
        // Collinear points: slopes not strictly increasing.
        assert!(PowerFunction::table(&[[1.0, 1.0], [2.0, 2.0]]).is_err());
        assert!(PowerFunction::table(&[[1.0, 1.0], [0.5, 3.0]]).is_err());
        assert!(PowerFunction::table(&[[0.0, 0.0], [1.0, 1.0]]).is_ok());
    }

    #[test]
    fn table_interpolates_breakpoints() {
        let t = sample_table();
        for [s, f] in [[0.0, 0.0], [1.0, 1.0], [2.0, 3.0], [4.0, 10.0], [8.0, 40.0]] {
            assert_relative_eq!(t.eval_f(s).unwrap(), f, max_relative = 1e-14, epsilon = 1e-14);
        }
    }

    #[test]
    fn table_is_strictly_convex_and_increasing() {
        let t = sample_table();
        let mut prev_f = -1.0;
        let mut prev_slope = -1.0;
        let h = 1e-3;
        let mut s = 0.0;
        while s < 20.0 {
            let f0 = t.eval_f(s).unwrap();
            let f1 = t.eval_f(s + h).unwrap();
            let slope = (f1 - f0) / h;
            assert!(f0 > prev_f);
            assert!(slope > prev_slope, "slope not increasing at s={s}");
            prev_f = f0;
            prev_slope = slope;
            s += h;
        }
    }
}
