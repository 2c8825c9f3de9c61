//! Exact piecewise-linear functions on the closed interval `[0, 1]`.
//!
//! Every function is stored as ascending rational breakpoints `0 = b_0 <
//! b_1 < ... < b_k = 1` together with the affine piece on each interval
//! `[b_i, b_{i+1}]`. All arithmetic is exact over `BigRational`, so
//! pointwise minima, maxima, sums, and comparisons never lose precision.

use num::{One, Signed, Zero};

use crate::constraints::AffineExpr;
use crate::Rat;

/// A continuous piecewise-linear function on `[0, 1]`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PiecewiseLinear {
    /// Breakpoints, always starting at 0 and ending at 1.
    breaks: Vec<Rat>,
    /// `pieces[i]` applies on `[breaks[i], breaks[i+1]]`.
    pieces: Vec<AffineExpr>,
}

impl PiecewiseLinear {
    pub fn from_affine(f: AffineExpr) -> PiecewiseLinear {
        PiecewiseLinear { breaks: vec![Rat::zero(), Rat::one()], pieces: vec![f] }
    }

    pub fn constant(c: Rat) -> PiecewiseLinear {
        PiecewiseLinear::from_affine(AffineExpr::constant(c))
    }

    pub fn breakpoints(&self) -> &[Rat] {
        &self.breaks
    }

    pub fn pieces(&self) -> &[AffineExpr] {
        &self.pieces
    }

    pub fn eval(&self, x: &Rat) -> Rat {
        debug_assert!(!x.is_negative() && *x <= Rat::one());
        let i = match self.breaks.binary_search(x) {
            Ok(i) => i.min(self.pieces.len() - 1),
            Err(i) => i - 1,
        };
        self.pieces[i].eval(x)
    }

    /// Merge adjacent intervals that carry the same affine piece.
    fn simplify(mut self) -> PiecewiseLinear {
        let mut breaks = vec![self.breaks[0].clone()];
        let mut pieces = vec![self.pieces.remove(0)];
        for (b, p) in self.breaks[1..self.breaks.len() - 1].iter().zip(self.pieces) {
            if p == *pieces.last().unwrap() {
                continue;
            }
            breaks.push(b.clone());
            pieces.push(p);
        }
        breaks.push(self.breaks.last().unwrap().clone());
        PiecewiseLinear { breaks, pieces }
    }

    /// Combine two functions interval by interval with `pick` choosing the
    /// affine piece on each common subinterval; insert the crossing point
    /// of the two lines when it lies strictly inside an interval.
    fn combine<F>(&self, other: &PiecewiseLinear, pick: F) -> PiecewiseLinear
    where
        F: Fn(&AffineExpr, &AffineExpr, &Rat) -> AffineExpr,
    {
        let mut grid: Vec<Rat> = self.breaks.iter().chain(&other.breaks).cloned().collect();
        // Crossing points of any pair of pieces.
        for f in &self.pieces {
            for g in &other.pieces {
                if f.c1 != g.c1 {
                    let x = (&g.c0 - &f.c0) / (&f.c1 - &g.c1);
                    if x.is_positive() && x < Rat::one() {
                        grid.push(x);
                    }
                }
            }
        }
        grid.sort();
        grid.dedup();
        let two = Rat::from_integer(2.into());
        let pieces = grid
            .windows(2)
            .map(|w| {
                let mid = (&w[0] + &w[1]) / &two;
                let f = &self.pieces[self.piece_index(&mid)];
                let g = &other.pieces[other.piece_index(&mid)];
                pick(f, g, &mid)
            })
            .collect();
        PiecewiseLinear { breaks: grid, pieces }.simplify()
    }

    fn piece_index(&self, x: &Rat) -> usize {
        match self.breaks.binary_search(x) {
            Ok(i) => i.min(self.pieces.len() - 1),
            Err(i) => i - 1,
        }
    }

    pub fn min(&self, other: &PiecewiseLinear) -> PiecewiseLinear {
        self.combine(other, |f, g, mid| {
            if f.eval(mid) <= g.eval(mid) { f.clone() } else { g.clone() }
        })
    }

    pub fn max(&self, other: &PiecewiseLinear) -> PiecewiseLinear {
        self.combine(other, |f, g, mid| {
            if f.eval(mid) >= g.eval(mid) { f.clone() } else { g.clone() }
        })
    }

    pub fn add(&self, other: &PiecewiseLinear) -> PiecewiseLinear {
        self.combine(other, |f, g, _| f.add(g))
    }

    /// Multiply by a nonnegative scalar.
    pub fn scale(&self, k: &Rat) -> PiecewiseLinear {
        debug_assert!(!k.is_negative());
        PiecewiseLinear {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(|p| p.scale(k)).collect(),
        }
        .simplify()
    }

    /// Pointwise minimum of a family of affine functions.
    pub fn lower_envelope(fs: &[AffineExpr]) -> PiecewiseLinear {
        let mut it = fs.iter();
        let first = it.next().expect("envelope of an empty family");
        it.fold(PiecewiseLinear::from_affine(first.clone()), |acc, f| {
            acc.min(&PiecewiseLinear::from_affine(f.clone()))
        })
    }

    /// Pointwise minimum over a family of piecewise-linear functions.
    pub fn min_of(fs: &[PiecewiseLinear]) -> PiecewiseLinear {
        let mut it = fs.iter();
        let first = it.next().expect("min of an empty family").clone();
        it.fold(first, |acc, f| acc.min(f))
    }

    /// Pointwise maximum over a family of piecewise-linear functions.
    pub fn max_of(fs: &[PiecewiseLinear]) -> PiecewiseLinear {
        let mut it = fs.iter();
        let first = it.next().expect("max of an empty family").clone();
        it.fold(first, |acc, f| acc.max(f))
    }

    /// Minimum value over `[0, 1]` and the smallest point attaining it.
    /// A continuous piecewise-linear function attains its minimum at a
    /// breakpoint.
    pub fn min_over_unit(&self) -> (Rat, Rat) {
        let mut best_val = self.eval(&self.breaks[0]);
        let mut best_arg = self.breaks[0].clone();
        for b in &self.breaks[1..] {
            let v = self.eval(b);
            if v < best_val {
                best_val = v;
                best_arg = b.clone();
            }
        }
        (best_val, best_arg)
    }

    /// Pointwise equality as functions (representations are canonical after
    /// `simplify`, so structural equality suffices once both are built by
    /// this module; this is the explicit check).
    pub fn equals(&self, other: &PiecewiseLinear) -> bool {
        self.breaks == other.breaks && self.pieces == other.pieces
    }
}
