//! Vertical columns of a set described by graphs.

use crate::geometry::SheetStack;

/// A set `E ⊂ R^n` read column by column: along each vertical line the set
/// switches membership at finitely many heights.
pub trait ColumnSet: Sync {
    fn horizontal_dim(&self) -> usize;
    /// Ascending heights where the column switches between `E` and `E^c`.
    fn boundaries(&self, y: &[f64]) -> Vec<f64>;
    /// Whether points below every boundary belong to `E`.
    fn e_below(&self) -> bool;
}

impl ColumnSet for SheetStack {
    fn horizontal_dim(&self) -> usize {
        self.dim()
    }

    fn boundaries(&self, y: &[f64]) -> Vec<f64> {
        self.heights(y)
    }

    fn e_below(&self) -> bool {
        SheetStack::e_below(self)
    }
}

/// The empty set in `R^{dim+1}`.
#[derive(Debug, Clone, Copy)]
pub struct EmptySet {
    pub dim: usize,
}

impl ColumnSet for EmptySet {
    fn horizontal_dim(&self) -> usize {
        self.dim
    }

    fn boundaries(&self, _: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    fn e_below(&self) -> bool {
        false
    }
}

/// The complement of another column set.
pub struct Complement<'a, S: ColumnSet + ?Sized>(pub &'a S);

impl<S: ColumnSet + ?Sized> ColumnSet for Complement<'_, S> {
    fn horizontal_dim(&self) -> usize {
        self.0.horizontal_dim()
    }

    fn boundaries(&self, y: &[f64]) -> Vec<f64> {
        self.0.boundaries(y)
    }

    fn e_below(&self) -> bool {
        !self.0.e_below()
    }
}

pub(crate) type Interval = (f64, f64);

/// Intervals of `E` and of `E^c` along one column.
pub(crate) fn split(bounds: &[f64], e_below: bool) -> (Vec<Interval>, Vec<Interval>) {
    let mut e = Vec::new();
    let mut ec = Vec::new();
    let mut lo = f64::NEG_INFINITY;
    for k in 0..=bounds.len() {
        let hi = if k < bounds.len() { bounds[k] } else { f64::INFINITY };
        let in_e = (k % 2 == 0) == e_below;
        if in_e {
            e.push((lo, hi));
        } else {
            ec.push((lo, hi));
        }
        lo = hi;
    }
    (e, ec)
}

/// Intervals with weight `χ_{E^c} - χ_E`.
pub(crate) fn signed(bounds: &[f64], e_below: bool) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(bounds.len() + 1);
    let mut lo = f64::NEG_INFINITY;
    for k in 0..=bounds.len() {
        let hi = if k < bounds.len() { bounds[k] } else { f64::INFINITY };
        let in_e = (k % 2 == 0) == e_below;
        out.push((lo, hi, if in_e { -1.0 } else { 1.0 }));
        lo = hi;
    }
    out
}

pub(crate) fn clip_inside(iv: &[Interval], a: f64, b: f64) -> Vec<Interval> {
    iv.iter()
        .filter_map(|&(lo, hi)| {
            let (l, h) = (lo.max(a), hi.min(b));
            (h > l).then_some((l, h))
        })
        .collect()
}

pub(crate) fn clip_outside(iv: &[Interval], a: f64, b: f64) -> Vec<Interval> {
    let mut out = Vec::new();
    for &(lo, hi) in iv {
        if lo < a {
            out.push((lo, hi.min(a)));
        }
        if hi > b {
            out.push((lo.max(b), hi));
        }
    }
    out.retain(|(l, h)| h > l);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_and_clip() {
        let (e, ec) = split(&[0.0, 1.0], true);
        assert_eq!(e, vec![(f64::NEG_INFINITY, 0.0), (1.0, f64::INFINITY)]);
        assert_eq!(ec, vec![(0.0, 1.0)]);
        assert_eq!(clip_inside(&e, -0.5, 0.5), vec![(-0.5, 0.0)]);
        assert_eq!(clip_outside(&ec, -0.5, 0.5), vec![(0.5, 1.0)]);
        assert_eq!(clip_outside(&e, -0.5, 0.5), vec![(f64::NEG_INFINITY, -0.5), (1.0, f64::INFINITY)]);
        let sg = signed(&[0.0], false);
        assert_eq!(sg[0].2, 1.0);
        assert_eq!(sg[1].2, -1.0);
        let (e, ec) = split(&[], false);
        assert!(e.is_empty());
        assert_eq!(ec.len(), 1);
    }
}
