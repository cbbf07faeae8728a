//! State-space regions with exact membership and sound cell predicates.
//!
//! The grammar is closed: boxes, balls, axis-aligned ellipsoids, and the set
//! algebra over them. Every benchmark set fits. Exact membership keeps the
//! oracle honest; the two cell predicates keep the grid verifier sound:
//!
//! * [`Region::intersects_cell`] may err toward `true` (a cell is never
//!   dropped when it might touch the region),
//! * [`Region::contains_cell`] may err toward `false` (a cell is only claimed
//!   covered when that is certain).

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Relative boundary tolerance used only by the containment-direction cell
/// predicates. Grid cell corners carry ~1e-16 arithmetic dust, so demanding
/// bit-exact containment would keep boundary cells that are contained in exact
/// arithmetic. Membership tests stay exact; the coverage direction
/// (`intersects_cell`) takes no tolerance, so a discarded cell can hide at
/// most a 1e-12-deep sliver of domain, far below every margin in this crate.
pub const CELL_BOUNDARY_TOL: f64 = 1e-12;

fn axis_tol(lo: f64, hi: f64) -> f64 {
    CELL_BOUNDARY_TOL * lo.abs().max(hi.abs()).max(1.0)
}

/// Axis-aligned box, possibly degenerate (`lo == hi` on some axes).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct AxisBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<Vec<[f64; 2]>> for AxisBox {
    type Error = Error;
    fn try_from(bounds: Vec<[f64; 2]>) -> Result<Self> {
        AxisBox::from_bounds(&bounds)
    }
}

impl From<AxisBox> for Vec<[f64; 2]> {
    fn from(b: AxisBox) -> Self {
        b.lo.iter().zip(&b.hi).map(|(&l, &h)| [l, h]).collect()
    }
}

impl AxisBox {
    pub fn from_bounds(bounds: &[[f64; 2]]) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("box must have dimension >= 1"));
        }
        for (i, [lo, hi]) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!(
                    "box axis {} must satisfy finite lo <= hi, got [{lo}, {hi}]",
                    i + 1
                )));
            }
        }
        Ok(AxisBox {
            lo: bounds.iter().map(|b| b[0]).collect(),
            hi: bounds.iter().map(|b| b[1]).collect(),
        })
    }

    /// Degenerate box holding exactly one point.
    pub fn singleton(x: &[f64]) -> Self {
        AxisBox { lo: x.to_vec(), hi: x.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| l <= v && v <= h)
    }

    /// Containment up to [`CELL_BOUNDARY_TOL`] (the container is inflated).
    pub fn contains_box(&self, other: &AxisBox) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|i| {
                let tol = axis_tol(self.lo[i], self.hi[i]);
                self.lo[i] - tol <= other.lo[i] && other.hi[i] <= self.hi[i] + tol
            })
    }

    pub fn overlaps(&self, other: &AxisBox) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|i| self.lo[i] <= other.hi[i] && other.lo[i] <= self.hi[i])
    }

    /// Intersection, `None` when empty.
    pub fn intersect(&self, other: &AxisBox) -> Option<AxisBox> {
        if !self.overlaps(other) {
            return None;
        }
        Some(AxisBox {
            lo: (0..self.dim()).map(|i| self.lo[i].max(other.lo[i])).collect(),
            hi: (0..self.dim()).map(|i| self.hi[i].min(other.hi[i])).collect(),
        })
    }

    pub fn hull(&self, other: &AxisBox) -> AxisBox {
        AxisBox {
            lo: (0..self.dim()).map(|i| self.lo[i].min(other.lo[i])).collect(),
            hi: (0..self.dim()).map(|i| self.hi[i].max(other.hi[i])).collect(),
        }
    }

    pub fn corners(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(1 << n);
        for mask in 0u32..(1 << n) {
            out.push(
                (0..n)
                    .map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
                    .collect(),
            );
        }
        out
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| if l == h { l } else { rng.random_range(l..h) })
            .collect()
    }

    pub fn to_intervals(&self) -> Vec<crate::interval::Interval> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| crate::interval::Interval::new(l, h))
            .collect()
    }
}

/// One grid cell: center plus per-axis half-widths. The margin test uses the
/// infinity-norm radius `max(half)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub center: Vec<f64>,
    pub half: Vec<f64>,
}

impl GridCell {
    pub fn radius(&self) -> f64 {
        self.half.iter().fold(0.0f64, |a, &h| a.max(h))
    }

    pub fn as_box(&self) -> AxisBox {
        AxisBox {
            lo: self.center.iter().zip(&self.half).map(|(&c, &h)| c - h).collect(),
            hi: self.center.iter().zip(&self.half).map(|(&c, &h)| c + h).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Box { bounds: AxisBox },
    Ball { center: Vec<f64>, radius: f64 },
    /// `sum_i weights[i] * (x_i - center[i])^2 <= level`.
    Ellipsoid { center: Vec<f64>, weights: Vec<f64>, level: f64 },
    Union { parts: Vec<Region> },
    Intersection { parts: Vec<Region> },
    Difference { left: Box<Region>, right: Box<Region> },
    /// `within \ inner`.
    Complement { within: AxisBox, inner: Box<Region> },
}

impl Region {
    pub fn ball(center: &[f64], radius: f64) -> Region {
        Region::Ball { center: center.to_vec(), radius }
    }

    pub fn aligned_box(bounds: &[[f64; 2]]) -> Result<Region> {
        Ok(Region::Box { bounds: AxisBox::from_bounds(bounds)? })
    }

    pub fn difference(left: Region, right: Region) -> Region {
        Region::Difference { left: Box::new(left), right: Box::new(right) }
    }

    pub fn complement_within(within: AxisBox, inner: Region) -> Region {
        Region::Complement { within, inner: Box::new(inner) }
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Box { bounds } => bounds.dim(),
            Region::Ball { center, .. } => center.len(),
            Region::Ellipsoid { center, .. } => center.len(),
            Region::Union { parts } | Region::Intersection { parts } => {
                parts.first().map_or(0, Region::dim)
            }
            Region::Difference { left, .. } => left.dim(),
            Region::Complement { within, .. } => within.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::invalid("region must have dimension >= 1"));
        }
        self.validate_against(n)
    }

    fn validate_against(&self, n: usize) -> Result<()> {
        if self.dim() != n {
            return Err(Error::dimension(format!(
                "region of dimension {} nested in dimension {n}",
                self.dim()
            )));
        }
        match self {
            Region::Box { .. } => Ok(()),
            Region::Ball { radius, center } => {
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::invalid(format!("ball radius must be >= 0, got {radius}")));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("ball center must be finite"));
                }
                Ok(())
            }
            Region::Ellipsoid { center, weights, level } => {
                if center.len() != weights.len() {
                    return Err(Error::dimension("ellipsoid center/weights length mismatch"));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::invalid("ellipsoid weights must be positive"));
                }
                if !(level.is_finite() && *level >= 0.0) {
                    return Err(Error::invalid(format!("ellipsoid level must be >= 0, got {level}")));
                }
                Ok(())
            }
            Region::Union { parts } | Region::Intersection { parts } => {
                if parts.is_empty() {
                    return Err(Error::invalid("union/intersection needs at least one part"));
                }
                parts.iter().try_for_each(|p| p.validate_against(n))
            }
            Region::Difference { left, right } => {
                left.validate_against(n)?;
                right.validate_against(n)
            }
            Region::Complement { inner, .. } => inner.validate_against(n),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Box { bounds } => bounds.contains(x),
            Region::Ball { center, radius } => {
                sq_dist(x, center) <= radius * radius
            }
            Region::Ellipsoid { center, weights, level } => {
                weighted_sq_dist(x, center, weights) <= *level
            }
            Region::Union { parts } => parts.iter().any(|p| p.contains(x)),
            Region::Intersection { parts } => parts.iter().all(|p| p.contains(x)),
            Region::Difference { left, right } => left.contains(x) && !right.contains(x),
            Region::Complement { within, inner } => within.contains(x) && !inner.contains(x),
        }
    }

    /// Enclosing box; `None` when the region is provably empty.
    pub fn bounding_box(&self) -> Option<AxisBox> {
        match self {
            Region::Box { bounds } => Some(bounds.clone()),
            Region::Ball { center, radius } => Some(AxisBox {
                lo: center.iter().map(|c| c - radius).collect(),
                hi: center.iter().map(|c| c + radius).collect(),
            }),
            Region::Ellipsoid { center, weights, level } => Some(AxisBox {
                lo: center
                    .iter()
                    .zip(weights)
                    .map(|(c, w)| c - (level / w).sqrt())
                    .collect(),
                hi: center
                    .iter()
                    .zip(weights)
                    .map(|(c, w)| c + (level / w).sqrt())
                    .collect(),
            }),
            Region::Union { parts } => {
                let mut acc: Option<AxisBox> = None;
                for p in parts {
                    if let Some(b) = p.bounding_box() {
                        acc = Some(match acc {
                            Some(a) => a.hull(&b),
                            None => b,
                        });
                    }
                }
                acc
            }
            Region::Intersection { parts } => {
                let mut acc: Option<AxisBox> = None;
                for p in parts {
                    let b = p.bounding_box()?;
                    acc = Some(match acc {
                        Some(a) => a.intersect(&b)?,
                        None => b,
                    });
                }
                acc
            }
            // The right operand cannot shrink the box soundly.
            Region::Difference { left, .. } => left.bounding_box(),
            Region::Complement { within, .. } => Some(within.clone()),
        }
    }

    /// Conservative: `false` only when the cell certainly misses the region.
    pub fn intersects_cell(&self, cell: &AxisBox) -> bool {
        match self {
            Region::Box { bounds } => bounds.overlaps(cell),
            Region::Ball { center, radius } => {
                nearest_sq_dist(cell, center, None) <= radius * radius
            }
            Region::Ellipsoid { center, weights, level } => {
                nearest_sq_dist(cell, center, Some(weights)) <= *level
            }
            Region::Union { parts } => parts.iter().any(|p| p.intersects_cell(cell)),
            Region::Intersection { parts } => parts.iter().all(|p| p.intersects_cell(cell)),
            Region::Difference { left, right } => {
                left.intersects_cell(cell) && !right.contains_cell(cell)
            }
            Region::Complement { within, inner } => {
                within.overlaps(cell) && !inner.contains_cell(cell)
            }
        }
    }

    /// Conservative: `true` only when the whole cell certainly lies inside.
    pub fn contains_cell(&self, cell: &AxisBox) -> bool {
        match self {
            Region::Box { bounds } => bounds.contains_box(cell),
            Region::Ball { center, radius } => {
                let rr = radius * radius;
                farthest_sq_dist(cell, center, None) <= rr + CELL_BOUNDARY_TOL * rr.max(1.0)
            }
            Region::Ellipsoid { center, weights, level } => {
                farthest_sq_dist(cell, center, Some(weights))
                    <= *level + CELL_BOUNDARY_TOL * level.max(1.0)
            }
            Region::Union { parts } => parts.iter().any(|p| p.contains_cell(cell)),
            Region::Intersection { parts } => parts.iter().all(|p| p.contains_cell(cell)),
            Region::Difference { left, right } => {
                left.contains_cell(cell) && !right.intersects_cell(cell)
            }
            Region::Complement { within, inner } => {
                within.contains_box(cell) && !inner.intersects_cell(cell)
            }
        }
    }

    /// Cover the region with axis-aligned cells of infinity-norm radius
    /// `<= r`. Each bounding-box axis is split into `ceil(width / r)` equal
    /// parts (with a tolerance so exact multiples do not round up); cells that
    /// certainly miss the region are discarded.
    pub fn grid(&self, r: f64, max_cells: u64) -> Result<Vec<GridCell>> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid(format!("cell radius must be > 0, got {r}")));
        }
        let bbox = match self.bounding_box() {
            Some(b) => b,
            None => return Ok(Vec::new()),
        };
        let n = bbox.dim();
        let mut splits = Vec::with_capacity(n);
        let mut total: u128 = 1;
        for i in 0..n {
            let w = bbox.width(i);
            let q = w / r;
            let s = if q <= 1.0 {
                1
            } else if (q - q.round()).abs() < 1e-9 {
                q.round() as u64
            } else {
                q.ceil() as u64
            };
            splits.push(s);
            total = total.saturating_mul(s as u128);
            if total > max_cells as u128 {
                return Err(Error::resource(format!(
                    "grid would need {total}+ cells, cap is {max_cells}"
                )));
            }
        }
        let mut cells = Vec::new();
        let mut index = vec![0u64; n];
        loop {
            let mut center = Vec::with_capacity(n);
            let mut half = Vec::with_capacity(n);
            for i in 0..n {
                let cw = bbox.width(i) / splits[i] as f64;
                center.push(bbox.lo()[i] + (index[i] as f64 + 0.5) * cw);
                half.push(0.5 * cw);
            }
            let cell = GridCell { center, half };
            if self.intersects_cell(&cell.as_box()) {
                cells.push(cell);
            }
            // mixed-radix increment
            let mut axis = 0;
            loop {
                if axis == n {
                    return Ok(cells);
                }
                index[axis] += 1;
                if index[axis] < splits[axis] {
                    break;
                }
                index[axis] = 0;
                axis += 1;
            }
        }
    }

    /// Rejection-sample a member point; `None` after `tries` misses.
    pub fn sample(&self, rng: &mut impl Rng, tries: usize) -> Option<Vec<f64>> {
        let bbox = self.bounding_box()?;
        for _ in 0..tries {
            let x = bbox.sample(rng);
            if self.contains(&x) {
                return Some(x);
            }
        }
        None
    }

    /// Bounding-box corners that are members; frequent violation sites.
    pub fn member_corners(&self) -> Vec<Vec<f64>> {
        match self.bounding_box() {
            Some(b) if b.dim() <= 16 => {
                b.corners().into_iter().filter(|c| self.contains(c)).collect()
            }
            _ => Vec::new(),
        }
    }
}

fn sq_dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn weighted_sq_dist(x: &[f64], c: &[f64], w: &[f64]) -> f64 {
    x.iter()
        .zip(c.iter().zip(w))
        .map(|(a, (b, wi))| wi * (a - b) * (a - b))
        .sum()
}

/// Squared (optionally weighted) distance from `center` to the nearest point
/// of `cell`. Exact for axis-aligned metrics: clamp per axis.
fn nearest_sq_dist(cell: &AxisBox, center: &[f64], weights: Option<&[f64]>) -> f64 {
    (0..center.len())
        .map(|i| {
            let v = center[i].clamp(cell.lo()[i], cell.hi()[i]) - center[i];
            weights.map_or(1.0, |w| w[i]) * v * v
        })
        .sum()
}

/// Squared (optionally weighted) distance from `center` to the farthest point
/// of `cell`; attained at a corner, per axis independently.
fn farthest_sq_dist(cell: &AxisBox, center: &[f64], weights: Option<&[f64]>) -> f64 {
    (0..center.len())
        .map(|i| {
            let a = (cell.lo()[i] - center[i]).abs();
            let b = (cell.hi()[i] - center[i]).abs();
            let v = a.max(b);
            weights.map_or(1.0, |w| w[i]) * v * v
        })
        .sum()
}
