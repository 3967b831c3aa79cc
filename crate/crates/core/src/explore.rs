//! Boundariness walls over axis-aligned input lattices.
//!
//! A [`Region`] sweeps some SUT dimensions over `lo..=hi` by a stride and pins
//! the others. Every lattice cell is evaluated once; every pair of cells that
//! are neighbours along one swept axis gets a [`Wall`] whose boundariness is
//! the output distance between them.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::distance::{DistanceError, DistanceFunction};
use crate::sut::{InputPoint, Status, Sut, SutDescriptor, SutOutput};

pub const DEFAULT_CELL_BUDGET: u64 = 100_000;

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("region needs {required} cells, budget allows {allowed}")]
    BudgetExceeded { required: u128, allowed: u64 },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("focus {0} lies outside the region")]
    FocusOutside(String),
    #[error("zoom must be a positive finite number, got {0}")]
    InvalidZoom(f64),
    #[error(transparent)]
    Distance(#[from] DistanceError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
    #[serde(default = "one")]
    pub stride: i64,
}

fn one() -> i64 {
    1
}

impl Axis {
    pub fn new(name: &str, lo: i64, hi: i64, stride: i64) -> Self {
        Axis {
            name: name.to_string(),
            lo,
            hi,
            stride,
        }
    }

    pub fn cells(&self) -> u128 {
        ((i128::from(self.hi) - i128::from(self.lo)) / i128::from(self.stride) + 1) as u128
    }

    fn value(&self, i: u64) -> i64 {
        (i128::from(self.lo) + i128::from(i) * i128::from(self.stride)) as i64
    }

    fn index_of(&self, v: i64) -> Option<u64> {
        let off = i128::from(v) - i128::from(self.lo);
        let s = i128::from(self.stride);
        (off >= 0 && off % s == 0 && v <= self.hi).then(|| (off / s) as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub sweep: Vec<Axis>,
    #[serde(default)]
    pub fixed: BTreeMap<String, i64>,
}

impl Region {
    pub fn new(sweep: Vec<Axis>, fixed: impl IntoIterator<Item = (String, i64)>) -> Self {
        Region {
            sweep,
            fixed: fixed.into_iter().collect(),
        }
    }

    /// Product of per-axis cell counts, saturating far beyond any budget.
    pub fn cell_count(&self) -> u128 {
        self.sweep
            .iter()
            .fold(1u128, |acc, a| acc.saturating_mul(a.cells()))
    }

    pub fn wall_count(&self) -> u128 {
        let total = self.cell_count();
        self.sweep
            .iter()
            .map(|a| total / a.cells() * (a.cells() - 1))
            .sum()
    }

    pub fn validate(&self) -> Result<(), ExploreError> {
        if self.sweep.is_empty() {
            return Err(ExploreError::InvalidRegion("no swept dimension".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.sweep {
            if a.stride <= 0 {
                return Err(ExploreError::InvalidRegion(format!(
                    "{}: stride must be positive",
                    a.name
                )));
            }
            if a.lo > a.hi {
                return Err(ExploreError::InvalidRegion(format!(
                    "{}: lo {} > hi {}",
                    a.name, a.lo, a.hi
                )));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(ExploreError::InvalidRegion(format!(
                    "{} swept twice",
                    a.name
                )));
            }
        }
        for name in self.fixed.keys() {
            if !seen.insert(name.as_str()) {
                return Err(ExploreError::InvalidRegion(format!(
                    "{name} both swept and fixed"
                )));
            }
        }
        Ok(())
    }

    /// Checks that the region binds exactly the SUT's dimensions.
    pub fn check_against(&self, d: &SutDescriptor) -> Result<(), ExploreError> {
        self.validate()?;
        let names: Vec<&str> = d.dim_names().iter().map(String::as_str).collect();
        for n in self
            .sweep
            .iter()
            .map(|a| a.name.as_str())
            .chain(self.fixed.keys().map(String::as_str))
        {
            if !names.contains(&n) {
                return Err(ExploreError::InvalidRegion(format!(
                    "{:?} has no dimension {n:?}",
                    d.id
                )));
            }
        }
        for n in &names {
            if !self.sweep.iter().any(|a| a.name == *n) && !self.fixed.contains_key(*n) {
                return Err(ExploreError::InvalidRegion(format!(
                    "dimension {n:?} is neither swept nor fixed"
                )));
            }
        }
        Ok(())
    }
}

/// Cell layout of a region against one SUT's dimension order.
struct Lattice<'r> {
    region: &'r Region,
    /// Linear-index stride of each swept axis, indexed like `region.sweep`.
    radix: Vec<u64>,
    /// Position of each SUT dimension: `Ok(sweep index)` or `Err(fixed value)`.
    slots: Vec<Result<usize, i64>>,
    total: u64,
}

impl<'r> Lattice<'r> {
    /// The caller has checked the cell count against a `u64` budget.
    fn new(region: &'r Region, d: &SutDescriptor) -> Self {
        let slots: Vec<Result<usize, i64>> = d
            .dim_names()
            .iter()
            .map(|n| match region.sweep.iter().position(|a| &a.name == n) {
                Some(i) => Ok(i),
                None => Err(region.fixed[n]),
            })
            .collect();
        let mut radix = vec![0u64; region.sweep.len()];
        let mut acc = 1u64;
        // last SUT dimension varies fastest
        for &i in slots.iter().filter_map(|s| s.as_ref().ok()).rev() {
            radix[i] = acc;
            acc *= region.sweep[i].cells() as u64;
        }
        Lattice {
            region,
            radix,
            slots,
            total: acc,
        }
    }

    fn axis_index(&self, cell: u64, axis: usize) -> u64 {
        (cell / self.radix[axis]) % self.region.sweep[axis].cells() as u64
    }

    fn coords(&self, cell: u64) -> Vec<i64> {
        self.slots
            .iter()
            .map(|s| match *s {
                Ok(i) => self.region.sweep[i].value(self.axis_index(cell, i)),
                Err(v) => v,
            })
            .collect()
    }

    fn cell_of(&self, x: &InputPoint) -> Option<u64> {
        let mut cell = 0;
        for (slot, &v) in self.slots.iter().zip(x.coords()) {
            match *slot {
                Ok(i) => cell += self.region.sweep[i].index_of(v)? * self.radix[i],
                Err(f) if f != v => return None,
                Err(_) => {}
            }
        }
        Some(cell)
    }

    /// `(a, b, axis)` in axis-major order, cells ascending within an axis.
    fn wall_pairs(&self) -> Vec<(u64, u64, usize)> {
        let mut out = Vec::new();
        for (axis, a) in self.region.sweep.iter().enumerate() {
            let n = a.cells() as u64;
            for cell in 0..self.total {
                if self.axis_index(cell, axis) + 1 < n {
                    out.push((cell, cell + self.radix[axis], axis));
                }
            }
        }
        out
    }
}

fn sig9<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig9(*v))
}

fn sig9_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => sig9(v, s),
        None => s.serialize_none(),
    }
}

/// Rounds to 9 significant decimal digits.
pub fn round_sig9(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Wall {
    pub a: InputPoint,
    pub b: InputPoint,
    pub axis: String,
    #[serde(rename = "d", serialize_with = "sig9")]
    pub boundariness: f64,
    /// `d / stride`, only for walls spanning more than one unit.
    #[serde(
        rename = "dd",
        skip_serializing_if = "Option::is_none",
        serialize_with = "sig9_opt"
    )]
    pub derivative: Option<f64>,
    /// `d / max d` over the grid.
    #[serde(rename = "n", serialize_with = "sig9")]
    pub normalized: f64,
    pub sa: Status,
    pub sb: Status,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridResult {
    pub region: Region,
    pub sut: String,
    pub distance: DistanceFunction,
    pub codec: String,
    pub cells: u64,
    #[serde(serialize_with = "sig9")]
    pub max_d: f64,
    pub walls: Vec<Wall>,
}

/// Computes every wall in `region`. `progress` receives `(done, total)`
/// work units as cells and walls complete.
pub fn compute_walls(
    sut: &dyn Sut,
    region: &Region,
    d_out: DistanceFunction,
    budget: u64,
    progress: Option<&(dyn Fn(u64, u64) + Sync)>,
) -> Result<GridResult, ExploreError> {
    let d = sut.descriptor();
    region.check_against(d)?;
    let required = region.cell_count();
    if required > u128::from(budget) {
        return Err(ExploreError::BudgetExceeded {
            required,
            allowed: budget,
        });
    }
    let lattice = Lattice::new(region, d);
    debug_assert_eq!(u128::from(lattice.total), required);
    let pairs = lattice.wall_pairs();
    let work = lattice.total + pairs.len() as u64;
    let done = std::sync::atomic::AtomicU64::new(0);
    let tick = |n: u64| {
        if let Some(p) = progress {
            let now = done.fetch_add(n, std::sync::atomic::Ordering::Relaxed) + n;
            p(now, work);
        }
    };

    let points: Vec<InputPoint> = (0..lattice.total)
        .map(|c| {
            d.point(lattice.coords(c))
                .expect("lattice matches sut dims")
        })
        .collect();
    let outputs: Vec<SutOutput> = points
        .par_iter()
        .map(|x| {
            let o = sut
                .eval(x)
                .unwrap_or_else(|e| SutOutput::error(format!("engine: {e}")));
            tick(1);
            o
        })
        .collect();

    // Distances per distinct output pair; identical outputs are common.
    let mut unique: HashMap<(&SutOutput, &SutOutput), usize> = HashMap::new();
    let mut keys = Vec::new();
    let slot: Vec<usize> = pairs
        .iter()
        .map(|&(a, b, _)| {
            let k = (&outputs[a as usize], &outputs[b as usize]);
            *unique.entry(k).or_insert_with(|| {
                keys.push(k);
                keys.len() - 1
            })
        })
        .collect();
    let values: Vec<f64> = keys
        .par_iter()
        .map(|(o1, o2)| d_out.between_outputs(o1, o2))
        .collect::<Result<_, _>>()?;
    tick(pairs.len() as u64);

    let max_d = values.iter().copied().fold(0.0, f64::max);
    let walls = pairs
        .iter()
        .zip(slot)
        .map(|(&(a, b, axis), s)| {
            let v = values[s];
            let stride = region.sweep[axis].stride;
            Wall {
                a: points[a as usize].clone(),
                b: points[b as usize].clone(),
                axis: region.sweep[axis].name.clone(),
                boundariness: v,
                derivative: (stride > 1).then(|| v / stride as f64),
                normalized: if max_d > 0.0 { v / max_d } else { 0.0 },
                sa: outputs[a as usize].status,
                sb: outputs[b as usize].status,
            }
        })
        .collect();

    Ok(GridResult {
        region: region.clone(),
        sut: sut.id().to_string(),
        distance: d_out,
        codec: d_out
            .codec()
            .map_or_else(|| "none".to_string(), |c| c.to_string()),
        cells: lattice.total,
        max_d,
        walls,
    })
}

/// The `k` walls with highest boundariness; ties keep grid order.
pub fn top_walls(grid: &GridResult, k: usize) -> Vec<Wall> {
    let mut idx: Vec<usize> = (0..grid.walls.len()).collect();
    idx.sort_by(|&i, &j| {
        grid.walls[j]
            .boundariness
            .total_cmp(&grid.walls[i].boundariness)
    });
    idx.truncate(k);
    idx.into_iter().map(|i| grid.walls[i].clone()).collect()
}

/// A region centred on `focus` with every swept extent divided by `zoom`.
///
/// Strides shrink by the same factor (never below 1) so the cell count
/// stays roughly constant. `zoom == 1` returns the region unchanged.
pub fn refine(region: &Region, focus: &InputPoint, zoom: f64) -> Result<Region, ExploreError> {
    region.validate()?;
    if !(zoom.is_finite() && zoom > 0.0) {
        return Err(ExploreError::InvalidZoom(zoom));
    }
    let outside = || ExploreError::FocusOutside(focus.to_string());
    for (name, &v) in &region.fixed {
        if focus.coord(name).is_some_and(|f| f != v) {
            return Err(outside());
        }
    }
    let mut centres = Vec::with_capacity(region.sweep.len());
    for a in &region.sweep {
        let f = focus.coord(&a.name).ok_or_else(outside)?;
        if f < a.lo || f > a.hi {
            return Err(outside());
        }
        centres.push(f);
    }
    if zoom == 1.0 {
        return Ok(region.clone());
    }
    let clamp = |v: i128| v.clamp(i128::from(i64::MIN), i128::from(i64::MAX)) as i64;
    let sweep = region
        .sweep
        .iter()
        .zip(centres)
        .map(|(a, f)| {
            let extent = (i128::from(a.hi) - i128::from(a.lo)) as f64;
            let new_extent = (extent / zoom).round().clamp(0.0, u64::MAX as f64) as i128;
            let lo = i128::from(f) - new_extent / 2;
            let hi = lo + new_extent;
            let stride = (a.stride as f64 / zoom).round().clamp(1.0, i64::MAX as f64) as i64;
            Axis {
                name: a.name.clone(),
                lo: clamp(lo),
                hi: clamp(hi),
                stride,
            }
        })
        .collect();
    Ok(Region {
        sweep,
        fixed: region.fixed.clone(),
    })
}

impl GridResult {
    pub fn wall_between(&self, a: &InputPoint, b: &InputPoint) -> Option<&Wall> {
        self.walls
            .iter()
            .find(|w| (&w.a == a && &w.b == b) || (&w.a == b && &w.b == a))
    }
}

/// Index of the cell holding `x`, if it lies on the region's lattice.
pub fn cell_index(region: &Region, d: &SutDescriptor, x: &InputPoint) -> Option<u64> {
    region.check_against(d).ok()?;
    Lattice::new(region, d).cell_of(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sut::{ConstSut, JuliaDate, StepSut};

    fn month_day_2019() -> Region {
        Region::new(
            vec![Axis::new("month", 1, 12, 1), Axis::new("day", 1, 32, 1)],
            [("year".to_string(), 2019)],
        )
    }

    #[test]
    fn two_by_two_has_four_walls() {
        let sut = JuliaDate::new();
        let r = Region::new(
            vec![Axis::new("month", 1, 2, 1), Axis::new("day", 1, 2, 1)],
            [("year".to_string(), 2019)],
        );
        let g = compute_walls(
            &sut,
            &r,
            DistanceFunction::default(),
            DEFAULT_CELL_BUDGET,
            None,
        )
        .unwrap();
        assert_eq!(g.cells, 4);
        assert_eq!(g.walls.len(), 4);
        assert_eq!(r.wall_count(), 4);
        // axis-major: both month walls first
        assert!(g.walls[..2].iter().all(|w| w.axis == "month"));
        assert_eq!(g.walls[0].a.coords(), &[2019, 1, 1]);
        assert_eq!(g.walls[0].b.coords(), &[2019, 2, 1]);
        assert_eq!(g.walls[1].a.coords(), &[2019, 1, 2]);
        assert_eq!(g.walls[2].a.coords(), &[2019, 1, 1]);
        assert_eq!(g.walls[2].b.coords(), &[2019, 1, 2]);
    }

    #[test]
    fn constant_sut_walls_are_equal() {
        let sut = ConstSut::new();
        let r = Region::new(vec![Axis::new("x", -5, 5, 1)], []);
        let g = compute_walls(&sut, &r, DistanceFunction::default(), 100, None).unwrap();
        let o = SutOutput::ok("x");
        let v = DistanceFunction::default().between_outputs(&o, &o).unwrap();
        assert!(g
            .walls
            .iter()
            .all(|w| w.boundariness == v && w.normalized == 1.0));
        let top = top_walls(&g, 1);
        assert_eq!(top[0], g.walls[0]);
        assert_eq!(top_walls(&g, 1000), g.walls);
    }

    #[test]
    fn top_wall_is_on_the_month_end_frontier() {
        let sut = JuliaDate::new();
        let g = compute_walls(
            &sut,
            &month_day_2019(),
            DistanceFunction::default(),
            DEFAULT_CELL_BUDGET,
            None,
        )
        .unwrap();
        let top = &top_walls(&g, 1)[0];
        assert_ne!(top.sa, top.sb, "{top:?}");
    }

    #[test]
    fn budget_is_enforced() {
        let sut = StepSut::new(0);
        let r = Region::new(vec![Axis::new("x", 0, 1000, 1)], []);
        match compute_walls(&sut, &r, DistanceFunction::default(), 1000, None) {
            Err(ExploreError::BudgetExceeded { required, allowed }) => {
                assert_eq!((required, allowed), (1001, 1000));
            }
            other => panic!("{other:?}"),
        }
        let huge = Region::new(vec![Axis::new("x", i64::MIN, i64::MAX, 1)], []);
        assert!(matches!(
            compute_walls(&sut, &huge, DistanceFunction::default(), 1000, None),
            Err(ExploreError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn region_must_cover_sut_dims() {
        let sut = JuliaDate::new();
        let d = sut.descriptor();
        let missing = Region::new(vec![Axis::new("day", 1, 3, 1)], [("year".to_string(), 1)]);
        assert!(missing.check_against(d).is_err());
        let extra = Region::new(vec![Axis::new("hour", 1, 3, 1)], []);
        assert!(extra.check_against(d).is_err());
        let twice = Region::new(vec![Axis::new("day", 1, 3, 1)], [("day".to_string(), 1)]);
        assert!(twice.validate().is_err());
        let backwards = Region::new(vec![Axis::new("day", 3, 1, 1)], []);
        assert!(backwards.validate().is_err());
        let zero = Region::new(vec![Axis::new("day", 1, 3, 0)], []);
        assert!(zero.validate().is_err());
    }

    #[test]
    fn strided_walls_carry_the_derivative() {
        let sut = StepSut::new(5);
        let r = Region::new(vec![Axis::new("x", 0, 10, 2)], []);
        let g = compute_walls(&sut, &r, DistanceFunction::Edit, 100, None).unwrap();
        assert_eq!(g.cells, 6);
        let w = g.walls.iter().find(|w| w.boundariness > 0.0).unwrap();
        assert_eq!(w.a.coords(), &[4]);
        assert_eq!(w.derivative, Some(w.boundariness / 2.0));
    }

    #[test]
    fn progress_reaches_total() {
        let sut = ConstSut::new();
        let r = Region::new(vec![Axis::new("x", 0, 9, 1)], []);
        let last = std::sync::Mutex::new((0, 0));
        let cb = |d: u64, t: u64| {
            let mut l = last.lock().unwrap();
            if d > l.0 {
                *l = (d, t);
            }
        };
        compute_walls(&sut, &r, DistanceFunction::Edit, 100, Some(&cb)).unwrap();
        assert_eq!(*last.lock().unwrap(), (19, 19));
    }

    #[test]
    fn refine_examples() {
        let sut = JuliaDate::new();
        let d = sut.descriptor();
        let r = month_day_2019();
        let focus = d.point(vec![2019, 6, 8]).unwrap();
        let z = refine(&r, &focus, 2.0).unwrap();
        let day = z.sweep.iter().find(|a| a.name == "day").unwrap();
        assert_eq!((day.lo, day.hi, day.stride), (0, 16, 1));
        assert_eq!(z.fixed, r.fixed);

        assert_eq!(refine(&r, &focus, 1.0).unwrap(), r);

        let out = refine(&r, &focus, 0.5).unwrap();
        let day = out.sweep.iter().find(|a| a.name == "day").unwrap();
        assert_eq!((day.lo, day.hi, day.stride), (-23, 39, 2));

        let wide = Region::new(vec![Axis::new("x", i64::MIN + 10, i64::MIN + 20, 1)], []);
        let p = StepSut::new(0)
            .descriptor()
            .point(vec![i64::MIN + 10])
            .unwrap();
        let z = refine(&wide, &p, 0.25).unwrap();
        assert_eq!(z.sweep[0].lo, i64::MIN);
        assert_eq!(z.sweep[0].hi, i64::MIN + 30);
    }

    #[test]
    fn refine_rejects_outside_focus() {
        let d = JuliaDate::new();
        let r = month_day_2019();
        let p = d.descriptor().point(vec![2020, 6, 8]).unwrap();
        assert!(matches!(
            refine(&r, &p, 2.0),
            Err(ExploreError::FocusOutside(_))
        ));
        let p = d.descriptor().point(vec![2019, 6, 40]).unwrap();
        assert!(refine(&r, &p, 2.0).is_err());
        let p = d.descriptor().point(vec![2019, 6, 8]).unwrap();
        assert!(matches!(
            refine(&r, &p, 0.0),
            Err(ExploreError::InvalidZoom(_))
        ));
    }

    #[test]
    fn sig9_rounding() {
        assert_eq!(round_sig9(0.123456789123), 0.123456789);
        assert_eq!(round_sig9(1.0), 1.0);
        assert_eq!(round_sig9(0.0), 0.0);
        assert_eq!(
            serde_json::to_string(&round_sig9(2.0 / 3.0)).unwrap(),
            "0.666666667"
        );
    }

    #[test]
    fn cell_index_matches_lattice() {
        let sut = JuliaDate::new();
        let d = sut.descriptor();
        let r = month_day_2019();
        assert_eq!(
            cell_index(&r, d, &d.point(vec![2019, 1, 1]).unwrap()),
            Some(0)
        );
        assert_eq!(
            cell_index(&r, d, &d.point(vec![2019, 1, 2]).unwrap()),
            Some(1)
        );
        assert_eq!(
            cell_index(&r, d, &d.point(vec![2019, 2, 1]).unwrap()),
            Some(32)
        );
        assert_eq!(cell_index(&r, d, &d.point(vec![2018, 2, 1]).unwrap()), None);
    }
}
