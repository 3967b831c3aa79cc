//! Re-implementation of Julia 1.1.1 `Date(y, m, d)` construction.
//!
//! Construction validates the raw fields, converts them to a rata die day
//! count and renders the date back from that count. Both conversions use
//! wrapping 64-bit arithmetic with floor division, exactly like the original.
//! Far outside the documented `typemin(Date)..typemax(Date)` range the
//! intermediate products overflow and the rendered date no longer matches
//! the fields that went in, even though construction reports success.

use super::{
    DimSpec, Direction, Entrance, InputPoint, StepError, StepperKind, Sut, SutDescriptor, SutError,
    SutOutput,
};

pub const TYPEMAX: (i64, i64, i64) = (252_522_163_911_149, 12, 31);
pub const TYPEMIN: (i64, i64, i64) = (-252_522_163_911_150, 1, 1);

const SHIFTED_MONTH_DAYS: [i64; 12] = [306, 337, 0, 31, 61, 92, 122, 153, 184, 214, 245, 275];
const DAYS_IN_MONTH: [i64; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

#[inline]
fn fld(a: i64, b: i64) -> i64 {
    debug_assert!(b > 0);
    a.div_euclid(b)
}

pub fn is_leap_year(y: i64) -> bool {
    y.rem_euclid(4) == 0 && (y.rem_euclid(100) != 0 || y.rem_euclid(400) == 0)
}

/// Days in month `m` of year `y`, or `None` if `m` is not in `1..=12`.
pub fn days_in_month(y: i64, m: i64) -> Option<i64> {
    if !(1..=12).contains(&m) {
        return None;
    }
    Some(DAYS_IN_MONTH[(m - 1) as usize] + i64::from(m == 2 && is_leap_year(y)))
}

/// Rata die day count (day 1 is 0001-01-01). Every operation wraps.
///
/// `d` is not validated. Returns `None` if `m` is not in `1..=12`.
pub fn totaldays(y: i64, m: i64, d: i64) -> Option<i64> {
    if !(1..=12).contains(&m) {
        return None;
    }
    let z = if m > 2 { y } else { y.wrapping_sub(1) };
    Some(
        d.wrapping_add(SHIFTED_MONTH_DAYS[(m - 1) as usize])
            .wrapping_add(z.wrapping_mul(365))
            .wrapping_add(fld(z, 4))
            .wrapping_sub(fld(z, 100))
            .wrapping_add(fld(z, 400))
            .wrapping_sub(306),
    )
}

/// Inverse of [`totaldays`], with the same wrapping semantics.
pub fn rata_to_ymd(days: i64) -> (i64, i64, i64) {
    let z = days.wrapping_add(306);
    let h = z.wrapping_mul(100).wrapping_sub(25);
    let a = fld(h, 3_652_425);
    let b = a.wrapping_sub(fld(a, 4));
    let y = fld(b.wrapping_mul(100).wrapping_add(h), 36_525);
    let c = b
        .wrapping_add(z)
        .wrapping_sub(y.wrapping_mul(365))
        .wrapping_sub(fld(y, 4));
    // Truncating division here, as in the original.
    let m = c.wrapping_mul(5).wrapping_add(456).wrapping_div(153);
    let d = c.wrapping_sub(m.wrapping_mul(153).wrapping_sub(457).wrapping_div(5));
    if m > 12 {
        (y.wrapping_add(1), m - 12, d)
    } else {
        (y, m, d)
    }
}

fn pad2(v: i64) -> String {
    if v < 0 {
        format!("-{:02}", v.unsigned_abs())
    } else {
        format!("{v:02}")
    }
}

/// `y-mm-dd`, where month and day carry their sign in front of the padding.
pub fn render_date(y: i64, m: i64, d: i64) -> String {
    format!("{y}-{}-{}", pad2(m), pad2(d))
}

/// `Date(y, m, d)` on raw fields.
pub fn construct(y: i64, m: i64, d: i64) -> SutOutput {
    let Some(n) = days_in_month(y, m) else {
        return SutOutput::error(format!("Month: {m} out of range (1:12)"));
    };
    if !(1..=n).contains(&d) {
        return SutOutput::error(format!("Day: {d} out of range (1:{n})"));
    }
    // month validated above
    let days = totaldays(y, m, d).unwrap_or_default();
    let (ry, rm, rd) = rata_to_ymd(days);
    SutOutput::ok(render_date(ry, rm, rd))
}

fn ymd(x: &InputPoint) -> Result<(i64, i64, i64), StepError> {
    match x.coords() {
        &[y, m, d] => Ok((y, m, d)),
        other => Err(StepError(format!(
            "expected [year, month, day], got {other:?}"
        ))),
    }
}

/// Next or previous calendar day on the input fields.
///
/// Stepping is done on the fields themselves rather than through the day
/// count, so the walk keeps going through the region where the day-count
/// round trip overflows.
pub fn date_step(x: &InputPoint, dir: Direction) -> Result<InputPoint, StepError> {
    let (y, m, d) = ymd(x)?;
    let n = days_in_month(y, m).ok_or_else(|| StepError(format!("month {m} not in 1..12")))?;
    if !(1..=n).contains(&d) {
        return Err(StepError(format!("day {d} not in 1..{n}")));
    }
    let next = match dir {
        Direction::Next if d < n => Some((y, m, d + 1)),
        Direction::Next if m < 12 => Some((y, m + 1, 1)),
        Direction::Next => y.checked_add(1).map(|y| (y, 1, 1)),
        Direction::Previous if d > 1 => Some((y, m, d - 1)),
        Direction::Previous if m > 1 => days_in_month(y, m - 1).map(|n| (y, m - 1, n)),
        Direction::Previous => y.checked_sub(1).map(|y| (y, 12, 31)),
    };
    let (y, m, d) = next.ok_or_else(|| StepError(format!("year {y} at the i64 limit")))?;
    Ok(x.with_coords(vec![y, m, d]))
}

/// The Julia `Date` constructor as a SUT over `[year, month, day]`.
pub struct JuliaDate {
    descriptor: SutDescriptor,
}

impl JuliaDate {
    pub const ID: &'static str = "julia-date";

    pub fn new() -> Self {
        let mut descriptor = SutDescriptor::new(
            Self::ID,
            vec![
                DimSpec {
                    name: "year".into(),
                    lo: Some(TYPEMIN.0),
                    hi: Some(TYPEMAX.0),
                },
                DimSpec {
                    name: "month".into(),
                    lo: Some(1),
                    hi: Some(12),
                },
                DimSpec {
                    name: "day".into(),
                    lo: Some(1),
                    hi: Some(31),
                },
            ],
            StepperKind::CalendarDay,
        );
        let p = |(y, m, d): (i64, i64, i64)| descriptor.point(vec![y, m, d]).expect("3 dims");
        let typemax = Entrance::from_start(
            "typemax",
            p(TYPEMAX),
            StepperKind::CalendarDay,
            Direction::Next,
        )
        .expect("typemax has a successor");
        let typemin = Entrance::from_start(
            "typemin",
            p(TYPEMIN),
            StepperKind::CalendarDay,
            Direction::Previous,
        )
        .expect("typemin has a predecessor");
        descriptor.entrances = vec![typemax, typemin];
        JuliaDate { descriptor }
    }
}

impl Default for JuliaDate {
    fn default() -> Self {
        Self::new()
    }
}

impl Sut for JuliaDate {
    fn descriptor(&self) -> &SutDescriptor {
        &self.descriptor
    }

    fn eval(&self, x: &InputPoint) -> Result<SutOutput, SutError> {
        self.descriptor.check_dims(x)?;
        let c = x.coords();
        Ok(construct(c[0], c[1], c[2]))
    }
}
