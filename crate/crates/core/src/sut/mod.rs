//! Software-under-test abstraction and the built-in SUTs.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod date;
pub mod external;
mod registry;
mod step;

pub use date::JuliaDate;
pub use external::{ExternalConfig, ExternalSut};
pub use registry::SutRegistry;
pub use step::{ConstSut, StepSut};

#[derive(Debug, Error)]
pub enum SutError {
    #[error("unknown sut {0:?}")]
    UnknownSut(String),
    #[error("unknown entrance {entrance:?} for sut {sut:?}")]
    UnknownEntrance { sut: String, entrance: String },
    #[error("input has dims {got:?}, sut expects {expected:?}")]
    DimMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("invalid input point: {0}")]
    InvalidPoint(String),
    #[error("invalid entrance: {0}")]
    InvalidEntrance(String),
    #[error("adapter protocol error: {0}")]
    Protocol(String),
    #[error("adapter i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("stepper left representable range: {0}")]
pub struct StepError(pub String);

/// One SUT input: named signed 64-bit coordinates.
///
/// Serializes as the bare coordinate array.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct InputPoint {
    dims: Arc<[String]>,
    coords: Vec<i64>,
}

impl InputPoint {
    pub fn new<S: Into<String>>(
        dims: impl IntoIterator<Item = S>,
        coords: Vec<i64>,
    ) -> Result<Self, SutError> {
        let dims: Arc<[String]> = dims.into_iter().map(Into::into).collect();
        Self::with_dims(dims, coords)
    }

    pub fn with_dims(dims: Arc<[String]>, coords: Vec<i64>) -> Result<Self, SutError> {
        if dims.is_empty() || dims.len() != coords.len() {
            return Err(SutError::InvalidPoint(format!(
                "{} dims for {} coords",
                dims.len(),
                coords.len()
            )));
        }
        Ok(InputPoint { dims, coords })
    }

    pub fn dims(&self) -> &[String] {
        &self.dims
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn coord(&self, dim: &str) -> Option<i64> {
        self.dims
            .iter()
            .position(|d| d == dim)
            .map(|i| self.coords[i])
    }

    /// Same dims, new coordinates.
    pub fn with_coords(&self, coords: Vec<i64>) -> Self {
        debug_assert_eq!(coords.len(), self.dims.len());
        InputPoint {
            dims: self.dims.clone(),
            coords,
        }
    }
}

impl fmt::Debug for InputPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords)
    }
}

impl fmt::Display for InputPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

impl Serialize for InputPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.coords.serialize(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Error => "error",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SutOutput {
    pub status: Status,
    pub text: String,
}

impl SutOutput {
    pub fn ok(text: impl Into<String>) -> Self {
        SutOutput {
            status: Status::Ok,
            text: text.into(),
        }
    }

    pub fn error(text: impl Into<String>) -> Self {
        SutOutput {
            status: Status::Error,
            text: text.into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Next,
    Previous,
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "next" => Ok(Direction::Next),
            "previous" | "prev" => Ok(Direction::Previous),
            _ => Err(format!(
                "unknown direction {s:?} (expected next or previous)"
            )),
        }
    }
}

/// How a SUT's inputs are walked one unit at a time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepperKind {
    /// Proleptic Gregorian day stepping on `[year, month, day]`.
    CalendarDay,
    /// `±1` on one coordinate.
    Integer { axis: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stepper {
    pub kind: StepperKind,
    pub direction: Direction,
}

impl Stepper {
    pub fn new(kind: StepperKind, direction: Direction) -> Self {
        Stepper { kind, direction }
    }

    pub fn id(&self) -> String {
        let kind = match &self.kind {
            StepperKind::CalendarDay => "day".to_string(),
            StepperKind::Integer { axis } => format!("int{axis}"),
        };
        let dir = match self.direction {
            Direction::Next => "next",
            Direction::Previous => "previous",
        };
        format!("{kind}-{dir}")
    }

    pub fn reversed(&self) -> Self {
        let direction = match self.direction {
            Direction::Next => Direction::Previous,
            Direction::Previous => Direction::Next,
        };
        Stepper {
            kind: self.kind.clone(),
            direction,
        }
    }

    pub fn apply(&self, x: &InputPoint) -> Result<InputPoint, StepError> {
        match self.kind {
            StepperKind::CalendarDay => date::date_step(x, self.direction),
            StepperKind::Integer { axis } => {
                let mut coords = x.coords().to_vec();
                let c = coords
                    .get_mut(axis)
                    .ok_or_else(|| StepError(format!("axis {axis} out of bounds")))?;
                *c = match self.direction {
                    Direction::Next => c.checked_add(1),
                    Direction::Previous => c.checked_sub(1),
                }
                .ok_or_else(|| StepError(format!("coordinate {c} at the i64 limit")))?;
                Ok(x.with_coords(coords))
            }
        }
    }
}

/// A pair of adjacent inputs expected to straddle a boundary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entrance {
    pub name: String,
    pub e1: InputPoint,
    pub e2: InputPoint,
    pub direction: Direction,
}

impl Entrance {
    /// Builds the entrance whose second point is the stepper successor of `e1`.
    pub fn from_start(
        name: impl Into<String>,
        e1: InputPoint,
        kind: StepperKind,
        direction: Direction,
    ) -> Result<Self, SutError> {
        let e2 = Stepper::new(kind, direction)
            .apply(&e1)
            .map_err(|e| SutError::InvalidEntrance(e.to_string()))?;
        Ok(Entrance {
            name: name.into(),
            e1,
            e2,
            direction,
        })
    }

    pub fn check(&self, kind: &StepperKind) -> Result<(), SutError> {
        let stepped = Stepper::new(kind.clone(), self.direction)
            .apply(&self.e1)
            .map_err(|e| SutError::InvalidEntrance(e.to_string()))?;
        if stepped != self.e2 {
            return Err(SutError::InvalidEntrance(format!(
                "{} is not the successor of {}",
                self.e2, self.e1
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DimSpec {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<i64>,
}

impl DimSpec {
    pub fn unbounded(name: &str) -> Self {
        DimSpec {
            name: name.to_string(),
            lo: None,
            hi: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SutDescriptor {
    pub id: String,
    pub dims: Vec<DimSpec>,
    pub stepper: StepperKind,
    pub entrances: Vec<Entrance>,
    dim_names: Arc<[String]>,
}

impl SutDescriptor {
    pub fn new(id: impl Into<String>, dims: Vec<DimSpec>, stepper: StepperKind) -> Self {
        let dim_names = dims.iter().map(|d| d.name.clone()).collect();
        SutDescriptor {
            id: id.into(),
            dims,
            stepper,
            entrances: Vec::new(),
            dim_names,
        }
    }

    pub fn dim_names(&self) -> &Arc<[String]> {
        &self.dim_names
    }

    pub fn point(&self, coords: Vec<i64>) -> Result<InputPoint, SutError> {
        InputPoint::with_dims(self.dim_names.clone(), coords)
    }

    pub fn entrance(&self, name: &str) -> Result<&Entrance, SutError> {
        self.entrances
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| SutError::UnknownEntrance {
                sut: self.id.clone(),
                entrance: name.to_string(),
            })
    }

    pub fn stepper(&self, direction: Direction) -> Stepper {
        Stepper::new(self.stepper.clone(), direction)
    }

    pub fn check_dims(&self, x: &InputPoint) -> Result<(), SutError> {
        if x.dims() != &*self.dim_names {
            return Err(SutError::DimMismatch {
                expected: self.dim_names.to_vec(),
                got: x.dims().to_vec(),
            });
        }
        Ok(())
    }
}

/// A program under test: a function from an input point to an output.
///
/// `Err` is reserved for engine failures. Behaviour of the SUT itself,
/// including its exceptions and crashes, is an `Ok(SutOutput)`.
pub trait Sut: Send + Sync {
    fn descriptor(&self) -> &SutDescriptor;

    fn eval(&self, x: &InputPoint) -> Result<SutOutput, SutError>;

    fn id(&self) -> &str {
        &self.descriptor().id
    }
}
