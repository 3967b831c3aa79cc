//! Synthetic SUTs with known behaviour.

use super::{
    DimSpec, Direction, Entrance, InputPoint, StepperKind, Sut, SutDescriptor, SutError, SutOutput,
};

fn one_dim(id: String) -> SutDescriptor {
    let mut d = SutDescriptor::new(
        id,
        vec![DimSpec::unbounded("x")],
        StepperKind::Integer { axis: 0 },
    );
    let origin = d.point(vec![0]).expect("1 dim");
    d.entrances = vec![Entrance::from_start(
        "origin",
        origin,
        StepperKind::Integer { axis: 0 },
        Direction::Next,
    )
    .expect("0 has a successor")];
    d
}

/// `low` below the threshold, `high` at or above it.
pub struct StepSut {
    threshold: i64,
    descriptor: SutDescriptor,
}

impl StepSut {
    pub fn new(threshold: i64) -> Self {
        StepSut {
            threshold,
            descriptor: one_dim(format!("step{threshold}")),
        }
    }

    pub fn threshold(&self) -> i64 {
        self.threshold
    }

    pub fn eval_coord(&self, x: i64) -> SutOutput {
        SutOutput::ok(if x < self.threshold { "low" } else { "high" })
    }
}

impl Sut for StepSut {
    fn descriptor(&self) -> &SutDescriptor {
        &self.descriptor
    }

    fn eval(&self, x: &InputPoint) -> Result<SutOutput, SutError> {
        self.descriptor.check_dims(x)?;
        Ok(self.eval_coord(x.coords()[0]))
    }
}

/// Always `x`.
pub struct ConstSut {
    descriptor: SutDescriptor,
}

impl ConstSut {
    pub const ID: &'static str = "const";

    pub fn new() -> Self {
        ConstSut {
            descriptor: one_dim(Self::ID.to_string()),
        }
    }
}

impl Default for ConstSut {
    fn default() -> Self {
        Self::new()
    }
}

impl Sut for ConstSut {
    fn descriptor(&self) -> &SutDescriptor {
        &self.descriptor
    }

    fn eval(&self, x: &InputPoint) -> Result<SutOutput, SutError> {
        self.descriptor.check_dims(x)?;
        Ok(SutOutput::ok("x"))
    }
}
