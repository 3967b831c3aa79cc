use std::sync::Arc;

use super::{ConstSut, ExternalConfig, ExternalSut, JuliaDate, StepSut, Sut, SutError};

/// Resolves SUT ids to instances.
///
/// Built-ins: `julia-date`, `const`, and `step<N>` for any integer threshold
/// `N` (e.g. `step100`, `step-5`). One external SUT may be registered.
#[derive(Clone)]
pub struct SutRegistry {
    date: Arc<JuliaDate>,
    constant: Arc<ConstSut>,
    external: Option<Arc<ExternalSut>>,
}

impl Default for SutRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl SutRegistry {
    pub fn new() -> Self {
        SutRegistry {
            date: Arc::new(JuliaDate::new()),
            constant: Arc::new(ConstSut::new()),
            external: None,
        }
    }

    pub fn with_external(mut self, cfg: ExternalConfig) -> Result<Self, SutError> {
        self.external = Some(Arc::new(ExternalSut::new(cfg)?));
        Ok(self)
    }

    pub fn resolve(&self, id: &str) -> Result<Arc<dyn Sut>, SutError> {
        if id == JuliaDate::ID {
            return Ok(self.date.clone());
        }
        if id == ConstSut::ID {
            return Ok(self.constant.clone());
        }
        if let Some(ext) = &self.external {
            if ext.id() == id {
                return Ok(ext.clone());
            }
        }
        if let Some(t) = id.strip_prefix("step").and_then(|t| t.parse::<i64>().ok()) {
            return Ok(Arc::new(StepSut::new(t)));
        }
        Err(SutError::UnknownSut(id.to_string()))
    }

    /// SUTs listed for discovery, in a fixed order.
    pub fn listed(&self) -> Vec<Arc<dyn Sut>> {
        let mut v: Vec<Arc<dyn Sut>> = vec![
            self.date.clone(),
            Arc::new(StepSut::new(100)),
            self.constant.clone(),
        ];
        if let Some(ext) = &self.external {
            v.push(ext.clone());
        }
        v
    }
}
