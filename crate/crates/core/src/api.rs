//! Versioned request/response payloads shared by the CLI and the HTTP service.
//!
//! Both front ends call [`Engine`] and serialize with [`to_json`], so the same
//! request produces the same bytes on either path.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{self, BdReport, DetectError, InputDistance, OutlierRule, ScanTrace};
use crate::distance::{Codec, CodecKind, DistanceFunction};
use crate::explore::{self, ExploreError, GridResult, Region};
use crate::sut::{Direction, Entrance, InputPoint, Sut, SutError, SutRegistry};

pub const SCHEMA_VERSION: u32 = 1;
pub const BUDGET_ENV: &str = "BOUNDEX_BUDGET";

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown sut {0:?}")]
    UnknownSut(String),
    #[error("{0}")]
    UnknownEntrance(String),
    #[error("region needs {required} cells, budget allows {allowed}")]
    BudgetExceeded { required: u128, allowed: u64 },
    #[error("{0}")]
    Engine(String),
}

impl ApiError {
    pub fn kind(&self) -> &'static str {
        match self {
            ApiError::BadRequest(_) => "bad_request",
            ApiError::UnknownSut(_) => "unknown_sut",
            ApiError::UnknownEntrance(_) => "unknown_entrance",
            ApiError::BudgetExceeded { .. } => "budget_exceeded",
            ApiError::Engine(_) => "engine",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            ApiError::BadRequest(_) => 400,
            ApiError::UnknownSut(_) | ApiError::UnknownEntrance(_) => 404,
            ApiError::BudgetExceeded { .. } => 422,
            ApiError::Engine(_) => 500,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            ApiError::BadRequest(_) | ApiError::UnknownSut(_) | ApiError::UnknownEntrance(_) => 2,
            ApiError::BudgetExceeded { .. } => 5,
            ApiError::Engine(_) => 1,
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            message: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            required: Option<u128>,
            #[serde(skip_serializing_if = "Option::is_none")]
            allowed: Option<u64>,
        }
        let (required, allowed) = match self {
            ApiError::BudgetExceeded { required, allowed } => (Some(*required), Some(*allowed)),
            _ => (None, None),
        };
        #[derive(Serialize)]
        struct Envelope<'a> {
            v: u32,
            error: Body<'a>,
        }
        to_json(&Envelope {
            v: SCHEMA_VERSION,
            error: Body {
                kind: self.kind(),
                message: self.to_string(),
                required,
                allowed,
            },
        })
    }
}

impl From<SutError> for ApiError {
    fn from(e: SutError) -> Self {
        match e {
            SutError::UnknownSut(id) => ApiError::UnknownSut(id),
            e @ SutError::UnknownEntrance { .. } => ApiError::UnknownEntrance(e.to_string()),
            e @ (SutError::DimMismatch { .. }
            | SutError::InvalidPoint(_)
            | SutError::InvalidEntrance(_)) => ApiError::BadRequest(e.to_string()),
            e @ (SutError::Protocol(_) | SutError::Io(_)) => ApiError::Engine(e.to_string()),
        }
    }
}

impl From<DetectError> for ApiError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::Sut(e) => e.into(),
            e @ (DetectError::InvalidRule(_) | DetectError::InvalidParams(_)) => {
                ApiError::BadRequest(e.to_string())
            }
            e @ DetectError::Distance(_) => ApiError::Engine(e.to_string()),
        }
    }
}

impl From<ExploreError> for ApiError {
    fn from(e: ExploreError) -> Self {
        match e {
            ExploreError::BudgetExceeded { required, allowed } => {
                ApiError::BudgetExceeded { required, allowed }
            }
            e @ ExploreError::Distance(_) => ApiError::Engine(e.to_string()),
            e => ApiError::BadRequest(e.to_string()),
        }
    }
}

/// Compact JSON plus a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("payload serializes");
    s.push('\n');
    s
}

pub fn parse<'a, T: Deserialize<'a> + Versioned>(body: &'a str) -> Result<T, ApiError> {
    let req: T = serde_json::from_str(body)
        .map_err(|e| ApiError::BadRequest(format!("malformed request: {e}")))?;
    if req.version() != SCHEMA_VERSION {
        return Err(ApiError::BadRequest(format!(
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            req.version()
        )));
    }
    Ok(req)
}

pub trait Versioned {
    fn version(&self) -> u32;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Ncd,
    Abs,
    Edit,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sut: String,
    #[serde(default = "default_distance")]
    pub distance: DistanceKind,
    #[serde(default = "default_codec")]
    pub codec: CodecKind,
    #[serde(default = "default_level")]
    pub level: u32,
    #[serde(default)]
    pub rule: OutlierRule,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

fn default_distance() -> DistanceKind {
    DistanceKind::Ncd
}
fn default_codec() -> CodecKind {
    Codec::default().kind
}
fn default_level() -> u32 {
    Codec::default().level
}
fn default_max_steps() -> usize {
    detect::DEFAULT_MAX_STEPS
}

impl RunConfig {
    pub fn new(sut: impl Into<String>) -> Self {
        RunConfig {
            sut: sut.into(),
            distance: default_distance(),
            codec: default_codec(),
            level: default_level(),
            rule: OutlierRule::default(),
            max_steps: default_max_steps(),
            output: None,
        }
    }

    pub fn distance_function(&self) -> Result<DistanceFunction, ApiError> {
        Ok(match self.distance {
            DistanceKind::Ncd => {
                let id = format!(
                    "{}-{}",
                    Codec {
                        kind: self.codec,
                        level: 0
                    }
                    .name(),
                    self.level
                );
                DistanceFunction::Ncd(
                    id.parse()
                        .map_err(|e| ApiError::BadRequest(format!("{e}")))?,
                )
            }
            DistanceKind::Abs => DistanceFunction::AbsoluteNumeric,
            DistanceKind::Edit => DistanceFunction::Edit,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EntranceSpec {
    Named(String),
    Explicit {
        from: Vec<i64>,
        direction: Direction,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntranceInfo {
    pub name: String,
    pub direction: Direction,
    pub e1: InputPoint,
    pub e2: InputPoint,
}

impl From<&Entrance> for EntranceInfo {
    fn from(e: &Entrance) -> Self {
        EntranceInfo {
            name: e.name.clone(),
            direction: e.direction,
            e1: e.e1.clone(),
            e2: e.e2.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectRequest {
    pub v: u32,
    pub config: RunConfig,
    pub entrance: EntranceSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRequest {
    pub v: u32,
    pub config: RunConfig,
    pub entrance: EntranceSpec,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRequest {
    pub v: u32,
    pub config: RunConfig,
    pub region: Region,
    /// Ask the HTTP service for progress lines before the result.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub stream: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineRequest {
    pub v: u32,
    pub region: Region,
    pub focus: BTreeMap<String, i64>,
    pub zoom: f64,
}

macro_rules! versioned {
    ($($t:ty),*) => {$(
        impl Versioned for $t {
            fn version(&self) -> u32 { self.v }
        }
    )*};
}
versioned!(DetectRequest, ScanRequest, GridRequest, RefineRequest);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectResponse {
    pub v: u32,
    pub config: RunConfig,
    pub entrance: EntranceInfo,
    #[serde(flatten)]
    pub report: BdReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanResponse {
    pub v: u32,
    pub config: RunConfig,
    pub entrance: EntranceInfo,
    #[serde(flatten)]
    pub trace: ScanTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridResponse {
    pub v: u32,
    pub config: RunConfig,
    #[serde(flatten)]
    pub grid: GridResult,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefineResponse {
    pub v: u32,
    pub region: Region,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SutInfo {
    pub id: String,
    pub dims: Vec<String>,
    pub entrances: Vec<String>,
}

/// Stateless request handling over a SUT registry and a cell budget.
#[derive(Clone)]
pub struct Engine {
    registry: SutRegistry,
    budget: u64,
}

impl Engine {
    pub fn new(registry: SutRegistry, budget: u64) -> Self {
        Engine { registry, budget }
    }

    /// Cell budget from `BOUNDEX_BUDGET`, falling back to the default.
    pub fn budget_from_env() -> Result<u64, ApiError> {
        match std::env::var(BUDGET_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                ApiError::BadRequest(format!("{BUDGET_ENV}={v:?} is not a cell count"))
            }),
            Err(_) => Ok(explore::DEFAULT_CELL_BUDGET),
        }
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn registry(&self) -> &SutRegistry {
        &self.registry
    }

    pub fn suts(&self) -> Vec<SutInfo> {
        self.registry
            .listed()
            .iter()
            .map(|s| {
                let d = s.descriptor();
                SutInfo {
                    id: d.id.clone(),
                    dims: d.dim_names().to_vec(),
                    entrances: d.entrances.iter().map(|e| e.name.clone()).collect(),
                }
            })
            .collect()
    }

    fn entrance(&self, sut: &dyn Sut, spec: &EntranceSpec) -> Result<Entrance, ApiError> {
        let d = sut.descriptor();
        match spec {
            EntranceSpec::Named(name) => Ok(d.entrance(name)?.clone()),
            EntranceSpec::Explicit { from, direction } => {
                let start = d.point(from.clone())?;
                Ok(Entrance::from_start(
                    "explicit",
                    start,
                    d.stepper.clone(),
                    *direction,
                )?)
            }
        }
    }

    pub fn detect(&self, req: &DetectRequest) -> Result<DetectResponse, ApiError> {
        let sut = self.registry.resolve(&req.config.sut)?;
        let d_out = req.config.distance_function()?;
        let entrance = self.entrance(sut.as_ref(), &req.entrance)?;
        let stepper = sut.descriptor().stepper(entrance.direction);
        let report = detect::bd_search(
            sut.as_ref(),
            &stepper,
            d_out,
            &entrance,
            &req.config.rule,
            req.config.max_steps,
        )?;
        Ok(DetectResponse {
            v: SCHEMA_VERSION,
            config: req.config.clone(),
            entrance: (&entrance).into(),
            report,
        })
    }

    pub fn scan(&self, req: &ScanRequest) -> Result<ScanResponse, ApiError> {
        let sut = self.registry.resolve(&req.config.sut)?;
        let d_out = req.config.distance_function()?;
        let entrance = self.entrance(sut.as_ref(), &req.entrance)?;
        let stepper = sut.descriptor().stepper(entrance.direction);
        let trace = detect::scan(
            sut.as_ref(),
            &stepper,
            d_out,
            InputDistance::Steps,
            &entrance,
            req.steps,
        )?;
        Ok(ScanResponse {
            v: SCHEMA_VERSION,
            config: req.config.clone(),
            entrance: (&entrance).into(),
            trace,
        })
    }

    pub fn grid(
        &self,
        req: &GridRequest,
        progress: Option<&(dyn Fn(u64, u64) + Sync)>,
    ) -> Result<GridResponse, ApiError> {
        let sut = self.registry.resolve(&req.config.sut)?;
        let d_out = req.config.distance_function()?;
        let grid = explore::compute_walls(sut.as_ref(), &req.region, d_out, self.budget, progress)?;
        Ok(GridResponse {
            v: SCHEMA_VERSION,
            config: req.config.clone(),
            grid,
        })
    }

    pub fn refine(&self, req: &RefineRequest) -> Result<RefineResponse, ApiError> {
        if req.focus.is_empty() {
            return Err(ApiError::BadRequest("focus is empty".into()));
        }
        let focus = InputPoint::new(
            req.focus.keys().cloned(),
            req.focus.values().copied().collect(),
        )?;
        let region = explore::refine(&req.region, &focus, req.zoom)?;
        Ok(RefineResponse {
            v: SCHEMA_VERSION,
            region,
        })
    }
}
