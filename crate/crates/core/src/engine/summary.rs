use std::fmt;

use serde::Serialize;

use crate::biabduction::Contract;
use crate::frontend::{FnKind, Function};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Analyzed,
    Failed,
}

/// Where a loop analysis gave up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    ExitForm,
    FirstIteration,
    SpatialChange,
    TransfMap,
    Abstraction,
    ConditionCheck,
    Verification,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::ExitForm => "exit-form",
            Stage::FirstIteration => "first-iteration",
            Stage::SpatialChange => "spatial-change",
            Stage::TransfMap => "transf-map",
            Stage::Abstraction => "abstraction",
            Stage::ConditionCheck => "condition-check",
            Stage::Verification => "verification",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub stage: Option<Stage>,
    pub reason: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(s) => write!(f, "extrapolation: {s}: {}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

/// A proved entailment backing one side condition of an extrapolated loop.
#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub condition: u8,
    pub lhs: String,
    pub rhs: String,
    pub method: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct FunctionSummary {
    pub name: String,
    pub kind: FnKind,
    pub status: Status,
    /// Contracts reported for the function.
    pub contracts: Vec<Contract>,
    /// Contracts applied at call sites. For loops this is the merged
    /// entered/not-entered form.
    #[serde(skip)]
    pub call_contracts: Vec<Contract>,
    pub failure: Option<Failure>,
    pub diagnostics: Vec<String>,
    /// Body analyses performed for a loop.
    pub iterations: Option<usize>,
    pub certificates: Vec<Certificate>,
    /// Loop invariant as (pre, curr), kept for inductiveness checks.
    #[serde(skip)]
    pub invariant: Option<Contract>,
    #[serde(skip)]
    pub trace: Vec<String>,
}

impl FunctionSummary {
    pub fn new(f: &Function) -> FunctionSummary {
        FunctionSummary {
            name: f.name.to_string(),
            kind: f.kind,
            status: Status::Failed,
            contracts: vec![],
            call_contracts: vec![],
            failure: None,
            diagnostics: vec![],
            iterations: None,
            certificates: vec![],
            invariant: None,
            trace: vec![],
        }
    }

    pub fn fail(mut self, stage: Option<Stage>, reason: impl Into<String>) -> FunctionSummary {
        self.status = Status::Failed;
        self.contracts.clear();
        self.call_contracts.clear();
        self.failure = Some(Failure { stage, reason: reason.into() });
        self
    }
}
