//! Implementation library: the target-platform description.
//!
//! A library is a JSON document carrying three things: global timing
//! constants (net/setup/clock-to-q), the algebraic rewrite rules to
//! saturate with, and the implementation entries — each a computation
//! pattern (matcher), applicability conditions on the matched ports, and
//! one or more configurations with a full timing profile and a codegen
//! template. `enumerate_impl_rules` turns every (entry, configuration)
//! pair into a rewrite rule whose applier inserts an implementation e-node.
//!
//! The bundled `data/kintex_sample.json` ships plausible but
//! non-authoritative delay values; the engine's correctness does not depend
//! on the numbers.

use crate::ir::DataType;
use crate::pattern::Pattern;
use crate::rules::{RewriteRule, RuleAction};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LibraryConstants {
    pub t_net: f64,
    pub t_su: f64,
    pub t_clkq: f64,
}

impl LibraryConstants {
    /// Per-register overhead of cutting a combinational path: the inserted
    /// register's clock-to-q, the extra net hop, and its setup.
    pub fn register_overhead(&self) -> f64 {
        self.t_su + self.t_clkq + self.t_net
    }
}

/// Four-attribute timing profile of one configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TimingProfile {
    pub latency: u32,
    /// port name → input-side delay (ns). For combinational configurations
    /// this is the logic delay through the implementation; for sequential
    /// ones it is the path into the first internal register, setup included.
    pub t_incoming: BTreeMap<String, f64>,
    #[serde(default)]
    pub t_outgoing: f64,
    #[serde(default)]
    pub t_cycle: f64,
}

impl TimingProfile {
    pub fn is_combinational(&self) -> bool {
        self.latency == 0
    }

    pub fn worst_incoming(&self) -> f64 {
        self.t_incoming.values().cloned().fold(0.0, f64::max)
    }

    pub fn incoming(&self, port: &str) -> Option<f64> {
        self.t_incoming.get(port).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImplKind {
    BasicLogic,
    HardwarePrimitive,
    ParameterizedIp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortKindReq {
    Int,
    Float,
}

/// Applicability condition on one matcher port.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PortCondition {
    pub port: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PortKindReq>,
}

impl PortCondition {
    pub fn admits(&self, dtype: DataType) -> bool {
        if let Some(max) = self.max_bits {
            if dtype.bits > max {
                return false;
            }
        }
        match self.kind {
            Some(PortKindReq::Int) => dtype.is_int(),
            Some(PortKindReq::Float) => !dtype.is_int(),
            None => true,
        }
    }
}

/// True iff every condition admits the dtype bound to its port.
pub fn check_condition(conditions: &[PortCondition], port_types: &BTreeMap<String, DataType>) -> bool {
    conditions.iter().all(|c| {
        port_types
            .get(&c.port)
            .map(|&d| c.admits(d))
            .unwrap_or(false)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ImplConfig {
    pub config: String,
    #[serde(flatten)]
    pub profile: TimingProfile,
    #[serde(default)]
    pub resources: BTreeMap<String, u32>,
    pub template: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ImplEntry {
    pub identifier: String,
    pub kind: ImplKind,
    pub matcher: Pattern,
    #[serde(default)]
    pub conditions: Vec<PortCondition>,
    pub configurations: Vec<ImplConfig>,
}

impl ImplEntry {
    pub fn ports(&self) -> Vec<String> {
        self.matcher.vars()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AlgebraicRuleSpec {
    pub name: String,
    pub matcher: Pattern,
    pub applier: Pattern,
    #[serde(default)]
    pub float: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ImplLibrary {
    pub version: u32,
    pub constants: LibraryConstants,
    #[serde(default)]
    pub algebraic_rules: Vec<AlgebraicRuleSpec>,
    pub implementations: Vec<ImplEntry>,
    #[serde(default)]
    pub templates: BTreeMap<String, String>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum LibraryError {
    #[error("library is not valid JSON: {0}")]
    Json(String),
    #[error("invalid library: {0}")]
    Invalid(String),
}

pub fn load_library(text: &str) -> Result<ImplLibrary, LibraryError> {
    let lib: ImplLibrary =
        serde_json::from_str(text).map_err(|e| LibraryError::Json(e.to_string()))?;
    validate_library(&lib)?;
    Ok(lib)
}

fn validate_library(lib: &ImplLibrary) -> Result<(), LibraryError> {
    let bad = |msg: String| Err(LibraryError::Invalid(msg));
    if lib.version != 1 {
        return bad(format!("unsupported schema version {}", lib.version));
    }
    let c = &lib.constants;
    if c.t_net < 0.0 || c.t_su < 0.0 || c.t_clkq < 0.0 {
        return bad("timing constants must be nonnegative".into());
    }
    let mut seen = std::collections::BTreeSet::new();
    for entry in &lib.implementations {
        let ports = entry.ports();
        if ports.is_empty() {
            return bad(format!("{}: matcher has no ports", entry.identifier));
        }
        for cond in &entry.conditions {
            if !ports.contains(&cond.port) {
                return bad(format!(
                    "{}: condition references unknown port `{}`",
                    entry.identifier, cond.port
                ));
            }
        }
        if entry.configurations.is_empty() {
            return bad(format!("{}: no configurations", entry.identifier));
        }
        for cfg in &entry.configurations {
            if !seen.insert((entry.identifier.clone(), cfg.config.clone())) {
                return bad(format!(
                    "duplicate configuration {}#{}",
                    entry.identifier, cfg.config
                ));
            }
            let p = &cfg.profile;
            let mut profile_ports: Vec<&String> = p.t_incoming.keys().collect();
            profile_ports.sort();
            let mut want: Vec<&String> = ports.iter().collect();
            want.sort();
            if profile_ports != want {
                return bad(format!(
                    "{}#{}: t_incoming ports {:?} do not match matcher ports {:?}",
                    entry.identifier, cfg.config, profile_ports, want
                ));
            }
            if p.t_outgoing < 0.0
                || p.t_cycle < 0.0
                || p.t_incoming.values().any(|&d| d < 0.0)
            {
                return bad(format!(
                    "{}#{}: negative delay",
                    entry.identifier, cfg.config
                ));
            }
            if p.is_combinational() && (p.t_outgoing != 0.0 || p.t_cycle != 0.0) {
                return bad(format!(
                    "{}#{}: combinational configuration must have t_outgoing = 0 and t_cycle = 0",
                    entry.identifier, cfg.config
                ));
            }
            if !lib.templates.contains_key(&cfg.template) {
                return bad(format!(
                    "{}#{}: unknown template `{}`",
                    entry.identifier, cfg.config, cfg.template
                ));
            }
        }
    }
    Ok(())
}

/// The sample library bundled with the crate (plausible Kintex-class
/// values, not vendor-authoritative).
pub const SAMPLE_LIBRARY_JSON: &str = include_str!("../data/kintex_sample.json");

impl ImplLibrary {
    pub fn from_json(text: &str) -> Result<Self, LibraryError> {
        load_library(text)
    }

    pub fn sample() -> Self {
        load_library(SAMPLE_LIBRARY_JSON).expect("bundled library is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("library serializes")
    }

    pub fn entry(&self, entry: u32) -> &ImplEntry {
        &self.implementations[entry as usize]
    }

    pub fn config(&self, entry: u32, config: u32) -> &ImplConfig {
        &self.implementations[entry as usize].configurations[config as usize]
    }

    /// Display name of one (entry, configuration): `IDENT#CONFIG`.
    pub fn impl_name(&self, entry: u32, config: u32) -> String {
        format!(
            "{}#{}",
            self.entry(entry).identifier,
            self.config(entry, config).config
        )
    }

    /// Algebraic rules declared in the library, as engine rules.
    pub fn algebraic(&self) -> Vec<RewriteRule> {
        self.algebraic_rules
            .iter()
            .map(|spec| RewriteRule {
                name: spec.name.clone(),
                lhs: spec.matcher.clone(),
                action: RuleAction::Rewrite(spec.applier.clone()),
                applies_to_float: spec.float,
            })
            .collect()
    }
}

/// One implementation rule per (entry, configuration). The rule's applier
/// inserts `Impl(entry, config)` with the matcher's ports (first-occurrence
/// order) as operands, guarded by the entry's conditions.
pub fn enumerate_impl_rules(lib: &ImplLibrary) -> Vec<RewriteRule> {
    let mut rules = Vec::new();
    for (ei, entry) in lib.implementations.iter().enumerate() {
        let ports = entry.ports();
        for (ci, cfg) in entry.configurations.iter().enumerate() {
            rules.push(RewriteRule {
                name: format!("{}#{}", entry.identifier, cfg.config),
                lhs: entry.matcher.clone(),
                action: RuleAction::InsertImpl {
                    entry: ei as u32,
                    config: ci as u32,
                    ports: ports.clone(),
                    conditions: entry.conditions.clone(),
                },
                applies_to_float: true, // conditions gate kinds explicitly
            });
        }
    }
    rules
}
