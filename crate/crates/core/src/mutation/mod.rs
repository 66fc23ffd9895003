//! Structured mutation: context encoding, the fixed prompt template,
//! candidate generation (remote model or offline grammar), and
//! validate-then-repair.

pub mod chunked;
mod generator;
mod havoc;
pub mod lines;
pub mod query;
pub mod raw;
mod schema;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

pub use generator::{
    generate, GenStats, Generator, GrammarProvider, MutationHint, RemoteGenerator, REMOTE_GEN_TIMEOUT,
};
pub use havoc::havoc;
pub use schema::{ChunkedRules, FormatSchema, LineRules, QueryRules, RawRules, Rules, Violation, KNOWN_FORMATS};

use crate::executor::ExecutionRecord;
use crate::provider::ProviderError;
use crate::scheduler::QueueEntry;
use crate::target_model::{backward_slice, AnalysisError, ParamConstraint, SeedAnnotation, TargetManifest};

pub const EXCERPT_LEN: usize = 512;
pub const MAX_EXCERPTS: usize = 3;
pub const DEFAULT_K: usize = 5;
pub const DEFAULT_TEMPERATURE: f64 = 0.8;

#[derive(Debug, Error)]
pub enum MutationError {
    #[error("unknown input format {0:?}")]
    UnknownFormat(String),
    #[error("bad format schema: {0}")]
    Schema(String),
    #[error("no generated candidates in window")]
    EmptyWindow,
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("objective must not be empty")]
    EmptyObjective,
    #[error("repair called on a valid candidate")]
    AlreadyValid,
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Mutation goals, rotated per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    LengthGrowth,
    DelimiterInjection,
    BoundaryValues,
    FieldReordering,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::LengthGrowth,
        Objective::DelimiterInjection,
        Objective::BoundaryValues,
        Objective::FieldReordering,
    ];

    pub fn nth(i: u64) -> Objective {
        Self::ALL[(i % Self::ALL.len() as u64) as usize]
    }

    fn phrase(self) -> &'static str {
        match self {
            Objective::LengthGrowth => "increase string length by 20%",
            Objective::DelimiterInjection => "introduce uncommon delimiters",
            Objective::BoundaryValues => "place boundary values in numeric fields",
            Objective::FieldReordering => "reorder fields while keeping every field intact",
        }
    }

    /// The sentence used as a prompt goal, e.g. "Generate 5 syntactically
    /// valid inputs that increase string length by 20% ...".
    pub fn instruction(self, k: usize) -> String {
        format!(
            "Generate {k} syntactically valid inputs that {} to explore alternative code paths.",
            self.phrase()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationContext {
    pub function_chain: Vec<String>,
    pub arg_types: Vec<String>,
    pub observed_examples: Vec<Vec<u8>>,
    pub param_constraints: Vec<ParamConstraint>,
    pub input_format: String,
}

/// Up to three windows of `bytes`: start, middle and end.
pub fn excerpts(bytes: &[u8]) -> Vec<Vec<u8>> {
    if bytes.len() <= EXCERPT_LEN {
        return vec![bytes.to_vec()];
    }
    let mid = bytes.len() / 2 - EXCERPT_LEN / 2;
    let mut starts = vec![0, mid, bytes.len() - EXCERPT_LEN];
    starts.dedup();
    starts
        .into_iter()
        .take(MAX_EXCERPTS)
        .map(|s| bytes[s..s + EXCERPT_LEN].to_vec())
        .collect()
}

/// Gathers what a prompt needs to know about `seed`.
///
/// The call chain is the dynamically observed one when `record` carries a
/// trace, otherwise the static reachable order from the manifest's entry.
/// Observed examples come from the seed bytes and only once it has run.
pub fn build_context(
    seed: &QueueEntry,
    annotation: &SeedAnnotation,
    record: Option<&ExecutionRecord>,
    manifest: &TargetManifest,
) -> Result<MutationContext, MutationError> {
    build_context_from_trace(seed, annotation, record.map(|r| r.call_trace.as_slice()), manifest)
}

/// [`build_context`] for a seed whose run is known only by its call trace.
pub fn build_context_from_trace(
    seed: &QueueEntry,
    annotation: &SeedAnnotation,
    trace: Option<&[String]>,
    manifest: &TargetManifest,
) -> Result<MutationContext, MutationError> {
    let entry = manifest.entry_function();
    let function_chain = match trace {
        Some(t) if !t.is_empty() => t.to_vec(),
        _ => manifest.static_call_order(&entry.id)?,
    };
    let first = manifest.function(&function_chain[0]).unwrap_or(entry);
    let on_chain: BTreeSet<&str> = function_chain.iter().map(String::as_str).collect();
    let mut constraints = BTreeSet::new();
    for site in &manifest.api_sites {
        let reachable =
            annotation.reachable_functions.is_empty() || annotation.reachable_functions.contains(&site.function_id);
        if reachable && on_chain.contains(site.function_id.as_str()) {
            constraints.extend(backward_slice(site, manifest)?);
        }
    }
    Ok(MutationContext {
        arg_types: first.params.clone(),
        function_chain,
        observed_examples: if trace.is_some() { excerpts(&seed.bytes) } else { Vec::new() },
        param_constraints: constraints.into_iter().collect(),
        input_format: manifest.input_format.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationPrompt {
    pub context_section: String,
    pub objective_section: String,
    pub grammar_section: String,
    pub rendered: String,
}

fn quote(bytes: &[u8]) -> String {
    let mut s = String::from("\"");
    for &b in bytes {
        match b {
            b'"' => s.push_str("\\\""),
            b'\\' => s.push_str("\\\\"),
            b'\n' => s.push_str("\\n"),
            b'\r' => s.push_str("\\r"),
            b'\t' => s.push_str("\\t"),
            0x20..0x7f => s.push(b as char),
            _ => write!(s, "\\x{b:02x}").unwrap(),
        }
    }
    s.push('"');
    s
}

/// Renders the fixed three-part template: context, goal, grammar.
pub fn build_prompt(
    ctx: &MutationContext,
    objective: &str,
    schema: &FormatSchema,
) -> Result<MutationPrompt, MutationError> {
    if objective.trim().is_empty() {
        return Err(MutationError::EmptyObjective);
    }
    let mut context = String::from("Given the following parser context:\n");
    writeln!(context, "Function: {}", ctx.function_chain.join(" -> ")).unwrap();
    let types = if ctx.arg_types.is_empty() {
        "(none)".to_string()
    } else {
        ctx.arg_types.join(", ")
    };
    writeln!(context, "Argument type: {types}").unwrap();
    if ctx.observed_examples.is_empty() {
        writeln!(context, "Observed inputs: (none)").unwrap();
    } else {
        let shown: Vec<String> = ctx.observed_examples.iter().map(|e| quote(e)).collect();
        writeln!(context, "Observed inputs: {}", shown.join(", ")).unwrap();
    }
    if ctx.param_constraints.is_empty() {
        write!(context, "Observed parameter ranges: (none)").unwrap();
    } else {
        let shown: Vec<String> = ctx
            .param_constraints
            .iter()
            .map(|c| {
                let kind = serde_json::to_value(c.kind).unwrap();
                let mut s = format!("param {} {}", c.param_index, kind.as_str().unwrap_or("unknown"));
                if !c.detail.is_empty() {
                    write!(s, " {}", c.detail).unwrap();
                }
                s
            })
            .collect();
        write!(context, "Observed parameter ranges: {}", shown.join("; ")).unwrap();
    }
    let objective_section = format!("Goal: {}", objective.trim());
    let grammar_section = format!("Follow {} syntax strictly. {}", ctx.input_format, schema.describe());
    let rendered = format!("{context}\n{objective_section}\n{grammar_section}\n");
    Ok(MutationPrompt {
        context_section: context,
        objective_section,
        grammar_section,
        rendered,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: MutationPrompt,
    pub temperature: f64,
    pub k: usize,
}

impl GenerationRequest {
    pub fn new(prompt: MutationPrompt, temperature: f64, k: usize) -> Result<Self, MutationError> {
        if k == 0 {
            return Err(MutationError::InvalidRequest("k must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&temperature) {
            return Err(MutationError::InvalidRequest(format!("temperature {temperature} outside [0, 2]")));
        }
        Ok(GenerationRequest { prompt, temperature, k })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Provider,
    RepairedProvider,
    RepairedRule,
    GrammarFallback,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateInput {
    pub bytes: Vec<u8>,
    pub origin: Origin,
    pub valid: bool,
}

impl CandidateInput {
    pub fn checked(bytes: Vec<u8>, origin: Origin, schema: &FormatSchema) -> Self {
        let valid = schema.is_valid(&bytes);
        CandidateInput { bytes, origin, valid }
    }
}

pub fn validate(candidate: &CandidateInput, schema: &FormatSchema) -> Result<(), Vec<Violation>> {
    let v = schema.violations(&candidate.bytes);
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// One repair round: the rule-based sanitizer, then at most one provider
/// call. A candidate that is still invalid comes back with `valid = false`.
pub fn repair(
    candidate: &CandidateInput,
    violations: &[Violation],
    schema: &FormatSchema,
    provider: Option<&mut RemoteGenerator>,
) -> Result<CandidateInput, MutationError> {
    if candidate.valid || violations.is_empty() {
        return Err(MutationError::AlreadyValid);
    }
    if let Some(fixed) = schema.sanitize(&candidate.bytes) {
        if schema.is_valid(&fixed) {
            return Ok(CandidateInput {
                bytes: fixed,
                origin: Origin::RepairedRule,
                valid: true,
            });
        }
    }
    if let Some(remote) = provider {
        match remote.repair(&candidate.bytes, violations, schema) {
            Ok(Some(bytes)) if schema.is_valid(&bytes) => {
                return Ok(CandidateInput {
                    bytes,
                    origin: Origin::RepairedProvider,
                    valid: true,
                });
            }
            Ok(_) => {}
            Err(e) => log::debug!("repair call failed: {e}"),
        }
    }
    Ok(CandidateInput {
        valid: false,
        ..candidate.clone()
    })
}

/// Running count of generated and valid candidates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidityWindow {
    pub generated: u64,
    pub valid: u64,
}

impl ValidityWindow {
    pub fn record(&mut self, valid: bool) {
        self.generated += 1;
        self.valid += valid as u64;
    }
}

pub fn valid_input_rate(window: &ValidityWindow) -> Result<f64, MutationError> {
    if window.generated == 0 {
        return Err(MutationError::EmptyWindow);
    }
    Ok(window.valid as f64 / window.generated as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FormatSchema {
        FormatSchema::parse(
            r#"{"format_id": "line-protocol", "rules": {"kind": "line_protocol",
                "methods": ["GET"], "version": "HTTP/1.1", "header_names": ["Host"],
                "max_line_len": 128, "max_len": 1024}}"#,
        )
        .unwrap()
    }

    fn ctx() -> MutationContext {
        MutationContext {
            function_chain: vec!["parse_http_header".into()],
            arg_types: vec!["string".into()],
            observed_examples: vec![b"GET /index.html HTTP/1.1\r\n".to_vec()],
            param_constraints: Vec::new(),
            input_format: "line-protocol".into(),
        }
    }

    #[test]
    fn prompt_layout() {
        let objective = "Generate 5 syntactically valid inputs that introduce unusual but RFC-compliant headers \
                         to explore alternative code paths.";
        let p = build_prompt(&ctx(), objective, &schema()).unwrap();
        assert!(p.rendered.starts_with(
            "Given the following parser context:\nFunction: parse_http_header\nArgument type: string\n\
             Observed inputs: \"GET /index.html HTTP/1.1\\r\\n\"\n"
        ));
        let c = p.rendered.find("Given").unwrap();
        let g = p.rendered.find("Goal: Generate 5 syntactically valid").unwrap();
        let f = p.rendered.find("Follow line-protocol syntax strictly.").unwrap();
        assert!(c < g && g < f);
        assert_eq!(p, build_prompt(&ctx(), objective, &schema()).unwrap());
    }

    #[test]
    fn prompt_placeholders_and_errors() {
        let mut c = ctx();
        c.observed_examples.clear();
        let p = build_prompt(&c, "x", &schema()).unwrap();
        assert!(p.context_section.contains("Observed inputs: (none)"));
        assert!(matches!(build_prompt(&c, "  ", &schema()), Err(MutationError::EmptyObjective)));
    }

    #[test]
    fn excerpt_windows() {
        let big = vec![7u8; 10 * 1024];
        let ex = excerpts(&big);
        assert_eq!(ex.len(), 3);
        assert!(ex.iter().all(|e| e.len() <= EXCERPT_LEN));
        assert_eq!(excerpts(b"ab"), vec![b"ab".to_vec()]);
    }

    #[test]
    fn request_bounds() {
        let p = build_prompt(&ctx(), "x", &schema()).unwrap();
        assert!(GenerationRequest::new(p.clone(), 0.8, 0).is_err());
        assert!(GenerationRequest::new(p.clone(), 2.5, 1).is_err());
        assert!(GenerationRequest::new(p, 0.0, 1).is_ok());
    }

    #[test]
    fn repair_paths() {
        let s = schema();
        let bad = CandidateInput::checked(b"get / \x01\nHost x\n".to_vec(), Origin::Provider, &s);
        assert!(!bad.valid);
        let v = validate(&bad, &s).unwrap_err();
        let fixed = repair(&bad, &v, &s, None).unwrap();
        assert!(fixed.valid && fixed.origin == Origin::RepairedRule);
        assert!(validate(&fixed, &s).is_ok());

        let garbage = CandidateInput::checked(vec![0, 1, 2, 3], Origin::Provider, &s);
        let v = validate(&garbage, &s).unwrap_err();
        let out = repair(&garbage, &v, &s, None).unwrap();
        assert!(!out.valid);
        assert!(matches!(repair(&fixed, &[], &s, None), Err(MutationError::AlreadyValid)));
    }

    #[test]
    fn window_rate() {
        let mut w = ValidityWindow::default();
        assert!(matches!(valid_input_rate(&w), Err(MutationError::EmptyWindow)));
        for i in 0..10 {
            w.record(i < 8);
        }
        assert_eq!(valid_input_rate(&w).unwrap(), 0.8);
    }
}
