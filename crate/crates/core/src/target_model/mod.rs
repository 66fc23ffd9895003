//! Static description of a target: functions, call graph, per-function CFG
//! and security-relevant API call sites.
//!
//! Targets are described declaratively in a JSON manifest (see
//! `docs/manifest.md`). On top of the loaded model this module provides seed
//! annotation by call-graph closure and a backward slice that collects the
//! parameter facts reaching an API call site.

mod api_table;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use api_table::{categorize_api, ApiCategory, ApiCategoryTable, TableSource};

use crate::hash::fnv1a64;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid manifest: {0}")]
    Validation(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("api site {api}@{function}/{block} is not part of the manifest")]
    UnknownSite {
        function: String,
        block: String,
        api: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDecl {
    pub id: String,
    /// Parameter type names, in order.
    #[serde(default)]
    pub params: Vec<String>,
    #[serde(default)]
    pub entry: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    LengthBound,
    ValueRange,
    FormatLiteral,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamConstraint {
    pub param_index: u32,
    pub kind: ConstraintKind,
    #[serde(default)]
    pub detail: String,
}

impl ParamConstraint {
    pub fn unknown(param_index: u32) -> Self {
        ParamConstraint {
            param_index,
            kind: ConstraintKind::Unknown,
            detail: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub id: String,
    #[serde(default)]
    pub succ: Vec<String>,
    /// Facts the target author declares to hold when control leaves this block.
    #[serde(default)]
    pub facts: Vec<ParamConstraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiCallSite {
    pub function_id: String,
    pub block_id: String,
    pub api_name: String,
    pub category: ApiCategory,
    pub arity: u32,
    pub param_constraints: Vec<ParamConstraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TargetManifest {
    pub target_id: String,
    pub functions: Vec<FunctionDecl>,
    pub call_graph: BTreeMap<String, Vec<String>>,
    pub cfg: BTreeMap<String, Vec<BasicBlock>>,
    pub api_sites: Vec<ApiCallSite>,
    pub input_format: String,
    /// Names of the memory regions the target hashes after each run.
    pub state_regions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeedAnnotation {
    pub seed_id: String,
    pub reachable_functions: BTreeSet<String>,
    pub touched_api_categories: BTreeSet<ApiCategory>,
}

impl SeedAnnotation {
    pub fn empty(seed_id: impl Into<String>) -> Self {
        SeedAnnotation {
            seed_id: seed_id.into(),
            reachable_functions: BTreeSet::new(),
            touched_api_categories: BTreeSet::new(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSite {
    function_id: String,
    block_id: String,
    api_name: String,
    #[serde(default)]
    category: Option<String>,
    arity: u32,
    #[serde(default)]
    param_constraints: Vec<ParamConstraint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    target_id: String,
    functions: Vec<FunctionDecl>,
    #[serde(default)]
    call_graph: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    cfg: BTreeMap<String, Vec<BasicBlock>>,
    #[serde(default)]
    api_sites: Vec<RawSite>,
    input_format: String,
    #[serde(default)]
    state_regions: Vec<String>,
}

/// Loads a manifest; sites without an explicit category use the builtin table.
pub fn load_manifest(path: &Path) -> Result<TargetManifest, ManifestError> {
    load_manifest_with_table(path, &ApiCategoryTable::builtin())
}

pub fn load_manifest_with_table(
    path: &Path,
    table: &ApiCategoryTable,
) -> Result<TargetManifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text, table).map_err(|e| match e {
        ManifestError::Parse { message, .. } => ManifestError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses and validates manifest text.
pub fn parse_manifest(
    text: &str,
    table: &ApiCategoryTable,
) -> Result<TargetManifest, ManifestError> {
    let raw: RawManifest = serde_json::from_str(text).map_err(|e| ManifestError::Parse {
        path: PathBuf::from("<memory>"),
        message: e.to_string(),
    })?;
    let mut api_sites = Vec::with_capacity(raw.api_sites.len());
    for site in raw.api_sites {
        let category = match &site.category {
            Some(c) => c.parse::<ApiCategory>().map_err(|e| {
                ManifestError::Validation(format!("api site {}: {e}", site.api_name))
            })?,
            None => table.categorize(&site.api_name),
        };
        api_sites.push(ApiCallSite {
            function_id: site.function_id,
            block_id: site.block_id,
            api_name: site.api_name,
            category,
            arity: site.arity,
            param_constraints: site.param_constraints,
        });
    }
    let manifest = TargetManifest {
        target_id: raw.target_id,
        functions: raw.functions,
        call_graph: raw.call_graph,
        cfg: raw.cfg,
        api_sites,
        input_format: raw.input_format,
        state_regions: raw.state_regions,
    };
    manifest.validate()?;
    Ok(manifest)
}

impl TargetManifest {
    pub fn validate(&self) -> Result<(), ManifestError> {
        let fail = |msg: String| Err(ManifestError::Validation(msg));
        if self.functions.is_empty() {
            return fail("no functions declared (no entry point)".into());
        }
        let mut declared = BTreeSet::new();
        for f in &self.functions {
            if !declared.insert(f.id.as_str()) {
                return fail(format!("function {:?} declared twice", f.id));
            }
        }
        match self.functions.iter().filter(|f| f.entry).count() {
            0 => return fail("no function is marked as entry".into()),
            1 => {}
            n => return fail(format!("{n} functions marked as entry, expected one")),
        }
        for (caller, callees) in &self.call_graph {
            if !declared.contains(caller.as_str()) {
                return fail(format!("call graph names undeclared function {caller:?}"));
            }
            for callee in callees {
                if !declared.contains(callee.as_str()) {
                    return fail(format!(
                        "call graph edge {caller:?} -> {callee:?} names undeclared function {callee:?}"
                    ));
                }
            }
        }
        for (func, blocks) in &self.cfg {
            if !declared.contains(func.as_str()) {
                return fail(format!("cfg for undeclared function {func:?}"));
            }
            let mut ids = BTreeSet::new();
            for b in blocks {
                if !ids.insert(b.id.as_str()) {
                    return fail(format!("block {func}/{} declared twice", b.id));
                }
            }
            for b in blocks {
                for s in &b.succ {
                    if !ids.contains(s.as_str()) {
                        return fail(format!(
                            "cfg edge {func}/{} -> {s:?} leaves function {func:?}",
                            b.id
                        ));
                    }
                }
            }
        }
        for site in &self.api_sites {
            if !declared.contains(site.function_id.as_str()) {
                return fail(format!(
                    "api site {} names undeclared function {:?}",
                    site.api_name, site.function_id
                ));
            }
            let has_block = self
                .cfg
                .get(&site.function_id)
                .is_some_and(|bs| bs.iter().any(|b| b.id == site.block_id));
            if !has_block {
                return fail(format!(
                    "api site {} names unknown block {}/{}",
                    site.api_name, site.function_id, site.block_id
                ));
            }
            if let Some(c) = site
                .param_constraints
                .iter()
                .find(|c| c.param_index >= site.arity)
            {
                return fail(format!(
                    "api site {}: constraint on param {} exceeds arity {}",
                    site.api_name, c.param_index, site.arity
                ));
            }
        }
        Ok(())
    }

    pub fn entry_function(&self) -> &FunctionDecl {
        self.functions
            .iter()
            .find(|f| f.entry)
            .expect("validated manifest has an entry function")
    }

    pub fn function(&self, id: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.id == id)
    }

    /// Functions reachable from `entry` in breadth-first order, callees
    /// visited in their declared order.
    pub fn static_call_order(&self, entry: &str) -> Result<Vec<String>, AnalysisError> {
        if self.function(entry).is_none() {
            return Err(AnalysisError::UnknownFunction(entry.to_string()));
        }
        let mut seen = BTreeSet::new();
        let mut order = Vec::new();
        let mut queue = VecDeque::from([entry.to_string()]);
        seen.insert(entry.to_string());
        while let Some(f) = queue.pop_front() {
            if let Some(callees) = self.call_graph.get(&f) {
                for c in callees {
                    if seen.insert(c.clone()) {
                        queue.push_back(c.clone());
                    }
                }
            }
            order.push(f);
        }
        Ok(order)
    }
}

/// Tags a seed with everything its entry point can statically reach.
pub fn annotate_seed(
    seed: &[u8],
    entry_function: &str,
    manifest: &TargetManifest,
) -> Result<SeedAnnotation, AnalysisError> {
    let reachable: BTreeSet<String> = manifest
        .static_call_order(entry_function)?
        .into_iter()
        .collect();
    let touched_api_categories = manifest
        .api_sites
        .iter()
        .filter(|s| reachable.contains(&s.function_id))
        .map(|s| s.category)
        .collect();
    Ok(SeedAnnotation {
        seed_id: format!("{:016x}", fnv1a64(seed)),
        reachable_functions: reachable,
        touched_api_categories,
    })
}

/// Collects the declared parameter facts that can hold when control reaches
/// `site`.
///
/// The reaching set is every block that lies on some CFG path from the
/// function's entry block (its first listed block) to the site's block,
/// inclusive. Facts from that set are returned sorted and deduplicated;
/// if none reach, one `unknown` constraint per parameter is returned.
pub fn backward_slice(
    site: &ApiCallSite,
    manifest: &TargetManifest,
) -> Result<Vec<ParamConstraint>, AnalysisError> {
    let known = manifest.api_sites.iter().any(|s| {
        s.function_id == site.function_id
            && s.block_id == site.block_id
            && s.api_name == site.api_name
    });
    let unknown_site = || AnalysisError::UnknownSite {
        function: site.function_id.clone(),
        block: site.block_id.clone(),
        api: site.api_name.clone(),
    };
    if !known {
        return Err(unknown_site());
    }
    let blocks = manifest
        .cfg
        .get(&site.function_id)
        .ok_or_else(unknown_site)?;
    let index: HashMap<&str, usize> = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();
    let target = *index.get(site.block_id.as_str()).ok_or_else(unknown_site)?;

    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); blocks.len()];
    for (i, b) in blocks.iter().enumerate() {
        for s in &b.succ {
            preds[index[s.as_str()]].push(i);
        }
    }

    let forward = flood(0, blocks.len(), |i| {
        blocks[i].succ.iter().map(|s| index[s.as_str()]).collect()
    });
    let backward = flood(target, blocks.len(), |i| preds[i].clone());

    let mut facts = BTreeSet::new();
    if forward[target] {
        for i in 0..blocks.len() {
            if forward[i] && backward[i] {
                facts.extend(blocks[i].facts.iter().cloned());
            }
        }
    }
    if facts.is_empty() {
        return Ok((0..site.arity).map(ParamConstraint::unknown).collect());
    }
    Ok(facts.into_iter().collect())
}

fn flood(start: usize, n: usize, next: impl Fn(usize) -> Vec<usize>) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(i) = stack.pop() {
        for j in next(i) {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> &'static str {
        r#"{
          "target_id": "tiny",
          "input_format": "line-protocol",
          "functions": [
            {"id": "main", "params": ["bytes"], "entry": true},
            {"id": "helper"},
            {"id": "leaf"}
          ],
          "call_graph": {"main": ["helper"], "helper": ["leaf"]},
          "cfg": {
            "main": [
              {"id": "b0", "succ": ["b1"]},
              {"id": "b1", "succ": []},
              {"id": "island", "succ": ["b1"], "facts": [{"param_index": 0, "kind": "value_range", "detail": "0..4"}]}
            ],
            "leaf": [{"id": "l0"}]
          },
          "api_sites": [
            {"function_id": "main", "block_id": "b1", "api_name": "strtol", "arity": 3},
            {"function_id": "main", "block_id": "island", "api_name": "malloc", "arity": 1},
            {"function_id": "leaf", "block_id": "l0", "api_name": "recv", "category": "network", "arity": 4}
          ]
        }"#
    }

    fn load(text: &str) -> Result<TargetManifest, ManifestError> {
        parse_manifest(text, &ApiCategoryTable::builtin())
    }

    #[test]
    fn parses_and_categorizes() {
        let m = load(tiny()).unwrap();
        assert_eq!(m.functions.len(), 3);
        assert_eq!(m.entry_function().id, "main");
        assert_eq!(m.api_sites[0].category, ApiCategory::StringParsing);
        assert_eq!(m.api_sites[2].category, ApiCategory::Network);
    }

    #[test]
    fn empty_functions_rejected() {
        let text = r#"{"target_id": "x", "input_format": "f", "functions": []}"#;
        assert!(matches!(load(text), Err(ManifestError::Validation(_))));
    }

    #[test]
    fn dangling_edge_names_function() {
        let text = tiny().replace(r#""helper": ["leaf"]"#, r#""helper": ["ghost"]"#);
        match load(&text) {
            Err(ManifestError::Validation(msg)) => assert!(msg.contains("ghost"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_category_rejected() {
        let text = tiny().replace(r#""category": "network""#, r#""category": "teleport""#);
        match load(&text) {
            Err(ManifestError::Validation(msg)) => assert!(msg.contains("teleport")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn cross_function_cfg_edge_rejected() {
        let text = tiny().replace(r#"{"id": "b1", "succ": []}"#, r#"{"id": "b1", "succ": ["l0"]}"#);
        assert!(matches!(load(&text), Err(ManifestError::Validation(_))));
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(load("{not json"), Err(ManifestError::Parse { .. })));
    }

    #[test]
    fn constraint_beyond_arity_rejected() {
        let text = tiny().replace(
            r#""api_name": "malloc", "arity": 1"#,
            r#""api_name": "malloc", "arity": 1, "param_constraints": [{"param_index": 1, "kind": "unknown"}]"#,
        );
        assert!(matches!(load(&text), Err(ManifestError::Validation(_))));
    }

    #[test]
    fn annotate_leaf_and_root() {
        let m = load(tiny()).unwrap();
        let leaf = annotate_seed(b"x", "leaf", &m).unwrap();
        assert_eq!(leaf.reachable_functions, BTreeSet::from(["leaf".to_string()]));
        assert_eq!(leaf.touched_api_categories, BTreeSet::from([ApiCategory::Network]));

        let root = annotate_seed(b"x", "main", &m).unwrap();
        assert_eq!(root.reachable_functions.len(), 3);
        assert_eq!(
            annotate_seed(b"x", "nope", &m),
            Err(AnalysisError::UnknownFunction("nope".into()))
        );
    }

    #[test]
    fn slice_vacuous_and_isolated() {
        let m = load(tiny()).unwrap();
        let strtol = &m.api_sites[0];
        // The island's fact does not flow into b1 from the entry block.
        assert_eq!(
            backward_slice(strtol, &m).unwrap(),
            vec![
                ParamConstraint::unknown(0),
                ParamConstraint::unknown(1),
                ParamConstraint::unknown(2)
            ]
        );
        let island = &m.api_sites[1];
        assert_eq!(backward_slice(island, &m).unwrap(), vec![ParamConstraint::unknown(0)]);
    }

    #[test]
    fn slice_rejects_foreign_site() {
        let m = load(tiny()).unwrap();
        let mut site = m.api_sites[0].clone();
        site.api_name = "memcpy".into();
        assert!(matches!(
            backward_slice(&site, &m),
            Err(AnalysisError::UnknownSite { .. })
        ));
    }

    #[test]
    fn annotation_is_monotone_in_edges() {
        let m = load(tiny()).unwrap();
        let before = annotate_seed(b"", "leaf", &m).unwrap();
        let mut m2 = m.clone();
        m2.call_graph.insert("leaf".into(), vec!["main".into()]);
        let after = annotate_seed(b"", "leaf", &m2).unwrap();
        assert!(before.reachable_functions.is_subset(&after.reachable_functions));
        assert_eq!(after.reachable_functions.len(), 3);
    }
}
