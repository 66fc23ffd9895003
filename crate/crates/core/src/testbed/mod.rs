//! Instrumented toy targets with planted bugs.
//!
//! | target | format | planted bugs |
//! |---|---|---|
//! | `chunky` | chunked-binary | 3 memory guards |
//! | `dissect` | line-protocol | 2 (one needs a rare header combination) |
//! | `miniq` | query-text | 2 logic asserts on rare clause combinations |
//! | `mathbench` | raw-bytes | none |
//!
//! Each target's manifest, format schema, seeds and bug triggers live under
//! `testbed/<target>/` in this crate.

pub mod chunky;
pub mod dissect;
pub mod mathbench;
pub mod miniq;

use std::path::PathBuf;

use serde::Serialize;

use crate::executor::{dedup_crash, execute, BugId, Limits, Outcome, Target};
use crate::mutation::FormatSchema;
use crate::target_model::{parse_manifest, ApiCategoryTable, TargetManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerClass {
    MemoryGuard,
    LogicAssert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reachability {
    CoverageFrontier,
    RareSemanticPattern,
}

#[derive(Debug, Clone, Copy)]
pub struct PlantedBug {
    pub bug_id: &'static str,
    pub target_id: &'static str,
    pub trigger_description: &'static str,
    pub trigger_class: TriggerClass,
    pub reachable_via: Reachability,
    /// A hand-built input that reproduces the bug in one execution.
    pub trigger: &'static [u8],
}

#[derive(Debug, Clone, Copy)]
pub struct TestbedTarget {
    pub target: Target,
    pub manifest_json: &'static str,
    pub schema_json: &'static str,
    pub seeds: &'static [&'static [u8]],
    pub bugs: &'static [PlantedBug],
}

macro_rules! data {
    ($path:literal) => {
        include_bytes!(concat!(env!("CARGO_MANIFEST_DIR"), "/testbed/", $path))
    };
}

macro_rules! text {
    ($path:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/testbed/", $path))
    };
}

const CHUNKY_BUGS: &[PlantedBug] = &[
    PlantedBug {
        bug_id: "chunky-palette-overflow",
        target_id: chunky::ID,
        trigger_description: "indexed image whose PALT chunk has more than 2^depth entries",
        trigger_class: TriggerClass::MemoryGuard,
        reachable_via: Reachability::CoverageFrontier,
        trigger: data!("chunky/triggers/palette-overflow.bin"),
    },
    PlantedBug {
        bug_id: "chunky-rle-overflow",
        target_id: chunky::ID,
        trigger_description: "interlaced image whose DATA runs exceed width*height",
        trigger_class: TriggerClass::MemoryGuard,
        reachable_via: Reachability::CoverageFrontier,
        trigger: data!("chunky/triggers/rle-overflow.bin"),
    },
    PlantedBug {
        bug_id: "chunky-gamma-overflow",
        target_id: chunky::ID,
        trigger_description: "TEXT Gamma value of 65536 or more indexes past the 256-slot table",
        trigger_class: TriggerClass::MemoryGuard,
        reachable_via: Reachability::CoverageFrontier,
        trigger: data!("chunky/triggers/gamma-overflow.bin"),
    },
];

const DISSECT_BUGS: &[PlantedBug] = &[
    PlantedBug {
        bug_id: "dissect-length-overread",
        target_id: dissect::ID,
        trigger_description: "POST whose Content-Length exceeds the body by more than 512 bytes",
        trigger_class: TriggerClass::MemoryGuard,
        reachable_via: Reachability::CoverageFrontier,
        trigger: data!("dissect/triggers/length-overread.txt"),
    },
    PlantedBug {
        bug_id: "dissect-upgrade-stale",
        target_id: dissect::ID,
        trigger_description: "HEAD with Connection: upgrade, an Upgrade header and chunked Transfer-Encoding",
        trigger_class: TriggerClass::MemoryGuard,
        reachable_via: Reachability::RareSemanticPattern,
        trigger: data!("dissect/triggers/upgrade-stale.txt"),
    },
];

const MINIQ_BUGS: &[PlantedBug] = &[
    PlantedBug {
        bug_id: "miniq-join-elimination",
        target_id: miniq::ID,
        trigger_description: "LEFT JOIN ... ON, GROUP BY qty, HAVING SUM(..), ORDER BY .. DESC, DISTINCT and LIMIT .. OFFSET together",
        trigger_class: TriggerClass::LogicAssert,
        reachable_via: Reachability::RareSemanticPattern,
        trigger: data!("miniq/triggers/join-elimination.sql"),
    },
    PlantedBug {
        bug_id: "miniq-index-selection",
        target_id: miniq::ID,
        trigger_description: "COUNT(..) over items, a LIKE filter, CROSS JOIN, ORDER BY ts and LIMIT of 100 or more together",
        trigger_class: TriggerClass::LogicAssert,
        reachable_via: Reachability::RareSemanticPattern,
        trigger: data!("miniq/triggers/index-selection.sql"),
    },
];

const TARGETS: [TestbedTarget; 4] = [
    TestbedTarget {
        target: Target {
            id: chunky::ID,
            run: chunky::run,
        },
        manifest_json: text!("chunky/manifest.json"),
        schema_json: text!("chunky/schema.json"),
        seeds: &[
            data!("chunky/seeds/gray.bin"),
            data!("chunky/seeds/indexed.bin"),
            data!("chunky/seeds/text.bin"),
        ],
        bugs: CHUNKY_BUGS,
    },
    TestbedTarget {
        target: Target {
            id: dissect::ID,
            run: dissect::run,
        },
        manifest_json: text!("dissect/manifest.json"),
        schema_json: text!("dissect/schema.json"),
        seeds: &[
            data!("dissect/seeds/get.txt"),
            data!("dissect/seeds/post.txt"),
            data!("dissect/seeds/keepalive.txt"),
        ],
        bugs: DISSECT_BUGS,
    },
    TestbedTarget {
        target: Target {
            id: miniq::ID,
            run: miniq::run,
        },
        manifest_json: text!("miniq/manifest.json"),
        schema_json: text!("miniq/schema.json"),
        seeds: &[
            data!("miniq/seeds/select.sql"),
            data!("miniq/seeds/join.sql"),
            data!("miniq/seeds/aggregate.sql"),
        ],
        bugs: MINIQ_BUGS,
    },
    TestbedTarget {
        target: Target {
            id: mathbench::ID,
            run: mathbench::run,
        },
        manifest_json: text!("mathbench/manifest.json"),
        schema_json: text!("mathbench/schema.json"),
        seeds: &[data!("mathbench/seeds/zeros.bin"), data!("mathbench/seeds/ramp.bin")],
        bugs: &[],
    },
];

pub fn register_targets() -> Vec<TestbedTarget> {
    TARGETS.to_vec()
}

pub fn lookup(target_id: &str) -> Option<TestbedTarget> {
    TARGETS.iter().find(|t| t.target.id == target_id).copied()
}

impl TestbedTarget {
    pub fn id(&self) -> &'static str {
        self.target.id
    }

    /// On-disk directory holding the manifest, schema, seeds and triggers.
    pub fn dir(&self) -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testbed").join(self.id())
    }

    pub fn manifest(&self) -> TargetManifest {
        parse_manifest(self.manifest_json, &ApiCategoryTable::builtin()).expect("bundled manifest is valid")
    }

    pub fn schema(&self) -> FormatSchema {
        FormatSchema::parse(self.schema_json).expect("bundled schema is valid")
    }

    /// Runs every planted trigger and pairs the resulting [`BugId`] with its
    /// bug. Panics if a trigger does not crash, since that is a testbed defect.
    pub fn bug_ids(&self) -> Vec<(BugId, PlantedBug)> {
        self.bugs
            .iter()
            .map(|b| {
                let r = execute(b.trigger, &self.target, &Limits::default()).expect("testbed targets do not panic");
                assert_eq!(r.outcome, Outcome::Crash, "trigger for {} did not crash", b.bug_id);
                (dedup_crash(&r).expect("crash record"), *b)
            })
            .collect()
    }
}
