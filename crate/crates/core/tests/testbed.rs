use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semfuzz::executor::{dedup_crash, execute, CoverageBitmap, Limits, Outcome};
use semfuzz::semantic::{embed, mean_pairwise_novelty, ReducedEmbedding};
use semfuzz::signals::{canonicalize, extract_signals};
use semfuzz::testbed::{self, Reachability, TriggerClass};

/// Each clause the planted miniq bugs combine, exercised on its own.
const MINIQ_BASELINE: &[&str] = &[
    "SELECT DISTINCT * FROM users;",
    "SELECT * FROM users LEFT JOIN orders ON id = id;",
    "SELECT * FROM items CROSS JOIN users;",
    "SELECT * FROM users GROUP BY qty HAVING SUM(price) > 1;",
    "SELECT * FROM users ORDER BY id DESC;",
    "SELECT * FROM users ORDER BY ts;",
    "SELECT * FROM users LIMIT 5 OFFSET 1;",
    "SELECT * FROM users LIMIT 100;",
    "SELECT COUNT(id) FROM items WHERE name LIKE 'a%';",
];

#[test]
fn registry_shape() {
    let all = testbed::register_targets();
    let ids: Vec<&str> = all.iter().map(|t| t.id()).collect();
    assert_eq!(ids, ["chunky", "dissect", "miniq", "mathbench"]);
    let chunky = testbed::lookup("chunky").unwrap();
    assert!(chunky.bugs.iter().all(|b| b.trigger_class == TriggerClass::MemoryGuard));
    let dissect = testbed::lookup("dissect").unwrap();
    assert!(dissect.bugs.iter().any(|b| b.reachable_via == Reachability::RareSemanticPattern));
    let miniq = testbed::lookup("miniq").unwrap();
    assert!(miniq
        .bugs
        .iter()
        .all(|b| b.reachable_via == Reachability::RareSemanticPattern && b.trigger_class == TriggerClass::LogicAssert));
}

#[test]
fn every_trigger_reproduces_in_one_execution() {
    for t in testbed::register_targets() {
        for b in t.bugs {
            let r = execute(b.trigger, &t.target, &Limits::default()).unwrap();
            assert_eq!(r.outcome, Outcome::Crash, "{}", b.bug_id);
            let id = dedup_crash(&r).unwrap();
            assert!(t.bug_ids().iter().any(|(x, p)| *x == id && p.bug_id == b.bug_id));
        }
    }
}

#[test]
fn miniq_bugs_add_no_edges_over_baseline() {
    let t = testbed::lookup("miniq").unwrap();
    let mut map = CoverageBitmap::new();
    for q in MINIQ_BASELINE {
        let r = execute(q.as_bytes(), &t.target, &Limits::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Ok, "{q}");
        map.merge_bucketed(&r.bitmap);
    }
    for b in t.bugs {
        let r = execute(b.trigger, &t.target, &Limits::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Crash);
        assert_eq!(map.count_new(&r.bitmap), 0, "{} reaches new edges", b.bug_id);
    }
}

#[test]
fn mathbench_signals_are_near_constant() {
    let t = testbed::lookup("mathbench").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let window: Vec<ReducedEmbedding> = (0..100)
        .map(|_| {
            let len = rng.random_range(0..256);
            let input: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            let r = execute(&input, &t.target, &Limits::default()).unwrap();
            assert_eq!(r.outcome, Outcome::Ok);
            let e = embed(&canonicalize(&extract_signals(&r)));
            ReducedEmbedding::new(e.vector, false)
        })
        .collect();
    let m = mean_pairwise_novelty(&window);
    assert!(m < 0.05, "mean pairwise novelty {m}");
}
