//! `miniq`: a tiny query planner. Both planted bugs are wrong-plan
//! assertions reached only through particular clause combinations; every
//! clause on its own is ordinary, already-covered planner work.

use std::sync::LazyLock;

use crate::cov;
use crate::executor::{block_id, Probe, Stop};
use crate::mutation::query::{self, Item, Lit, Query};
use crate::mutation::QueryRules;

pub const ID: &str = "miniq";

pub static RULES: LazyLock<QueryRules> = LazyLock::new(|| QueryRules {
    tables: ["users", "orders", "items"].map(String::from).to_vec(),
    columns: ["id", "name", "price", "qty", "ts"].map(String::from).to_vec(),
    max_len: 512,
});

/// How many times a rewrite note is repeated in the planner log. Rewrites
/// dominate the log of a query that triggers them.
const REWRITE_WEIGHT: usize = 2;

type Stage = fn(&Query) -> bool;

/// Join-elimination chain: each rule only fires on the output of the
/// previous one.
const JOIN_CHAIN: [(&str, Stage); 6] = [
    ("outer-to-inner", |q| {
        q.join.as_ref().is_some_and(|j| j.kind == "LEFT" && j.on.is_some())
    }),
    ("group-pushdown", |q| q.group.as_deref() == Some("qty")),
    ("having-fold", |q| q.having.as_ref().is_some_and(|h| h.agg == "SUM")),
    ("sort-elide", |q| q.order.as_ref().is_some_and(|o| o.1 == Some("DESC"))),
    ("distinct-merge", |q| q.distinct),
    ("limit-pushdown", |q| q.limit.is_some_and(|l| l.1.is_some())),
];

/// Index-selection chain.
const INDEX_CHAIN: [(&str, Stage); 6] = [
    ("count-index", |q| {
        q.select.iter().any(|i| matches!(i, Item::Agg("COUNT", _)))
    }),
    ("items-stats", |q| q.table == "items"),
    ("like-prefix", |q| q.filter.iter().any(|(_, c)| c.op == "LIKE")),
    ("cross-reorder", |q| q.join.as_ref().is_some_and(|j| j.kind == "CROSS")),
    ("order-by-index", |q| q.order.as_ref().is_some_and(|o| o.0 == "ts")),
    ("limit-scan", |q| q.limit.is_some_and(|l| l.0 >= 100)),
];

fn reached(chain: &[(&str, Stage)], q: &Query) -> usize {
    chain.iter().take_while(|(_, stage)| stage(q)).count()
}

fn op_word(op: &str) -> &'static str {
    match op {
        "=" => "eq",
        "!=" => "ne",
        "<" => "lt",
        ">" => "gt",
        "<=" => "le",
        ">=" => "ge",
        _ => "like",
    }
}

fn parse(input: &[u8], p: &mut Probe) -> Result<Option<Query>, Stop> {
    cov!(p, "parse")?;
    match query::parse(input, &RULES) {
        Ok(q) => {
            cov!(p, "parsed")?;
            Ok(Some(q))
        }
        Err(v) => {
            p.block(block_id(v.rule))?;
            p.log("syntax error");
            Ok(None)
        }
    }
}

/// Instrumented planning. Each clause has its own blocks and every clause
/// slot ends in the shared `next` block, so edges never pair two clauses.
fn plan(q: &Query, p: &mut Probe) -> Result<i64, Stop> {
    let mut cost = 1i64;
    p.log(format!("scan {}", q.table));
    match q.table.as_str() {
        "users" => cov!(p, "t_users")?,
        "orders" => cov!(p, "t_orders")?,
        _ => cov!(p, "t_items")?,
    }
    cov!(p, "next")?;
    if q.distinct {
        cov!(p, "distinct")?;
        p.log("distinct");
        cost *= 2;
    }
    cov!(p, "next")?;
    if q.select.is_empty() {
        cov!(p, "star")?;
    }
    for item in &q.select {
        match item {
            Item::Col(_) => cov!(p, "proj_col")?,
            Item::Agg(a, _) => {
                match *a {
                    "COUNT" => cov!(p, "agg_count")?,
                    "SUM" => cov!(p, "agg_sum")?,
                    "MIN" => cov!(p, "agg_min")?,
                    "MAX" => cov!(p, "agg_max")?,
                    _ => cov!(p, "agg_avg")?,
                }
                p.log("aggregate");
            }
        }
    }
    cov!(p, "next")?;
    if let Some(j) = &q.join {
        match j.kind {
            "INNER" => cov!(p, "j_inner")?,
            "LEFT" => cov!(p, "j_left")?,
            _ => cov!(p, "j_cross")?,
        }
        if j.on.is_some() {
            cov!(p, "j_on")?;
        }
        p.log("join");
        cost *= 8;
    }
    cov!(p, "next")?;
    for (conj, c) in &q.filter {
        match *conj {
            "AND" => cov!(p, "and")?,
            _ => cov!(p, "or")?,
        }
        match op_word(c.op) {
            "eq" => cov!(p, "eq")?,
            "ne" => cov!(p, "ne")?,
            "lt" => cov!(p, "lt")?,
            "gt" => cov!(p, "gt")?,
            "le" => cov!(p, "le")?,
            "ge" => cov!(p, "ge")?,
            _ => cov!(p, "like")?,
        }
        match c.lit {
            Lit::Num(_) => cov!(p, "lit_num")?,
            Lit::Str(_) => cov!(p, "lit_str")?,
        }
        p.log("filter");
    }
    cov!(p, "next")?;
    if q.group.is_some() {
        cov!(p, "group")?;
        p.log("group");
        cost *= 4;
    }
    cov!(p, "next")?;
    if let Some(h) = &q.having {
        cov!(p, "having")?;
        if h.value < 0 {
            cov!(p, "having_neg")?;
        }
        p.log("having");
    }
    cov!(p, "next")?;
    if let Some((_, dir)) = &q.order {
        match dir {
            Some("DESC") => cov!(p, "desc")?,
            Some(_) => cov!(p, "asc")?,
            None => cov!(p, "order")?,
        }
        p.log("sort");
        cost *= 4;
    }
    cov!(p, "next")?;
    if let Some((n, off)) = q.limit {
        cov!(p, "limit")?;
        if n <= 0 {
            cov!(p, "limit_empty")?;
        }
        if off.is_some() {
            cov!(p, "offset")?;
        }
        p.log("limit");
    }
    cov!(p, "next")?;
    Ok(cost)
}

fn rewrite(chain: &[(&str, Stage)], q: &Query, p: &mut Probe) -> usize {
    let r = reached(chain, q);
    if r > 0 {
        let rule = chain[r - 1].0;
        p.log(vec![rule; REWRITE_WEIGHT].join(" "));
    }
    r
}

fn check_join_plan(q: &Query, p: &mut Probe) -> Result<(), Stop> {
    let r = rewrite(&JOIN_CHAIN, q, p);
    p.guard(r < JOIN_CHAIN.len(), "logic-assert")
}

fn check_index_plan(q: &Query, p: &mut Probe) -> Result<(), Stop> {
    let r = rewrite(&INDEX_CHAIN, q, p);
    p.guard(r < INDEX_CHAIN.len(), "logic-assert")
}

pub fn run(input: &[u8], p: &mut Probe) -> Result<i32, Stop> {
    p.call("miniq_main", |p| {
        let Some(q) = p.call("parse_query", |p| parse(input, p))? else {
            return Ok(1);
        };
        let cost = p.call("plan_query", |p| plan(&q, p))?;
        p.call("rewrite_join", |p| check_join_plan(&q, p))?;
        p.call("choose_index", |p| check_index_plan(&q, p))?;
        p.ret("cost", cost);
        p.state("catalog", q.table.as_bytes());
        Ok(0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(src: &str) -> Query {
        query::parse(src.as_bytes(), &RULES).unwrap()
    }

    #[test]
    fn chains_advance_in_order() {
        assert_eq!(reached(&JOIN_CHAIN, &q("SELECT * FROM users;")), 0);
        assert_eq!(
            reached(&JOIN_CHAIN, &q("SELECT * FROM users LEFT JOIN orders ON id = id GROUP BY qty;")),
            2
        );
        // Later rules do not count without the earlier ones.
        assert_eq!(reached(&JOIN_CHAIN, &q("SELECT DISTINCT * FROM users GROUP BY qty;")), 0);
    }

    #[test]
    fn triggers_assert() {
        let mut p = Probe::detached();
        let join = q("SELECT DISTINCT * FROM users LEFT JOIN orders ON id = id GROUP BY qty \
                      HAVING SUM(price) > 1 ORDER BY id DESC LIMIT 5 OFFSET 1;");
        assert!(matches!(check_join_plan(&join, &mut p), Err(Stop::Fault(_))));
        let index = q("SELECT COUNT(id) FROM items CROSS JOIN users WHERE name LIKE 'a%' ORDER BY ts LIMIT 100;");
        assert!(matches!(check_index_plan(&index, &mut p), Err(Stop::Fault(_))));
    }
}
