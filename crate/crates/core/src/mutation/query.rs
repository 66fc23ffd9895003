//! `query-text`: a small SELECT dialect.
//!
//! ```text
//! query  := SELECT [DISTINCT] sel FROM table [join] [where] [group] [having]
//!           [order] [limit] ';'
//! sel    := '*' | item (',' item)*
//! item   := column | AGG '(' column ')'
//! join   := (INNER|LEFT|CROSS) JOIN table [ON column '=' column]
//! where  := WHERE cond ((AND|OR) cond)*
//! cond   := column op (number | 'string')
//! group  := GROUP BY column
//! having := HAVING AGG '(' column ')' op number
//! order  := ORDER BY column [ASC|DESC]
//! limit  := LIMIT number [OFFSET number]
//! ```
//!
//! Keywords are case-insensitive; tables and columns come from the schema.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::schema::{QueryRules, Violation};
use super::Objective;

const KEYWORDS: &[&str] = &[
    "SELECT", "DISTINCT", "FROM", "INNER", "LEFT", "CROSS", "JOIN", "ON", "WHERE", "AND", "OR", "GROUP", "BY",
    "HAVING", "ORDER", "ASC", "DESC", "LIMIT", "OFFSET", "LIKE", "COUNT", "SUM", "MIN", "MAX", "AVG",
];

pub const AGGS: [&str; 5] = ["COUNT", "SUM", "MIN", "MAX", "AVG"];
pub const OPS: [&str; 7] = ["=", "!=", "<", ">", "<=", ">=", "LIKE"];
pub const JOIN_KINDS: [&str; 3] = ["INNER", "LEFT", "CROSS"];
const WORDS: &[&str] = &["a", "abc", "alice", "bob", "x%", "%", "null", "zz", "42", "O'", "lorem"];
const BOUNDARY: &[i64] = &[
    0,
    1,
    -1,
    7,
    8,
    127,
    128,
    255,
    256,
    1024,
    65535,
    65536,
    i32::MAX as i64,
    i32::MIN as i64,
    i64::MAX,
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Kw(&'static str),
    Ident(String),
    Num(i64),
    Str(String),
    Punct(&'static str),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn tokenize(src: &[u8]) -> Result<Vec<Token>, Violation> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < src.len() {
        let c = src[i];
        let start = i;
        if c == b' ' || c == b'\t' || c == b'\n' || c == b'\r' {
            i += 1;
            continue;
        }
        if !(0x20..0x7f).contains(&c) {
            return Err(Violation::new("illegal_byte", i));
        }
        let tok = if c.is_ascii_alphabetic() || c == b'_' {
            while i < src.len() && (src[i].is_ascii_alphanumeric() || src[i] == b'_') {
                i += 1;
            }
            let word = std::str::from_utf8(&src[start..i]).unwrap();
            let upper = word.to_ascii_uppercase();
            match KEYWORDS.iter().find(|k| **k == upper) {
                Some(k) => Tok::Kw(k),
                None => Tok::Ident(word.to_string()),
            }
        } else if c.is_ascii_digit() || (c == b'-' && src.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            while i < src.len() && src[i].is_ascii_digit() {
                i += 1;
            }
            let text = std::str::from_utf8(&src[start..i]).unwrap();
            Tok::Num(text.parse().map_err(|_| Violation::new("number_range", start))?)
        } else if c == b'\'' {
            i += 1;
            while i < src.len() && src[i] != b'\'' {
                if !(0x20..0x7f).contains(&src[i]) {
                    return Err(Violation::new("illegal_byte", i));
                }
                i += 1;
            }
            if i == src.len() {
                return Err(Violation::new("unterminated_string", start));
            }
            i += 1;
            Tok::Str(String::from_utf8(src[start + 1..i - 1].to_vec()).unwrap())
        } else {
            let two = src.get(i..i + 2);
            let p = match two {
                Some(b"!=") => "!=",
                Some(b"<=") => "<=",
                Some(b">=") => ">=",
                _ => match c {
                    b'(' => "(",
                    b')' => ")",
                    b',' => ",",
                    b';' => ";",
                    b'*' => "*",
                    b'=' => "=",
                    b'<' => "<",
                    b'>' => ">",
                    _ => return Err(Violation::new("bad_token", i)),
                },
            };
            i += p.len();
            Tok::Punct(p)
        };
        out.push(Token { tok, offset: start });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Col(String),
    Agg(&'static str, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lit {
    Num(i64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cond {
    pub col: String,
    pub op: &'static str,
    pub lit: Lit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Join {
    pub kind: &'static str,
    pub table: String,
    pub on: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Having {
    pub agg: &'static str,
    pub col: String,
    pub op: &'static str,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub distinct: bool,
    /// Empty means `*`.
    pub select: Vec<Item>,
    pub table: String,
    pub join: Option<Join>,
    /// First connective is ignored.
    pub filter: Vec<(&'static str, Cond)>,
    pub group: Option<String>,
    pub having: Option<Having>,
    pub order: Option<(String, Option<&'static str>)>,
    pub limit: Option<(i64, Option<i64>)>,
}

impl Query {
    pub fn render(&self) -> String {
        let mut s = String::from("SELECT ");
        if self.distinct {
            s.push_str("DISTINCT ");
        }
        if self.select.is_empty() {
            s.push('*');
        }
        for (i, item) in self.select.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            match item {
                Item::Col(c) => s.push_str(c),
                Item::Agg(a, c) => s.push_str(&format!("{a}({c})")),
            }
        }
        s.push_str(" FROM ");
        s.push_str(&self.table);
        if let Some(j) = &self.join {
            s.push_str(&format!(" {} JOIN {}", j.kind, j.table));
            if let Some((a, b)) = &j.on {
                s.push_str(&format!(" ON {a} = {b}"));
            }
        }
        for (i, (conj, c)) in self.filter.iter().enumerate() {
            if i == 0 {
                s.push_str(" WHERE ");
            } else {
                s.push_str(&format!(" {conj} "));
            }
            let lit = match &c.lit {
                Lit::Num(n) => n.to_string(),
                Lit::Str(t) => format!("'{t}'"),
            };
            s.push_str(&format!("{} {} {lit}", c.col, c.op));
        }
        if let Some(g) = &self.group {
            s.push_str(&format!(" GROUP BY {g}"));
        }
        if let Some(h) = &self.having {
            s.push_str(&format!(" HAVING {}({}) {} {}", h.agg, h.col, h.op, h.value));
        }
        if let Some((c, dir)) = &self.order {
            s.push_str(&format!(" ORDER BY {c}"));
            if let Some(d) = dir {
                s.push_str(&format!(" {d}"));
            }
        }
        if let Some((n, off)) = &self.limit {
            s.push_str(&format!(" LIMIT {n}"));
            if let Some(o) = off {
                s.push_str(&format!(" OFFSET {o}"));
            }
        }
        s.push(';');
        s
    }
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    end: usize,
    rules: &'a QueryRules,
}

type PResult<T> = Result<T, Violation>;

impl Parser<'_> {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.offset)
    }

    fn unexpected(&self) -> Violation {
        if self.pos >= self.toks.len() {
            Violation::new("missing_terminator", self.end)
        } else {
            Violation::new("unexpected_token", self.offset())
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Kw(k)) if *k == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(q)) if *q == p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn ident(&mut self, vocab: &[String], rule: &'static str) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(name)) => {
                if !vocab.iter().any(|v| v == name) {
                    return Err(Violation::new(rule, self.offset()));
                }
                let name = name.clone();
                self.pos += 1;
                Ok(name)
            }
            _ => Err(self.unexpected()),
        }
    }

    fn column(&mut self) -> PResult<String> {
        let vocab = &self.rules.columns;
        self.ident(vocab, "unknown_column")
    }

    fn table(&mut self) -> PResult<String> {
        let vocab = &self.rules.tables;
        self.ident(vocab, "unknown_table")
    }

    fn number(&mut self) -> PResult<i64> {
        match self.peek() {
            Some(Tok::Num(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.unexpected()),
        }
    }

    fn pick(&mut self, set: &[&'static str]) -> Option<&'static str> {
        let found = match self.peek() {
            Some(Tok::Kw(k)) | Some(Tok::Punct(k)) => set.iter().find(|s| *s == k).copied(),
            _ => None,
        };
        if found.is_some() {
            self.pos += 1;
        }
        found
    }

    fn agg_call(&mut self) -> PResult<Option<(&'static str, String)>> {
        let Some(agg) = self.pick(&AGGS) else {
            return Ok(None);
        };
        self.expect_punct("(")?;
        let col = self.column()?;
        self.expect_punct(")")?;
        Ok(Some((agg, col)))
    }

    fn query(&mut self) -> PResult<Query> {
        self.expect_kw("SELECT")?;
        let distinct = self.eat_kw("DISTINCT");
        let mut select = Vec::new();
        if !self.eat_punct("*") {
            loop {
                match self.agg_call()? {
                    Some((a, c)) => select.push(Item::Agg(a, c)),
                    None => select.push(Item::Col(self.column()?)),
                }
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_kw("FROM")?;
        let table = self.table()?;
        let mut q = Query {
            distinct,
            select,
            table,
            join: None,
            filter: Vec::new(),
            group: None,
            having: None,
            order: None,
            limit: None,
        };
        if let Some(kind) = self.pick(&JOIN_KINDS) {
            self.expect_kw("JOIN")?;
            let table = self.table()?;
            let on = if self.eat_kw("ON") {
                let a = self.column()?;
                self.expect_punct("=")?;
                Some((a, self.column()?))
            } else {
                None
            };
            q.join = Some(Join { kind, table, on });
        }
        if self.eat_kw("WHERE") {
            let mut conj = "AND";
            loop {
                let col = self.column()?;
                let op = self.pick(&OPS).ok_or_else(|| self.unexpected())?;
                let lit = match self.peek() {
                    Some(Tok::Num(n)) => Lit::Num(*n),
                    Some(Tok::Str(s)) => Lit::Str(s.clone()),
                    _ => return Err(self.unexpected()),
                };
                self.pos += 1;
                q.filter.push((conj, Cond { col, op, lit }));
                match self.pick(&["AND", "OR"]) {
                    Some(c) => conj = c,
                    None => break,
                }
            }
        }
        if self.eat_kw("GROUP") {
            self.expect_kw("BY")?;
            q.group = Some(self.column()?);
        }
        if self.eat_kw("HAVING") {
            let (agg, col) = self.agg_call()?.ok_or_else(|| self.unexpected())?;
            let op = self.pick(&OPS[..6]).ok_or_else(|| self.unexpected())?;
            let value = self.number()?;
            q.having = Some(Having { agg, col, op, value });
        }
        if self.eat_kw("ORDER") {
            self.expect_kw("BY")?;
            let col = self.column()?;
            q.order = Some((col, self.pick(&["ASC", "DESC"])));
        }
        if self.eat_kw("LIMIT") {
            let n = self.number()?;
            let off = if self.eat_kw("OFFSET") { Some(self.number()?) } else { None };
            q.limit = Some((n, off));
        }
        self.expect_punct(";")?;
        if self.pos < self.toks.len() {
            return Err(Violation::new("trailing_data", self.offset()));
        }
        Ok(q)
    }
}

pub fn parse(src: &[u8], rules: &QueryRules) -> Result<Query, Violation> {
    if src.len() > rules.max_len {
        return Err(Violation::new("too_long", rules.max_len));
    }
    let toks = tokenize(src)?;
    if toks.is_empty() {
        return Err(Violation::new("empty_input", 0));
    }
    Parser {
        toks: &toks,
        pos: 0,
        end: src.len(),
        rules,
    }
    .query()
}

pub fn validate(src: &[u8], rules: &QueryRules) -> Vec<Violation> {
    match parse(src, rules) {
        Ok(_) => Vec::new(),
        Err(v) => vec![v],
    }
}

fn render_tokens(toks: &[Tok]) -> String {
    let mut s = String::new();
    for t in toks {
        if !s.is_empty() {
            s.push(' ');
        }
        match t {
            Tok::Kw(k) | Tok::Punct(k) => s.push_str(k),
            Tok::Ident(i) => s.push_str(i),
            Tok::Num(n) => s.push_str(&n.to_string()),
            Tok::Str(x) => {
                s.push('\'');
                s.push_str(x);
                s.push('\'');
            }
        }
    }
    s
}

/// Rule-based repair: drops illegal bytes, closes a dangling string,
/// clamps oversized numbers, maps unknown names onto the vocabulary, and
/// cuts the statement back to its longest well-formed prefix.
pub fn sanitize(src: &[u8], rules: &QueryRules) -> Option<Vec<u8>> {
    let mut bytes: Vec<u8> = src
        .iter()
        .copied()
        .filter(|&b| (0x20..0x7f).contains(&b) || b == b'\n' || b == b'\t')
        .collect();
    if bytes.iter().filter(|&&b| b == b'\'').count() % 2 == 1 {
        bytes.push(b'\'');
    }
    let toks = loop {
        match tokenize(&bytes) {
            Ok(t) => break t,
            Err(v) if v.rule == "number_range" => {
                let end = bytes[v.offset + 1..]
                    .iter()
                    .position(|b| !b.is_ascii_digit())
                    .map_or(bytes.len(), |p| v.offset + 1 + p);
                let neg = bytes[v.offset] == b'-';
                let rep = if neg { i64::MIN } else { i64::MAX }.to_string();
                bytes.splice(v.offset..end, rep.bytes());
            }
            Err(v) => {
                bytes.remove(v.offset);
            }
        }
    };
    let mut toks: Vec<Tok> = toks.into_iter().map(|t| t.tok).collect();
    if !matches!(toks.first(), Some(Tok::Kw("SELECT"))) {
        return None;
    }
    let mut prev_kw = "";
    for t in toks.iter_mut() {
        match t {
            Tok::Kw(k) => prev_kw = k,
            Tok::Ident(name) => {
                let vocab = if prev_kw == "FROM" || prev_kw == "JOIN" {
                    &rules.tables
                } else {
                    &rules.columns
                };
                if !vocab.contains(name) {
                    *name = vocab.first()?.clone();
                }
            }
            _ => {}
        }
    }
    if let Some(p) = toks.iter().position(|t| *t == Tok::Punct(";")) {
        toks.truncate(p);
    }
    for cut in (1..=toks.len()).rev() {
        let mut text = render_tokens(&toks[..cut]);
        text.push(';');
        if text.len() <= rules.max_len && parse(text.as_bytes(), rules).is_ok() {
            return Some(text.into_bytes());
        }
    }
    None
}

fn pick_str(rng: &mut impl Rng, v: &[String]) -> String {
    v.choose(rng).cloned().unwrap_or_default()
}

fn number(rng: &mut impl Rng) -> i64 {
    match rng.random_range(0..10) {
        0..5 => rng.random_range(0..100),
        5..7 => *BOUNDARY.choose(rng).unwrap(),
        _ => rng.random_range(i32::MIN as i64..=i32::MAX as i64),
    }
}

fn literal(rng: &mut impl Rng) -> Lit {
    if rng.random_bool(0.6) {
        Lit::Num(number(rng))
    } else {
        Lit::Str(WORDS.choose(rng).unwrap().replace('\'', ""))
    }
}

fn item(rng: &mut impl Rng, rules: &QueryRules) -> Item {
    if rng.random_bool(0.6) {
        Item::Col(pick_str(rng, &rules.columns))
    } else {
        Item::Agg(AGGS.choose(rng).unwrap(), pick_str(rng, &rules.columns))
    }
}

fn cond(rng: &mut impl Rng, rules: &QueryRules) -> (&'static str, Cond) {
    let conj = if rng.random_bool(0.5) { "AND" } else { "OR" };
    (
        conj,
        Cond {
            col: pick_str(rng, &rules.columns),
            op: OPS.choose(rng).unwrap(),
            lit: literal(rng),
        },
    )
}

const SLOTS: usize = 9;

fn reroll(q: &mut Query, slot: usize, rng: &mut impl Rng, rules: &QueryRules) {
    let cols = &rules.columns;
    match slot {
        0 => q.distinct = rng.random_bool(0.2),
        1 => {
            q.select = if rng.random_bool(0.3) {
                Vec::new()
            } else {
                (0..rng.random_range(1..=3)).map(|_| item(rng, rules)).collect()
            }
        }
        2 => q.table = pick_str(rng, &rules.tables),
        3 => {
            q.join = rng.random_bool(0.4).then(|| Join {
                kind: JOIN_KINDS.choose(rng).unwrap(),
                table: pick_str(rng, &rules.tables),
                on: rng
                    .random_bool(0.7)
                    .then(|| (pick_str(rng, cols), pick_str(rng, cols))),
            })
        }
        4 => {
            q.filter = if rng.random_bool(0.5) {
                (0..rng.random_range(1..=3)).map(|_| cond(rng, rules)).collect()
            } else {
                Vec::new()
            }
        }
        5 => q.group = rng.random_bool(0.4).then(|| pick_str(rng, cols)),
        6 => {
            q.having = rng.random_bool(0.3).then(|| Having {
                agg: AGGS.choose(rng).unwrap(),
                col: pick_str(rng, cols),
                op: OPS[..6].choose(rng).unwrap(),
                value: number(rng),
            })
        }
        7 => {
            q.order = rng.random_bool(0.4).then(|| {
                let dir = [None, Some("ASC"), Some("DESC")].choose(rng).copied().flatten();
                (pick_str(rng, cols), dir)
            })
        }
        _ => {
            q.limit = rng
                .random_bool(0.4)
                .then(|| (number(rng), rng.random_bool(0.3).then(|| number(rng))))
        }
    }
}

pub fn generate(rng: &mut impl Rng, rules: &QueryRules) -> Vec<u8> {
    let mut q = Query {
        distinct: false,
        select: Vec::new(),
        table: pick_str(rng, &rules.tables),
        join: None,
        filter: Vec::new(),
        group: None,
        having: None,
        order: None,
        limit: None,
    };
    for slot in 0..SLOTS {
        reroll(&mut q, slot, rng, rules);
    }
    fit(q, rules)
}

fn fit(mut q: Query, rules: &QueryRules) -> Vec<u8> {
    loop {
        let text = q.render();
        if text.len() <= rules.max_len {
            return text.into_bytes();
        }
        if !q.filter.is_empty() {
            q.filter.pop();
        } else if q.select.len() > 1 {
            q.select.pop();
        } else {
            q.select.clear();
            q.join = None;
            q.having = None;
        }
    }
}

fn numbers_mut(q: &mut Query) -> Vec<&mut i64> {
    let mut v = Vec::new();
    for (_, c) in q.filter.iter_mut() {
        if let Lit::Num(n) = &mut c.lit {
            v.push(n);
        }
    }
    if let Some(h) = q.having.as_mut() {
        v.push(&mut h.value);
    }
    if let Some((n, off)) = q.limit.as_mut() {
        v.push(n);
        if let Some(o) = off.as_mut() {
            v.push(o);
        }
    }
    v
}

fn apply_objective(q: &mut Query, objective: Objective, rng: &mut impl Rng, rules: &QueryRules) -> bool {
    match objective {
        Objective::LengthGrowth => {
            let strs: Vec<&mut String> = q
                .filter
                .iter_mut()
                .filter_map(|(_, c)| match &mut c.lit {
                    Lit::Str(s) => Some(s),
                    _ => None,
                })
                .collect();
            if let Some(s) = strs.into_iter().last() {
                let grow = (s.len() / 5).max(1);
                let fill: String = (0..grow).map(|i| (b'a' + (i % 26) as u8) as char).collect();
                s.push_str(&fill);
            } else {
                q.filter.push(cond(rng, rules));
            }
            true
        }
        Objective::DelimiterInjection => {
            if q.filter.len() > 1 {
                let i = rng.random_range(1..q.filter.len());
                q.filter[i].0 = if q.filter[i].0 == "AND" { "OR" } else { "AND" };
            } else if let Some((_, c)) = q.filter.first_mut() {
                c.op = OPS.choose(rng).unwrap();
            } else {
                return false;
            }
            true
        }
        Objective::BoundaryValues => {
            let mut nums = numbers_mut(q);
            if nums.is_empty() {
                return false;
            }
            let i = rng.random_range(0..nums.len());
            *nums[i] = *BOUNDARY.choose(rng).unwrap();
            true
        }
        Objective::FieldReordering => {
            if q.select.len() > 1 {
                q.select.reverse();
            } else if q.filter.len() > 1 {
                let first = q.filter[0].0;
                q.filter.reverse();
                q.filter[0].0 = first;
            } else {
                return false;
            }
            true
        }
    }
}

/// One grammar-preserving change to `seed`: either the objective's own
/// operation or a fresh draw of one clause. Unparseable seeds are replaced
/// by a fresh query.
pub fn mutate(seed: &[u8], objective: Objective, rng: &mut impl Rng, rules: &QueryRules) -> Vec<u8> {
    let Ok(mut q) = parse(seed, rules) else {
        return generate(rng, rules);
    };
    let original = q.clone();
    for _ in 0..8 {
        if !(rng.random_bool(0.25) && apply_objective(&mut q, objective, rng, rules)) {
            let slot = rng.random_range(0..SLOTS);
            reroll(&mut q, slot, rng, rules);
        }
        if q != original {
            break;
        }
    }
    fit(q, rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rules() -> QueryRules {
        QueryRules {
            tables: vec!["users".into(), "orders".into()],
            columns: vec!["id".into(), "name".into(), "price".into()],
            max_len: 512,
        }
    }

    #[test]
    fn parses_full_query() {
        let src = b"select distinct id, MAX(price) from users left join orders on id = id \
                    where price > 10 or name like 'a%' group by id having count(id) >= 2 \
                    order by price desc limit 5 offset 1;";
        let q = parse(src, &rules()).unwrap();
        assert!(q.distinct);
        assert_eq!(q.join.as_ref().unwrap().kind, "LEFT");
        assert_eq!(q.filter[1].0, "OR");
        assert_eq!(q.limit, Some((5, Some(1))));
        assert_eq!(parse(q.render().as_bytes(), &rules()).unwrap(), q);
    }

    #[test]
    fn violations_carry_offsets() {
        let r = rules();
        assert_eq!(parse(b"", &r).unwrap_err().rule, "empty_input");
        assert_eq!(parse(b"SELECT * FROM users", &r).unwrap_err().rule, "missing_terminator");
        let v = parse(b"SELECT * FROM nowhere;", &r).unwrap_err();
        assert_eq!((v.rule, v.offset), ("unknown_table", 14));
        let v = parse(b"SELECT * FROM users WHERE;", &r).unwrap_err();
        assert_eq!((v.rule, v.offset), ("unexpected_token", 25));
        assert_eq!(parse(b"SELECT \x01", &r).unwrap_err().rule, "illegal_byte");
        assert_eq!(parse(b"SELECT * FROM users; x", &r).unwrap_err().rule, "trailing_data");
        assert_eq!(parse(b"SELECT * FROM users LIMIT 99999999999999999999;", &r).unwrap_err().rule, "number_range");
    }

    #[test]
    fn sanitize_cuts_to_prefix() {
        let r = rules();
        let fixed = sanitize(b"SELECT id FROM users WHERE price > \x0210 ORDER", &r).unwrap();
        assert_eq!(fixed, b"SELECT id FROM users WHERE price > 10;");
        let fixed = sanitize(b"SELECT bogus FROM mars LIMIT 99999999999999999999", &r).unwrap();
        assert!(parse(&fixed, &r).is_ok());
        assert!(sanitize(b"\xff\xfe garbage", &r).is_none());
    }

    #[test]
    fn generated_and_mutated_are_valid() {
        let r = rules();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let q = generate(&mut rng, &r);
            assert!(validate(&q, &r).is_empty(), "{}", String::from_utf8_lossy(&q));
            for o in Objective::ALL {
                let m = mutate(&q, o, &mut rng, &r);
                assert!(validate(&m, &r).is_empty(), "{}", String::from_utf8_lossy(&m));
            }
        }
    }
}
