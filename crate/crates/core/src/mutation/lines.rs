//! `line-protocol`: an HTTP-like request line, `Name: value` headers, an
//! optional blank line and body.

use rand::seq::{IndexedMutRandom, IndexedRandom};
use rand::Rng;

use super::schema::{LineRules, Violation};
use super::Objective;

const TARGETS: &[&str] = &["/", "/index", "/a/b/c", "*", "/q?x=1", "/status"];
const VALUES: &[&str] = &["close", "keep-alive", "upgrade", "chunked", "gzip", "text", "yes", "none"];
const NUM_BOUNDARY: &[i64] = &[0, 1, -1, 255, 256, 511, 512, 513, 4096, 65535, 65536, 4294967295];

fn printable(b: u8) -> bool {
    (0x20..0x7f).contains(&b)
}

fn legal(b: u8) -> bool {
    printable(b) || b == b'\r' || b == b'\n' || b == b'\t'
}

fn name_ok(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

/// Lines with their start offsets; a trailing `\r` is not part of a line.
fn split_lines(input: &[u8]) -> Vec<(usize, &[u8])> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, &b) in input.iter().enumerate() {
        if b == b'\n' {
            let mut line = &input[start..i];
            if line.last() == Some(&b'\r') {
                line = &line[..line.len() - 1];
            }
            out.push((start, line));
            start = i + 1;
        }
    }
    if start < input.len() {
        out.push((start, &input[start..]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub method: String,
    pub target: String,
    pub headers: Vec<(String, String)>,
    pub body: Option<Vec<u8>>,
}

impl Request {
    pub fn render(&self, r: &LineRules) -> Vec<u8> {
        let mut out = format!("{} {} {}\r\n", self.method, self.target, r.version).into_bytes();
        for (n, v) in &self.headers {
            out.extend_from_slice(format!("{n}: {v}\r\n").as_bytes());
        }
        if let Some(b) = &self.body {
            out.extend_from_slice(b"\r\n");
            out.extend_from_slice(b);
        }
        out
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

fn request_line(line: &[u8], r: &LineRules) -> Option<(String, String)> {
    let text = std::str::from_utf8(line).ok()?;
    let parts: Vec<&str> = text.split(' ').collect();
    if parts.len() != 3 || !r.methods.iter().any(|m| m == parts[0]) || parts[1].is_empty() || parts[2] != r.version {
        return None;
    }
    Some((parts[0].to_string(), parts[1].to_string()))
}

fn header_line(line: &[u8]) -> Option<(String, String)> {
    let text = std::str::from_utf8(line).ok()?;
    let (name, value) = text.split_once(':')?;
    if !name_ok(name) {
        return None;
    }
    Some((name.to_string(), value.trim_start_matches(' ').to_string()))
}

pub fn validate(input: &[u8], r: &LineRules) -> Vec<Violation> {
    if input.is_empty() {
        return vec![Violation::new("empty_input", 0)];
    }
    let mut v = Vec::new();
    if input.len() > r.max_len {
        v.push(Violation::new("too_long", r.max_len));
    }
    if let Some(i) = input.iter().position(|&b| !legal(b)) {
        v.push(Violation::new("illegal_byte", i));
    }
    let lines = split_lines(input);
    let mut in_body = false;
    for (k, &(off, line)) in lines.iter().enumerate() {
        if line.len() > r.max_line_len {
            v.push(Violation::new("line_too_long", off));
        }
        if in_body {
            continue;
        }
        if k == 0 {
            if request_line(line, r).is_none() {
                v.push(Violation::new("bad_request_line", off));
            }
        } else if line.is_empty() {
            in_body = true;
        } else if header_line(line).is_none() {
            v.push(Violation::new("bad_header", off));
        }
    }
    v
}

pub fn parse(input: &[u8], r: &LineRules) -> Option<Request> {
    if !validate(input, r).is_empty() {
        return None;
    }
    let lines = split_lines(input);
    let (method, target) = request_line(lines[0].1, r)?;
    let mut headers = Vec::new();
    let mut body = None;
    for &(off, line) in &lines[1..] {
        if line.is_empty() {
            let nl = input[off..].iter().position(|&b| b == b'\n').map_or(input.len(), |p| off + p + 1);
            body = Some(input[nl..].to_vec());
            break;
        }
        headers.push(header_line(line)?);
    }
    Some(Request {
        method,
        target,
        headers,
        body,
    })
}

fn cut(s: &mut String, max: usize) {
    if s.len() > max {
        s.truncate(max);
    }
}

/// Strips illegal bytes, rebuilds the request line around the first
/// recognizable method, drops header lines that cannot be salvaged, and
/// truncates long lines.
pub fn sanitize(input: &[u8], r: &LineRules) -> Option<Vec<u8>> {
    let clean: Vec<u8> = input.iter().copied().filter(|&b| legal(b)).collect();
    let lines = split_lines(&clean);
    let (_, first) = lines.first()?;
    let first = String::from_utf8_lossy(first);
    let words: Vec<&str> = first.split_whitespace().collect();
    let mi = words
        .iter()
        .position(|w| r.methods.iter().any(|m| m.eq_ignore_ascii_case(w)))?;
    let method = r
        .methods
        .iter()
        .find(|m| m.eq_ignore_ascii_case(words[mi]))
        .unwrap()
        .clone();
    let fixed_len = method.len() + r.version.len() + 4;
    let mut target = words
        .get(mi + 1)
        .filter(|t| **t != r.version)
        .map_or_else(|| "/".to_string(), |t| t.to_string());
    cut(&mut target, r.max_line_len.saturating_sub(fixed_len).max(1));

    let mut req = Request {
        method,
        target,
        headers: Vec::new(),
        body: None,
    };
    for &(off, line) in &lines[1..] {
        if line.is_empty() {
            let nl = clean[off..].iter().position(|&b| b == b'\n').map_or(clean.len(), |p| off + p + 1);
            let body: Vec<u8> = split_lines(&clean[nl..])
                .into_iter()
                .flat_map(|(_, l)| {
                    let mut l = l[..l.len().min(r.max_line_len)].to_vec();
                    l.extend_from_slice(b"\r\n");
                    l
                })
                .collect();
            req.body = Some(body);
            break;
        }
        let text = String::from_utf8_lossy(line);
        let Some((name, value)) = text.split_once(':') else {
            continue;
        };
        let name: String = name.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '-').collect();
        if name.is_empty() {
            continue;
        }
        let mut value = value.trim_start_matches(' ').to_string();
        cut(&mut value, r.max_line_len.saturating_sub(name.len() + 2));
        req.headers.push((name, value));
    }
    let out = fit(req, r);
    (out.len() <= r.max_len).then_some(out)
}

fn fit(mut req: Request, r: &LineRules) -> Vec<u8> {
    loop {
        let out = req.render(r);
        if out.len() <= r.max_len {
            return out;
        }
        if let Some(b) = req.body.as_mut().filter(|b| !b.is_empty()) {
            let excess = out.len() - r.max_len;
            let keep = b.len().saturating_sub(excess);
            b.truncate(keep);
            while b.last().is_some_and(|&c| c == b'\r') {
                b.pop();
            }
        } else if req.body.take().is_none() && req.headers.pop().is_none() {
            req.target = "/".into();
            return req.render(r);
        }
    }
}

fn value(rng: &mut impl Rng) -> String {
    match rng.random_range(0..3) {
        0 => rng.random_range(0..1000).to_string(),
        1 => NUM_BOUNDARY.choose(rng).unwrap().to_string(),
        _ => VALUES.choose(rng).unwrap().to_string(),
    }
}

fn header(rng: &mut impl Rng, r: &LineRules) -> (String, String) {
    let name = r.header_names.choose(rng).cloned().unwrap_or_else(|| "X-Extra".into());
    (name, value(rng))
}

fn body(rng: &mut impl Rng) -> Vec<u8> {
    let n = rng.random_range(0..64);
    (0..n).map(|_| rng.random_range(b'a'..=b'z')).collect()
}

pub fn generate(rng: &mut impl Rng, r: &LineRules) -> Vec<u8> {
    let req = Request {
        method: r.methods.choose(rng).unwrap().clone(),
        target: TARGETS.choose(rng).unwrap().to_string(),
        headers: (0..rng.random_range(0..=4)).map(|_| header(rng, r)).collect(),
        body: rng.random_bool(0.3).then(|| body(rng)),
    };
    fit(req, r)
}

fn apply_objective(req: &mut Request, objective: Objective, rng: &mut impl Rng) -> bool {
    match objective {
        Objective::LengthGrowth => {
            let s = match req.headers.choose_mut(rng) {
                Some((_, v)) => v,
                None => &mut req.target,
            };
            let grow = (s.len() / 5).max(1);
            s.extend((0..grow).map(|i| (b'a' + (i % 26) as u8) as char));
        }
        Objective::DelimiterInjection => {
            let Some((_, v)) = req.headers.choose_mut(rng) else {
                return false;
            };
            let at = rng.random_range(0..=v.len());
            v.insert(at, *[';', ',', ':', '='].choose(rng).unwrap());
        }
        Objective::BoundaryValues => {
            let Some((_, v)) = req.headers.choose_mut(rng) else {
                return false;
            };
            *v = NUM_BOUNDARY.choose(rng).unwrap().to_string();
        }
        Objective::FieldReordering => {
            if req.headers.len() < 2 {
                return false;
            }
            let i = rng.random_range(0..req.headers.len());
            let j = rng.random_range(0..req.headers.len());
            req.headers.swap(i, j);
        }
    }
    true
}

pub fn mutate(seed: &[u8], objective: Objective, rng: &mut impl Rng, r: &LineRules) -> Vec<u8> {
    let Some(mut req) = parse(seed, r) else {
        return generate(rng, r);
    };
    if !(rng.random_bool(0.5) && apply_objective(&mut req, objective, rng)) {
        match rng.random_range(0..6) {
            0 => req.method = r.methods.choose(rng).unwrap().clone(),
            1 => req.target = TARGETS.choose(rng).unwrap().to_string(),
            2 if !req.headers.is_empty() => {
                req.headers.remove(rng.random_range(0..req.headers.len()));
            }
            3 => req.body = if req.body.is_some() { None } else { Some(body(rng)) },
            4 if !req.headers.is_empty() => {
                let i = rng.random_range(0..req.headers.len());
                req.headers[i].1 = value(rng);
            }
            _ => {
                let at = rng.random_range(0..=req.headers.len());
                req.headers.insert(at, header(rng, r));
            }
        }
    }
    fit(req, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rules() -> LineRules {
        LineRules {
            methods: vec!["GET".into(), "DATA".into(), "PING".into()],
            version: "PKT/1.0".into(),
            header_names: vec!["Host".into(), "Length".into()],
            max_line_len: 64,
            max_len: 1024,
        }
    }

    #[test]
    fn valid_request() {
        let r = rules();
        let input = b"DATA /x PKT/1.0\r\nLength: 3\r\n\r\nabc";
        assert!(validate(input, &r).is_empty());
        let req = parse(input, &r).unwrap();
        assert_eq!(req.header("length"), Some("3"));
        assert_eq!(req.body.as_deref(), Some(&b"abc"[..]));
        assert_eq!(parse(&req.render(&r), &r).unwrap(), req);
    }

    #[test]
    fn violations() {
        let r = rules();
        assert_eq!(validate(b"", &r), vec![Violation::new("empty_input", 0)]);
        assert_eq!(validate(b"FOO / PKT/1.0\n", &r)[0].rule, "bad_request_line");
        let v = validate(b"GET / PKT/1.0\nno colon here\n", &r);
        assert_eq!(v, vec![Violation::new("bad_header", 14)]);
        assert_eq!(validate(b"GET / PKT/1.0\n\x00", &r)[0], Violation::new("illegal_byte", 14));
    }

    #[test]
    fn sanitize_rebuilds() {
        let r = rules();
        let fixed = sanitize(b"xx get /a\x01\nbad line\nHo st: y\n", &r).unwrap();
        assert_eq!(fixed, b"GET /a PKT/1.0\r\nHost: y\r\n");
        assert!(sanitize(b"\x00\x01 nothing here", &r).is_none());
    }

    #[test]
    fn grammar_output_valid() {
        let r = rules();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let g = generate(&mut rng, &r);
            assert!(validate(&g, &r).is_empty(), "{:?}", String::from_utf8_lossy(&g));
            for o in Objective::ALL {
                let m = mutate(&g, o, &mut rng, &r);
                assert!(validate(&m, &r).is_empty(), "{:?}", String::from_utf8_lossy(&m));
            }
        }
    }
}
