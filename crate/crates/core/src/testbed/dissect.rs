//! `dissect`: a request dissector for an HTTP-like line protocol.

use crate::cov;
use crate::executor::{Probe, Stop};

pub const ID: &str = "dissect";

const METHODS: [&str; 5] = ["GET", "POST", "HEAD", "PUT", "OPTIONS"];
const MAX_LINE: usize = 256;

struct Request<'a> {
    method: &'a str,
    target: &'a [u8],
    headers: Vec<(&'a [u8], &'a [u8])>,
    body: &'a [u8],
}

impl Request<'_> {
    fn header(&self, name: &str) -> Option<&[u8]> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name.as_bytes()))
            .map(|(_, v)| *v)
    }
}

fn next_line<'a>(input: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    if *pos >= input.len() {
        return None;
    }
    let rest = &input[*pos..];
    let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
    *pos += (end + 1).min(rest.len());
    let line = &rest[..end];
    Some(line.strip_suffix(b"\r").unwrap_or(line))
}

fn number(v: &[u8]) -> Option<u64> {
    std::str::from_utf8(v).ok()?.trim().parse().ok()
}

fn dissect<'a>(input: &'a [u8], p: &mut Probe) -> Result<Option<Request<'a>>, Stop> {
    let mut pos = 0;
    let Some(first) = next_line(input, &mut pos) else {
        cov!(p, "empty")?;
        return Ok(None);
    };
    let mut parts = first.split(|&b| b == b' ');
    let (Some(m), Some(target), Some(version), None) = (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        cov!(p, "bad_request_line")?;
        return Ok(None);
    };
    let Some(method) = METHODS.iter().find(|x| x.as_bytes() == m) else {
        cov!(p, "bad_method")?;
        return Ok(None);
    };
    match *method {
        "GET" => cov!(p, "m_get")?,
        "POST" => cov!(p, "m_post")?,
        "HEAD" => cov!(p, "m_head")?,
        "PUT" => cov!(p, "m_put")?,
        _ => cov!(p, "m_options")?,
    }
    if version != b"HTTP/1.1" {
        cov!(p, "bad_version")?;
        return Ok(None);
    }
    if target.first() == Some(&b'/') {
        cov!(p, "abs_path")?;
        if target.contains(&b'?') {
            cov!(p, "query_string")?;
        }
    } else {
        cov!(p, "other_target")?;
    }
    let mut headers = Vec::new();
    loop {
        let Some(line) = next_line(input, &mut pos) else { break };
        if line.is_empty() {
            cov!(p, "blank")?;
            break;
        }
        if line.len() > MAX_LINE {
            cov!(p, "long_line")?;
            return Ok(None);
        }
        let Some(colon) = line.iter().position(|&b| b == b':') else {
            cov!(p, "bad_header")?;
            return Ok(None);
        };
        cov!(p, "header")?;
        let value = &line[colon + 1..];
        let value = value.strip_prefix(b" ").unwrap_or(value);
        headers.push((&line[..colon], value));
    }
    let body = &input[pos.min(input.len())..];
    if !body.is_empty() {
        cov!(p, "body")?;
    }
    Ok(Some(Request {
        method,
        target,
        headers,
        body,
    }))
}

fn read_body(req: &Request, p: &mut Probe) -> Result<usize, Stop> {
    let Some(cl) = req.header("Content-Length") else {
        cov!(p, "no_length")?;
        return Ok(req.body.len());
    };
    cov!(p, "length")?;
    let Some(n) = number(cl) else {
        cov!(p, "length_nan")?;
        return Ok(0);
    };
    if n as usize > req.body.len() {
        cov!(p, "length_short")?;
        if req.method == "POST" && n > 512 {
            cov!(p, "length_copy")?;
            // Copies n bytes out of a buffer holding body.len() + 512.
            p.guard(n as usize <= req.body.len() + 512, "heap-buffer-overread")?;
        }
        return Ok(req.body.len());
    }
    Ok(n as usize)
}

fn value_is(req: &Request, name: &str, want: &str) -> bool {
    req.header(name).is_some_and(|v| v.eq_ignore_ascii_case(want.as_bytes()))
}

/// Connection handling. The upgrade path keeps a pointer into the chunk
/// decoder's buffer, which a keep-alive HEAD request has already released.
fn connection(req: &Request, p: &mut Probe) -> Result<(), Stop> {
    if let Some(c) = req.header("Connection") {
        cov!(p, "connection")?;
        p.log(format!("connection {}", String::from_utf8_lossy(c).to_ascii_lowercase()));
    }
    if req.header("Upgrade").is_some() {
        cov!(p, "upgrade")?;
        p.log("upgrade requested");
    }
    if let Some(te) = req.header("Transfer-Encoding") {
        cov!(p, "te")?;
        p.log(format!("encoding {}", String::from_utf8_lossy(te).to_ascii_lowercase()));
    }
    let stale = value_is(req, "Connection", "upgrade")
        && req.header("Upgrade").is_some()
        && value_is(req, "Transfer-Encoding", "chunked")
        && req.method == "HEAD";
    p.guard(!stale, "use-after-free-read")
}

pub fn run(input: &[u8], p: &mut Probe) -> Result<i32, Stop> {
    p.call("dissect_main", |p| {
        let Some(req) = p.call("dissect_request", |p| dissect(input, p))? else {
            p.log("malformed request");
            return Ok(1);
        };
        p.log(format!("method {}", req.method.to_ascii_lowercase()));
        let body = p.call("read_body", |p| read_body(&req, p))?;
        p.call("handle_connection", |p| connection(&req, p))?;
        p.ret("headers", req.headers.len() as i64);
        p.ret("body", body as i64);
        p.output(format!("200 {}", String::from_utf8_lossy(req.target)).as_bytes());
        Ok(0)
    })
}
