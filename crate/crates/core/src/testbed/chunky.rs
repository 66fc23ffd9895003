//! `chunky`: a decoder for a chunked raster format.
//!
//! ```text
//! "CHNK" { len: u32 BE, type: [u8; 4], data: [u8; len] } ... "END " chunk
//! HEAD  width u16, height u16, depth, color, interlace
//! PALT  rgb triples
//! DATA  (run, value) pairs
//! TEXT  key NUL decimal
//! ```

use crate::cov;
use crate::executor::{Probe, Stop};

pub const ID: &str = "chunky";

const MAGIC: &[u8] = b"CHNK";
const MAX_PIXELS: usize = 1 << 20;

#[derive(Default)]
struct Image {
    width: usize,
    height: usize,
    depth: u8,
    color: u8,
    interlaced: bool,
    palette: Vec<[u8; 3]>,
    pixels: Vec<u8>,
    filled: usize,
    gamma: Option<u64>,
}

fn head(data: &[u8], img: &mut Image, p: &mut Probe) -> Result<bool, Stop> {
    if data.len() < 7 {
        cov!(p, "head_short")?;
        return Ok(false);
    }
    img.width = u16::from_be_bytes([data[0], data[1]]) as usize;
    img.height = u16::from_be_bytes([data[2], data[3]]) as usize;
    img.depth = data[4];
    img.color = data[5];
    img.interlaced = data[6] == 1;
    if img.width == 0 || img.height == 0 {
        cov!(p, "head_empty")?;
        return Ok(false);
    }
    if !matches!(img.depth, 1 | 2 | 4 | 8 | 16) {
        cov!(p, "head_depth")?;
        return Ok(false);
    }
    match img.color {
        0 => cov!(p, "gray")?,
        2 => cov!(p, "rgb")?,
        3 => cov!(p, "indexed")?,
        _ => {
            cov!(p, "bad_color")?;
            return Ok(false);
        }
    }
    if img.interlaced {
        cov!(p, "interlaced")?;
    }
    let n = img.width * img.height;
    if n > MAX_PIXELS {
        cov!(p, "too_big")?;
        return Ok(false);
    }
    p.alloc(n)?;
    img.pixels = vec![0; n];
    img.filled = 0;
    Ok(true)
}

fn read_palette(data: &[u8], img: &mut Image, p: &mut Probe) -> Result<(), Stop> {
    let n = data.len() / 3;
    if n == 0 {
        cov!(p, "palette_empty")?;
        return Ok(());
    }
    if img.color == 3 && img.depth <= 8 {
        cov!(p, "palette_table")?;
        // The table holds 2^depth entries; the entry count is never checked.
        let capacity = 1usize << img.depth;
        if n > capacity {
            cov!(p, "palette_big")?;
        }
        p.guard(n <= capacity, "heap-buffer-overflow")?;
    }
    img.palette = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(())
}

fn expand_rle(data: &[u8], img: &mut Image, p: &mut Probe) -> Result<(), Stop> {
    if img.pixels.is_empty() {
        cov!(p, "data_no_head")?;
        return Ok(());
    }
    for pair in data.chunks(2) {
        let (run, value) = (pair[0] as usize, *pair.get(1).unwrap_or(&0));
        if run == 0 {
            cov!(p, "run_zero")?;
            continue;
        }
        let room = img.pixels.len() - img.filled;
        if img.interlaced {
            cov!(p, "run_interlaced")?;
            // Interlaced passes trust the run length.
            p.guard(run <= room, "heap-buffer-overflow")?;
        } else if run > room {
            cov!(p, "run_clamped")?;
        }
        let run = run.min(room);
        img.pixels[img.filled..img.filled + run].fill(value);
        img.filled += run;
        if img.filled == img.pixels.len() {
            cov!(p, "image_full")?;
            break;
        }
    }
    Ok(())
}

fn apply_gamma(value: u64, p: &mut Probe) -> Result<(), Stop> {
    cov!(p, "gamma")?;
    let slot = value / 256;
    if slot >= 128 {
        cov!(p, "gamma_high")?;
    }
    // Lookup table with 256 slots on the stack.
    p.guard(slot < 256, "stack-buffer-overflow")
}

fn read_text(data: &[u8], img: &mut Image, p: &mut Probe) -> Result<(), Stop> {
    let Some(nul) = data.iter().position(|&b| b == 0) else {
        cov!(p, "text_no_nul")?;
        return Ok(());
    };
    let (key, value) = (&data[..nul], &data[nul + 1..]);
    let parsed = std::str::from_utf8(value).ok().and_then(|v| v.parse::<i64>().ok());
    match key {
        b"Gamma" => {
            cov!(p, "text_gamma")?;
            if let Some(v) = parsed.filter(|v| *v >= 0) {
                img.gamma = Some(v as u64);
                p.call("apply_gamma", |p| apply_gamma(v as u64, p))?;
            }
        }
        b"Title" | b"Author" => cov!(p, "text_meta")?,
        _ => cov!(p, "text_other")?,
    }
    p.log(format!("text {}", String::from_utf8_lossy(key).to_ascii_lowercase()));
    Ok(())
}

fn decode(input: &[u8], p: &mut Probe) -> Result<i32, Stop> {
    if !input.starts_with(MAGIC) {
        cov!(p, "bad_magic")?;
        return Ok(1);
    }
    let mut img = Image::default();
    let mut o = MAGIC.len();
    let mut chunks = 0;
    loop {
        if input.len() - o < 8 {
            cov!(p, "truncated")?;
            p.log("truncated");
            return Ok(1);
        }
        let len = u32::from_be_bytes(input[o..o + 4].try_into().unwrap()) as usize;
        let ty: [u8; 4] = input[o + 4..o + 8].try_into().unwrap();
        o += 8;
        if len > input.len() - o {
            cov!(p, "overrun")?;
            p.log("chunk overrun");
            return Ok(1);
        }
        let data = &input[o..o + len];
        o += len;
        chunks += 1;
        match &ty {
            b"HEAD" => {
                cov!(p, "c_head")?;
                if !p.call("read_head", |p| head(data, &mut img, p))? {
                    p.log("bad header");
                    return Ok(1);
                }
            }
            b"PALT" => {
                cov!(p, "c_palt")?;
                p.call("read_palette", |p| read_palette(data, &mut img, p))?;
            }
            b"DATA" => {
                cov!(p, "c_data")?;
                p.call("expand_rle", |p| expand_rle(data, &mut img, p))?;
            }
            b"TEXT" => {
                cov!(p, "c_text")?;
                p.call("read_text", |p| read_text(data, &mut img, p))?;
            }
            b"END " => {
                cov!(p, "c_end")?;
                break;
            }
            _ => cov!(p, "c_unknown")?,
        }
    }
    p.log(format!("decoded {} chunks", chunks));
    p.ret("filled", img.filled as i64);
    p.ret("palette", img.palette.len() as i64);
    p.state("image", &img.pixels[..img.pixels.len().min(64)]);
    Ok(0)
}

pub fn run(input: &[u8], p: &mut Probe) -> Result<i32, Stop> {
    p.call("chunky_main", |p| decode(input, p))
}
