//! Plain-text file formats: PGM masks and CSV real grids.
//!
//! PGM: ASCII `P2` (and binary `P5` on read). A pixel is foreground when it
//! exceeds half of `maxval`; with the usual `maxval` of 255 that is any
//! value above 127. Serialization writes `P2` with 0 and 255.
//!
//! CSV: one line per row, comma-separated decimal literals. Serialization
//! uses 17 significant digits, so parse after serialize is value-exact.

use std::fmt::Write as _;

use crate::error::{Result, SegLossError};
use crate::geometry::DistanceMap;
use crate::grid::{GroundTruthMask, ProbabilityMap, RealGrid, ShapeHW, MAX_PIXELS};

fn err(line: usize, column: usize, reason: impl Into<String>) -> SegLossError {
    SegLossError::Parse {
        line,
        column,
        reason: reason.into(),
    }
}

/// Whitespace-separated token with its 1-based position.
struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

/// Splits a PGM header or ASCII body into tokens, skipping `#` comments.
/// Stops after `limit` tokens and returns the byte offset just past the
/// last token.
fn pgm_tokens(bytes: &[u8], limit: usize) -> Result<(Vec<Token<'_>>, usize)> {
    let mut tokens = Vec::new();
    let (mut line, mut column) = (1usize, 1usize);
    let mut i = 0;
    while i < bytes.len() && tokens.len() < limit {
        let b = bytes[i];
        if b == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if b.is_ascii_whitespace() {
            if b == b'\n' {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'#' {
            i += 1;
        }
        let text = std::str::from_utf8(&bytes[start..i])
            .map_err(|_| err(line, column, "token is not valid UTF-8"))?;
        tokens.push(Token { text, line, column });
        column += i - start;
    }
    Ok((tokens, i))
}

fn header_number(tok: &Token<'_>, what: &str, max: usize) -> Result<usize> {
    let v: usize = tok
        .text
        .parse()
        .map_err(|_| err(tok.line, tok.column, format!("{what} `{}` is not an integer", tok.text)))?;
    if v == 0 || v > max {
        return Err(err(tok.line, tok.column, format!("{what} {v} is outside 1..={max}")));
    }
    Ok(v)
}

/// Parses a `P2` or `P5` PGM image into a binary mask.
pub fn parse_mask(bytes: &[u8]) -> Result<GroundTruthMask> {
    let (header, offset) = pgm_tokens(bytes, 4)?;
    let magic = header.first().ok_or_else(|| err(1, 1, "empty file"))?;
    let binary = match magic.text {
        "P2" => false,
        "P5" => true,
        other => {
            return Err(err(
                magic.line,
                magic.column,
                format!("bad magic `{other}`, expected P2 or P5"),
            ))
        }
    };
    if header.len() < 4 {
        let (line, column) = header.last().map_or((1, 1), |t| (t.line, t.column));
        return Err(err(line, column, "truncated header: expected width, height and maxval"));
    }
    let width = header_number(&header[1], "width", MAX_PIXELS)?;
    let height = header_number(&header[2], "height", MAX_PIXELS)?;
    let maxval = header_number(&header[3], "maxval", 65535)?;
    let shape = ShapeHW::new(height, width)
        .map_err(|_| err(header[1].line, header[1].column, "image exceeds the pixel limit"))?;
    let n = shape.len();
    let fg = |v: usize| 2 * v > maxval;

    let values = if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        let body = bytes.get(offset + 1..).unwrap_or_default();
        let depth = if maxval < 256 { 1 } else { 2 };
        if body.len() != n * depth {
            return Err(err(
                header[3].line,
                header[3].column,
                format!("raster holds {} bytes, expected {}", body.len(), n * depth),
            ));
        }
        let mut values = Vec::with_capacity(n);
        for (i, chunk) in body.chunks_exact(depth).enumerate() {
            let v = chunk.iter().fold(0usize, |acc, &b| (acc << 8) | b as usize);
            if v > maxval {
                let (r, c) = shape.coords(i);
                return Err(err(0, 0, format!("pixel ({r}, {c}) value {v} exceeds maxval {maxval}")));
            }
            values.push(fg(v));
        }
        values
    } else {
        let (body, _) = pgm_tokens(bytes, usize::MAX)?;
        let body = &body[4..];
        if body.len() != n {
            let (line, column) = body
                .get(n)
                .or(body.last())
                .map_or((header[3].line, header[3].column), |t| (t.line, t.column));
            return Err(err(
                line,
                column,
                format!("expected {n} pixels for {width}x{height}, found {}", body.len()),
            ));
        }
        let mut values = Vec::with_capacity(n);
        for tok in body {
            let v: usize = tok.text.parse().map_err(|_| {
                err(tok.line, tok.column, format!("pixel `{}` is not an integer", tok.text))
            })?;
            if v > maxval {
                return Err(err(
                    tok.line,
                    tok.column,
                    format!("pixel value {v} exceeds maxval {maxval}"),
                ));
            }
            values.push(fg(v));
        }
        values
    };
    GroundTruthMask::new(shape, values)
}

/// Writes a mask as ASCII `P2` with maxval 255, one image row per line.
pub fn serialize_mask(mask: &GroundTruthMask) -> String {
    let shape = mask.shape();
    let mut out = format!("P2\n{} {}\n255\n", shape.width(), shape.height());
    for row in mask.values().chunks(shape.width()) {
        let line: Vec<&str> = row.iter().map(|&v| if v { "255" } else { "0" }).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a rectangular CSV grid of finite reals.
pub fn parse_grid(bytes: &[u8]) -> Result<RealGrid> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let before = &bytes[..e.valid_up_to()];
        let line = 1 + before.iter().filter(|&&b| b == b'\n').count();
        err(line, 1, "file is not valid UTF-8")
    })?;
    let mut lines: Vec<&str> = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(err(1, 1, "empty grid"));
    }
    let mut width = None;
    let mut values = Vec::new();
    for (li, line) in lines.iter().enumerate() {
        let row = li + 1;
        let fields: Vec<&str> = line.split(',').collect();
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(err(
                    row,
                    fields.len().min(w) + 1,
                    format!("row {row} has {} values, expected {w}", fields.len()),
                ))
            }
            _ => {}
        }
        for (ci, field) in fields.iter().enumerate() {
            let f = field.trim();
            let v: f64 = f
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(row, ci + 1, format!("`{f}` is not a finite number")))?;
            values.push(v);
        }
        if values.len() > MAX_PIXELS {
            return Err(err(row, 1, "grid exceeds the pixel limit"));
        }
    }
    let shape = ShapeHW::new(lines.len(), width.unwrap_or(0))?;
    RealGrid::new(shape, values)
}

fn check_cells(grid: &RealGrid, ok: impl Fn(f64) -> bool, range: &str) -> Result<()> {
    let w = grid.shape().width();
    match grid.values().iter().position(|&v| !ok(v)) {
        Some(i) => Err(err(
            i / w + 1,
            i % w + 1,
            format!("value {} is outside {range}", grid.values()[i]),
        )),
        None => Ok(()),
    }
}

/// CSV grid whose entries must lie in `[0, 1]`.
pub fn parse_probability_map(bytes: &[u8]) -> Result<ProbabilityMap> {
    let grid = parse_grid(bytes)?;
    check_cells(&grid, |v| (0.0..=1.0).contains(&v), "[0, 1]")?;
    ProbabilityMap::from_grid(grid)
}

/// CSV grid whose entries must be non-negative.
pub fn parse_distance_map(bytes: &[u8]) -> Result<DistanceMap> {
    let grid = parse_grid(bytes)?;
    check_cells(&grid, |v| v >= 0.0, "[0, inf)")?;
    DistanceMap::new(grid.shape(), grid.into_values())
}

pub fn serialize_grid(grid: &RealGrid) -> String {
    let mut out = String::new();
    for row in grid.values().chunks(grid.shape().width()) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:.16e}");
        }
        out.push('\n');
    }
    out
}
