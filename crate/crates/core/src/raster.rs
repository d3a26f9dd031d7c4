//! Plain-text raster formats.
//!
//! Grid file: first line `width,height,cell_area_m2`, followed by `height`
//! lines of `width` comma-separated class codes (0-6).
//!
//! Frozen mask file: first line `width,height`, followed by `height` lines of
//! `width` comma-separated 0/1 flags.
//!
//! Coefficient file: rows `class_name,coefficient`. An optional
//! `class_name,coefficient` header is skipped; classes that are not listed
//! keep their default coefficient.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::runoff::{CoefficientTable, LulcClass, LulcGrid, NUM_CLASSES};

fn parse_err(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what} `{}`", field.trim())))
}

/// Parses a header and `height` rows of `width` integer fields.
fn parse_rows(
    text: &str,
    path: &Path,
    header_fields: usize,
) -> Result<(Vec<String>, usize, usize, Vec<(usize, u8)>)> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if header.len() != header_fields {
        return Err(parse_err(
            path,
            hline,
            format!("expected {header_fields} header fields, found {}", header.len()),
        ));
    }
    let width: usize = parse_field(path, hline, &header[0], "width")?;
    let height: usize = parse_field(path, hline, &header[1], "height")?;

    let mut values = Vec::with_capacity(width * height);
    let mut rows = 0;
    for (lineno, line) in lines {
        rows += 1;
        if rows > height {
            return Err(parse_err(path, lineno, format!("more than {height} rows")));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {width} values, found {}", fields.len()),
            ));
        }
        for f in fields {
            values.push((lineno, parse_field::<u8>(path, lineno, f, "value")?));
        }
    }
    if rows != height {
        return Err(parse_err(path, hline, format!("expected {height} rows, found {rows}")));
    }
    Ok((header, width, height, values))
}

pub fn parse_grid(text: &str, path: &Path) -> Result<LulcGrid> {
    let (header, width, height, values) = parse_rows(text, path, 3)?;
    let area: f64 = parse_field(path, 1, &header[2], "cell area")?;
    let cells = values
        .into_iter()
        .map(|(line, code)| {
            LulcClass::from_code(code)
                .ok_or_else(|| parse_err(path, line, format!("class code {code} outside 0-6")))
        })
        .collect::<Result<Vec<_>>>()?;
    LulcGrid::new(width, height, cells, area)
}

pub fn parse_frozen_mask(text: &str, path: &Path, grid: &LulcGrid) -> Result<Vec<bool>> {
    let (_, width, height, values) = parse_rows(text, path, 2)?;
    if width != grid.width() || height != grid.height() {
        return Err(parse_err(
            path,
            1,
            format!(
                "mask is {width}x{height}, grid is {}x{}",
                grid.width(),
                grid.height()
            ),
        ));
    }
    values
        .into_iter()
        .map(|(line, v)| match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(parse_err(path, line, format!("mask value {other} is not 0 or 1"))),
        })
        .collect()
}

fn write_rows<T: Copy>(out: &mut String, width: usize, values: &[T], fmt: impl Fn(T) -> u8) {
    for row in values.chunks(width.max(1)) {
        for (i, &v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", fmt(v));
        }
        out.push('\n');
    }
}

pub fn format_grid(grid: &LulcGrid) -> String {
    let mut out = format!("{},{},{}\n", grid.width(), grid.height(), grid.cell_area_m2());
    write_rows(&mut out, grid.width(), grid.cells(), LulcClass::code);
    out
}

pub fn format_frozen_mask(grid: &LulcGrid) -> String {
    let mut out = format!("{},{}\n", grid.width(), grid.height());
    write_rows(&mut out, grid.width(), grid.frozen_mask(), u8::from);
    out
}

pub fn read_grid(path: &Path) -> Result<LulcGrid> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&text, path)
}

/// Read a grid and, if given, replace its frozen mask with the one on disk.
pub fn read_grid_with_mask(grid_path: &Path, mask_path: Option<&Path>) -> Result<LulcGrid> {
    let grid = read_grid(grid_path)?;
    match mask_path {
        None => Ok(grid),
        Some(mp) => {
            let text = std::fs::read_to_string(mp).map_err(|e| Error::io(mp, e))?;
            let mask = parse_frozen_mask(&text, mp, &grid)?;
            grid.with_frozen_mask(mask)
        }
    }
}

pub fn parse_coefficients(text: &str, path: &Path, intensity_mm_per_hr: f64) -> Result<CoefficientTable> {
    let mut coefficients = CoefficientTable::DEFAULT_COEFFICIENTS;
    let mut seen = [false; NUM_CLASSES];
    for (lineno, line) in content_lines(text) {
        let (name, value) = line
            .split_once(',')
            .ok_or_else(|| parse_err(path, lineno, "expected `class_name,coefficient`"))?;
        if lineno == 1 && name.trim() == "class_name" {
            continue;
        }
        let class: LulcClass = name
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("unknown class `{}`", name.trim())))?;
        if std::mem::replace(&mut seen[class.index()], true) {
            return Err(parse_err(path, lineno, format!("duplicate entry for {class}")));
        }
        coefficients[class.index()] = parse_field(path, lineno, value, "coefficient")?;
    }
    CoefficientTable::new(coefficients, intensity_mm_per_hr)
}

pub fn format_coefficients(table: &CoefficientTable) -> String {
    let mut out = String::from("class_name,coefficient\n");
    for class in LulcClass::ALL {
        let _ = writeln!(out, "{},{}", class, table.coefficient(class));
    }
    out
}
