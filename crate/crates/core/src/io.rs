//! File formats: label fields (CSV and binary), grayscale images (PGM P5 and
//! CSV), expected-bond tables and JSON documents.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};
use crate::hmrf::Observation;
use crate::lattice::LabelField;
use crate::potts::BondsPoint;

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

/// Write a field as CSV, one lattice row per line, labels `1..=q`.
pub fn write_field_csv<W: Write>(field: &LabelField, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let labels: Vec<u32> = field.one_based().collect();
    for row in labels.chunks(field.cols()) {
        w.write_record(row.iter().map(u32::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a CSV field. Without an explicit `q` the largest label is used
/// (at least 2).
pub fn read_field_csv<R: Read>(input: R, q: Option<usize>) -> Result<LabelField> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut labels = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_err(format!("row {} has {} entries, expected {c}", rows + 1, record.len())))
            }
            _ => {}
        }
        for cell in record.iter() {
            labels.push(cell.parse::<u32>().map_err(|_| parse_err(format!("bad label '{cell}'")))?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err("empty field file"))?;
    let q = q.unwrap_or_else(|| labels.iter().copied().max().unwrap_or(2).max(2) as usize);
    LabelField::from_one_based(rows, cols, q, &labels)
}

/// Compact binary form: `rows` (u32 LE), `cols` (u32 LE), `q` (u8), then one
/// byte per site holding the label `1..=q`, row-major.
pub fn write_field_binary<W: Write>(field: &LabelField, mut out: W) -> Result<()> {
    out.write_all(&(field.rows() as u32).to_le_bytes())?;
    out.write_all(&(field.cols() as u32).to_le_bytes())?;
    out.write_all(&[field.q() as u8])?;
    let payload: Vec<u8> = field.values().iter().map(|v| v + 1).collect();
    out.write_all(&payload)?;
    Ok(())
}

pub fn read_field_binary<R: Read>(mut input: R) -> Result<LabelField> {
    let mut header = [0u8; 9];
    input
        .read_exact(&mut header)
        .map_err(|_| parse_err("binary field shorter than its header"))?;
    let rows = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let q = header[8] as usize;
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    if payload.len() != rows * cols {
        return Err(parse_err(format!(
            "binary field declares {rows}x{cols} but carries {} sites",
            payload.len()
        )));
    }
    let labels: Vec<u32> = payload.into_iter().map(u32::from).collect();
    LabelField::from_one_based(rows, cols, q, &labels)
}

fn is_binary_path(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("bin" | "field"))
}

/// Save a field; `.bin`/`.field` extensions select the binary form.
pub fn save_field(field: &LabelField, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    if is_binary_path(path) {
        write_field_binary(field, std::io::BufWriter::new(file))
    } else {
        write_field_csv(field, file)
    }
}

pub fn load_field(path: &Path, q: Option<usize>) -> Result<LabelField> {
    let file = BufReader::new(fs::File::open(path)?);
    let field = if is_binary_path(path) {
        read_field_binary(file)?
    } else {
        read_field_csv(file, q)?
    };
    if let Some(q) = q {
        if q != field.q() {
            return Err(Error::Mismatch(format!("field declares q={} but q={q} requested", field.q())));
        }
    }
    Ok(field)
}

fn pgm_token<R: BufRead>(input: &mut R) -> Result<String> {
    let mut token = String::new();
    let mut byte = [0u8; 1];
    loop {
        if input.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if c == '#' && token.is_empty() {
            let mut skip = Vec::new();
            input.read_until(b'\n', &mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(c);
    }
    if token.is_empty() {
        return Err(parse_err("truncated PGM header"));
    }
    Ok(token)
}

/// Read an 8-bit binary PGM (P5); intensities are scaled to [0, 1] by maxval.
pub fn read_pgm<R: Read>(input: R) -> Result<Observation> {
    let mut input = BufReader::new(input);
    if pgm_token(&mut input)? != "P5" {
        return Err(parse_err("not a binary PGM (expected magic P5)"));
    }
    let mut number = |what: &str| -> Result<usize> {
        let t = pgm_token(&mut input)?;
        t.parse().map_err(|_| parse_err(format!("bad PGM {what} '{t}'")))
    };
    let cols = number("width")?;
    let rows = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(parse_err(format!("only 8-bit PGM is supported (maxval {maxval})")));
    }
    let mut pixels = vec![0u8; rows * cols];
    input
        .read_exact(&mut pixels)
        .map_err(|_| parse_err("PGM pixel data is truncated"))?;
    let values = pixels.iter().map(|&p| p as f64 / maxval as f64).collect();
    Observation::new(rows, cols, values)
}

pub fn write_pgm<W: Write>(obs: &Observation, mut out: W) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", obs.cols(), obs.rows())?;
    let bytes: Vec<u8> = obs
        .values()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Read a grayscale matrix from CSV. Values already inside [0, 1] are kept;
/// otherwise the matrix is min-max scaled.
pub fn read_grayscale_csv<R: Read>(input: R) -> Result<Observation> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(parse_err(format!("row {} has the wrong number of entries", rows + 1)));
        }
        for cell in record.iter() {
            values.push(cell.parse::<f64>().map_err(|_| parse_err(format!("bad intensity '{cell}'")))?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err("empty image file"))?;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo < 0.0 || hi > 1.0 {
        let span = if hi > lo { hi - lo } else { 1.0 };
        values.iter_mut().for_each(|v| *v = (*v - lo) / span);
    }
    Observation::new(rows, cols, values)
}

pub fn write_grayscale_csv<W: Write>(obs: &Observation, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in obs.values().chunks(obs.cols()) {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Load an image by extension: `.pgm` or CSV otherwise.
pub fn load_image(path: &Path) -> Result<Observation> {
    let file = fs::File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_pgm(file),
        _ => read_grayscale_csv(file),
    }
}

/// Columns `beta, mean_U, se_U`.
pub fn write_bonds_csv<W: Write>(points: &[BondsPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["beta", "mean_U", "se_U"])?;
    for p in points {
        w.write_record([p.beta.to_string(), p.mean_u.to_string(), p.se_u.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bonds_csv<R: Read>(input: R) -> Result<Vec<BondsPoint>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        let get = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_err("malformed bonds row"))
        };
        points.push(BondsPoint { beta: get(0)?, mean_u: get(1)?, se_u: get(2)? });
    }
    Ok(points)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
