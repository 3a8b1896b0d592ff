//! CSV emission and the matching readers.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file read back through these readers reproduces the written values bit
//! for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use spdc_core::lab::ScanMode;
use spdc_core::{CoincidenceRecord, JointDistribution, RotatedSections, SweepRow};

use crate::Failure;

pub const SCAN_HEADER: [&str; 10] = [
    "mode",
    "d_s[m]",
    "d_i[m]",
    "coord_s",
    "coord_i",
    "coincidences",
    "singles_s",
    "singles_i",
    "dwell[s]",
    "seed",
];

pub const SWEEP_HEADER: [&str; 6] = [
    "phi_0",
    "w_over_lc",
    "var_x_minus[m^2]",
    "var_p_plus[hbar^2 m^-2]",
    "product[hbar^2]",
    "err_product[hbar^2]",
];

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, Failure> {
    let file = File::create(path).map_err(|e| Failure::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn reader(path: &Path) -> Result<csv::Reader<File>, Failure> {
    csv::Reader::from_path(path).map_err(|e| Failure::Numerical(format!("{}: {e}", path.display())))
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<(), Failure> {
    if got.iter().eq(want.iter().copied()) {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "{}: unexpected header {:?}",
            path.display(),
            got.iter().collect::<Vec<_>>()
        )))
    }
}

fn field<T: std::str::FromStr>(
    path: &Path,
    rec: &csv::StringRecord,
    k: usize,
) -> Result<T, Failure> {
    rec.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| {
        Failure::Numerical(format!(
            "{}: bad value in column {k} of {rec:?}",
            path.display()
        ))
    })
}

pub fn write_scan(path: &Path, records: &[CoincidenceRecord]) -> Result<(), Failure> {
    let mut w = writer(path)?;
    w.write_record(SCAN_HEADER)?;
    for r in records {
        w.write_record([
            r.mode.as_str().to_string(),
            r.d_s.to_string(),
            r.d_i.to_string(),
            r.coord_s.to_string(),
            r.coord_i.to_string(),
            r.coincidences.to_string(),
            r.singles_s.to_string(),
            r.singles_i.to_string(),
            r.dwell_time.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

pub fn read_scan(path: &Path) -> Result<Vec<CoincidenceRecord>, Failure> {
    let mut r = reader(path)?;
    check_header(path, r.headers()?, &SCAN_HEADER)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let mode: String = field(path, &rec, 0)?;
            Ok(CoincidenceRecord {
                mode: ScanMode::parse(&mode).ok_or_else(|| {
                    Failure::Numerical(format!("{}: unknown mode {mode}", path.display()))
                })?,
                d_s: field(path, &rec, 1)?,
                d_i: field(path, &rec, 2)?,
                coord_s: field(path, &rec, 3)?,
                coord_i: field(path, &rec, 4)?,
                coincidences: field(path, &rec, 5)?,
                singles_s: field(path, &rec, 6)?,
                singles_i: field(path, &rec, 7)?,
                dwell_time: field(path, &rec, 8)?,
                seed: field(path, &rec, 9)?,
            })
        })
        .collect()
}

/// The sweep columns that the CSV carries.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepLine {
    pub phi_0: f64,
    pub w_over_lc: f64,
    pub var_x_minus: f64,
    pub var_p_plus: f64,
    pub product: f64,
    pub err_product: f64,
}

impl From<&SweepRow> for SweepLine {
    fn from(r: &SweepRow) -> Self {
        Self {
            phi_0: r.phi_0,
            w_over_lc: r.w_over_lc,
            var_x_minus: r.var_x_minus,
            var_p_plus: r.var_p_plus,
            product: r.product,
            err_product: r.err_product,
        }
    }
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), Failure> {
    let mut w = writer(path)?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record(
            [
                r.phi_0,
                r.w_over_lc,
                r.var_x_minus,
                r.var_p_plus,
                r.product,
                r.err_product,
            ]
            .map(|v| v.to_string()),
        )?;
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepLine>, Failure> {
    let mut r = reader(path)?;
    check_header(path, r.headers()?, &SWEEP_HEADER)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(SweepLine {
                phi_0: field(path, &rec, 0)?,
                w_over_lc: field(path, &rec, 1)?,
                var_x_minus: field(path, &rec, 2)?,
                var_p_plus: field(path, &rec, 3)?,
                product: field(path, &rec, 4)?,
                err_product: field(path, &rec, 5)?,
            })
        })
        .collect()
}

/// One rotated-section sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionLine {
    pub axis: String,
    pub coord: f64,
    pub density: f64,
}

pub fn section_header(position: bool) -> [&'static str; 3] {
    if position {
        ["axis", "coord[m]", "density"]
    } else {
        ["axis", "coord[rad/m]", "density"]
    }
}

pub fn write_sections(path: &Path, sec: &RotatedSections, position: bool) -> Result<(), Failure> {
    let mut w = writer(path)?;
    w.write_record(section_header(position))?;
    for (name, axis, values) in [
        ("plus", &sec.plus_axis, &sec.plus),
        ("minus", &sec.minus_axis, &sec.minus),
    ] {
        for (c, v) in axis.iter().zip(values.iter()) {
            w.write_record([name.to_string(), c.to_string(), v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

pub fn read_sections(path: &Path) -> Result<Vec<SectionLine>, Failure> {
    let mut r = reader(path)?;
    let header = r.headers()?.clone();
    let position = header.get(1) == Some("coord[m]");
    check_header(path, &header, &section_header(position))?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(SectionLine {
                axis: field(path, &rec, 0)?,
                coord: field(path, &rec, 1)?,
                density: field(path, &rec, 2)?,
            })
        })
        .collect()
}

/// Long-form joint distribution, keeping every `stride`-th grid point per
/// axis.
pub fn write_joint(path: &Path, dist: &JointDistribution, stride: usize) -> Result<(), Failure> {
    let mut w = writer(path)?;
    let unit = match dist.domain {
        spdc_core::Domain::Position => "[m]",
        spdc_core::Domain::Frequency => "[rad/m]",
    };
    w.write_record([
        format!("coord_s{unit}"),
        format!("coord_i{unit}"),
        "value".to_string(),
    ])?;
    let axis = dist.axis();
    let stride = stride.max(1);
    for s in (0..dist.n()).step_by(stride) {
        for i in (0..dist.n()).step_by(stride) {
            w.write_record([
                axis[s].to_string(),
                axis[i].to_string(),
                dist.get(s, i).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

pub fn read_joint(path: &Path) -> Result<Vec<(f64, f64, f64)>, Failure> {
    let mut r = reader(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok((
                field(path, &rec, 0)?,
                field(path, &rec, 1)?,
                field(path, &rec, 2)?,
            ))
        })
        .collect()
}

/// `key = value` text file.
pub fn write_text(path: &Path, lines: &[(String, String)]) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| Failure::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (k, v) in lines {
        writeln!(w, "{k} = {v}").map_err(|e| Failure::io(path, e))?;
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

pub fn write_string(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}
